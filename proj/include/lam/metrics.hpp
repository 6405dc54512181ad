// SPDX-License-Identifier: Apache-2.0

#ifndef LAM_METRICS_HPP_
#define LAM_METRICS_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lam::metrics {

// rows = true class, columns = predicted class
struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<std::uint64_t>> counts;

  std::size_t size() const { return counts.size(); }
  std::uint64_t row_sum(std::size_t c) const;
};

// Errors: ShapeError on a length mismatch, InvalidLabel on a label >= C.
ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                          std::size_t num_classes, std::vector<std::string> class_names = {});

// Unweighted average recall over the classes that have at least one true
// sample. EmptyEvaluation when no class has any.
double uar(const ConfusionMatrix& cm);

struct ClassRecall {
  std::string name;
  std::optional<double> recall;  // absent when the class has no true samples
  std::uint64_t support = 0;
};

std::vector<ClassRecall> per_emotion_report(const ConfusionMatrix& cm);

// "100.00"-style percentage, or "absent".
std::string format_percent(const std::optional<double>& recall);

std::string evaluation_json(const ConfusionMatrix& cm);
// class,support,recall_percent
std::string per_emotion_csv(const ConfusionMatrix& cm);

}  // namespace lam::metrics

#endif  // LAM_METRICS_HPP_
