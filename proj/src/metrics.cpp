// SPDX-License-Identifier: Apache-2.0

#include "lam/metrics.hpp"

#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "lam/errors.hpp"

namespace lam::metrics {

std::uint64_t ConfusionMatrix::row_sum(std::size_t c) const {
  return std::accumulate(counts[c].begin(), counts[c].end(), std::uint64_t{0});
}

ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                          std::size_t num_classes, std::vector<std::string> class_names) {
  if (truth.size() != predicted.size()) {
    fail(ErrorCode::kShapeError, std::to_string(truth.size()) + " true labels vs " +
                                     std::to_string(predicted.size()) + " predictions");
  }
  if (class_names.empty()) {
    for (std::size_t c = 0; c < num_classes; ++c) class_names.push_back("class" + std::to_string(c));
  }
  if (class_names.size() != num_classes) {
    fail(ErrorCode::kShapeError, "class name count does not match num_classes");
  }
  ConfusionMatrix cm;
  cm.classes = std::move(class_names);
  cm.counts.assign(num_classes, std::vector<std::uint64_t>(num_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= num_classes || predicted[i] >= num_classes) {
      fail(ErrorCode::kInvalidLabel, "label out of range at position " + std::to_string(i));
    }
    ++cm.counts[truth[i]][predicted[i]];
  }
  return cm;
}

double uar(const ConfusionMatrix& cm) {
  double total = 0.0;
  std::size_t included = 0;
  for (std::size_t c = 0; c < cm.size(); ++c) {
    const std::uint64_t n = cm.row_sum(c);
    if (n == 0) continue;
    total += static_cast<double>(cm.counts[c][c]) / static_cast<double>(n);
    ++included;
  }
  if (included == 0) fail(ErrorCode::kEmptyEvaluation, "confusion matrix has no true samples");
  return total / static_cast<double>(included);
}

std::vector<ClassRecall> per_emotion_report(const ConfusionMatrix& cm) {
  std::vector<ClassRecall> out;
  for (std::size_t c = 0; c < cm.size(); ++c) {
    ClassRecall r;
    r.name = c < cm.classes.size() ? cm.classes[c] : "class" + std::to_string(c);
    r.support = cm.row_sum(c);
    if (r.support > 0) r.recall = static_cast<double>(cm.counts[c][c]) / static_cast<double>(r.support);
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_percent(const std::optional<double>& recall) {
  if (!recall) return "absent";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *recall * 100.0);
  return buf;
}

std::string evaluation_json(const ConfusionMatrix& cm) {
  nlohmann::json j;
  j["classes"] = cm.classes;
  j["confusion"] = cm.counts;
  bool any = false;
  for (std::size_t c = 0; c < cm.size(); ++c) any = any || cm.row_sum(c) > 0;
  j["uar"] = any ? nlohmann::json(uar(cm)) : nlohmann::json(nullptr);
  nlohmann::json per = nlohmann::json::array();
  for (const auto& r : per_emotion_report(cm)) {
    per.push_back({{"class", r.name},
                   {"support", r.support},
                   {"recall", r.recall ? nlohmann::json(*r.recall) : nlohmann::json(nullptr)},
                   {"recall_percent", format_percent(r.recall)}});
  }
  j["per_class"] = per;
  return j.dump(2) + "\n";
}

std::string per_emotion_csv(const ConfusionMatrix& cm) {
  std::string out = "class,support,recall_percent\n";
  for (const auto& r : per_emotion_report(cm)) {
    out += r.name + "," + std::to_string(r.support) + "," + format_percent(r.recall) + "\n";
  }
  return out;
}

}  // namespace lam::metrics
