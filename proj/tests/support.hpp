// SPDX-License-Identifier: Apache-2.0
// Helpers and independent oracles shared by the unit tests and the acceptance binary.

#ifndef LAM_TESTS_SUPPORT_HPP_
#define LAM_TESTS_SUPPORT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lam/feature_store.hpp"
#include "lam/metrics.hpp"
#include "lam/model.hpp"
#include "lam/numkit.hpp"
#include "lam/rng.hpp"

namespace lam::testing {

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

// Randomised but valid corpus; shapes, ids, labels and phone segments all vary with the seed.
ladf::Corpus random_corpus(std::uint64_t seed, std::size_t max_records = 12);

// Small record with one utterance segment filled with `value`.
ladf::Record constant_record(const std::string& id, ladf::Split split, std::uint8_t emotion, std::size_t L,
                             std::size_t D, double value);

// Oracles. None of these call into the library's own numeric helpers.
numkit::Matrix naive_covariance(const numkit::Matrix& x);
double naive_uar(const std::vector<std::vector<std::uint64_t>>& counts);

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double numeric = 0.0;
  double analytic = 0.0;
  double max_rel_error_large = 0.0;  // over entries with |gradient| >= 1e-3
  std::size_t checked = 0;
};

// Central differences on every scalar parameter against model::backward.
GradCheck gradient_check(const model::ModelConfig& config, std::uint64_t seed, std::size_t batch,
                         double step = 1e-5, double floor = 1e-6);

}  // namespace lam::testing

#endif  // LAM_TESTS_SUPPORT_HPP_
