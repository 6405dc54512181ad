// SPDX-License-Identifier: Apache-2.0
//
// Cross-corpus layer similarity: for every (emotion, layer) cell, and at
// phone level every (phone, emotion, layer) cell, the cosine between the
// source and target class centroids of that layer's pooled vectors.

#ifndef LAM_SIMILARITY_HPP_
#define LAM_SIMILARITY_HPP_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lam/feature_store.hpp"

namespace lam::similarity {

enum class Level { kUtterance, kPhone };

std::string_view level_name(Level level);
std::optional<Level> parse_level(std::string_view name);

// Which segments feed a centroid: a phone class, optionally narrowed to a set
// of phone labels.
struct PhoneFilter {
  ladf::PhoneClass phone_class = ladf::PhoneClass::kUtterance;
  std::vector<std::string> labels;  // empty = any label of that class

  static PhoneFilter utterance() { return {}; }
  bool matches(const ladf::Segment& seg) const;
};

// A phone-level row: canonical name plus the labels that map onto it.
struct PhoneGroup {
  std::string name;
  PhoneFilter filter;
};

// [a, ɛ, ə, i, ɔ, u] (with ɑ folded into a) and one pooled consonant group.
const std::vector<PhoneGroup>& default_phone_groups();
inline constexpr std::string_view kConsonantGroup = "consonants";

// Mean of the layer-`layer` (1-based) vectors of all matching segments, summed
// in ascending utt_id order. EmptySelection if nothing matches.
numkit::Vector centroid(std::span<const ladf::Record> records, std::uint8_t emotion, std::size_t layer,
                        const PhoneFilter& phones = PhoneFilter::utterance());

struct Cell {
  std::string phone;  // empty at utterance level
  std::size_t emotion = 0;
  std::size_t layer = 0;  // 1-based
  double value = 0.0;
  std::size_t n_source = 0;
  std::size_t n_target = 0;

  bool operator==(const Cell&) const = default;
};

struct SimilarityReport {
  Level level = Level::kUtterance;
  std::size_t num_layers = 0;
  std::vector<std::string> emotions;
  std::vector<Cell> cells;  // ordered by (phone group, emotion, layer)
  std::vector<std::string> warnings;

  bool operator==(const SimilarityReport&) const = default;
};

// CorpusMismatch when layer count, dim or emotion vocabulary differ. Cells
// without samples on either side are omitted and noted in `warnings`.
SimilarityReport layer_similarity(const ladf::Corpus& source, const ladf::Corpus& target, Level level,
                                  bool train_only = true);

enum class ExportFormat { kJson, kCsv };

std::string to_json(const SimilarityReport& report);
SimilarityReport from_json(std::string_view text);
// level,emotion,phone,layer,similarity,n_source,n_target
std::string to_csv(const SimilarityReport& report);

// IoError when the destination cannot be written.
void export_report(const SimilarityReport& report, ExportFormat format, const std::filesystem::path& path);
SimilarityReport load_report(const std::filesystem::path& path);

}  // namespace lam::similarity

#endif  // LAM_SIMILARITY_HPP_
