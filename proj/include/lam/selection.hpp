// SPDX-License-Identifier: Apache-2.0

#ifndef LAM_SELECTION_HPP_
#define LAM_SELECTION_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lam/similarity.hpp"

namespace lam::selection {

// GL: top-k group, BL: best single layer, WL: bottom-k, RL: seeded random k.
enum class Strategy { kGL, kBL, kWL, kRL, kCustom };

std::string_view strategy_name(Strategy s);
// Case-insensitive; "gl", "BL", ...
std::optional<Strategy> parse_strategy(std::string_view name);
std::size_t default_k(Strategy s);

struct AnchorPlan {
  Strategy strategy = Strategy::kCustom;
  std::size_t k = 0;
  std::vector<std::size_t> layers;  // 1-based, ascending, unique
  std::optional<std::uint64_t> seed;
  std::string provenance;

  bool operator==(const AnchorPlan&) const = default;
};

// Which phone-level cells feed the ranking (ignored at utterance level).
enum class PhoneScope { kAll, kVowels, kConsonants };

struct LayerScore {
  std::size_t layer;
  double score;
};

// Mean similarity per layer over the cells in scope, sorted by descending
// score with ties going to the lower layer. Layers without cells are left out.
std::vector<LayerScore> rank_layers(const similarity::SimilarityReport& report,
                                    PhoneScope scope = PhoneScope::kAll);

// k defaults per strategy (3, or 1 for BL). Errors: InvalidK, MissingSeed.
AnchorPlan select(const similarity::SimilarityReport& report, Strategy strategy,
                  std::optional<std::size_t> k = std::nullopt, std::optional<std::uint64_t> seed = std::nullopt,
                  PhoneScope scope = PhoneScope::kAll);

// Verbatim layer sets. name: "wavlm-paper" | "whisper-paper";
// set: GL, BL, WL, RL1, RL2, RL3. UnknownPreset otherwise.
AnchorPlan preset(std::string_view name, std::string_view set);
std::vector<std::string> preset_names();
std::vector<std::string> preset_sets();

// A hand-picked plan; InvalidAnchor when a layer is outside 1..num_layers or repeated.
AnchorPlan custom_plan(std::vector<std::size_t> layers, std::size_t num_layers);

// Parses "8,9,11".
std::vector<std::size_t> parse_layer_list(std::string_view text);

// Checks layers are non-empty, unique, ascending and within 1..num_layers.
void check_plan(const AnchorPlan& plan, std::size_t num_layers);

std::string to_json(const AnchorPlan& plan);
AnchorPlan plan_from_json(std::string_view text);
void save_plan(const AnchorPlan& plan, const std::filesystem::path& path);
AnchorPlan load_plan(const std::filesystem::path& path);

}  // namespace lam::selection

#endif  // LAM_SELECTION_HPP_
