// SPDX-License-Identifier: Apache-2.0

#include "lam/selection.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>

#include <json.hpp>

#include "lam/errors.hpp"
#include "lam/rng.hpp"

namespace lam::selection {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool in_scope(const similarity::Cell& cell, similarity::Level level, PhoneScope scope) {
  if (level == similarity::Level::kUtterance || scope == PhoneScope::kAll) return true;
  const bool consonant = cell.phone == similarity::kConsonantGroup;
  return scope == PhoneScope::kConsonants ? consonant : !consonant;
}

std::string report_provenance(const similarity::SimilarityReport& report, PhoneScope scope) {
  const std::string text = similarity::to_json(report);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  std::string out = "report:" + std::string(similarity::level_name(report.level)) + ":" + buf;
  if (report.level == similarity::Level::kPhone && scope != PhoneScope::kAll) {
    out += scope == PhoneScope::kVowels ? ":vowels" : ":consonants";
  }
  return out;
}

// Table 1 layer sets.
const std::map<std::string, std::map<std::string, std::vector<std::size_t>>>& presets() {
  static const std::map<std::string, std::map<std::string, std::vector<std::size_t>>> table = {
      {"wavlm-paper",
       {{"GL", {8, 9, 11}},
        {"BL", {11}},
        {"WL", {5, 6, 7}},
        {"RL1", {2, 6, 9}},
        {"RL2", {1, 5, 12}},
        {"RL3", {3, 7, 11}}}},
      {"whisper-paper",
       {{"GL", {1, 2, 3}},
        {"BL", {2}},
        {"WL", {7, 10, 11}},
        {"RL1", {2, 6, 9}},
        {"RL2", {1, 5, 12}},
        {"RL3", {3, 7, 11}}}},
  };
  return table;
}

}  // namespace

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kGL: return "GL";
    case Strategy::kBL: return "BL";
    case Strategy::kWL: return "WL";
    case Strategy::kRL: return "RL";
    case Strategy::kCustom: return "custom";
  }
  return "?";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  const std::string n = lower(name);
  if (n == "gl") return Strategy::kGL;
  if (n == "bl") return Strategy::kBL;
  if (n == "wl") return Strategy::kWL;
  if (n == "rl") return Strategy::kRL;
  if (n == "custom") return Strategy::kCustom;
  return std::nullopt;
}

std::size_t default_k(Strategy s) { return s == Strategy::kBL ? 1 : 3; }

std::vector<LayerScore> rank_layers(const similarity::SimilarityReport& report, PhoneScope scope) {
  std::vector<double> sum(report.num_layers + 1, 0.0);
  std::vector<std::size_t> count(report.num_layers + 1, 0);
  for (const auto& cell : report.cells) {
    if (!in_scope(cell, report.level, scope)) continue;
    if (cell.layer < 1 || cell.layer > report.num_layers) continue;
    sum[cell.layer] += cell.value;
    ++count[cell.layer];
  }
  std::vector<LayerScore> ranked;
  for (std::size_t layer = 1; layer <= report.num_layers; ++layer) {
    if (count[layer] > 0) ranked.push_back({layer, sum[layer] / static_cast<double>(count[layer])});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const LayerScore& a, const LayerScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.layer < b.layer;
  });
  return ranked;
}

AnchorPlan select(const similarity::SimilarityReport& report, Strategy strategy, std::optional<std::size_t> k,
                  std::optional<std::uint64_t> seed, PhoneScope scope) {
  if (strategy == Strategy::kCustom) {
    fail(ErrorCode::kInvalidConfig, "custom plans are built from explicit layers, not selected");
  }
  const std::size_t want = k.value_or(default_k(strategy));
  if (strategy == Strategy::kBL && want != 1) fail(ErrorCode::kInvalidK, "BL always selects exactly one layer");
  const auto ranked = rank_layers(report, scope);
  if (want < 1 || want > ranked.size()) {
    fail(ErrorCode::kInvalidK, "k = " + std::to_string(want) + " with " + std::to_string(ranked.size()) +
                                   " ranked layers");
  }
  AnchorPlan plan;
  plan.strategy = strategy;
  plan.k = want;
  plan.provenance = report_provenance(report, scope);
  switch (strategy) {
    case Strategy::kGL:
    case Strategy::kBL:
      for (std::size_t i = 0; i < want; ++i) plan.layers.push_back(ranked[i].layer);
      break;
    case Strategy::kWL:
      for (std::size_t i = 0; i < want; ++i) plan.layers.push_back(ranked[ranked.size() - 1 - i].layer);
      break;
    case Strategy::kRL: {
      if (!seed) fail(ErrorCode::kMissingSeed, "random layer selection needs a seed");
      plan.seed = seed;
      std::vector<std::size_t> pool;
      for (const auto& r : ranked) pool.push_back(r.layer);
      std::sort(pool.begin(), pool.end());
      Rng rng = Rng::stream(*seed, {0x5E1EC7});
      // Partial Fisher-Yates: the first `want` slots end up a uniform sample.
      for (std::size_t i = 0; i < want; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
      }
      plan.layers.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(want));
      break;
    }
    case Strategy::kCustom:
      break;
  }
  std::sort(plan.layers.begin(), plan.layers.end());
  return plan;
}

AnchorPlan preset(std::string_view name, std::string_view set) {
  const auto& table = presets();
  const auto model = table.find(lower(name));
  std::string key(set);
  for (char& c : key) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (model == table.end() || !model->second.contains(key)) {
    fail(ErrorCode::kUnknownPreset, "no preset '" + std::string(name) + "' / '" + std::string(set) + "'");
  }
  AnchorPlan plan;
  plan.layers = model->second.at(key);
  plan.k = plan.layers.size();
  plan.strategy = key.starts_with("RL") ? Strategy::kRL : *parse_strategy(key);
  plan.provenance = "preset:" + model->first + ":" + key;
  return plan;
}

std::vector<std::string> preset_names() { return {"wavlm-paper", "whisper-paper"}; }
std::vector<std::string> preset_sets() { return {"GL", "BL", "WL", "RL1", "RL2", "RL3"}; }

void check_plan(const AnchorPlan& plan, std::size_t num_layers) {
  if (plan.layers.empty()) fail(ErrorCode::kInvalidAnchor, "anchor plan has no layers");
  for (std::size_t i = 0; i < plan.layers.size(); ++i) {
    const std::size_t l = plan.layers[i];
    if (l < 1 || l > num_layers) {
      fail(ErrorCode::kInvalidAnchor, "anchor layer " + std::to_string(l) + " outside 1.." + std::to_string(num_layers));
    }
    if (i > 0 && plan.layers[i - 1] >= l) fail(ErrorCode::kInvalidAnchor, "anchor layers must be unique and ascending");
  }
  if (plan.k != plan.layers.size()) fail(ErrorCode::kInvalidAnchor, "plan k does not match its layer count");
}

AnchorPlan custom_plan(std::vector<std::size_t> layers, std::size_t num_layers) {
  std::sort(layers.begin(), layers.end());
  AnchorPlan plan;
  plan.strategy = Strategy::kCustom;
  plan.k = layers.size();
  plan.layers = std::move(layers);
  plan.provenance = "custom";
  check_plan(plan, num_layers);
  return plan;
}

std::vector<std::size_t> parse_layer_list(std::string_view text) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view item = text.substr(pos, end - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size()) {
      fail(ErrorCode::kInvalidAnchor, "cannot parse layer list '" + std::string(text) + "'");
    }
    out.push_back(v);
    pos = end + 1;
  }
  return out;
}

std::string to_json(const AnchorPlan& plan) {
  nlohmann::json j;
  j["strategy"] = strategy_name(plan.strategy);
  j["k"] = plan.k;
  j["layers"] = plan.layers;
  j["seed"] = plan.seed ? nlohmann::json(*plan.seed) : nlohmann::json(nullptr);
  j["provenance"] = plan.provenance;
  return j.dump(2) + "\n";
}

AnchorPlan plan_from_json(std::string_view text) {
  AnchorPlan plan;
  try {
    const auto j = nlohmann::json::parse(text);
    const auto s = parse_strategy(j.at("strategy").get<std::string>());
    if (!s) fail(ErrorCode::kFormatError, "unknown strategy in anchor plan");
    plan.strategy = *s;
    plan.k = j.at("k").get<std::size_t>();
    plan.layers = j.at("layers").get<std::vector<std::size_t>>();
    if (j.contains("seed") && !j.at("seed").is_null()) plan.seed = j.at("seed").get<std::uint64_t>();
    plan.provenance = j.value("provenance", std::string());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, std::string("bad anchor plan: ") + e.what());
  }
  return plan;
}

void save_plan(const AnchorPlan& plan, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  out << to_json(plan);
}

AnchorPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path.string());
  return plan_from_json(std::string{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
}

}  // namespace lam::selection
