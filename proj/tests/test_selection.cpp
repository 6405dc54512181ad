// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "lam/errors.hpp"
#include "lam/selection.hpp"
#include "support.hpp"

namespace lam::selection {
namespace {

using similarity::Cell;
using similarity::SimilarityReport;

// One emotion; layer i gets score scores[i-1].
SimilarityReport report_from(const std::vector<double>& scores) {
  SimilarityReport r;
  r.num_layers = scores.size();
  r.emotions = {"neutral"};
  for (std::size_t i = 0; i < scores.size(); ++i) r.cells.push_back({"", 0, i + 1, scores[i], 3, 3});
  return r;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::kIoError;
}

TEST(Select, GreatestAndWorst) {
  const auto r = report_from({0.1, 0.9, 0.5, 0.7, 0.3});
  EXPECT_EQ(select(r, Strategy::kGL, 3).layers, (std::vector<std::size_t>{2, 3, 4}));
  EXPECT_EQ(select(r, Strategy::kWL, 2).layers, (std::vector<std::size_t>{1, 5}));
  EXPECT_EQ(select(r, Strategy::kBL).layers, (std::vector<std::size_t>{2}));
  EXPECT_EQ(select(r, Strategy::kGL).k, 3u);
}

TEST(Select, TiesGoToLowerLayer) {
  const auto r = report_from({0.5, 0.5, 0.5, 0.5});
  EXPECT_EQ(select(r, Strategy::kGL, 2).layers, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(select(r, Strategy::kBL).layers, (std::vector<std::size_t>{1}));
}

TEST(Select, Errors) {
  const auto r = report_from({0.1, 0.2});
  EXPECT_EQ(code_of([&] { select(r, Strategy::kBL, 2); }), ErrorCode::kInvalidK);
  EXPECT_EQ(code_of([&] { select(r, Strategy::kGL, 3); }), ErrorCode::kInvalidK);
  EXPECT_EQ(code_of([&] { select(r, Strategy::kGL, 0); }), ErrorCode::kInvalidK);
  EXPECT_EQ(code_of([&] { select(r, Strategy::kRL, 1); }), ErrorCode::kMissingSeed);
}

TEST(Select, RandomIsSeededAndValid) {
  const auto r = report_from({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 0.0, 0.05});
  const auto a = select(r, Strategy::kRL, 3, 42), b = select(r, Strategy::kRL, 3, 42);
  EXPECT_EQ(a.layers, b.layers);
  EXPECT_EQ(a.seed, std::optional<std::uint64_t>(42));
  std::set<std::vector<std::size_t>> distinct;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto p = select(r, Strategy::kRL, 3, s);
    EXPECT_EQ(p.layers.size(), 3u);
    EXPECT_TRUE(std::is_sorted(p.layers.begin(), p.layers.end()));
    EXPECT_EQ(std::set<std::size_t>(p.layers.begin(), p.layers.end()).size(), 3u);
    distinct.insert(p.layers);
  }
  EXPECT_GT(distinct.size(), 10u);
}

TEST(Select, GlAndWlDisjointWhenRoomy) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<double> scores(12);
    for (auto& s : scores) s = rng.uniform(-1, 1);
    const auto r = report_from(scores);
    const auto gl = select(r, Strategy::kGL, 3), wl = select(r, Strategy::kWL, 3);
    for (std::size_t l : gl.layers) EXPECT_EQ(std::count(wl.layers.begin(), wl.layers.end(), l), 0);
    // every GL score >= every WL score
    for (std::size_t g : gl.layers)
      for (std::size_t w : wl.layers) EXPECT_GE(scores[g - 1], scores[w - 1]);
  }
}

TEST(Select, ProvenanceNamesTheReport) {
  const auto r = report_from({0.3, 0.2});
  const auto p = select(r, Strategy::kGL, 1);
  EXPECT_EQ(p.provenance.rfind("report:utterance:", 0), 0u);
  const auto q = select(report_from({0.3, 0.25}), Strategy::kGL, 1);
  EXPECT_NE(p.provenance, q.provenance);
}

TEST(Rank, PhoneScope) {
  SimilarityReport r;
  r.level = similarity::Level::kPhone;
  r.num_layers = 2;
  r.emotions = {"neutral"};
  r.cells = {{"a", 0, 1, 0.9, 1, 1}, {"a", 0, 2, 0.1, 1, 1}, {"consonants", 0, 1, 0.0, 1, 1},
             {"consonants", 0, 2, 0.8, 1, 1}};
  EXPECT_EQ(select(r, Strategy::kBL, 1, std::nullopt, PhoneScope::kVowels).layers, (std::vector<std::size_t>{1}));
  EXPECT_EQ(select(r, Strategy::kBL, 1, std::nullopt, PhoneScope::kConsonants).layers,
            (std::vector<std::size_t>{2}));
  const auto all = rank_layers(r);
  ASSERT_EQ(all.size(), 2u);
  EXPECT_NEAR(all[0].score, 0.45, 1e-15);
}

TEST(Preset, PublishedLayerSets) {
  using V = std::vector<std::size_t>;
  EXPECT_EQ(preset("wavlm-paper", "GL").layers, (V{8, 9, 11}));
  EXPECT_EQ(preset("wavlm-paper", "BL").layers, (V{11}));
  EXPECT_EQ(preset("wavlm-paper", "WL").layers, (V{5, 6, 7}));
  EXPECT_EQ(preset("whisper-paper", "GL").layers, (V{1, 2, 3}));
  EXPECT_EQ(preset("whisper-paper", "BL").layers, (V{2}));
  EXPECT_EQ(preset("whisper-paper", "WL").layers, (V{7, 10, 11}));
  for (const char* m : {"wavlm-paper", "whisper-paper"}) {
    EXPECT_EQ(preset(m, "RL1").layers, (V{2, 6, 9}));
    EXPECT_EQ(preset(m, "RL2").layers, (V{1, 5, 12}));
    EXPECT_EQ(preset(m, "RL3").layers, (V{3, 7, 11}));
  }
  EXPECT_EQ(code_of([] { preset("hubert", "GL"); }), ErrorCode::kUnknownPreset);
  EXPECT_EQ(code_of([] { preset("wavlm-paper", "RL9"); }), ErrorCode::kUnknownPreset);
}

TEST(Plan, CustomAndChecks) {
  const auto p = custom_plan({9, 8, 11}, 12);
  EXPECT_EQ(p.layers, (std::vector<std::size_t>{8, 9, 11}));
  EXPECT_EQ(p.strategy, Strategy::kCustom);
  EXPECT_EQ(code_of([] { custom_plan({0}, 12); }), ErrorCode::kInvalidAnchor);
  EXPECT_EQ(code_of([] { custom_plan({13}, 12); }), ErrorCode::kInvalidAnchor);
  EXPECT_EQ(code_of([] { custom_plan({3, 3}, 12); }), ErrorCode::kInvalidAnchor);
  EXPECT_EQ(code_of([] { custom_plan({}, 12); }), ErrorCode::kInvalidAnchor);
  EXPECT_EQ(parse_layer_list("8, 9,11"), (std::vector<std::size_t>{8, 9, 11}));
  EXPECT_THROW(parse_layer_list("8,,9"), Error);
  EXPECT_THROW(parse_layer_list("a"), Error);
}

TEST(Plan, JsonRoundTrip) {
  testing::TempDir dir("plan");
  const auto r = report_from({0.1, 0.9, 0.5});
  for (const auto& p : {select(r, Strategy::kGL, 2), select(r, Strategy::kRL, 2, 7), preset("whisper-paper", "WL")}) {
    EXPECT_EQ(plan_from_json(to_json(p)), p);
    save_plan(p, dir / "p.json");
    EXPECT_EQ(load_plan(dir / "p.json"), p);
  }
}

TEST(Strategy, Names) {
  EXPECT_EQ(parse_strategy("gl"), Strategy::kGL);
  EXPECT_EQ(parse_strategy("Wl"), Strategy::kWL);
  EXPECT_FALSE(parse_strategy("xl").has_value());
  EXPECT_EQ(default_k(Strategy::kBL), 1u);
  EXPECT_EQ(default_k(Strategy::kRL), 3u);
}

}  // namespace
}  // namespace lam::selection
