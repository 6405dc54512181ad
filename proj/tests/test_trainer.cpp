// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include <json.hpp>

#include "lam/errors.hpp"
#include "lam/synthgen.hpp"
#include "lam/trainer.hpp"

namespace lam::train {
namespace {

synth::SynthOutput small_data(std::uint64_t seed, double nuisance = 0.0) {
  synth::SynthConfig c;
  c.seed = seed;
  c.num_layers = 3;
  c.dim = 6;
  c.train_per_class = 40;
  c.validation_per_class = 10;
  c.test_per_class = 10;
  c.similarity_profile = {0.8, 0.5, 0.2};
  c.noise_scale = 0.3;
  c.target_nuisance = nuisance;
  return synth::generate(c);
}

TrainConfig quick(std::uint64_t seed) {
  TrainConfig c;
  c.learning_rate = 3e-3;
  c.max_epochs = 6;
  c.batch_size = 16;
  c.seed = seed;
  return c;
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

// Multinomial logistic regression on the layer-averaged utterance vector.
double softmax_regression_oracle(const ladf::Corpus& corpus) {
  const std::size_t L = corpus.header.num_layers, D = corpus.header.dim, C = corpus.header.emotions.size();
  auto pooled = [&](const ladf::Record& r) {
    std::vector<double> x(D + 1, 0.0);
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < D; ++j) x[j] += r.utterance().features(i, j) / L;
    x[D] = 1.0;
    return x;
  };
  std::vector<std::vector<double>> w(C, std::vector<double>(D + 1, 0.0));
  std::vector<std::pair<std::vector<double>, std::size_t>> train, val;
  for (const auto& r : corpus.records) {
    if (r.split == ladf::Split::kTrain) train.push_back({pooled(r), r.emotion});
    if (r.split == ladf::Split::kValidation) val.push_back({pooled(r), r.emotion});
  }
  for (int it = 0; it < 300; ++it) {
    std::vector<std::vector<double>> g(C, std::vector<double>(D + 1, 0.0));
    for (const auto& [x, y] : train) {
      std::vector<double> z(C);
      double mx = -1e300;
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t j = 0; j <= D; ++j) z[c] += w[c][j] * x[j];
        mx = std::max(mx, z[c]);
      }
      double s = 0;
      for (auto& v : z) s += (v = std::exp(v - mx));
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j <= D; ++j) g[c][j] += (z[c] / s - (c == y)) * x[j];
    }
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t j = 0; j <= D; ++j) w[c][j] -= 1.0 * g[c][j] / train.size();
  }
  std::vector<std::size_t> hit(C, 0), tot(C, 0);
  for (const auto& [x, y] : val) {
    std::size_t best = 0;
    double bv = -1e300;
    for (std::size_t c = 0; c < C; ++c) {
      double z = 0;
      for (std::size_t j = 0; j <= D; ++j) z += w[c][j] * x[j];
      if (z > bv) bv = z, best = c;
    }
    ++tot[y];
    hit[y] += best == y;
  }
  double u = 0;
  for (std::size_t c = 0; c < C; ++c) u += static_cast<double>(hit[c]) / tot[c];
  return u / C;
}

TEST(Config, Errors) {
  TrainConfig c;
  c.max_epochs = 0;
  EXPECT_EQ(code_of([&] { check_config(c); }), ErrorCode::kInvalidConfig);
  c = TrainConfig{};
  c.batch_size = 1;
  EXPECT_THROW(check_config(c), Error);
  c = TrainConfig{};
  c.early_stop_patience = 0;
  EXPECT_THROW(check_config(c), Error);
  c = TrainConfig{};
  c.learning_rate = 0;
  EXPECT_THROW(check_config(c), Error);
  EXPECT_NO_THROW(check_config(TrainConfig{}));
}

TEST(AdamWTest, ZeroGradientOnlyShrinksWeights) {
  model::ModelConfig mc;
  mc.num_layers = 2;
  mc.input_dim = 3;
  mc.projection_dim = 4;
  mc.fc_dims = {4, 4, 4, 2};
  TrainConfig tc;
  const auto before = model::init_params(mc, 1);
  auto after = before;
  for (auto& t : model::tensors(after))
    if (!t.is_weight)
      for (double& v : t.values) v = 0.5;
  const auto biased = after;
  AdamW opt(mc, tc);
  opt.step(after, model::zeros_like(mc));
  const auto a = model::tensors(biased);
  const auto b = model::tensors(static_cast<const model::ModelParams&>(after));
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < a[k].values.size(); ++i) {
      const double expect = a[k].is_weight ? a[k].values[i] * (1.0 - tc.learning_rate * tc.decay) : a[k].values[i];
      EXPECT_DOUBLE_EQ(b[k].values[i], expect) << a[k].name;
    }
  }
}

TEST(AdamWTest, FirstStepMovesByLearningRate) {
  model::ModelConfig mc;
  mc.num_layers = 1;
  mc.input_dim = 2;
  mc.projection_dim = 2;
  mc.fc_dims = {2, 2, 2, 2};
  TrainConfig tc;
  tc.decay = 0.0;
  auto p = model::zeros_like(mc);
  auto g = model::zeros_like(mc);
  g.attention_scores[0] = 3.0;
  g.fc[0].bias[1] = -0.01;
  AdamW opt(mc, tc);
  opt.step(p, g);
  // bias-corrected Adam: first update is lr * sign(g) up to epsilon
  EXPECT_NEAR(p.attention_scores[0], -tc.learning_rate, 1e-12);
  EXPECT_NEAR(p.fc[0].bias[1], tc.learning_rate, 1e-9);
}

TEST(AdamWTest, InverseTimeLearningRate) {
  model::ModelConfig mc;
  mc.num_layers = 1;
  mc.input_dim = 2;
  mc.projection_dim = 2;
  mc.fc_dims = {2, 2, 2, 2};
  TrainConfig tc;
  tc.decay_mode = DecayMode::kLearningRateDecay;
  tc.decay = 0.5;
  AdamW opt(mc, tc);
  auto p = model::zeros_like(mc);
  EXPECT_DOUBLE_EQ(opt.current_learning_rate(), tc.learning_rate);
  opt.step(p, model::zeros_like(mc));
  opt.step(p, model::zeros_like(mc));
  EXPECT_DOUBLE_EQ(opt.current_learning_rate(), tc.learning_rate / 2.0);
}

TEST(Train, DeterministicAndReportConsistent) {
  const auto data = small_data(1, 1.0);
  auto cfg = quick(5);
  cfg.anchor = selection::custom_plan({1, 2}, 3);
  const auto mc = default_model_config(data.source.header);
  const auto a = train(data.source, &data.target, mc, cfg);
  const auto b = train(data.source, &data.target, mc, cfg);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(report_to_json(a.report, a.model_config, cfg), report_to_json(b.report, b.model_config, cfg));
  EXPECT_GE(a.report.best_epoch, 1u);
  EXPECT_LE(a.report.best_epoch, a.report.epochs_run);
  EXPECT_LE(a.report.epochs_run, cfg.max_epochs);
  for (const auto& e : a.report.epochs) {
    EXPECT_TRUE(std::isfinite(e.loss_er) && std::isfinite(e.loss_total));
    EXPECT_GE(e.loss_coral, 0.0);
  }
  cfg.seed = 6;
  EXPECT_NE(train(data.source, &data.target, mc, cfg).params, a.params);
}

TEST(Train, GammaIrrelevantWhenTargetEqualsSource) {
  const auto data = small_data(2);
  auto cfg = quick(3);
  cfg.anchor = selection::custom_plan({1, 2, 3}, 3);
  const auto mc = default_model_config(data.source.header);
  cfg.gamma = 0.0;
  const auto zero = train(data.source, &data.source, mc, cfg);
  cfg.gamma = 0.5;
  const auto half = train(data.source, &data.source, mc, cfg);
  EXPECT_EQ(zero.params, half.params);
  for (const auto& e : half.report.epochs) EXPECT_EQ(e.loss_coral, 0.0);
}

TEST(Train, EarlyStoppingBound) {
  const auto data = small_data(3);
  auto cfg = quick(1);
  cfg.max_epochs = 60;
  cfg.early_stop_patience = 2;
  cfg.learning_rate = 1e-2;
  const auto r = train(data.source, nullptr, default_model_config(data.source.header), cfg);
  if (r.report.stopped_early) EXPECT_LE(r.report.epochs_run, r.report.best_epoch + cfg.early_stop_patience);
  EXPECT_TRUE(r.report.stopped_early);
}

TEST(Train, Errors) {
  auto data = small_data(4);
  const auto mc = default_model_config(data.source.header);
  auto no_val = data.source;
  std::erase_if(no_val.records, [](const ladf::Record& r) { return r.split == ladf::Split::kValidation; });
  EXPECT_EQ(code_of([&] { train(no_val, nullptr, mc, quick(1)); }), ErrorCode::kEmptySplit);
  auto cfg = quick(1);
  cfg.max_epochs = 0;
  EXPECT_EQ(code_of([&] { train(data.source, nullptr, mc, cfg); }), ErrorCode::kInvalidConfig);
  cfg = quick(1);
  cfg.learning_rate = 1e300;
  EXPECT_EQ(code_of([&] { train(data.source, nullptr, mc, cfg); }), ErrorCode::kDiverged);
}

TEST(Train, SeparableDefaultsReachNinetyPercent) {
  synth::SynthConfig sc;
  sc.similarity_profile = synth::parse_profile("", sc.num_layers, 0.3);
  const auto data = synth::generate(sc);
  ASSERT_GE(softmax_regression_oracle(data.source), 0.90);
  const auto r = train(data.source, nullptr, default_model_config(data.source.header), TrainConfig{});
  EXPECT_GE(r.report.best_validation_uar, 0.90);
}

TEST(Experiment, SingleCellEqualsDirectRun) {
  const auto data = small_data(5, 1.0);
  const auto mc = default_model_config(data.source.header);
  auto cfg = quick(9);
  const std::vector<ExperimentArm> arms = {{"GL", selection::custom_plan({1}, 3)}};
  const auto table = run_experiment(data.source, data.target, arms, {9}, mc, cfg);
  ASSERT_EQ(table.cells.size(), 1u);
  cfg.anchor = arms[0].anchor;
  const auto direct = train(data.source, &data.target, mc, cfg);
  const double u = metrics::uar(evaluate(direct.model_config, direct.params, data.target, ladf::Split::kTest));
  EXPECT_EQ(table.cells[0].uar, std::optional<double>(u));
  EXPECT_EQ(table.summary[0].mean_uar, u);
}

TEST(Experiment, ParallelMatchesSerialAndCsvShape) {
  const auto data = small_data(6, 1.0);
  const auto mc = default_model_config(data.source.header);
  const std::vector<ExperimentArm> arms = {{"GL", selection::custom_plan({1}, 3)}, {"none", std::nullopt}};
  const auto serial = run_experiment(data.source, data.target, arms, {1, 2}, mc, quick(0), 1);
  const auto parallel = run_experiment(data.source, data.target, arms, {1, 2}, mc, quick(0), 4);
  EXPECT_EQ(experiment_csv(serial), experiment_csv(parallel));
  EXPECT_EQ(experiment_json(serial), experiment_json(parallel));
  const std::string csv = experiment_csv(serial);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "strategy,seed,uar,best_epoch,epochs_run,status");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  const auto j = nlohmann::json::parse(experiment_json(serial));
  EXPECT_EQ(j.at("summary").size(), 2u);
}

TEST(Experiment, Errors) {
  const auto data = small_data(7);
  const auto mc = default_model_config(data.source.header);
  EXPECT_EQ(code_of([&] { run_experiment(data.source, data.target, {{"none", std::nullopt}}, {}, mc, quick(0)); }),
            ErrorCode::kInvalidConfig);
  EXPECT_EQ(code_of([&] { run_experiment(data.source, data.target, {}, {1}, mc, quick(0)); }),
            ErrorCode::kInvalidConfig);
}

TEST(Experiment, FailedCellIsMarkedAndOthersContinue) {
  const auto data = small_data(8);
  const auto mc = default_model_config(data.source.header);
  auto cfg = quick(0);
  cfg.learning_rate = 1e300;
  const auto t = run_experiment(data.source, data.target, {{"none", std::nullopt}}, {1, 2}, mc, cfg);
  ASSERT_EQ(t.cells.size(), 2u);
  EXPECT_FALSE(t.cells[0].uar.has_value());
  EXPECT_FALSE(t.cells[1].uar.has_value());
  EXPECT_NE(experiment_csv(t).find("failed"), std::string::npos);
}

}  // namespace
}  // namespace lam::train
