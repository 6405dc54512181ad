// SPDX-License-Identifier: Apache-2.0

#include "lam/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "lam/errors.hpp"
#include "lam/rng.hpp"

namespace lam::train {
namespace {

using model::Batch;
using numkit::Matrix;

constexpr std::uint64_t kInitTag = 0x1217;
constexpr std::uint64_t kShuffleTag = 0x5407;

std::string format9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Permutation of [0, n) for pass `pass`. Equal-sized streams share passes, so a
// target identical to the source yields identical batches.
std::vector<std::size_t> pass_order(std::uint64_t seed, std::uint64_t pass, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::stream(seed, {kShuffleTag, pass});
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

Batch gather(const Dataset& data, std::span<const std::size_t> rows) {
  Batch out;
  out.reserve(data.layers.size());
  for (const auto& layer : data.layers) {
    Matrix m(rows.size(), layer.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto src = layer.row(rows[r]);
      std::copy(src.begin(), src.end(), m.row(r).begin());
    }
    out.push_back(std::move(m));
  }
  return out;
}

// Endless sequence of indices over a dataset, reshuffled at each pass.
class CyclingStream {
 public:
  CyclingStream(std::uint64_t seed, std::size_t n) : seed_(seed), n_(n) {}

  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (pos_ == order_.size()) {
        order_ = pass_order(seed_, pass_++, n_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::uint64_t seed_;
  std::size_t n_;
  std::uint64_t pass_ = 0;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

double sample_sd(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

}  // namespace

void check_config(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0)) fail(ErrorCode::kInvalidConfig, "learning_rate must be positive");
  if (!(c.decay >= 0.0)) fail(ErrorCode::kInvalidConfig, "decay must be non-negative");
  if (c.batch_size < 2) fail(ErrorCode::kInvalidConfig, "batch_size must be at least 2");
  if (c.max_epochs < 1) fail(ErrorCode::kInvalidConfig, "max_epochs must be at least 1");
  if (c.early_stop_patience < 1) fail(ErrorCode::kInvalidConfig, "early_stop_patience must be at least 1");
  if (!(c.gamma >= 0.0) || !std::isfinite(c.gamma)) fail(ErrorCode::kInvalidConfig, "gamma must be finite and >= 0");
  if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0) || !(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0)) {
    fail(ErrorCode::kInvalidConfig, "Adam betas must lie in [0, 1)");
  }
  if (!(c.adam_epsilon > 0.0)) fail(ErrorCode::kInvalidConfig, "adam_epsilon must be positive");
}

AdamW::AdamW(const model::ModelConfig& shape, const TrainConfig& config)
    : config_(config), m_(model::zeros_like(shape)), v_(model::zeros_like(shape)) {}

double AdamW::current_learning_rate() const {
  if (config_.decay_mode == DecayMode::kLearningRateDecay) {
    return config_.learning_rate / (1.0 + config_.decay * static_cast<double>(steps_));
  }
  return config_.learning_rate;
}

void AdamW::step(model::ModelParams& params, const model::Gradients& grad) {
  const double lr = current_learning_rate();
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.adam_beta1, t);
  const double c2 = 1.0 - std::pow(config_.adam_beta2, t);
  const double shrink =
      config_.decay_mode == DecayMode::kWeightDecay ? config_.learning_rate * config_.decay : 0.0;

  auto p = model::tensors(params);
  auto g = model::tensors(grad);
  auto m = model::tensors(m_);
  auto v = model::tensors(v_);
  for (std::size_t k = 0; k < p.size(); ++k) {
    auto pv = p[k].values;
    auto gv = g[k].values;
    auto mv = m[k].values;
    auto vv = v[k].values;
    for (std::size_t i = 0; i < pv.size(); ++i) {
      mv[i] = config_.adam_beta1 * mv[i] + (1.0 - config_.adam_beta1) * gv[i];
      vv[i] = config_.adam_beta2 * vv[i] + (1.0 - config_.adam_beta2) * gv[i] * gv[i];
      const double update = (mv[i] / c1) / (std::sqrt(vv[i] / c2) + config_.adam_epsilon);
      if (p[k].is_weight) pv[i] -= shrink * pv[i];
      pv[i] -= lr * update;
    }
  }
}

model::ModelConfig default_model_config(const ladf::CorpusHeader& header) {
  model::ModelConfig c;
  c.num_layers = header.num_layers;
  c.input_dim = header.dim;
  c.fc_dims[3] = header.emotions.size();
  return c;
}

Dataset make_dataset(const ladf::Corpus& corpus, ladf::Split split) {
  std::vector<const ladf::Record*> rows;
  for (const auto& r : corpus.records)
    if (r.split == split) rows.push_back(&r);
  Dataset data;
  const std::size_t L = corpus.header.num_layers;
  const std::size_t D = corpus.header.dim;
  data.layers.assign(L, Matrix(rows.size(), D));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const ladf::Segment& seg = rows[r]->utterance();
    for (std::size_t i = 0; i < L; ++i) {
      auto src = seg.features.row(i);
      std::copy(src.begin(), src.end(), data.layers[i].row(r).begin());
    }
    data.labels.push_back(rows[r]->emotion);
  }
  return data;
}

metrics::ConfusionMatrix evaluate(const model::ModelConfig& config, const model::ModelParams& params,
                                  const ladf::Corpus& corpus, ladf::Split split) {
  if (corpus.header.emotions.size() != config.num_classes()) {
    fail(ErrorCode::kCorpusMismatch, "corpus has " + std::to_string(corpus.header.emotions.size()) +
                                         " emotion classes, model predicts " + std::to_string(config.num_classes()));
  }
  const Dataset data = make_dataset(corpus, split);
  if (data.size() == 0) {
    fail(ErrorCode::kEmptySplit, "no " + std::string(ladf::split_name(split)) + " records in '" +
                                     corpus.header.corpus_name + "'");
  }
  const auto pred = model::predict(config, params, data.layers);
  return metrics::confusion(data.labels, pred.classes, config.num_classes(), corpus.header.emotions);
}

TrainResult train(const ladf::Corpus& source, const ladf::Corpus* target, const model::ModelConfig& model_config,
                  const TrainConfig& config) {
  check_config(config);
  model::ModelConfig mc = model_config;
  mc.gamma = config.gamma;
  model::check_config(mc);
  if (source.header.num_layers != mc.num_layers || source.header.dim != mc.input_dim) {
    fail(ErrorCode::kCorpusMismatch, "source corpus shape does not match the model config");
  }
  if (source.header.emotions.size() != mc.num_classes()) {
    fail(ErrorCode::kInvalidConfig, "model predicts " + std::to_string(mc.num_classes()) + " classes, corpus has " +
                                        std::to_string(source.header.emotions.size()));
  }
  const bool anchoring = target != nullptr && config.anchor.has_value();
  if (anchoring) {
    if (target->header.num_layers != source.header.num_layers || target->header.dim != source.header.dim) {
      fail(ErrorCode::kCorpusMismatch, "source and target differ in layer count or dim");
    }
    selection::check_plan(*config.anchor, mc.num_layers);
  }
  const std::vector<std::size_t> anchors = anchoring ? config.anchor->layers : std::vector<std::size_t>{};

  const Dataset train_set = make_dataset(source, ladf::Split::kTrain);
  const Dataset val_set = make_dataset(source, ladf::Split::kValidation);
  if (train_set.size() < 2) fail(ErrorCode::kEmptySplit, "source train split has fewer than 2 records");
  if (val_set.size() == 0) fail(ErrorCode::kEmptySplit, "source validation split is empty");
  Dataset target_set;
  if (anchoring) {
    target_set = make_dataset(*target, ladf::Split::kTrain);
    if (target_set.size() < 2) fail(ErrorCode::kEmptySplit, "target train split has fewer than 2 records");
  }

  TrainResult result;
  result.model_config = mc;
  result.report.seed = config.seed;
  model::ModelParams params = model::init_params(mc, splitmix64(config.seed ^ kInitTag));
  result.params = params;
  AdamW adam(mc, config);
  CyclingStream target_stream(config.seed, target_set.size());

  double best_uar = -1.0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto order = pass_order(config.seed, epoch - 1, train_set.size());
    EpochStats stats;
    stats.epoch = epoch;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      if (n < 2) break;
      const std::span<const std::size_t> rows(order.data() + start, n);
      const Batch src = gather(train_set, rows);
      std::vector<std::size_t> labels(n);
      for (std::size_t r = 0; r < n; ++r) labels[r] = train_set.labels[rows[r]];
      Batch tar;
      if (anchoring) tar = gather(target_set, target_stream.next(n));

      const auto fwd = model::forward(mc, params, src, labels, anchoring ? &tar : nullptr, anchors);
      if (!std::isfinite(fwd.losses.total)) {
        fail(ErrorCode::kDiverged, "non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                       std::to_string(steps + 1));
      }
      const auto grad = model::backward(mc, params, fwd.cache, labels, anchors);
      adam.step(params, grad);
      stats.loss_er += fwd.losses.er;
      stats.loss_coral += fwd.losses.coral;
      stats.loss_total += fwd.losses.total;
      ++steps;
    }
    if (steps > 0) {
      stats.loss_er /= static_cast<double>(steps);
      stats.loss_coral /= static_cast<double>(steps);
      stats.loss_total /= static_cast<double>(steps);
    }
    for (const auto& t : model::tensors(params)) {
      if (!numkit::all_finite(t.values)) {
        fail(ErrorCode::kDiverged, "non-finite parameter '" + t.name + "' after epoch " + std::to_string(epoch));
      }
    }
    const auto pred = model::predict(mc, params, val_set.layers);
    stats.validation_uar =
        metrics::uar(metrics::confusion(val_set.labels, pred.classes, mc.num_classes()));
    result.report.epochs.push_back(stats);
    result.report.epochs_run = epoch;

    if (stats.validation_uar > best_uar) {
      best_uar = stats.validation_uar;
      result.report.best_epoch = epoch;
      result.params = params;
    } else if (epoch - result.report.best_epoch >= config.early_stop_patience) {
      result.report.stopped_early = true;
      break;
    }
  }
  result.report.best_validation_uar = best_uar;
  return result;
}

std::string report_to_json(const TrainReport& report, const model::ModelConfig& model_config,
                           const TrainConfig& config) {
  nlohmann::json j;
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : report.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"loss_er", e.loss_er},
                      {"loss_coral", e.loss_coral},
                      {"loss_total", e.loss_total},
                      {"validation_uar", e.validation_uar}});
  }
  j["epochs"] = epochs;
  j["best_epoch"] = report.best_epoch;
  j["epochs_run"] = report.epochs_run;
  j["stopped_early"] = report.stopped_early;
  j["best_validation_uar"] = report.best_validation_uar;
  j["checkpoint"] = report.checkpoint;
  j["seed"] = report.seed;
  j["model_config"] = nlohmann::json::parse(model::config_to_json(model_config));
  j["train_config"] = {
      {"learning_rate", config.learning_rate},
      {"decay", config.decay},
      {"decay_mode", config.decay_mode == DecayMode::kWeightDecay ? "weight" : "learning_rate"},
      {"batch_size", config.batch_size},
      {"max_epochs", config.max_epochs},
      {"early_stop_patience", config.early_stop_patience},
      {"gamma", config.gamma},
      {"anchor", config.anchor ? nlohmann::json::parse(selection::to_json(*config.anchor)) : nlohmann::json(nullptr)},
      {"seed", config.seed},
      {"adam_beta1", config.adam_beta1},
      {"adam_beta2", config.adam_beta2},
      {"adam_epsilon", config.adam_epsilon},
  };
  return j.dump(2) + "\n";
}

ExperimentTable run_experiment(const ladf::Corpus& source, const ladf::Corpus& target,
                               const std::vector<ExperimentArm>& arms, const std::vector<std::uint64_t>& seeds,
                               const model::ModelConfig& model_config, const TrainConfig& base, std::size_t jobs) {
  if (arms.empty()) fail(ErrorCode::kInvalidConfig, "experiment needs at least one strategy");
  if (seeds.empty()) fail(ErrorCode::kInvalidConfig, "experiment needs at least one seed");
  check_config(base);

  ExperimentTable table;
  table.cells.resize(arms.size() * seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t idx = next++; idx < table.cells.size(); idx = next++) {
      const ExperimentArm& arm = arms[idx / seeds.size()];
      ExperimentCell& cell = table.cells[idx];
      cell.label = arm.label;
      cell.seed = seeds[idx % seeds.size()];
      try {
        TrainConfig cfg = base;
        cfg.anchor = arm.anchor;
        cfg.seed = cell.seed;
        const TrainResult r = train(source, &target, model_config, cfg);
        cell.best_epoch = r.report.best_epoch;
        cell.epochs_run = r.report.epochs_run;
        cell.uar = metrics::uar(evaluate(r.model_config, r.params, target, ladf::Split::kTest));
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(jobs, 1, table.cells.size());
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (std::size_t a = 0; a < arms.size(); ++a) {
    ArmSummary s;
    s.label = arms[a].label;
    std::vector<double> values;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      const auto& cell = table.cells[a * seeds.size() + k];
      if (cell.uar) values.push_back(*cell.uar);
    }
    s.runs = values.size();
    if (!values.empty()) {
      s.mean_uar = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
      s.sd_uar = sample_sd(values, s.mean_uar);
    }
    table.summary.push_back(s);
  }
  return table;
}

std::string experiment_csv(const ExperimentTable& table) {
  std::string out = "strategy,seed,uar,best_epoch,epochs_run,status\n";
  for (const auto& c : table.cells) {
    std::string status = "ok";
    if (!c.uar) {
      status = "failed: " + c.error;
      std::replace(status.begin(), status.end(), ',', ';');
      std::replace(status.begin(), status.end(), '\n', ' ');
    }
    out += c.label + "," + std::to_string(c.seed) + "," + (c.uar ? format9(*c.uar) : std::string()) + "," +
           std::to_string(c.best_epoch) + "," + std::to_string(c.epochs_run) + "," + status + "\n";
  }
  return out;
}

std::string experiment_json(const ExperimentTable& table) {
  nlohmann::json j;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : table.cells) {
    cells.push_back({{"strategy", c.label},
                     {"seed", c.seed},
                     {"uar", c.uar ? nlohmann::json(*c.uar) : nlohmann::json(nullptr)},
                     {"best_epoch", c.best_epoch},
                     {"epochs_run", c.epochs_run},
                     {"error", c.error}});
  }
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& s : table.summary) {
    summary.push_back({{"strategy", s.label}, {"runs", s.runs}, {"mean_uar", s.mean_uar}, {"sd_uar", s.sd_uar}});
  }
  j["cells"] = cells;
  j["summary"] = summary;
  return j.dump(2) + "\n";
}

}  // namespace lam::train
