// SPDX-License-Identifier: Apache-2.0

#ifndef LAM_TRAINER_HPP_
#define LAM_TRAINER_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lam/feature_store.hpp"
#include "lam/metrics.hpp"
#include "lam/model.hpp"
#include "lam/selection.hpp"

namespace lam::train {

enum class DecayMode {
  // Decoupled (AdamW-style) shrinkage of weight matrices by lr * decay per step.
  kWeightDecay,
  // Inverse-time learning-rate decay lr_t = lr / (1 + decay * t), t = step count.
  kLearningRateDecay,
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double decay = 1e-3;
  DecayMode decay_mode = DecayMode::kWeightDecay;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 70;
  std::size_t early_stop_patience = 7;
  double gamma = 0.5;
  // No plan means no anchoring branch at all.
  std::optional<selection::AnchorPlan> anchor;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

// Throws InvalidConfig.
void check_config(const TrainConfig& config);

class AdamW {
 public:
  AdamW(const model::ModelConfig& shape, const TrainConfig& config);

  void step(model::ModelParams& params, const model::Gradients& grad);
  std::uint64_t steps() const { return steps_; }
  double current_learning_rate() const;

 private:
  TrainConfig config_;
  model::ModelParams m_;
  model::ModelParams v_;
  std::uint64_t steps_ = 0;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double loss_er = 0.0;
  double loss_coral = 0.0;
  double loss_total = 0.0;
  double validation_uar = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  bool stopped_early = false;
  double best_validation_uar = 0.0;
  std::string checkpoint;  // filled in by whoever writes the parameters
  std::uint64_t seed = 0;
};

struct TrainResult {
  model::ModelConfig model_config;
  model::ModelParams params;  // from the best validation epoch
  TrainReport report;
};

// Model config matching a corpus header with the default widths.
model::ModelConfig default_model_config(const ladf::CorpusHeader& header);

// Source must have train and validation records; target train records are
// used without labels. Errors: InvalidConfig, CorpusMismatch, EmptySplit, Diverged.
TrainResult train(const ladf::Corpus& source, const ladf::Corpus* target, const model::ModelConfig& model_config,
                  const TrainConfig& config);

// Stacks the utterance segments of one split into a model batch.
struct Dataset {
  model::Batch layers;  // one N x D matrix per layer
  std::vector<std::size_t> labels;
  std::size_t size() const { return labels.size(); }
};

Dataset make_dataset(const ladf::Corpus& corpus, ladf::Split split);

metrics::ConfusionMatrix evaluate(const model::ModelConfig& config, const model::ModelParams& params,
                                  const ladf::Corpus& corpus, ladf::Split split);

std::string report_to_json(const TrainReport& report, const model::ModelConfig& model_config,
                           const TrainConfig& config);

struct ExperimentArm {
  std::string label;
  std::optional<selection::AnchorPlan> anchor;  // none = no anchoring
};

struct ExperimentCell {
  std::string label;
  std::uint64_t seed = 0;
  std::optional<double> uar;  // target-test UAR; empty when the cell failed
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::string error;
};

struct ArmSummary {
  std::string label;
  std::size_t runs = 0;  // successful cells
  double mean_uar = 0.0;
  double sd_uar = 0.0;
};

struct ExperimentTable {
  std::vector<ExperimentCell> cells;  // arm-major, seeds in the given order
  std::vector<ArmSummary> summary;
};

// Trains one model per (arm, seed). Cells are independent and self-seeded, so
// the table does not depend on `jobs`. InvalidConfig on empty arms or seeds.
ExperimentTable run_experiment(const ladf::Corpus& source, const ladf::Corpus& target,
                               const std::vector<ExperimentArm>& arms, const std::vector<std::uint64_t>& seeds,
                               const model::ModelConfig& model_config, const TrainConfig& base,
                               std::size_t jobs = 1);

// strategy,seed,uar,best_epoch,epochs_run,status
std::string experiment_csv(const ExperimentTable& table);
std::string experiment_json(const ExperimentTable& table);

}  // namespace lam::train

#endif  // LAM_TRAINER_HPP_
