// SPDX-License-Identifier: Apache-2.0
//
// Layer-anchored emotion classifier over frozen, pooled encoder features.
//
//   P_i   = relu(X_i W_i' + b_i)                  per-layer projection, i = 1..L
//   alpha = softmax(a)                            learnable layer attention
//   A     = sum_i alpha_i P_i                     attention-weighted pooling (source)
//   logits = FC4(relu(FC3(relu(FC2(relu(FC1(A)))))))
//   L_er  = mean cross-entropy of softmax(logits) against the source labels
//   L_coral = sum over anchor layers of dist(cov(P_i^src), cov(P_i^tar))
//   L_total = L_er + gamma * L_coral
//
// The target batch only enters through the anchor-layer projections.
// backward() is the exact analytic gradient of L_total.

#ifndef LAM_MODEL_HPP_
#define LAM_MODEL_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lam/numkit.hpp"

namespace lam::model {

using numkit::Matrix;
using numkit::Vector;

enum class CoralVariant {
  // ||C_s - C_t||_F^2 / (4 H^2)
  kNormalizedSquared,
  // ||C_s - C_t||_F; not differentiable where the covariances coincide
  kPlainFrobenius,
};

std::string_view coral_variant_name(CoralVariant v);
CoralVariant parse_coral_variant(std::string_view name);

struct ModelConfig {
  std::size_t num_layers = 12;
  std::size_t input_dim = 16;
  std::size_t projection_dim = 64;
  std::array<std::size_t, 4> fc_dims = {64, 32, 16, 4};
  double gamma = 0.5;
  CoralVariant coral_variant = CoralVariant::kNormalizedSquared;

  std::size_t num_classes() const { return fc_dims.back(); }
  bool operator==(const ModelConfig&) const = default;
};

// Throws InvalidConfig.
void check_config(const ModelConfig& config);

struct Affine {
  Matrix weight;  // out x in
  Vector bias;    // out

  bool operator==(const Affine&) const = default;
};

struct ModelParams {
  std::vector<Affine> projections;  // one per layer, H x D
  Vector attention_scores;          // length L
  std::array<Affine, 4> fc;

  bool operator==(const ModelParams&) const = default;
};

using Gradients = ModelParams;

// A named view of one parameter tensor, in checkpoint declaration order:
// W_1, b_1, ..., W_L, b_L, attention scores, fc1 weight, fc1 bias, ..., fc4 bias.
struct TensorRef {
  std::string name;
  std::span<double> values;
  bool is_weight;  // weight matrices take weight decay; biases and scores do not
};

struct ConstTensorRef {
  std::string name;
  std::span<const double> values;
  bool is_weight;
};

std::vector<TensorRef> tensors(ModelParams& params);
std::vector<ConstTensorRef> tensors(const ModelParams& params);

// Zeroed parameters of the right shapes.
ModelParams zeros_like(const ModelConfig& config);

// Weights ~ U(+-sqrt(6/(fan_in+fan_out))), biases and attention scores zero.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// One n x D matrix per layer (layer 1 first).
using Batch = std::vector<Matrix>;

struct Losses {
  double er = 0.0;
  double coral = 0.0;
  double total = 0.0;
};

struct ForwardCache {
  ModelConfig config;
  Batch source;
  Batch target;                     // empty when no target batch was given
  std::vector<Matrix> source_proj;  // P_i^src for every layer
  std::vector<Matrix> target_proj;  // P_i^tar, aligned with `anchors`
  std::vector<std::size_t> anchors;
  std::vector<std::size_t> labels;
  Vector alpha;
  Matrix pooled;
  std::array<Matrix, 4> fc_inputs;  // h_0 = pooled, h_1..h_3 after relu
  Matrix logits;
  Matrix probabilities;
};

struct ForwardResult {
  ForwardCache cache;
  Losses losses;
};

// `target` may be null; then L_coral = 0. Anchor layers are 1-based.
// Errors: ShapeError, InvalidAnchor, DegenerateBatch, InvalidLabel.
ForwardResult forward(const ModelConfig& config, const ModelParams& params, const Batch& source,
                      std::span<const std::size_t> labels, const Batch* target,
                      std::span<const std::size_t> anchors);

// CacheMismatch if the cache was produced for other params shapes, labels or anchors.
Gradients backward(const ModelConfig& config, const ModelParams& params, const ForwardCache& cache,
                   std::span<const std::size_t> labels, std::span<const std::size_t> anchors);

// The anchoring distance between two activation batches.
double coral_distance(const Matrix& source, const Matrix& target, CoralVariant variant);

struct Prediction {
  std::vector<std::size_t> classes;
  Matrix probabilities;  // n x C
};

Prediction predict(const ModelConfig& config, const ModelParams& params, const Batch& batch);

// LAMP checkpoint: "LAMP" | u16 version | u32 len + config JSON | tensors as
// little-endian f64 in declaration order.
void save_checkpoint(const ModelConfig& config, const ModelParams& params, std::ostream& out);
void save_checkpoint(const ModelConfig& config, const ModelParams& params,
                     const std::filesystem::path& path);
std::pair<ModelConfig, ModelParams> load_checkpoint(std::istream& in);
std::pair<ModelConfig, ModelParams> load_checkpoint(const std::filesystem::path& path);

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(std::string_view text);

}  // namespace lam::model

#endif  // LAM_MODEL_HPP_
