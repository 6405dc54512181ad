// SPDX-License-Identifier: Apache-2.0

#include "lam/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "lam/errors.hpp"
#include "lam/rng.hpp"

namespace lam::model {
namespace {

constexpr std::string_view kCheckpointMagic = "LAMP";
constexpr std::uint16_t kCheckpointVersion = 1;

// Calls fn(name, span, is_weight) for every tensor in declaration order.
template <typename Params, typename Fn>
void visit_tensors(Params& params, Fn&& fn) {
  for (std::size_t i = 0; i < params.projections.size(); ++i) {
    const std::string layer = std::to_string(i + 1);
    fn("projection." + layer + ".weight", std::span(params.projections[i].weight.data()), true);
    fn("projection." + layer + ".bias", std::span(params.projections[i].bias), false);
  }
  fn(std::string("attention_scores"), std::span(params.attention_scores), false);
  for (std::size_t k = 0; k < params.fc.size(); ++k) {
    const std::string idx = std::to_string(k + 1);
    fn("fc" + idx + ".weight", std::span(params.fc[k].weight.data()), true);
    fn("fc" + idx + ".bias", std::span(params.fc[k].bias), false);
  }
}

// out = x W' + b
Matrix affine(const Matrix& x, const Affine& a) {
  Matrix out = numkit::matmul_nt(x, a.weight);
  numkit::add_row_vector(out, a.bias);
  return out;
}

void relu_inplace(Matrix& m) {
  for (double& v : m.data()) v = v > 0.0 ? v : 0.0;
}

// Zeroes grad entries where the relu output was not positive.
void relu_backward(Matrix& grad, const Matrix& activated) {
  auto& g = grad.data();
  const auto& a = activated.data();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(a[i] > 0.0)) g[i] = 0.0;
}

// dW += dZ' X, db += colsum(dZ)
void accumulate_affine_grad(Affine& grad, const Matrix& dz, const Matrix& x) {
  numkit::add_scaled(grad.weight, numkit::matmul_tn(dz, x), 1.0);
  const Vector db = numkit::column_sums(dz);
  numkit::add_scaled(std::span<double>(grad.bias), std::span<const double>(db), 1.0);
}

Matrix centred(const Matrix& x) {
  Matrix out = x;
  const Vector mean = numkit::column_means(x);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] -= mean[c];
  }
  return out;
}

// d dist / d C_s for dist(C_s, C_t); the gradient w.r.t. C_t is its negation.
Matrix coral_cov_grad(const Matrix& cov_diff, CoralVariant variant) {
  Matrix g = cov_diff;
  if (variant == CoralVariant::kNormalizedSquared) {
    const double h = static_cast<double>(cov_diff.rows());
    for (double& v : g.data()) v *= 2.0 / (4.0 * h * h);
  } else {
    const double n = std::sqrt(numkit::frobenius_sq(cov_diff));
    // Subgradient 0 at the non-differentiable point of perfect alignment.
    if (n == 0.0) {
      g.fill(0.0);
    } else {
      for (double& v : g.data()) v /= n;
    }
  }
  return g;
}

// Gradient of a covariance-level objective with symmetric gradient G back to
// the activations: (2/(n-1)) * Xc * G.
Matrix cov_backward(const Matrix& activations, const Matrix& cov_grad) {
  Matrix g = numkit::matmul(centred(activations), cov_grad);
  const double scale = 2.0 / static_cast<double>(activations.rows() - 1);
  for (double& v : g.data()) v *= scale;
  return g;
}

void check_batch(const ModelConfig& config, const Batch& batch, const char* what) {
  if (batch.size() != config.num_layers) {
    fail(ErrorCode::kShapeError, std::string(what) + " batch has " + std::to_string(batch.size()) +
                                     " layers, model expects " + std::to_string(config.num_layers));
  }
  const std::size_t n = batch.empty() ? 0 : batch.front().rows();
  for (const auto& m : batch) {
    if (m.rows() != n || m.cols() != config.input_dim) {
      fail(ErrorCode::kShapeError, std::string(what) + " batch layer has shape " + std::to_string(m.rows()) + "x" +
                                       std::to_string(m.cols()) + ", expected " + std::to_string(n) + "x" +
                                       std::to_string(config.input_dim));
    }
  }
  if (n == 0) fail(ErrorCode::kShapeError, std::string(what) + " batch is empty");
}

void check_params(const ModelConfig& config, const ModelParams& params) {
  bool ok = params.projections.size() == config.num_layers &&
            params.attention_scores.size() == config.num_layers;
  for (const auto& p : params.projections) {
    ok = ok && p.weight.rows() == config.projection_dim && p.weight.cols() == config.input_dim &&
         p.bias.size() == config.projection_dim;
  }
  std::size_t in = config.projection_dim;
  for (std::size_t k = 0; k < 4; ++k) {
    ok = ok && params.fc[k].weight.rows() == config.fc_dims[k] && params.fc[k].weight.cols() == in &&
         params.fc[k].bias.size() == config.fc_dims[k];
    in = config.fc_dims[k];
  }
  if (!ok) fail(ErrorCode::kShapeError, "parameters do not match the model config");
}

struct HeadOutput {
  Vector alpha;
  Matrix pooled;
  std::array<Matrix, 4> inputs;
  Matrix logits;
  Matrix probabilities;
};

HeadOutput run_head(const ModelParams& params, const std::vector<Matrix>& projected) {
  HeadOutput out;
  out.alpha = numkit::softmax(params.attention_scores);
  out.pooled = Matrix(projected.front().rows(), projected.front().cols());
  for (std::size_t i = 0; i < projected.size(); ++i) numkit::add_scaled(out.pooled, projected[i], out.alpha[i]);
  Matrix h = out.pooled;
  for (std::size_t k = 0; k < 4; ++k) {
    out.inputs[k] = h;
    h = affine(h, params.fc[k]);
    if (k < 3) relu_inplace(h);
  }
  out.logits = h;
  out.probabilities = Matrix(h.rows(), h.cols());
  for (std::size_t r = 0; r < h.rows(); ++r) {
    const Vector p = numkit::softmax(h.row(r));
    std::copy(p.begin(), p.end(), out.probabilities.row(r).begin());
  }
  return out;
}

std::vector<Matrix> project_all(const ModelParams& params, const Batch& batch) {
  std::vector<Matrix> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Matrix p = affine(batch[i], params.projections[i]);
    relu_inplace(p);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

std::string_view coral_variant_name(CoralVariant v) {
  return v == CoralVariant::kNormalizedSquared ? "normalized_squared" : "plain_frobenius";
}

CoralVariant parse_coral_variant(std::string_view name) {
  if (name == "normalized_squared") return CoralVariant::kNormalizedSquared;
  if (name == "plain_frobenius") return CoralVariant::kPlainFrobenius;
  fail(ErrorCode::kInvalidConfig, "unknown coral variant '" + std::string(name) + "'");
}

void check_config(const ModelConfig& c) {
  if (c.num_layers < 1 || c.input_dim < 1 || c.projection_dim < 1) {
    fail(ErrorCode::kInvalidConfig, "num_layers, input_dim and projection_dim must be at least 1");
  }
  for (std::size_t d : c.fc_dims)
    if (d < 1) fail(ErrorCode::kInvalidConfig, "fully connected widths must be at least 1");
  if (!(c.gamma >= 0.0) || !std::isfinite(c.gamma)) fail(ErrorCode::kInvalidConfig, "gamma must be finite and >= 0");
}

std::vector<TensorRef> tensors(ModelParams& params) {
  std::vector<TensorRef> out;
  visit_tensors(params, [&](std::string name, std::span<double> values, bool is_weight) {
    out.push_back({std::move(name), values, is_weight});
  });
  return out;
}

std::vector<ConstTensorRef> tensors(const ModelParams& params) {
  std::vector<ConstTensorRef> out;
  visit_tensors(params, [&](std::string name, std::span<const double> values, bool is_weight) {
    out.push_back({std::move(name), values, is_weight});
  });
  return out;
}

ModelParams zeros_like(const ModelConfig& config) {
  check_config(config);
  ModelParams p;
  for (std::size_t i = 0; i < config.num_layers; ++i) {
    p.projections.push_back({Matrix(config.projection_dim, config.input_dim), Vector(config.projection_dim, 0.0)});
  }
  p.attention_scores.assign(config.num_layers, 0.0);
  std::size_t in = config.projection_dim;
  for (std::size_t k = 0; k < 4; ++k) {
    p.fc[k] = {Matrix(config.fc_dims[k], in), Vector(config.fc_dims[k], 0.0)};
    in = config.fc_dims[k];
  }
  return p;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = zeros_like(config);
  std::uint64_t index = 0;
  auto init = [&](Matrix& w) {
    Rng rng = Rng::stream(seed, {0x1A17, index++});
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
  };
  for (auto& proj : p.projections) init(proj.weight);
  for (auto& fc : p.fc) init(fc.weight);
  return p;
}

double coral_distance(const Matrix& source, const Matrix& target, CoralVariant variant) {
  if (source.cols() != target.cols()) {
    fail(ErrorCode::kShapeError, "coral: source has " + std::to_string(source.cols()) + " columns, target " +
                                     std::to_string(target.cols()));
  }
  const Matrix diff = numkit::subtract(numkit::covariance(source), numkit::covariance(target));
  const double sq = numkit::frobenius_sq(diff);
  if (variant == CoralVariant::kNormalizedSquared) {
    const double h = static_cast<double>(source.cols());
    return sq / (4.0 * h * h);
  }
  return std::sqrt(sq);
}

ForwardResult forward(const ModelConfig& config, const ModelParams& params, const Batch& source,
                      std::span<const std::size_t> labels, const Batch* target,
                      std::span<const std::size_t> anchors) {
  check_config(config);
  check_params(config, params);
  check_batch(config, source, "source");
  const std::size_t n = source.front().rows();
  if (labels.size() != n) {
    fail(ErrorCode::kShapeError, std::to_string(labels.size()) + " labels for " + std::to_string(n) + " samples");
  }
  for (std::size_t y : labels) {
    if (y >= config.num_classes()) fail(ErrorCode::kInvalidLabel, "label " + std::to_string(y) + " out of range");
  }
  for (std::size_t a : anchors) {
    if (a < 1 || a > config.num_layers) {
      fail(ErrorCode::kInvalidAnchor, "anchor layer " + std::to_string(a) + " outside 1.." +
                                          std::to_string(config.num_layers));
    }
  }
  const bool anchoring = target != nullptr && !anchors.empty();
  if (target != nullptr) check_batch(config, *target, "target");
  if (anchoring && (n < 2 || target->front().rows() < 2)) {
    fail(ErrorCode::kDegenerateBatch, "anchoring needs at least 2 source and 2 target samples");
  }

  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.config = config;
  cache.source = source;
  cache.anchors.assign(anchors.begin(), anchors.end());
  cache.labels.assign(labels.begin(), labels.end());
  cache.source_proj = project_all(params, source);

  HeadOutput head = run_head(params, cache.source_proj);
  cache.alpha = std::move(head.alpha);
  cache.pooled = std::move(head.pooled);
  cache.fc_inputs = std::move(head.inputs);
  cache.logits = std::move(head.logits);
  cache.probabilities = std::move(head.probabilities);

  double er = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    // log-softmax from the logits keeps tiny probabilities finite.
    auto row = cache.logits.row(r);
    const double top = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - top);
    er -= row[labels[r]] - top - std::log(z);
  }
  er /= static_cast<double>(n);

  double coral = 0.0;
  if (target != nullptr) {
    cache.target = *target;
    for (std::size_t a : anchors) {
      Matrix p = affine((*target)[a - 1], params.projections[a - 1]);
      relu_inplace(p);
      coral += coral_distance(cache.source_proj[a - 1], p, config.coral_variant);
      cache.target_proj.push_back(std::move(p));
    }
  }

  result.losses.er = er;
  result.losses.coral = coral;
  result.losses.total = er + config.gamma * coral;
  return result;
}

Gradients backward(const ModelConfig& config, const ModelParams& params, const ForwardCache& cache,
                   std::span<const std::size_t> labels, std::span<const std::size_t> anchors) {
  check_params(config, params);
  if (cache.config != config || cache.source.size() != config.num_layers ||
      cache.source_proj.size() != config.num_layers || cache.alpha.size() != config.num_layers) {
    fail(ErrorCode::kCacheMismatch, "cache was produced for a different model config");
  }
  if (!std::ranges::equal(labels, cache.labels) || !std::ranges::equal(anchors, cache.anchors)) {
    fail(ErrorCode::kCacheMismatch, "labels or anchors differ from the forward call");
  }
  if (!cache.target.empty() && cache.target_proj.size() != anchors.size()) {
    fail(ErrorCode::kCacheMismatch, "cached target projections do not match the anchors");
  }
  const std::size_t n = cache.logits.rows();
  const std::size_t L = config.num_layers;
  Gradients grad = zeros_like(config);

  // Cross-entropy through softmax.
  Matrix dz = cache.probabilities;
  for (std::size_t r = 0; r < n; ++r) dz(r, labels[r]) -= 1.0;
  for (double& v : dz.data()) v /= static_cast<double>(n);

  for (std::size_t k = 4; k-- > 0;) {
    accumulate_affine_grad(grad.fc[k], dz, cache.fc_inputs[k]);
    Matrix dh = numkit::matmul(dz, params.fc[k].weight);
    if (k > 0) relu_backward(dh, cache.fc_inputs[k]);
    dz = std::move(dh);
  }
  const Matrix& d_pooled = dz;

  // Attention pooling and the softmax over scores.
  Vector d_alpha(L);
  for (std::size_t i = 0; i < L; ++i) d_alpha[i] = numkit::dot(d_pooled.data(), cache.source_proj[i].data());
  const double mean_g = numkit::dot(cache.alpha, d_alpha);
  for (std::size_t i = 0; i < L; ++i) grad.attention_scores[i] = cache.alpha[i] * (d_alpha[i] - mean_g);

  std::vector<Matrix> d_proj(L);
  for (std::size_t i = 0; i < L; ++i) {
    d_proj[i] = d_pooled;
    for (double& v : d_proj[i].data()) v *= cache.alpha[i];
  }

  // Anchoring branch.
  if (!cache.target.empty() && config.gamma != 0.0) {
    for (std::size_t j = 0; j < anchors.size(); ++j) {
      const std::size_t i = anchors[j] - 1;
      const Matrix& ps = cache.source_proj[i];
      const Matrix& pt = cache.target_proj[j];
      const Matrix diff = numkit::subtract(numkit::covariance(ps), numkit::covariance(pt));
      Matrix g = coral_cov_grad(diff, config.coral_variant);
      for (double& v : g.data()) v *= config.gamma;
      numkit::add_scaled(d_proj[i], cov_backward(ps, g), 1.0);

      Matrix d_target = cov_backward(pt, g);
      for (double& v : d_target.data()) v = -v;
      relu_backward(d_target, pt);
      accumulate_affine_grad(grad.projections[i], d_target, cache.target[i]);
    }
  }

  for (std::size_t i = 0; i < L; ++i) {
    relu_backward(d_proj[i], cache.source_proj[i]);
    accumulate_affine_grad(grad.projections[i], d_proj[i], cache.source[i]);
  }
  return grad;
}

Prediction predict(const ModelConfig& config, const ModelParams& params, const Batch& batch) {
  check_config(config);
  check_params(config, params);
  check_batch(config, batch, "prediction");
  HeadOutput head = run_head(params, project_all(params, batch));
  Prediction out;
  out.probabilities = std::move(head.probabilities);
  out.classes.resize(out.probabilities.rows());
  for (std::size_t r = 0; r < out.probabilities.rows(); ++r) {
    auto row = out.probabilities.row(r);
    out.classes[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

std::string config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["num_layers"] = c.num_layers;
  j["input_dim"] = c.input_dim;
  j["projection_dim"] = c.projection_dim;
  j["fc_dims"] = c.fc_dims;
  j["gamma"] = c.gamma;
  j["coral_variant"] = coral_variant_name(c.coral_variant);
  return j.dump();
}

ModelConfig config_from_json(std::string_view text) {
  ModelConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.projection_dim = j.at("projection_dim").get<std::size_t>();
    c.fc_dims = j.at("fc_dims").get<std::array<std::size_t, 4>>();
    c.gamma = j.at("gamma").get<double>();
    c.coral_variant = parse_coral_variant(j.at("coral_variant").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, std::string("bad model config: ") + e.what());
  }
  check_config(c);
  return c;
}

void save_checkpoint(const ModelConfig& config, const ModelParams& params, std::ostream& out) {
  check_params(config, params);
  std::string buf(kCheckpointMagic);
  auto put = [&](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  put(kCheckpointVersion, 2);
  const std::string cfg = config_to_json(config);
  put(cfg.size(), 4);
  buf += cfg;
  visit_tensors(params, [&](const std::string&, std::span<const double> values, bool) {
    for (double v : values) put(std::bit_cast<std::uint64_t>(v), 8);
  });
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) fail(ErrorCode::kIoError, "checkpoint write failed");
}

void save_checkpoint(const ModelConfig& config, const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  save_checkpoint(config, params, out);
}

std::pair<ModelConfig, ModelParams> load_checkpoint(std::istream& in) {
  const std::string buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  std::size_t pos = 0;
  auto take = [&](std::size_t n) {
    if (buf.size() - pos < n) fail(ErrorCode::kTruncatedFile, "checkpoint ends at byte " + std::to_string(buf.size()));
    const std::string_view out(buf.data() + pos, n);
    pos += n;
    return out;
  };
  auto get = [&](int bytes) {
    auto b = take(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(b[static_cast<std::size_t>(i)]);
    return v;
  };
  if (buf.size() < kCheckpointMagic.size() || std::string_view(buf).substr(0, 4) != kCheckpointMagic) {
    fail(ErrorCode::kFormatError, "missing LAMP magic");
  }
  take(4);
  const auto version = get(2);
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kUnsupportedVersion, "checkpoint version " + std::to_string(version));
  }
  const auto cfg_len = get(4);
  const ModelConfig config = config_from_json(take(cfg_len));
  ModelParams params = zeros_like(config);
  visit_tensors(params, [&](const std::string&, std::span<double> values, bool) {
    for (double& v : values) v = std::bit_cast<double>(get(8));
  });
  if (pos != buf.size()) fail(ErrorCode::kFormatError, "trailing bytes in checkpoint");
  return {config, std::move(params)};
}

std::pair<ModelConfig, ModelParams> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path.string());
  return load_checkpoint(in);
}

}  // namespace lam::model
