// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace lam::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::uint64_t counter = 0;
  Rng rng(fnv1a64(std::span<const char>(tag.data(), tag.size())) ^ ++counter ^
          static_cast<std::uint64_t>(std::hash<std::string>{}(fs::current_path().string())));
  for (;;) {
    path_ = fs::temp_directory_path() / ("lam-" + tag + "-" + std::to_string(rng.next_u64() % 1000000000));
    if (fs::create_directories(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << bytes;
}

ladf::Corpus random_corpus(std::uint64_t seed, std::size_t max_records) {
  Rng rng = Rng::stream(seed, {0xC0});
  ladf::Corpus c;
  c.header.corpus_name = "rand-" + std::to_string(seed);
  c.header.model_name = rng.below(2) ? "wavlm-base-plus" : "synthetic";
  c.header.num_layers = 1 + rng.below(5);
  c.header.dim = 1 + rng.below(6);
  if (rng.below(3) == 0) c.header.emotions = {"calm", "tense", "ε-ünïcode"};
  const std::size_t n = rng.below(max_records + 1);
  const char* labels[] = {"a", "ɛ", "ə", "i", "ɔ", "u", "p", "t"};
  for (std::size_t r = 0; r < n; ++r) {
    ladf::Record rec;
    rec.utt_id = "utt_" + std::to_string(seed) + "_" + std::to_string(r) + (rng.below(4) == 0 ? "_é" : "");
    rec.split = static_cast<ladf::Split>(rng.below(3));
    rec.emotion = static_cast<std::uint8_t>(rng.below(c.header.emotions.size()));
    const std::size_t phones = rng.below(4);
    // the utterance segment may sit anywhere in the list
    const std::size_t utt_pos = rng.below(phones + 1);
    for (std::size_t s = 0; s <= phones; ++s) {
      ladf::Segment seg;
      if (s == utt_pos) {
        seg.phone_label = std::string(ladf::kUtteranceLabel);
        seg.phone_class = ladf::PhoneClass::kUtterance;
      } else {
        const std::size_t k = rng.below(8);
        seg.phone_label = labels[k];
        seg.phone_class = k < 6 ? ladf::PhoneClass::kVowel : ladf::PhoneClass::kConsonant;
      }
      seg.features = numkit::Matrix(c.header.num_layers, c.header.dim);
      for (double& x : seg.features.data()) {
        // float32 storage: keep values exactly representable
        x = static_cast<double>(static_cast<float>(rng.normal() * 3.0));
      }
      rec.segments.push_back(std::move(seg));
    }
    c.records.push_back(std::move(rec));
  }
  return c;
}

ladf::Record constant_record(const std::string& id, ladf::Split split, std::uint8_t emotion, std::size_t L,
                             std::size_t D, double value) {
  ladf::Record rec;
  rec.utt_id = id;
  rec.split = split;
  rec.emotion = emotion;
  rec.segments.push_back(
      {std::string(ladf::kUtteranceLabel), ladf::PhoneClass::kUtterance, numkit::Matrix(L, D, value)});
  return rec;
}

numkit::Matrix naive_covariance(const numkit::Matrix& x) {
  const std::size_t n = x.rows(), d = x.cols();
  numkit::Matrix c(d, d);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) {
      // two-pass textbook formula, no reuse of column means between entries
      double ma = 0.0, mb = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        ma += x(r, a);
        mb += x(r, b);
      }
      ma /= static_cast<double>(n);
      mb /= static_cast<double>(n);
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) s += (x(r, a) - ma) * (x(r, b) - mb);
      c(a, b) = s / static_cast<double>(n - 1);
    }
  }
  return c;
}

double naive_uar(const std::vector<std::vector<std::uint64_t>>& counts) {
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    std::uint64_t row = 0;
    for (auto v : counts[c]) row += v;
    if (row == 0) continue;
    sum += static_cast<double>(counts[c][c]) / static_cast<double>(row);
    ++present;
  }
  return sum / static_cast<double>(present);
}

GradCheck gradient_check(const model::ModelConfig& config, std::uint64_t seed, std::size_t batch, double step,
                         double floor) {
  Rng rng = Rng::stream(seed, {0x6C});
  model::ModelParams params = model::init_params(config, seed);
  // nudge biases and scores away from zero so every code path carries signal
  for (auto& t : model::tensors(params)) {
    if (!t.is_weight)
      for (double& v : t.values) v = rng.uniform(-0.3, 0.3);
  }
  model::Batch src(config.num_layers), tar(config.num_layers);
  for (std::size_t i = 0; i < config.num_layers; ++i) {
    src[i] = numkit::Matrix(batch, config.input_dim);
    tar[i] = numkit::Matrix(batch + 1, config.input_dim);
    for (double& v : src[i].data()) v = rng.normal();
    for (double& v : tar[i].data()) v = 0.5 + 1.5 * rng.normal();
  }
  std::vector<std::size_t> labels(batch);
  for (auto& y : labels) y = rng.below(config.num_classes());
  std::vector<std::size_t> anchors;
  for (std::size_t i = 1; i <= config.num_layers; ++i)
    if (i != 2) anchors.push_back(i);  // one layer left unanchored

  auto loss_at = [&](const model::ModelParams& p) {
    return model::forward(config, p, src, labels, &tar, anchors).losses.total;
  };
  const auto fwd = model::forward(config, params, src, labels, &tar, anchors);
  const model::Gradients grad = model::backward(config, params, fwd.cache, labels, anchors);

  GradCheck out;
  auto p_refs = model::tensors(params);
  const auto g_refs = model::tensors(grad);
  for (std::size_t t = 0; t < p_refs.size(); ++t) {
    for (std::size_t k = 0; k < p_refs[t].values.size(); ++k) {
      const double saved = p_refs[t].values[k];
      p_refs[t].values[k] = saved + step;
      const double up = loss_at(params);
      p_refs[t].values[k] = saved - step;
      const double down = loss_at(params);
      p_refs[t].values[k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = g_refs[t].values[k];
      const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), floor});
      ++out.checked;
      if (std::max(std::abs(numeric), std::abs(analytic)) >= 1e-3) {
        out.max_rel_error_large = std::max(out.max_rel_error_large, rel);
      }
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst_tensor = p_refs[t].name;
        out.worst_index = k;
        out.numeric = numeric;
        out.analytic = analytic;
      }
    }
  }
  return out;
}

}  // namespace lam::testing
