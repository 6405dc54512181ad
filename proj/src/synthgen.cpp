// SPDX-License-Identifier: Apache-2.0

#include "lam/synthgen.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "lam/errors.hpp"
#include "lam/rng.hpp"

namespace lam::synth {
namespace {

using numkit::Matrix;
using numkit::Vector;

// Stream tags. Changing any of these changes every generated byte.
enum StreamTag : std::uint64_t {
  kClassMean = 1,
  kCorpusOffset = 2,
  kUtterance = 3,
  kNuisanceDir = 4,
};

constexpr std::uint64_t kSource = 0;
constexpr std::uint64_t kTarget = 1;

Vector gaussian_vector(Rng& rng, std::size_t dim) {
  Vector v(dim);
  for (double& x : v) x = rng.normal();
  return v;
}

void scale_to(Vector& v, double target_norm) {
  const double n = numkit::norm(v);
  if (n > 0.0)
    for (double& x : v) x *= target_norm / n;
}

// Removes from v its components along each vector of `basis` (Gram-Schmidt
// against an orthogonalised copy). Skipped when the span would swallow v.
void orthogonalise(Vector& v, const std::vector<Vector>& basis) {
  if (basis.size() >= v.size()) return;
  std::vector<Vector> ortho;
  for (const auto& b : basis) {
    Vector u = b;
    for (const auto& q : ortho) numkit::add_scaled(std::span<double>(u), std::span<const double>(q), -numkit::dot(u, q));
    const double n = numkit::norm(u);
    if (n < 1e-12) continue;
    for (double& x : u) x /= n;
    ortho.push_back(std::move(u));
  }
  for (const auto& q : ortho) numkit::add_scaled(std::span<double>(v), std::span<const double>(q), -numkit::dot(v, q));
}

std::string utt_name(std::string_view prefix, ladf::Split split, std::size_t index) {
  std::ostringstream os;
  os << prefix << '-' << ladf::split_name(split) << '-' << std::setw(6) << std::setfill('0') << index;
  return os.str();
}

}  // namespace

const std::vector<std::string>& vowel_labels() {
  static const std::vector<std::string> labels = {"a", "ɛ", "ə", "i", "ɔ", "u"};
  return labels;
}

const std::vector<std::string>& consonant_labels() {
  static const std::vector<std::string> labels = {"p", "t", "k", "s", "m", "n"};
  return labels;
}

void check_config(const SynthConfig& c) {
  if (c.num_layers < 1 || c.dim < 1 || c.classes < 1) {
    fail(ErrorCode::kInvalidConfig, "num_layers, dim and classes must be at least 1");
  }
  if (c.classes > 256) fail(ErrorCode::kInvalidConfig, "at most 256 classes");
  if (c.similarity_profile.size() != c.num_layers) {
    fail(ErrorCode::kInvalidConfig, "similarity profile has " + std::to_string(c.similarity_profile.size()) +
                                        " entries for " + std::to_string(c.num_layers) + " layers");
  }
  for (double s : c.similarity_profile) {
    if (!(s >= 0.0 && s <= 1.0)) fail(ErrorCode::kInvalidConfig, "similarity profile entries must lie in [0, 1]");
  }
  if (!(c.class_separation > 0.0)) fail(ErrorCode::kInvalidConfig, "class_separation must be positive");
  if (!(c.noise_scale >= 0.0)) fail(ErrorCode::kInvalidConfig, "noise_scale must be non-negative");
  if (!(c.segment_jitter >= 0.0)) fail(ErrorCode::kInvalidConfig, "segment_jitter must be non-negative");
  if (!(c.target_nuisance >= 0.0)) fail(ErrorCode::kInvalidConfig, "target_nuisance must be non-negative");
}

SynthOutput generate(const SynthConfig& config) {
  check_config(config);
  const std::size_t L = config.num_layers;
  const std::size_t D = config.dim;
  const std::size_t C = config.classes;
  const double sep = config.class_separation;

  std::vector<Vector> class_means(C);
  for (std::size_t c = 0; c < C; ++c) {
    Rng rng = Rng::stream(config.seed, {kClassMean, c});
    class_means[c] = gaussian_vector(rng, D);
    scale_to(class_means[c], sep);
  }

  // offsets[K][i], nuisance[i]
  std::vector<std::vector<Vector>> offsets(2, std::vector<Vector>(L));
  std::vector<Vector> nuisance(L);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::uint64_t k : {kSource, kTarget}) {
      Rng rng = Rng::stream(config.seed, {kCorpusOffset, k, i});
      Vector v = gaussian_vector(rng, D);
      std::vector<Vector> basis = class_means;
      if (k == kTarget) basis.push_back(offsets[kSource][i]);
      orthogonalise(v, basis);
      scale_to(v, sep);
      offsets[k][i] = std::move(v);
    }
    Rng rng = Rng::stream(config.seed, {kNuisanceDir, i});
    Vector d = gaussian_vector(rng, D);
    orthogonalise(d, class_means);
    scale_to(d, 1.0);
    nuisance[i] = std::move(d);
  }

  SynthOutput out;
  out.ground_truth = config.similarity_profile;
  std::vector<std::string> emotions;
  if (C == 4) {
    emotions = ladf::default_emotions();
  } else {
    for (std::size_t c = 0; c < C; ++c) emotions.push_back("class" + std::to_string(c));
  }

  const std::pair<ladf::Split, std::size_t> splits[] = {
      {ladf::Split::kTrain, config.train_per_class},
      {ladf::Split::kValidation, config.validation_per_class},
      {ladf::Split::kTest, config.test_per_class},
  };

  for (std::uint64_t k : {kSource, kTarget}) {
    ladf::Corpus& corpus = k == kSource ? out.source : out.target;
    corpus.header.corpus_name = k == kSource ? config.source_name : config.target_name;
    corpus.header.model_name = "synthetic";
    corpus.header.num_layers = L;
    corpus.header.dim = D;
    corpus.header.emotions = emotions;
    const std::string prefix = k == kSource ? "src" : "tar";

    for (const auto& [split, per_class] : splits) {
      std::size_t index = 0;
      for (std::size_t u = 0; u < per_class; ++u) {
        for (std::size_t c = 0; c < C; ++c, ++index) {
          Rng rng = Rng::stream(config.seed, {kUtterance, k, static_cast<std::uint64_t>(split), index});
          ladf::Record rec;
          rec.utt_id = utt_name(prefix, split, index);
          rec.split = split;
          rec.emotion = static_cast<std::uint8_t>(c);

          Matrix utt(L, D);
          for (std::size_t i = 0; i < L; ++i) {
            const double s = config.similarity_profile[i];
            const double z = (k == kTarget && config.target_nuisance > 0.0) ? rng.normal() : 0.0;
            const double w = config.uniform_nuisance ? 1.0 : s;
            auto row = utt.row(i);
            for (std::size_t j = 0; j < D; ++j) {
              row[j] = s * class_means[c][j] + (1.0 - s) * offsets[k][i][j] +
                       config.noise_scale * rng.normal() + config.target_nuisance * w * z * nuisance[i][j];
            }
          }
          rec.segments.push_back({std::string(ladf::kUtteranceLabel), ladf::PhoneClass::kUtterance, utt});

          auto add_phone = [&](const std::string& label, ladf::PhoneClass pc) {
            Matrix f = utt;
            const double jitter = config.segment_jitter * config.noise_scale;
            for (double& x : f.data()) x += jitter * rng.normal();
            rec.segments.push_back({label, pc, std::move(f)});
          };
          for (std::size_t v = 0; v < config.vowel_segments_per_utt; ++v) {
            add_phone(vowel_labels()[(index + v) % vowel_labels().size()], ladf::PhoneClass::kVowel);
          }
          for (std::size_t v = 0; v < config.consonant_segments_per_utt; ++v) {
            add_phone(consonant_labels()[(index + v) % consonant_labels().size()], ladf::PhoneClass::kConsonant);
          }
          corpus.records.push_back(std::move(rec));
        }
      }
    }
  }
  return out;
}

std::vector<double> parse_profile(std::string_view text, std::size_t num_layers, double base) {
  if (!(base >= 0.0 && base <= 1.0)) fail(ErrorCode::kInvalidConfig, "base similarity must lie in [0, 1]");
  std::vector<double> profile(num_layers, base);
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view item = text.substr(pos, end - pos);
    const std::size_t at = item.find('@');
    if (at == std::string_view::npos) {
      fail(ErrorCode::kInvalidConfig, "profile item '" + std::string(item) + "' is not value@layer");
    }
    const std::string value_text(item.substr(0, at));
    const std::string_view layer_text = item.substr(at + 1);
    std::size_t layer = 0;
    auto [p, ec] = std::from_chars(layer_text.data(), layer_text.data() + layer_text.size(), layer);
    char* value_end = nullptr;
    const double value = std::strtod(value_text.c_str(), &value_end);
    if (ec != std::errc() || p != layer_text.data() + layer_text.size() || value_text.empty() ||
        value_end != value_text.c_str() + value_text.size()) {
      fail(ErrorCode::kInvalidConfig, "cannot parse profile item '" + std::string(item) + "'");
    }
    if (layer < 1 || layer > num_layers) {
      fail(ErrorCode::kInvalidConfig, "profile layer " + std::to_string(layer) + " outside 1.." +
                                          std::to_string(num_layers));
    }
    if (!(value >= 0.0 && value <= 1.0)) fail(ErrorCode::kInvalidConfig, "profile value outside [0, 1]");
    profile[layer - 1] = value;
    pos = end + 1;
  }
  return profile;
}

std::string ground_truth_json(const SynthConfig& c) {
  nlohmann::json j;
  j["similarity_profile"] = c.similarity_profile;
  j["seed"] = c.seed;
  j["config"] = {
      {"num_layers", c.num_layers},
      {"dim", c.dim},
      {"classes", c.classes},
      {"train_per_class", c.train_per_class},
      {"validation_per_class", c.validation_per_class},
      {"test_per_class", c.test_per_class},
      {"class_separation", c.class_separation},
      {"noise_scale", c.noise_scale},
      {"vowel_segments_per_utt", c.vowel_segments_per_utt},
      {"consonant_segments_per_utt", c.consonant_segments_per_utt},
      {"segment_jitter", c.segment_jitter},
      {"target_nuisance", c.target_nuisance},
      {"uniform_nuisance", c.uniform_nuisance},
      {"source_name", c.source_name},
      {"target_name", c.target_name},
  };
  return j.dump(2) + "\n";
}

}  // namespace lam::synth
