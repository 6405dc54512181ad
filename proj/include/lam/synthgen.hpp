// SPDX-License-Identifier: Apache-2.0
//
// Paired synthetic corpora with a planted per-layer cross-corpus similarity.
//
// Every class c owns a mean direction mu_c (norm = class_separation) shared by
// both corpora. Corpus K has one nuisance offset nu_{K,i} per layer i (same
// norm). At layer i an utterance of class c is
//
//     s_i * mu_c + (1 - s_i) * nu_{K,i} + noise_scale * eps
//
// so the cosine between the two corpora's class centroids at layer i grows
// monotonically with s_i. When dim allows it the offsets are orthogonalised
// against the class means (and the target offset against the source one),
// which makes the centroid cosine approach s^2 / (s^2 + (1-s)^2).
//
// Phone segments are jittered copies of the utterance vector.
//
// target_nuisance > 0 additionally gives every target utterance a random
// component target_nuisance * w_i * z * d_i along a fixed unit direction d_i
// per layer (z standard normal, d_i orthogonal to the class means when dim
// allows). w_i = s_i by default, so the nuisance rides on the layers that
// carry the shared class structure; uniform_nuisance sets w_i = 1. It is
// zero-mean, so centroids and measured similarity are unaffected, but it
// changes the target covariance, which is what a covariance-matching loss sees.

#ifndef LAM_SYNTHGEN_HPP_
#define LAM_SYNTHGEN_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lam/feature_store.hpp"

namespace lam::synth {

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t num_layers = 12;
  std::size_t dim = 16;
  std::size_t classes = 4;
  std::size_t train_per_class = 1000;
  std::size_t validation_per_class = 50;
  std::size_t test_per_class = 50;
  std::vector<double> similarity_profile;  // length num_layers, entries in [0, 1]
  double class_separation = 1.0;
  double noise_scale = 0.1;
  std::size_t vowel_segments_per_utt = 2;
  std::size_t consonant_segments_per_utt = 1;
  double segment_jitter = 1.0;  // phone-segment jitter, in units of noise_scale
  double target_nuisance = 0.0;
  bool uniform_nuisance = false;
  std::string source_name = "synthetic-source";
  std::string target_name = "synthetic-target";
};

// Throws InvalidConfig.
void check_config(const SynthConfig& config);

struct SynthOutput {
  ladf::Corpus source;
  ladf::Corpus target;
  std::vector<double> ground_truth;  // the similarity profile
};

SynthOutput generate(const SynthConfig& config);

// Parses "0.9@8,0.85@9,0.8@11" (value@layer, 1-based) into a full profile,
// filling unnamed layers with `base`. Throws InvalidConfig.
std::vector<double> parse_profile(std::string_view text, std::size_t num_layers, double base);

// Ground-truth sidecar: similarity_profile, seed and an echo of the config.
std::string ground_truth_json(const SynthConfig& config);

// Vowel labels used for phone segments, in the order they are assigned.
const std::vector<std::string>& vowel_labels();
const std::vector<std::string>& consonant_labels();

}  // namespace lam::synth

#endif  // LAM_SYNTHGEN_HPP_
