// SPDX-License-Identifier: Apache-2.0

#include "lam/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lam/errors.hpp"
#include "lam/feature_store.hpp"
#include "lam/metrics.hpp"
#include "lam/model.hpp"
#include "lam/selection.hpp"
#include "lam/similarity.hpp"
#include "lam/synthgen.hpp"
#include "lam/trainer.hpp"

namespace lam::cli {
namespace {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) fail(ErrorCode::kIoError, "write failed: " + path.string());
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (std::size_t v : selection::parse_layer_list(text)) out.push_back(v);
  return out;
}

std::string fmt(double v, const char* spec = "%.4f") {
  char buf[40];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

struct TrainFlags {
  double learning_rate = 1e-4;
  double decay = 1e-3;
  std::string decay_mode = "weight";
  std::size_t batch_size = 64;
  std::size_t max_epochs = 70;
  std::size_t patience = 7;
  double gamma = 0.5;
  std::size_t projection_dim = 64;
  std::string coral_variant = "normalized_squared";

  void attach(CLI::App* cmd) {
    cmd->add_option("--lr", learning_rate, "Adam learning rate")->capture_default_str();
    cmd->add_option("--decay", decay, "decay factor")->capture_default_str();
    cmd->add_option("--decay-mode", decay_mode, "weight | lr")
        ->check(CLI::IsMember({"weight", "lr"}))
        ->capture_default_str();
    cmd->add_option("--batch-size", batch_size)->capture_default_str();
    cmd->add_option("--max-epochs", max_epochs)->capture_default_str();
    cmd->add_option("--patience", patience, "early-stopping patience in epochs")->capture_default_str();
    cmd->add_option("--gamma", gamma, "weight of the anchoring loss")->capture_default_str();
    cmd->add_option("--projection-dim", projection_dim)->capture_default_str();
    cmd->add_option("--coral-variant", coral_variant, "normalized_squared | plain_frobenius")
        ->check(CLI::IsMember({"normalized_squared", "plain_frobenius"}))
        ->capture_default_str();
  }

  train::TrainConfig train_config(std::uint64_t seed) const {
    train::TrainConfig c;
    c.learning_rate = learning_rate;
    c.decay = decay;
    c.decay_mode = decay_mode == "lr" ? train::DecayMode::kLearningRateDecay : train::DecayMode::kWeightDecay;
    c.batch_size = batch_size;
    c.max_epochs = max_epochs;
    c.early_stop_patience = patience;
    c.gamma = gamma;
    c.seed = seed;
    return c;
  }

  model::ModelConfig model_config(const ladf::CorpusHeader& header) const {
    model::ModelConfig c = train::default_model_config(header);
    c.projection_dim = projection_dim;
    c.coral_variant = model::parse_coral_variant(coral_variant);
    c.gamma = gamma;
    return c;
  }
};

// ---- synth ----

struct SynthArgs {
  synth::SynthConfig config;
  std::string profile;
  double base_similarity = 0.3;
  std::string out_src, out_tar, truth;
};

int do_synth(SynthArgs& a, std::ostream& out) {
  a.config.similarity_profile = synth::parse_profile(a.profile, a.config.num_layers, a.base_similarity);
  const auto data = synth::generate(a.config);
  ladf::write_ladf(data.source.header, data.source.records, fs::path(a.out_src));
  ladf::write_ladf(data.target.header, data.target.records, fs::path(a.out_tar));
  out << "result " << a.out_src << "\n" << "result " << a.out_tar << "\n";
  if (!a.truth.empty()) {
    write_text(a.truth, synth::ground_truth_json(a.config));
    out << "result " << a.truth << "\n";
  }
  return 0;
}

// ---- validate ----

int do_validate(const std::string& input, std::ostream& out) {
  const auto report = ladf::validate(fs::path(input));
  for (const auto& v : report.violations) {
    out << "violation " << ladf::violation_kind_name(v.kind);
    if (!v.utt_id.empty()) out << " utt_id=" << v.utt_id;
    if (v.layer) out << " layer=" << *v.layer;
    if (v.segment) out << " segment=" << *v.segment;
    out << ": " << v.message << "\n";
  }
  out << "records " << report.record_count << ", violations " << report.violations.size() << "\n";
  out << "result " << input << "\n";
  return report.ok() ? 0 : 1;
}

// ---- similarity ----

struct SimilarityArgs {
  std::string source, target, level = "utterance", out, format;
  bool all_splits = false;
};

int do_similarity(const SimilarityArgs& a, std::ostream& out, std::ostream& err) {
  const auto src = ladf::read_ladf(fs::path(a.source));
  const auto tar = ladf::read_ladf(fs::path(a.target));
  const auto report = similarity::layer_similarity(src, tar, *similarity::parse_level(a.level), !a.all_splits);
  for (const auto& w : report.warnings) err << "warning: " << w << "\n";
  std::string format = a.format;
  if (format.empty()) format = fs::path(a.out).extension() == ".csv" ? "csv" : "json";
  similarity::export_report(report, format == "csv" ? similarity::ExportFormat::kCsv : similarity::ExportFormat::kJson,
                            a.out);
  for (const auto& r : selection::rank_layers(report)) {
    out << "layer " << r.layer << " " << fmt(r.score, "%.6f") << "\n";
  }
  out << "result " << a.out << "\n";
  return 0;
}

// ---- select ----

struct SelectArgs {
  std::string sim, strategy = "gl", scope = "all", out;
  std::optional<std::size_t> k;
  std::optional<std::uint64_t> seed;
};

int do_select(const SelectArgs& a, std::ostream& out) {
  const auto report = similarity::load_report(a.sim);
  const auto strategy = selection::parse_strategy(a.strategy);
  if (!strategy || *strategy == selection::Strategy::kCustom) {
    fail(ErrorCode::kInvalidConfig, "unknown strategy '" + a.strategy + "'");
  }
  selection::PhoneScope scope = selection::PhoneScope::kAll;
  if (a.scope == "vowels") scope = selection::PhoneScope::kVowels;
  if (a.scope == "consonants") scope = selection::PhoneScope::kConsonants;
  const auto plan = selection::select(report, *strategy, a.k, a.seed, scope);
  selection::save_plan(plan, a.out);
  out << "layers";
  for (std::size_t l : plan.layers) out << " " << l;
  out << "\nresult " << a.out << "\n";
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string source, target, anchor, layers, out;
  std::uint64_t seed = 0;
  TrainFlags flags;
};

std::optional<selection::AnchorPlan> resolve_anchor(const std::string& plan_file, const std::string& layers,
                                                    std::size_t num_layers) {
  if (!plan_file.empty()) {
    auto plan = selection::load_plan(plan_file);
    selection::check_plan(plan, num_layers);
    return plan;
  }
  if (!layers.empty()) return selection::custom_plan(selection::parse_layer_list(layers), num_layers);
  return std::nullopt;
}

int do_train(const TrainArgs& a, std::ostream& out) {
  const auto src = ladf::read_ladf(fs::path(a.source));
  std::optional<ladf::Corpus> tar;
  if (!a.target.empty()) tar = ladf::read_ladf(fs::path(a.target));
  auto cfg = a.flags.train_config(a.seed);
  cfg.anchor = resolve_anchor(a.anchor, a.layers, src.header.num_layers);
  if (cfg.anchor && !tar) fail(ErrorCode::kInvalidConfig, "anchoring needs --target");
  const auto mc = a.flags.model_config(src.header);

  auto result = train::train(src, tar ? &*tar : nullptr, mc, cfg);
  fs::create_directories(a.out);
  const fs::path model_path = fs::path(a.out) / "model.lamp";
  const fs::path report_path = fs::path(a.out) / "train_report.json";
  model::save_checkpoint(result.model_config, result.params, model_path);
  result.report.checkpoint = model_path.string();
  write_text(report_path, train::report_to_json(result.report, result.model_config, cfg));
  out << "best_epoch " << result.report.best_epoch << " of " << result.report.epochs_run
      << ", validation UAR " << fmt(result.report.best_validation_uar) << "\n";
  out << "result " << model_path.string() << "\nresult " << report_path.string() << "\n";
  return 0;
}

// ---- evaluate ----

struct EvaluateArgs {
  std::string model, data, split = "test", out;
};

int do_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const auto [config, params] = model::load_checkpoint(fs::path(a.model));
  const auto corpus = ladf::read_ladf(fs::path(a.data));
  if (corpus.header.num_layers != config.num_layers || corpus.header.dim != config.input_dim) {
    fail(ErrorCode::kCorpusMismatch, "corpus shape does not match the checkpoint");
  }
  const auto split = *ladf::parse_split(a.split);
  const auto cm = train::evaluate(config, params, corpus, split);
  const double value = metrics::uar(cm);
  for (const auto& r : metrics::per_emotion_report(cm)) {
    out << r.name << " " << metrics::format_percent(r.recall) << "\n";
  }
  out << "UAR " << fmt(value * 100.0, "%.2f") << "\n";
  const fs::path dest =
      a.out.empty() ? fs::path(a.model).parent_path() / ("eval_" + std::string(ladf::split_name(split)) + ".json")
                    : fs::path(a.out);
  write_text(dest, metrics::evaluation_json(cm));
  out << "result " << dest.string() << "\n";
  return 0;
}

// ---- experiment ----

struct ExperimentArgs {
  std::string source, target, seeds, out, json_out;
  std::vector<std::string> arms, plans;
  std::size_t jobs = 1;
  TrainFlags flags;
};

int do_experiment(const ExperimentArgs& a, std::ostream& out) {
  const auto src = ladf::read_ladf(fs::path(a.source));
  const auto tar = ladf::read_ladf(fs::path(a.target));
  const std::size_t L = src.header.num_layers;
  std::vector<train::ExperimentArm> arms;
  for (const auto& spec : a.arms) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
      fail(ErrorCode::kInvalidConfig, "arm '" + spec + "' is not LABEL=LAYERS or LABEL=none");
    }
    train::ExperimentArm arm;
    arm.label = spec.substr(0, eq);
    const std::string rhs = spec.substr(eq + 1);
    if (rhs != "none") arm.anchor = selection::custom_plan(selection::parse_layer_list(rhs), L);
    arms.push_back(std::move(arm));
  }
  for (const auto& file : a.plans) {
    auto plan = selection::load_plan(file);
    selection::check_plan(plan, L);
    arms.push_back({std::string(selection::strategy_name(plan.strategy)), plan});
  }
  const auto seeds = parse_seed_list(a.seeds);
  const auto table = train::run_experiment(src, tar, arms, seeds, a.flags.model_config(src.header),
                                            a.flags.train_config(0), a.jobs);
  write_text(a.out, train::experiment_csv(table));
  for (const auto& s : table.summary) {
    out << s.label << " " << fmt(s.mean_uar * 100.0, "%.2f") << " +- " << fmt(s.sd_uar * 100.0, "%.2f") << " (n="
        << s.runs << ")\n";
  }
  out << "result " << a.out << "\n";
  if (!a.json_out.empty()) {
    write_text(a.json_out, train::experiment_json(table));
    out << "result " << a.json_out << "\n";
  }
  for (const auto& c : table.cells)
    if (!c.uar) return 1;
  return 0;
}

// ---- preset ----

int do_preset(const std::string& name, const std::string& set, std::ostream& out) {
  const auto names = name.empty() ? selection::preset_names() : std::vector<std::string>{name};
  const auto sets = set.empty() ? selection::preset_sets() : std::vector<std::string>{set};
  for (const auto& n : names) {
    for (const auto& s : sets) {
      const auto plan = selection::preset(n, s);
      out << n << " " << s << " ";
      for (std::size_t i = 0; i < plan.layers.size(); ++i) out << (i ? "," : "") << plan.layers[i];
      out << "\n";
    }
  }
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Layer-anchored cross-corpus emotion recognition toolkit", "lamkit"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "generate paired synthetic corpora");
  {
    auto& c = synth_args.config;
    synth_cmd->add_option("--seed", c.seed)->required();
    synth_cmd->add_option("--layers", c.num_layers)->capture_default_str();
    synth_cmd->add_option("--dim", c.dim)->capture_default_str();
    synth_cmd->add_option("--classes", c.classes)->capture_default_str();
    synth_cmd->add_option("--train-per-class", c.train_per_class)->capture_default_str();
    synth_cmd->add_option("--val-per-class", c.validation_per_class)->capture_default_str();
    synth_cmd->add_option("--test-per-class", c.test_per_class)->capture_default_str();
    synth_cmd->add_option("--profile", synth_args.profile, "value@layer list, e.g. 0.9@8,0.85@9");
    synth_cmd->add_option("--base-similarity", synth_args.base_similarity, "similarity of unlisted layers")
        ->capture_default_str();
    synth_cmd->add_option("--class-separation", c.class_separation)->capture_default_str();
    synth_cmd->add_option("--noise-scale", c.noise_scale)->capture_default_str();
    synth_cmd->add_option("--vowels", c.vowel_segments_per_utt, "vowel segments per utterance")->capture_default_str();
    synth_cmd->add_option("--consonants", c.consonant_segments_per_utt)->capture_default_str();
    synth_cmd->add_option("--segment-jitter", c.segment_jitter)->capture_default_str();
    synth_cmd->add_option("--target-nuisance", c.target_nuisance, "target-only covariance shift")->capture_default_str();
    synth_cmd->add_flag("--uniform-nuisance", c.uniform_nuisance, "same nuisance scale on every layer");
    synth_cmd->add_option("--out-src", synth_args.out_src)->required();
    synth_cmd->add_option("--out-tar", synth_args.out_tar)->required();
    synth_cmd->add_option("--truth", synth_args.truth, "ground-truth sidecar JSON");
  }

  std::string validate_input;
  auto* validate_cmd = app.add_subcommand("validate", "check an LADF file");
  validate_cmd->add_option("input", validate_input)->required();

  SimilarityArgs sim_args;
  auto* sim_cmd = app.add_subcommand("similarity", "layer similarity between two corpora");
  sim_cmd->add_option("--source", sim_args.source)->required();
  sim_cmd->add_option("--target", sim_args.target)->required();
  sim_cmd->add_option("--level", sim_args.level)->check(CLI::IsMember({"utterance", "phone"}))->capture_default_str();
  sim_cmd->add_option("--out", sim_args.out)->required();
  sim_cmd->add_option("--format", sim_args.format, "json | csv (default from extension)")
      ->check(CLI::IsMember({"json", "csv"}));
  sim_cmd->add_flag("--all-splits", sim_args.all_splits, "include validation and test records");

  SelectArgs sel_args;
  auto* sel_cmd = app.add_subcommand("select", "choose anchor layers from a similarity report");
  sel_cmd->add_option("--sim", sel_args.sim)->required();
  sel_cmd->add_option("--strategy", sel_args.strategy, "gl | bl | wl | rl")
      ->check(CLI::IsMember({"gl", "bl", "wl", "rl"}, CLI::ignore_case))
      ->capture_default_str();
  sel_cmd->add_option("--k", sel_args.k);
  sel_cmd->add_option("--seed", sel_args.seed, "required for rl");
  sel_cmd->add_option("--scope", sel_args.scope, "all | vowels | consonants (phone-level reports)")
      ->check(CLI::IsMember({"all", "vowels", "consonants"}))
      ->capture_default_str();
  sel_cmd->add_option("--out", sel_args.out)->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--source", train_args.source)->required();
  train_cmd->add_option("--target", train_args.target);
  auto* anchor_opt = train_cmd->add_option("--anchor", train_args.anchor, "anchor plan JSON");
  train_cmd->add_option("--layers", train_args.layers, "inline anchor layers, e.g. 8,9,11")->excludes(anchor_opt);
  train_cmd->add_option("--seed", train_args.seed)->required();
  train_cmd->add_option("--out", train_args.out, "output directory")->required();
  train_args.flags.attach(train_cmd);

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "UAR of a checkpoint on one split");
  eval_cmd->add_option("--model", eval_args.model)->required();
  eval_cmd->add_option("--data", eval_args.data)->required();
  eval_cmd->add_option("--split", eval_args.split)
      ->check(CLI::IsMember({"train", "validation", "test"}))
      ->capture_default_str();
  eval_cmd->add_option("--out", eval_args.out, "evaluation JSON (default next to the model)");

  ExperimentArgs exp_args;
  auto* exp_cmd = app.add_subcommand("experiment", "strategy x seed grid, target-test UAR");
  exp_cmd->add_option("--source", exp_args.source)->required();
  exp_cmd->add_option("--target", exp_args.target)->required();
  exp_cmd->add_option("--arm", exp_args.arms, "LABEL=LAYERS or LABEL=none, repeatable");
  exp_cmd->add_option("--plan", exp_args.plans, "anchor plan JSON, repeatable");
  exp_cmd->add_option("--seeds", exp_args.seeds, "comma-separated seeds")->required();
  exp_cmd->add_option("--jobs", exp_args.jobs)->check(CLI::PositiveNumber)->capture_default_str();
  exp_cmd->add_option("--out", exp_args.out, "CSV table")->required();
  exp_cmd->add_option("--json-out", exp_args.json_out, "JSON table with per-strategy summary");
  exp_args.flags.attach(exp_cmd);

  std::string preset_name, preset_set;
  auto* preset_cmd = app.add_subcommand("preset", "print the published layer sets");
  preset_cmd->add_option("--name", preset_name, "wavlm-paper | whisper-paper");
  preset_cmd->add_option("--set", preset_set, "GL | BL | WL | RL1 | RL2 | RL3");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    if (synth_cmd->parsed()) return do_synth(synth_args, out);
    if (validate_cmd->parsed()) return do_validate(validate_input, out);
    if (sim_cmd->parsed()) return do_similarity(sim_args, out, err);
    if (sel_cmd->parsed()) return do_select(sel_args, out);
    if (train_cmd->parsed()) return do_train(train_args, out);
    if (eval_cmd->parsed()) return do_evaluate(eval_args, out);
    if (exp_cmd->parsed()) {
      if (exp_args.arms.empty() && exp_args.plans.empty()) {
        fail(ErrorCode::kInvalidConfig, "experiment needs at least one --arm or --plan");
      }
      return do_experiment(exp_args, out);
    }
    if (preset_cmd->parsed()) return do_preset(preset_name, preset_set, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: Internal: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace lam::cli
