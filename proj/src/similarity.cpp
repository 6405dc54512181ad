// SPDX-License-Identifier: Apache-2.0

#include "lam/similarity.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "lam/errors.hpp"

namespace lam::similarity {
namespace {

using numkit::Vector;

std::string format9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

double round9(double v) { return std::strtod(format9(v).c_str(), nullptr); }

// Matching segments for one (emotion, phone filter), in ascending utt_id order.
std::vector<const ladf::Segment*> collect(std::span<const ladf::Record* const> sorted, std::uint8_t emotion,
                                          const PhoneFilter& phones) {
  std::vector<const ladf::Segment*> out;
  for (const ladf::Record* rec : sorted) {
    if (rec->emotion != emotion) continue;
    for (const auto& seg : rec->segments)
      if (phones.matches(seg)) out.push_back(&seg);
  }
  return out;
}

Vector mean_of_layer(std::span<const ladf::Segment* const> segments, std::size_t layer) {
  const std::size_t dim = segments.front()->features.cols();
  Vector acc(dim, 0.0);
  for (const ladf::Segment* seg : segments) {
    numkit::add_scaled(std::span<double>(acc), seg->layer(layer), 1.0);
  }
  for (double& v : acc) v /= static_cast<double>(segments.size());
  return acc;
}

std::vector<const ladf::Record*> sorted_records(std::span<const ladf::Record> records, bool train_only) {
  std::vector<const ladf::Record*> out;
  for (const auto& r : records)
    if (!train_only || r.split == ladf::Split::kTrain) out.push_back(&r);
  std::sort(out.begin(), out.end(), [](const auto* a, const auto* b) { return a->utt_id < b->utt_id; });
  return out;
}

}  // namespace

std::string_view level_name(Level level) { return level == Level::kUtterance ? "utterance" : "phone"; }

std::optional<Level> parse_level(std::string_view name) {
  if (name == "utterance") return Level::kUtterance;
  if (name == "phone") return Level::kPhone;
  return std::nullopt;
}

bool PhoneFilter::matches(const ladf::Segment& seg) const {
  if (seg.phone_class != phone_class) return false;
  return labels.empty() || std::find(labels.begin(), labels.end(), seg.phone_label) != labels.end();
}

const std::vector<PhoneGroup>& default_phone_groups() {
  using ladf::PhoneClass;
  static const std::vector<PhoneGroup> groups = {
      {"a", {PhoneClass::kVowel, {"a", "ɑ"}}},
      {"ɛ", {PhoneClass::kVowel, {"ɛ"}}},
      {"ə", {PhoneClass::kVowel, {"ə"}}},
      {"i", {PhoneClass::kVowel, {"i"}}},
      {"ɔ", {PhoneClass::kVowel, {"ɔ"}}},
      {"u", {PhoneClass::kVowel, {"u"}}},
      {std::string(kConsonantGroup), {PhoneClass::kConsonant, {}}},
  };
  return groups;
}

Vector centroid(std::span<const ladf::Record> records, std::uint8_t emotion, std::size_t layer,
                const PhoneFilter& phones) {
  const auto sorted = sorted_records(records, false);
  const auto segments = collect(sorted, emotion, phones);
  if (segments.empty()) {
    fail(ErrorCode::kEmptySelection, "no segments for emotion " + std::to_string(emotion));
  }
  if (layer < 1 || layer > segments.front()->features.rows()) {
    fail(ErrorCode::kShapeError, "layer " + std::to_string(layer) + " out of range");
  }
  return mean_of_layer(segments, layer);
}

SimilarityReport layer_similarity(const ladf::Corpus& source, const ladf::Corpus& target, Level level,
                                  bool train_only) {
  const auto& hs = source.header;
  const auto& ht = target.header;
  if (hs.num_layers != ht.num_layers || hs.dim != ht.dim || hs.emotions != ht.emotions) {
    fail(ErrorCode::kCorpusMismatch, "source (" + std::to_string(hs.num_layers) + " layers, dim " +
                                         std::to_string(hs.dim) + ") and target (" +
                                         std::to_string(ht.num_layers) + " layers, dim " +
                                         std::to_string(ht.dim) + ") or their emotion lists differ");
  }
  SimilarityReport report;
  report.level = level;
  report.num_layers = hs.num_layers;
  report.emotions = hs.emotions;

  std::vector<PhoneGroup> groups;
  if (level == Level::kUtterance) {
    groups.push_back({"", PhoneFilter::utterance()});
  } else {
    groups = default_phone_groups();
  }

  const auto src_sorted = sorted_records(source.records, train_only);
  const auto tar_sorted = sorted_records(target.records, train_only);
  for (const auto& group : groups) {
    for (std::size_t e = 0; e < hs.emotions.size(); ++e) {
      const auto em = static_cast<std::uint8_t>(e);
      const auto src = collect(src_sorted, em, group.filter);
      const auto tar = collect(tar_sorted, em, group.filter);
      if (src.empty() || tar.empty()) {
        std::string where = "emotion '" + hs.emotions[e] + "'";
        if (!group.name.empty()) where += " phone '" + group.name + "'";
        report.warnings.push_back(where + ": no samples in " + (src.empty() ? "source" : "target") +
                                  ", cells omitted");
        continue;
      }
      for (std::size_t layer = 1; layer <= hs.num_layers; ++layer) {
        const Vector cs = mean_of_layer(src, layer);
        const Vector ct = mean_of_layer(tar, layer);
        report.cells.push_back({group.name, e, layer, numkit::cosine(cs, ct), src.size(), tar.size()});
      }
    }
  }
  return report;
}

std::string to_json(const SimilarityReport& report) {
  nlohmann::json j;
  j["level"] = level_name(report.level);
  j["num_layers"] = report.num_layers;
  j["emotions"] = report.emotions;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) {
    cells.push_back({{"phone", c.phone},
                     {"emotion", report.emotions.at(c.emotion)},
                     {"layer", c.layer},
                     {"similarity", round9(c.value)},
                     {"n_source", c.n_source},
                     {"n_target", c.n_target}});
  }
  j["cells"] = cells;
  j["warnings"] = report.warnings;
  return j.dump(2) + "\n";
}

SimilarityReport from_json(std::string_view text) {
  SimilarityReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    const auto level = parse_level(j.at("level").get<std::string>());
    if (!level) fail(ErrorCode::kFormatError, "unknown similarity level");
    r.level = *level;
    r.num_layers = j.at("num_layers").get<std::size_t>();
    r.emotions = j.at("emotions").get<std::vector<std::string>>();
    for (const auto& c : j.at("cells")) {
      const auto name = c.at("emotion").get<std::string>();
      const auto it = std::find(r.emotions.begin(), r.emotions.end(), name);
      if (it == r.emotions.end()) fail(ErrorCode::kFormatError, "cell names unknown emotion '" + name + "'");
      Cell cell;
      cell.phone = c.at("phone").get<std::string>();
      cell.emotion = static_cast<std::size_t>(it - r.emotions.begin());
      cell.layer = c.at("layer").get<std::size_t>();
      cell.value = c.at("similarity").get<double>();
      cell.n_source = c.at("n_source").get<std::size_t>();
      cell.n_target = c.at("n_target").get<std::size_t>();
      if (cell.layer < 1 || cell.layer > r.num_layers) fail(ErrorCode::kFormatError, "cell layer out of range");
      r.cells.push_back(std::move(cell));
    }
    if (j.contains("warnings")) r.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, std::string("bad similarity report: ") + e.what());
  }
  return r;
}

std::string to_csv(const SimilarityReport& report) {
  std::string out = "level,emotion,phone,layer,similarity,n_source,n_target\n";
  for (const auto& c : report.cells) {
    out += std::string(level_name(report.level)) + "," + report.emotions.at(c.emotion) + "," + c.phone + "," +
           std::to_string(c.layer) + "," + format9(c.value) + "," + std::to_string(c.n_source) + "," +
           std::to_string(c.n_target) + "\n";
  }
  return out;
}

void export_report(const SimilarityReport& report, ExportFormat format, const std::filesystem::path& path) {
  const std::string text = format == ExportFormat::kJson ? to_json(report) : to_csv(report);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) fail(ErrorCode::kIoError, "write failed: " + path.string());
}

SimilarityReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return from_json(text);
}

}  // namespace lam::similarity
