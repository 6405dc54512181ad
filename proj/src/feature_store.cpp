// SPDX-License-Identifier: Apache-2.0

#include "lam/feature_store.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "lam/errors.hpp"

namespace lam::ladf {
namespace {

using numkit::Matrix;

class ByteWriter {
 public:
  explicit ByteWriter(std::string& buf) : buf_(buf) {}

  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void raw(std::string_view s) { buf_.append(s); }
  void short_string(std::string_view s, const char* what) {
    if (s.size() > 0xFFFF) fail(ErrorCode::kFormatError, std::string(what) + " longer than 65535 bytes");
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s);
  }

 private:
  std::string& buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view buf) : buf_(buf) {}

  std::size_t remaining() const { return buf_.size() - pos_; }
  std::size_t position() const { return pos_; }

  std::string_view take(std::size_t n, const char* what) {
    if (remaining() < n) {
      fail(ErrorCode::kTruncatedFile, std::string("stream ends inside ") + what + " at byte " +
                                          std::to_string(pos_));
    }
    auto out = buf_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(take(1, what)[0]); }
  std::uint16_t u16(const char* what) {
    auto b = take(2, what);
    return static_cast<std::uint16_t>(static_cast<std::uint8_t>(b[0]) |
                                      (static_cast<std::uint8_t>(b[1]) << 8));
  }
  std::uint32_t u32(const char* what) {
    auto b = take(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(b[i]);
    return v;
  }
  std::string short_string(const char* what) {
    const std::uint16_t n = u16(what);
    return std::string(take(n, what));
  }

 private:
  std::string_view buf_;
  std::size_t pos_ = 0;
};

void check_segment_shape(const CorpusHeader& header, const Record& rec, std::size_t i) {
  const Matrix& f = rec.segments[i].features;
  if (f.rows() != header.num_layers || f.cols() != header.dim) {
    fail(ErrorCode::kFormatError,
         "record '" + rec.utt_id + "' segment " + std::to_string(i) + " has shape " +
             std::to_string(f.rows()) + "x" + std::to_string(f.cols()) + ", header says " +
             std::to_string(header.num_layers) + "x" + std::to_string(header.dim));
  }
}

std::size_t count_utterance_segments(const Record& rec) {
  std::size_t n = 0;
  for (const auto& s : rec.segments) n += s.phone_class == PhoneClass::kUtterance ? 1 : 0;
  return n;
}

// Checks record-level rules shared by the writer and the strict reader.
void check_record(const CorpusHeader& header, const Record& rec) {
  if (rec.emotion >= header.emotions.size()) {
    fail(ErrorCode::kFormatError, "record '" + rec.utt_id + "' has emotion index " +
                                      std::to_string(rec.emotion) + " with " +
                                      std::to_string(header.emotions.size()) + " classes");
  }
  if (count_utterance_segments(rec) != 1) {
    fail(ErrorCode::kFormatError,
         "record '" + rec.utt_id + "' must contain exactly one utterance segment");
  }
}

// Decodes the byte layout into `out`. Structural problems throw; records
// decoded before the failure stay in `out` so the validator can inspect them.
void decode(std::string_view bytes, Corpus& out) {
  ByteReader r(bytes);
  if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
    fail(ErrorCode::kNotLadf, "missing LADF magic");
  }
  r.take(kMagic.size(), "magic");
  const std::uint16_t version = r.u16("version");
  if (version != kVersion) {
    fail(ErrorCode::kUnsupportedVersion, "LADF version " + std::to_string(version));
  }
  const std::uint32_t header_len = r.u32("header length");
  out.header = header_from_json(r.take(header_len, "header"));
  const std::size_t L = out.header.num_layers;
  const std::size_t D = out.header.dim;
  const std::uint32_t count = r.u32("record count");
  for (std::uint32_t k = 0; k < count; ++k) {
    Record rec;
    rec.utt_id = r.short_string("utt_id");
    const std::uint8_t split = r.u8("split");
    if (split > 2) fail(ErrorCode::kFormatError, "record '" + rec.utt_id + "' has split byte " + std::to_string(split));
    rec.split = static_cast<Split>(split);
    rec.emotion = r.u8("emotion");
    const std::uint16_t nseg = r.u16("segment count");
    for (std::uint16_t s = 0; s < nseg; ++s) {
      Segment seg;
      seg.phone_label = r.short_string("phone label");
      const std::uint8_t pc = r.u8("phone class");
      if (pc > 2) fail(ErrorCode::kFormatError, "record '" + rec.utt_id + "' has phone class byte " + std::to_string(pc));
      seg.phone_class = static_cast<PhoneClass>(pc);
      auto payload = r.take(L * D * 4, "segment features");
      std::vector<double> values(L * D);
      for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 3; b >= 0; --b) bits = (bits << 8) | static_cast<std::uint8_t>(payload[4 * i + b]);
        values[i] = static_cast<double>(std::bit_cast<float>(bits));
      }
      seg.features = Matrix(L, D, std::move(values));
      rec.segments.push_back(std::move(seg));
    }
    out.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) {
    fail(ErrorCode::kFormatError, std::to_string(r.remaining()) + " trailing bytes after last record");
  }
}

std::string slurp(std::istream& in) {
  std::string buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (in.bad()) fail(ErrorCode::kIoError, "read failed");
  return buf;
}

std::string slurp_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path.string());
  return slurp(in);
}

}  // namespace

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation" || name == "val" || name == "dev") return Split::kValidation;
  if (name == "test") return Split::kTest;
  return std::nullopt;
}

std::string_view phone_class_name(PhoneClass pc) {
  switch (pc) {
    case PhoneClass::kUtterance: return "utterance";
    case PhoneClass::kVowel: return "vowel";
    case PhoneClass::kConsonant: return "consonant";
  }
  return "?";
}

std::optional<PhoneClass> parse_phone_class(std::string_view name) {
  if (name == "utterance") return PhoneClass::kUtterance;
  if (name == "vowel") return PhoneClass::kVowel;
  if (name == "consonant") return PhoneClass::kConsonant;
  return std::nullopt;
}

std::vector<std::string> default_emotions() { return {"neutral", "happiness", "anger", "sadness"}; }

const Segment& Record::utterance() const {
  for (const auto& s : segments)
    if (s.phone_class == PhoneClass::kUtterance) return s;
  fail(ErrorCode::kFormatError, "record '" + utt_id + "' has no utterance segment");
}

void check_header(const CorpusHeader& header) {
  if (header.num_layers < 1 || header.dim < 1) {
    fail(ErrorCode::kFormatError, "num_layers and dim must be at least 1");
  }
  if (header.emotions.empty()) fail(ErrorCode::kFormatError, "emotion list is empty");
  if (header.emotions.size() > 256) fail(ErrorCode::kFormatError, "more than 256 emotion classes");
  std::unordered_set<std::string> seen;
  for (const auto& e : header.emotions) {
    if (!seen.insert(e).second) fail(ErrorCode::kFormatError, "duplicate emotion '" + e + "'");
  }
  if (header.pooling != kPoolingMean) fail(ErrorCode::kFormatError, "unsupported pooling '" + header.pooling + "'");
  if (header.layer_indexing != kLayerIndexing) {
    fail(ErrorCode::kFormatError, "unexpected layer_indexing '" + header.layer_indexing + "'");
  }
}

std::string header_to_json(const CorpusHeader& header) {
  nlohmann::json j;
  j["corpus_name"] = header.corpus_name;
  j["model_name"] = header.model_name;
  j["num_layers"] = header.num_layers;
  j["dim"] = header.dim;
  j["pooling"] = header.pooling;
  j["emotions"] = header.emotions;
  j["layer_indexing"] = header.layer_indexing;
  return j.dump();
}

CorpusHeader header_from_json(std::string_view text) {
  CorpusHeader h;
  try {
    const auto j = nlohmann::json::parse(text);
    h.corpus_name = j.at("corpus_name").get<std::string>();
    h.model_name = j.at("model_name").get<std::string>();
    h.num_layers = j.at("num_layers").get<std::size_t>();
    h.dim = j.at("dim").get<std::size_t>();
    h.pooling = j.at("pooling").get<std::string>();
    h.emotions = j.at("emotions").get<std::vector<std::string>>();
    h.layer_indexing = j.at("layer_indexing").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, std::string("bad LADF header: ") + e.what());
  }
  return h;
}

void write_ladf(const CorpusHeader& header, std::span<const Record> records, std::ostream& out) {
  check_header(header);
  std::unordered_set<std::string_view> ids;
  for (const auto& rec : records) {
    if (!ids.insert(rec.utt_id).second) fail(ErrorCode::kDuplicateId, "duplicate utt_id '" + rec.utt_id + "'");
    check_record(header, rec);
    if (rec.segments.size() > 0xFFFF) fail(ErrorCode::kFormatError, "too many segments in '" + rec.utt_id + "'");
    for (std::size_t i = 0; i < rec.segments.size(); ++i) check_segment_shape(header, rec, i);
  }
  if (records.size() > 0xFFFFFFFFu) fail(ErrorCode::kFormatError, "too many records");

  std::string buf;
  ByteWriter w(buf);
  w.raw(kMagic);
  w.u16(kVersion);
  const std::string hjson = header_to_json(header);
  w.u32(static_cast<std::uint32_t>(hjson.size()));
  w.raw(hjson);
  w.u32(static_cast<std::uint32_t>(records.size()));
  for (const auto& rec : records) {
    w.short_string(rec.utt_id, "utt_id");
    w.u8(static_cast<std::uint8_t>(rec.split));
    w.u8(rec.emotion);
    w.u16(static_cast<std::uint16_t>(rec.segments.size()));
    for (const auto& seg : rec.segments) {
      w.short_string(seg.phone_label, "phone label");
      w.u8(static_cast<std::uint8_t>(seg.phone_class));
      for (double v : seg.features.data()) w.f32(v);
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) fail(ErrorCode::kIoError, "write failed");
}

void write_ladf(const CorpusHeader& header, std::span<const Record> records,
                const std::filesystem::path& path) {
  std::ostringstream buf(std::ios::binary);
  write_ladf(header, records, buf);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  const std::string bytes = buf.str();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIoError, "write failed: " + path.string());
}

Corpus read_ladf(std::istream& in) {
  const std::string bytes = slurp(in);
  Corpus corpus;
  decode(bytes, corpus);
  check_header(corpus.header);
  std::unordered_set<std::string_view> ids;
  for (const auto& rec : corpus.records) {
    if (!ids.insert(rec.utt_id).second) fail(ErrorCode::kDuplicateId, "duplicate utt_id '" + rec.utt_id + "'");
    check_record(corpus.header, rec);
  }
  return corpus;
}

Corpus read_ladf(const std::filesystem::path& path) {
  std::istringstream in(slurp_file(path), std::ios::binary);
  return read_ladf(in);
}

namespace {

bool keep_record(const Record& rec, const RecordFilter& f) {
  if (f.split && rec.split != *f.split) return false;
  if (f.emotion && rec.emotion != *f.emotion) return false;
  return true;
}

}  // namespace

std::vector<RecordView> filter(std::span<const Record> records, const RecordFilter& f) {
  std::vector<RecordView> out;
  for (const auto& rec : records) {
    if (!keep_record(rec, f)) continue;
    RecordView view{&rec, {}};
    for (const auto& seg : rec.segments) {
      if (!f.phone_class || seg.phone_class == *f.phone_class) view.segments.push_back(&seg);
    }
    if (f.phone_class && view.segments.empty()) continue;
    out.push_back(std::move(view));
  }
  return out;
}

std::vector<RecordView> filter(std::span<const RecordView> views, const RecordFilter& f) {
  std::vector<RecordView> out;
  for (const auto& v : views) {
    if (!keep_record(*v.record, f)) continue;
    RecordView view{v.record, {}};
    for (const Segment* seg : v.segments) {
      if (!f.phone_class || seg->phone_class == *f.phone_class) view.segments.push_back(seg);
    }
    if (f.phone_class && view.segments.empty()) continue;
    out.push_back(std::move(view));
  }
  return out;
}

std::string_view violation_kind_name(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kStructure: return "structure";
    case ViolationKind::kHeader: return "header";
    case ViolationKind::kShape: return "shape";
    case ViolationKind::kDuplicateId: return "duplicate_id";
    case ViolationKind::kNonFinite: return "non_finite";
    case ViolationKind::kEmotionRange: return "emotion_range";
    case ViolationKind::kUtteranceSegment: return "utterance_segment";
    case ViolationKind::kEmptySplit: return "empty_split";
  }
  return "?";
}

std::size_t ValidationReport::count(ViolationKind kind) const {
  std::size_t n = 0;
  for (const auto& v : violations) n += v.kind == kind ? 1 : 0;
  return n;
}

ValidationReport validate(const CorpusHeader& header, std::span<const Record> records) {
  ValidationReport report;
  report.record_count = records.size();
  try {
    check_header(header);
  } catch (const Error& e) {
    report.violations.push_back({ViolationKind::kHeader, "", std::nullopt, std::nullopt, e.what()});
  }

  std::unordered_set<std::string_view> ids;
  std::size_t split_counts[3] = {0, 0, 0};
  for (const auto& rec : records) {
    ++split_counts[static_cast<std::size_t>(rec.split) % 3];
    if (!ids.insert(rec.utt_id).second) {
      report.violations.push_back({ViolationKind::kDuplicateId, rec.utt_id, std::nullopt, std::nullopt,
                                   "utt_id appears more than once"});
    }
    if (rec.emotion >= header.emotions.size()) {
      report.violations.push_back({ViolationKind::kEmotionRange, rec.utt_id, std::nullopt, std::nullopt,
                                   "emotion index " + std::to_string(rec.emotion) + " out of range"});
    }
    const std::size_t n_utt = count_utterance_segments(rec);
    if (n_utt != 1) {
      report.violations.push_back({ViolationKind::kUtteranceSegment, rec.utt_id, std::nullopt, std::nullopt,
                                   std::to_string(n_utt) + " utterance segments, expected 1"});
    }
    for (std::size_t s = 0; s < rec.segments.size(); ++s) {
      const Matrix& f = rec.segments[s].features;
      if (f.rows() != header.num_layers || f.cols() != header.dim) {
        report.violations.push_back(
            {ViolationKind::kShape, rec.utt_id, std::nullopt, s,
             "segment shape " + std::to_string(f.rows()) + "x" + std::to_string(f.cols()) +
                 ", header says " + std::to_string(header.num_layers) + "x" + std::to_string(header.dim)});
        continue;
      }
      for (std::size_t layer = 0; layer < f.rows(); ++layer) {
        if (!numkit::all_finite(f.row(layer))) {
          report.violations.push_back({ViolationKind::kNonFinite, rec.utt_id, layer + 1, s,
                                       "non-finite feature value"});
        }
      }
    }
  }
  for (int s = 0; s < 3; ++s) {
    if (split_counts[s] == 0) {
      report.violations.push_back({ViolationKind::kEmptySplit, "", std::nullopt, std::nullopt,
                                   std::string("split '") + std::string(split_name(static_cast<Split>(s))) +
                                       "' has no records"});
    }
  }
  return report;
}

ValidationReport validate(std::istream& in) {
  const std::string bytes = slurp(in);
  Corpus corpus;
  std::optional<Violation> structural;
  try {
    decode(bytes, corpus);
  } catch (const Error& e) {
    structural = Violation{ViolationKind::kStructure, "", std::nullopt, std::nullopt, e.what()};
  }
  ValidationReport report;
  if (structural && corpus.header.num_layers == 0 && corpus.records.empty()) {
    report.violations.push_back(*structural);
    return report;
  }
  report = validate(corpus.header, corpus.records);
  if (structural) report.violations.insert(report.violations.begin(), *structural);
  return report;
}

ValidationReport validate(const std::filesystem::path& path) {
  std::istringstream in(slurp_file(path), std::ios::binary);
  return validate(in);
}

}  // namespace lam::ladf
