// SPDX-License-Identifier: Apache-2.0
//
// Layer-Anchor Dump Format (LADF): per-layer, per-segment pooled encoder
// features for one corpus. All integers are little-endian.
//
//   magic "LADF" | version u16 (=1) | header_len u32 | header JSON (UTF-8)
//   record_count u32 | records
//
//   record:  utt_id (u16 len + UTF-8) | split u8 | emotion u8 | segment_count u16 | segments
//   segment: phone_label (u16 len + UTF-8) | phone_class u8 | L*D f32, layer-major
//
// Layers are numbered from 1 in every interface; row r of a segment's feature
// matrix holds layer r+1.

#ifndef LAM_FEATURE_STORE_HPP_
#define LAM_FEATURE_STORE_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lam/numkit.hpp"

namespace lam::ladf {

inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::string_view kMagic = "LADF";
inline constexpr std::string_view kUtteranceLabel = "<utt>";
inline constexpr std::string_view kLayerIndexing = "1-based transformer block outputs";
inline constexpr std::string_view kPoolingMean = "mean";

enum class Split : std::uint8_t { kTrain = 0, kValidation = 1, kTest = 2 };
enum class PhoneClass : std::uint8_t { kUtterance = 0, kVowel = 1, kConsonant = 2 };

std::string_view split_name(Split split);
std::optional<Split> parse_split(std::string_view name);
std::string_view phone_class_name(PhoneClass pc);
std::optional<PhoneClass> parse_phone_class(std::string_view name);

// neutral, happiness, anger, sadness
std::vector<std::string> default_emotions();

struct CorpusHeader {
  std::string corpus_name;
  std::string model_name;
  std::size_t num_layers = 0;
  std::size_t dim = 0;
  std::string pooling = std::string(kPoolingMean);
  std::vector<std::string> emotions = default_emotions();
  std::string layer_indexing = std::string(kLayerIndexing);

  bool operator==(const CorpusHeader&) const = default;
};

struct Segment {
  std::string phone_label;
  PhoneClass phone_class = PhoneClass::kUtterance;
  numkit::Matrix features;  // num_layers x dim

  std::span<const double> layer(std::size_t one_based) const {
    return features.row(one_based - 1);
  }

  bool operator==(const Segment&) const = default;
};

struct Record {
  std::string utt_id;
  Split split = Split::kTrain;
  std::uint8_t emotion = 0;
  std::vector<Segment> segments;

  // The single whole-utterance segment. Throws FormatError if absent.
  const Segment& utterance() const;

  bool operator==(const Record&) const = default;
};

struct Corpus {
  CorpusHeader header;
  std::vector<Record> records;
};

// Throws FormatError on a header or shape violation and DuplicateId on a
// repeated utt_id; nothing is written in either case.
void write_ladf(const CorpusHeader& header, std::span<const Record> records, std::ostream& out);
void write_ladf(const CorpusHeader& header, std::span<const Record> records,
                const std::filesystem::path& path);

// Errors: NotLadf, UnsupportedVersion, TruncatedFile, FormatError, DuplicateId.
Corpus read_ladf(std::istream& in);
Corpus read_ladf(const std::filesystem::path& path);

std::string header_to_json(const CorpusHeader& header);
CorpusHeader header_from_json(std::string_view text);

// Checks the header invariants; throws FormatError.
void check_header(const CorpusHeader& header);

// A record together with the subset of its segments that passed a filter.
struct RecordView {
  const Record* record = nullptr;
  std::vector<const Segment*> segments;
};

struct RecordFilter {
  std::optional<Split> split;
  std::optional<std::uint8_t> emotion;
  std::optional<PhoneClass> phone_class;
};

// Order-preserving. With a phone_class set, only matching segments are kept
// and records left with none are dropped.
std::vector<RecordView> filter(std::span<const Record> records, const RecordFilter& f);
std::vector<RecordView> filter(std::span<const RecordView> views, const RecordFilter& f);

enum class ViolationKind {
  kStructure,  // the byte stream itself could not be decoded
  kHeader,
  kShape,
  kDuplicateId,
  kNonFinite,
  kEmotionRange,
  kUtteranceSegment,
  kEmptySplit,
};

std::string_view violation_kind_name(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string utt_id;
  std::optional<std::size_t> layer;    // 1-based
  std::optional<std::size_t> segment;  // 0-based position within the record
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::size_t record_count = 0;

  bool ok() const { return violations.empty(); }
  std::size_t count(ViolationKind kind) const;
};

ValidationReport validate(const CorpusHeader& header, std::span<const Record> records);
ValidationReport validate(std::istream& in);
ValidationReport validate(const std::filesystem::path& path);

}  // namespace lam::ladf

#endif  // LAM_FEATURE_STORE_HPP_
