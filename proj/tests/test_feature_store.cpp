// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "lam/errors.hpp"
#include "lam/feature_store.hpp"
#include "support.hpp"

namespace lam::ladf {
namespace {

std::string encode(const Corpus& c) {
  std::ostringstream os;
  write_ladf(c.header, c.records, os);
  return os.str();
}

Corpus decode(const std::string& bytes) {
  std::istringstream is(bytes);
  return read_ladf(is);
}

ValidationReport validate_bytes(const std::string& bytes) {
  std::istringstream is(bytes);
  return validate(is);
}

ErrorCode decode_error(const std::string& bytes) {
  try {
    decode(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "decode succeeded";
  return ErrorCode::kIoError;
}

Corpus three_splits(std::size_t L = 2, std::size_t D = 3) {
  Corpus c;
  c.header.corpus_name = "tiny";
  c.header.model_name = "synthetic";
  c.header.num_layers = L;
  c.header.dim = D;
  c.records.push_back(testing::constant_record("a", Split::kTrain, 0, L, D, 1.0));
  c.records.push_back(testing::constant_record("b", Split::kValidation, 1, L, D, 2.0));
  c.records.push_back(testing::constant_record("c", Split::kTest, 2, L, D, 3.0));
  return c;
}

// Byte offset of the first feature value of the first record.
std::size_t first_feature_offset(const std::string& bytes) {
  auto u16 = [&](std::size_t at) {
    return static_cast<std::size_t>(static_cast<unsigned char>(bytes[at])) |
           static_cast<std::size_t>(static_cast<unsigned char>(bytes[at + 1])) << 8;
  };
  std::uint32_t hlen = 0;
  std::memcpy(&hlen, bytes.data() + 6, 4);
  std::size_t at = 10 + hlen + 4;
  at += 2 + u16(at);  // utt_id
  at += 1 + 1 + 2;    // split, emotion, segment count
  at += 2 + u16(at);  // phone label
  return at + 1;      // phone class
}

TEST(Ladf, RoundTripSimple) {
  const Corpus c = three_splits();
  const std::string bytes = encode(c);
  EXPECT_EQ(bytes.substr(0, 4), "LADF");
  const Corpus back = decode(bytes);
  EXPECT_EQ(back.header, c.header);
  EXPECT_EQ(back.records, c.records);
  EXPECT_EQ(encode(back), bytes);
}

TEST(Ladf, RoundTripRandomised) {
  for (std::uint64_t seed = 0; seed < 120; ++seed) {
    const Corpus c = testing::random_corpus(seed);
    const std::string bytes = encode(c);
    const Corpus back = decode(bytes);
    ASSERT_EQ(back.records, c.records) << "seed " << seed;
    ASSERT_EQ(encode(back), bytes) << "seed " << seed;
  }
}

TEST(Ladf, FileRoundTrip) {
  testing::TempDir dir("ladf");
  const Corpus c = testing::random_corpus(5, 30);
  write_ladf(c.header, c.records, dir / "x.ladf");
  const Corpus back = read_ladf(dir / "x.ladf");
  EXPECT_EQ(back.records, c.records);
  try {
    read_ladf(dir / "missing.ladf");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoError);
  }
}

TEST(Ladf, HeaderIsJsonWithFixedKeys) {
  const auto j = nlohmann::json::parse(header_to_json(three_splits().header));
  EXPECT_EQ(j.at("pooling"), "mean");
  EXPECT_EQ(j.at("layer_indexing"), std::string(kLayerIndexing));
  EXPECT_EQ(j.at("num_layers"), 2);
  EXPECT_EQ(j.at("dim"), 3);
  EXPECT_EQ(header_from_json(j.dump()), three_splits().header);
}

TEST(Ladf, WrongMagicVersionAndTruncation) {
  const std::string bytes = encode(three_splits());
  EXPECT_EQ(decode_error("NOPE" + bytes.substr(4)), ErrorCode::kNotLadf);
  EXPECT_EQ(decode_error(""), ErrorCode::kNotLadf);
  std::string v2 = bytes;
  v2[4] = 2;
  EXPECT_EQ(decode_error(v2), ErrorCode::kUnsupportedVersion);
  for (std::size_t cut : {std::size_t{5}, std::size_t{12}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_EQ(decode_error(bytes.substr(0, cut)), ErrorCode::kTruncatedFile) << cut;
  }
  EXPECT_EQ(decode_error(bytes + "x"), ErrorCode::kFormatError);
}

TEST(Ladf, WriterRejectsBadRecords) {
  Corpus dup = three_splits();
  dup.records[1].utt_id = "a";
  try {
    encode(dup);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDuplicateId);
  }
  Corpus shape = three_splits();
  shape.records[0].segments[0].features = numkit::Matrix(2, 4);
  try {
    encode(shape);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormatError);
  }
  Corpus two_utt = three_splits();
  two_utt.records[0].segments.push_back(two_utt.records[0].segments[0]);
  EXPECT_THROW(encode(two_utt), Error);
  Corpus label = three_splits();
  label.records[0].emotion = 9;
  EXPECT_THROW(encode(label), Error);
}

TEST(Ladf, HeaderChecks) {
  Corpus c = three_splits();
  c.header.pooling = "max";
  EXPECT_THROW(encode(c), Error);
  c = three_splits();
  c.header.num_layers = 0;
  EXPECT_THROW(check_header(c.header), Error);
}

TEST(Validate, CleanCorpusHasNoViolations) {
  const auto r = validate_bytes(encode(three_splits()));
  EXPECT_TRUE(r.ok());
  EXPECT_EQ(r.record_count, 3u);
}

TEST(Validate, InjectedNanNamesRecordAndLayer) {
  std::string bytes = encode(three_splits());
  const float nan = std::numeric_limits<float>::quiet_NaN();
  // layer 2, column 1 of the first record
  std::memcpy(bytes.data() + first_feature_offset(bytes) + 4 * 3, &nan, 4);
  const auto r = validate_bytes(bytes);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].kind, ViolationKind::kNonFinite);
  EXPECT_EQ(r.violations[0].utt_id, "a");
  EXPECT_EQ(r.violations[0].layer, std::optional<std::size_t>(2));
}

TEST(Validate, InMemoryFaults) {
  Corpus c = three_splits();
  c.records[2].utt_id = "a";
  c.records[1].segments[0].features = numkit::Matrix(3, 3);
  c.records[0].segments[0].features(0, 0) = std::numeric_limits<double>::infinity();
  const auto r = validate(c.header, c.records);
  EXPECT_EQ(r.count(ViolationKind::kDuplicateId), 1u);
  EXPECT_EQ(r.count(ViolationKind::kShape), 1u);
  EXPECT_EQ(r.count(ViolationKind::kNonFinite), 1u);
}

TEST(Validate, EmptySplitIsReported) {
  Corpus c = three_splits();
  c.records.pop_back();
  const auto r = validate(c.header, c.records);
  EXPECT_EQ(r.count(ViolationKind::kEmptySplit), 1u);
}

TEST(Validate, PatchedHeaderDimIsCaught) {
  const std::string bytes = encode(three_splits());
  std::string patched = bytes;
  const auto pos = patched.find("\"dim\":3");
  ASSERT_NE(pos, std::string::npos);
  patched[pos + 6] = '4';
  const auto r = validate_bytes(patched);
  EXPECT_FALSE(r.ok());
  EXPECT_THROW(decode(patched), Error);
}

TEST(Validate, GarbageIsAStructureViolation) {
  const auto r = validate_bytes("definitely not a feature file");
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.violations[0].kind, ViolationKind::kStructure);
}

TEST(Filter, BySplitEmotionAndPhoneClass) {
  Corpus c = three_splits();
  Segment vowel{"a", PhoneClass::kVowel, numkit::Matrix(2, 3, 5.0)};
  c.records[0].segments.push_back(vowel);
  const auto train = filter(c.records, {Split::kTrain, std::nullopt, std::nullopt});
  ASSERT_EQ(train.size(), 1u);
  EXPECT_EQ(train[0].segments.size(), 2u);
  const auto vowels = filter(c.records, {std::nullopt, std::nullopt, PhoneClass::kVowel});
  ASSERT_EQ(vowels.size(), 1u);
  EXPECT_EQ(vowels[0].segments.size(), 1u);
  EXPECT_EQ(vowels[0].segments[0]->phone_label, "a");
  EXPECT_TRUE(filter(c.records, {std::nullopt, std::uint8_t{3}, std::nullopt}).empty());
  // composing filters equals a single combined filter
  const auto step = filter(filter(c.records, {Split::kTrain, std::nullopt, std::nullopt}),
                           RecordFilter{std::nullopt, std::nullopt, PhoneClass::kVowel});
  ASSERT_EQ(step.size(), 1u);
  EXPECT_EQ(step[0].segments.size(), 1u);
}

TEST(Names, ParseRoundTrip) {
  for (Split s : {Split::kTrain, Split::kValidation, Split::kTest}) EXPECT_EQ(parse_split(split_name(s)), s);
  for (PhoneClass p : {PhoneClass::kUtterance, PhoneClass::kVowel, PhoneClass::kConsonant}) {
    EXPECT_EQ(parse_phone_class(phone_class_name(p)), p);
  }
  EXPECT_FALSE(parse_split("holdout").has_value());
}

}  // namespace
}  // namespace lam::ladf
