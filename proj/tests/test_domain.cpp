// Copyright 2026 The Tutorwheel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <random>

#include "tutorwheel/common.hpp"
#include "tutorwheel/domain.hpp"

namespace tutorwheel {
namespace {

TEST(Timestamps, RoundTripAndCalendar) {
  // 2026-02-01T15:00:00Z, computed by hand: 20485 days after the epoch.
  constexpr UnixMillis kExpected = 20485LL * 86400000 + 15LL * 3600000;
  ASSERT_EQ(parse_timestamp("2026-02-01T15:00:00Z"), kExpected);
  EXPECT_EQ(format_timestamp(kExpected + 42), "2026-02-01T15:00:00.042Z");
  EXPECT_EQ(day_of(kExpected), "2026-02-01");
  EXPECT_EQ(parse_timestamp("2026-02-01T15:00:00.5Z"), kExpected + 500);
  EXPECT_FALSE(parse_timestamp("2026-02-01 15:00:00Z"));
  EXPECT_FALSE(parse_timestamp("2026-02-01T15:00:00+01:00"));
  EXPECT_FALSE(parse_timestamp("2026-13-01T15:00:00Z"));
  EXPECT_FALSE(parse_timestamp(""));
}

TEST(Timestamps, FormatParseIsIdentityOnRandomInstants) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 2000; ++i) {
    const auto ms = static_cast<UnixMillis>(rng() % 4'000'000'000'000ULL);
    ASSERT_EQ(parse_timestamp(format_timestamp(ms)), ms);
  }
}

TEST(Clock, FormatsMinutesAndHours) {
  EXPECT_EQ(format_clock(0), "0:00");
  EXPECT_EQ(format_clock(2530.9), "42:10");
  EXPECT_EQ(format_clock(3600), "1:00:00");
  EXPECT_EQ(format_clock(-5), "0:00");
}

TEST(Slugs, RejectUnderscoreAndEmpty) {
  EXPECT_TRUE(is_slug("qis-m2"));
  EXPECT_TRUE(is_slug("amara-k17"));
  EXPECT_FALSE(is_slug("has_underscore"));
  EXPECT_FALSE(is_slug(""));
  EXPECT_FALSE(is_slug("a/b"));
  EXPECT_FALSE(is_slug("a b"));
}

TEST(Utf8, PrefixNeverSplitsACodePoint) {
  const std::string s = "ab\xC3\xA9\xE2\x82\xAC\xF0\x9F\x98\x80z";  // a b é € 😀 z
  EXPECT_EQ(utf8_length(s), 6u);
  EXPECT_EQ(utf8_prefix(s, 3), "ab\xC3\xA9");
  EXPECT_EQ(utf8_prefix(s, 5), "ab\xC3\xA9\xE2\x82\xAC\xF0\x9F\x98\x80");
  EXPECT_EQ(utf8_prefix(s, 100), s);
  for (std::size_t n = 0; n <= 6; ++n) EXPECT_EQ(utf8_length(utf8_prefix(s, n)), n);
}

// ---------------------------------------------------------------------------

Json valid_code_report() {
  return {{"diagnosis", "d"}, {"correct_components", "c"}, {"next_step", "n"},
          {"alternative_approach", "none"}};
}

TEST(ReportValidation, AcceptsCompleteRecord) {
  const auto v = validate_report<CodeReport>(valid_code_report());
  ASSERT_TRUE(std::holds_alternative<CodeReport>(v));
  EXPECT_EQ(std::get<CodeReport>(v).alternative_approach, kNoneSentinel);
}

TEST(ReportValidation, ListsEveryViolationInDeclarationOrder) {
  Json raw = valid_code_report();
  raw.erase("diagnosis");
  raw["next_step"] = "";
  raw["alternative_approach"] = 7;
  raw["confidence"] = "high";
  const auto v = validate_report<CodeReport>(raw);
  ASSERT_TRUE(std::holds_alternative<std::vector<Violation>>(v));
  const std::vector<Violation> expected{{ViolationKind::missing_field, "diagnosis"},
                                        {ViolationKind::empty_field, "next_step"},
                                        {ViolationKind::wrong_type, "alternative_approach"},
                                        {ViolationKind::unknown_field, "confidence"}};
  EXPECT_EQ(std::get<std::vector<Violation>>(v), expected);
  EXPECT_EQ(describe(expected),
            "MissingField(diagnosis), EmptyField(next_step), WrongType(alternative_approach), "
            "UnknownField(confidence)");
}

TEST(ReportValidation, CapCountsCodePoints) {
  Json raw{{"relevant_segment", std::string(10, 'x')},
           {"key_insight", std::string(10, 'y')},
           {"coverage_gap", ""}};
  std::string accented;
  for (int i = 0; i < 10; ++i) accented += "\xC3\xA9";  // 10 code points, 20 bytes
  raw["coverage_gap"] = accented;
  EXPECT_TRUE(std::holds_alternative<VideoReport>(validate_report<VideoReport>(raw, 10)));
  raw["coverage_gap"] = accented + "e";
  const auto v = validate_report<VideoReport>(raw, 10);
  ASSERT_TRUE(std::holds_alternative<std::vector<Violation>>(v));
  EXPECT_EQ(std::get<std::vector<Violation>>(v).front(),
            (Violation{ViolationKind::field_too_long, "coverage_gap"}));
}

TEST(ReportValidation, WhitespaceOnlyIsEmpty) {
  Json raw{{"conceptual_gap", " \n\t"}, {"pedagogical_approach", "p"}, {"misconception_flag", "m"}};
  const auto v = validate_report<GuidanceReport>(raw);
  ASSERT_TRUE(std::holds_alternative<std::vector<Violation>>(v));
  EXPECT_EQ(std::get<std::vector<Violation>>(v).front().kind, ViolationKind::empty_field);
}

TEST(ReportValidation, GradeNeedsBooleanPassed) {
  EXPECT_TRUE(std::holds_alternative<GradeResult>(
      validate_report<GradeResult>(Json{{"passed", true}, {"reasoning", "fine"}})));
  const auto v = validate_report<GradeResult>(Json{{"passed", "yes"}, {"reasoning", "fine"}});
  ASSERT_TRUE(std::holds_alternative<std::vector<Violation>>(v));
  EXPECT_EQ(std::get<std::vector<Violation>>(v).front(),
            (Violation{ViolationKind::wrong_type, "passed"}));
}

TEST(ReportValidation, ParseErrorForNonJsonAndNonObjects) {
  for (const char* text : {"not json", "[1,2]", "\"string\"", ""}) {
    const auto v = parse_record(ReportKind::video, text);
    ASSERT_TRUE(std::holds_alternative<std::vector<Violation>>(v)) << text;
    EXPECT_EQ(std::get<std::vector<Violation>>(v).size(), 1u) << text;
  }
}

TEST(ReportValidation, SchemaFragmentListsRequiredKeys) {
  const auto schema = response_schema(ReportKind::code);
  EXPECT_EQ(schema.at("required").size(), 4u);
  EXPECT_FALSE(schema.at("additionalProperties").get<bool>());
  EXPECT_EQ(response_schema(ReportKind::grade).at("properties").at("passed").at("type"), "boolean");
}

// ---------------------------------------------------------------------------

TEST(EventSchema, TotalOverCategories) {
  for (const auto c : kAllCategories) {
    EXPECT_FALSE(event_category_schema(c).empty()) << to_string(c);
    EXPECT_EQ(parse_category(to_string(c)), c);
  }
  EXPECT_FALSE(parse_category("video"));
}

TEST(EventSchema, PayloadViolations) {
  using C = EventCategory;
  EXPECT_TRUE(payload_violations(C::video_playback, {{"action", "play"}, {"position_s", 12.5}}).empty());
  EXPECT_EQ(payload_violations(C::video_playback, {{"action", "rewind"}, {"position_s", 1}}),
            std::vector<std::string>{"action"});
  EXPECT_EQ(payload_violations(C::video_playback, {{"action", "seek"}, {"position_s", 1}}),
            (std::vector<std::string>{"seek_from_s", "seek_to_s"}));
  EXPECT_EQ(payload_violations(C::chat_message, {{"sender", "student"}, {"text", 5}}),
            std::vector<std::string>{"text"});
  EXPECT_EQ(payload_violations(C::code_execution, {{"cell_id", "c1"}, {"success", true}, {"extra", 1}}),
            std::vector<std::string>{"extra"});
  EXPECT_EQ(payload_violations(C::session_management, Json::array()), std::vector<std::string>{"payload"});
  EXPECT_TRUE(payload_violations(C::error, {{"source", "s"}, {"message", "m"}}).empty());
}

TEST(EventJson, RoundTrip) {
  InteractionEvent e{17, "0123456789abcdef", "qis-m2", "fedcba9876543210",
                     EventCategory::code_execution, 1769958000123,
                     {{"cell_id", "c2"}, {"success", false}, {"error_message", "boom"}}};
  const auto back = event_from_json(to_json(e));
  EXPECT_EQ(back.event_id, e.event_id);
  EXPECT_EQ(back.pseudonym, e.pseudonym);
  EXPECT_EQ(back.timestamp, e.timestamp);
  EXPECT_EQ(back.category, e.category);
  EXPECT_EQ(back.payload, e.payload);
}

TEST(SessionStateJson, RoundTrip) {
  SessionState s;
  s.session_key = "session_amara_qis-m2";
  s.cell_contents = {{"c1", "x = 1"}, {"c2", ""}};
  s.cell_outputs = {{"c1", {"1", std::nullopt}}, {"c2", {"", "NameError: y"}}};
  s.completed_checkpoints = {"cp1"};
  s.chat_context = {{"student", "hi"}, {"ai", "hello"}};
  EXPECT_EQ(session_from_json(to_json(s)), s);
  EXPECT_EQ(session_from_json(Json::parse(to_json(s).dump())), s);
}

TEST(Timing, BoundIsInclusive) {
  using ms = std::chrono::milliseconds;
  TurnTiming t{ms{100}, ms{300}, ms{200}, ms{50}, ms{350}};
  EXPECT_EQ(t.parallel_phase(), ms{300});
  EXPECT_TRUE(t.within_bound());
  t.wall = ms{600};
  EXPECT_TRUE(t.within_bound());
  t.wall = ms{601};
  EXPECT_FALSE(t.within_bound());
  t.wall = ms{349};
  EXPECT_FALSE(t.within_bound());
  EXPECT_EQ(timing_from_json(to_json(t)).wall, t.wall);
}

}  // namespace
}  // namespace tutorwheel
