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

// Typed records exchanged between the tutoring components, plus the
// validation rules that every model output and every ingested event has to
// pass before anything downstream sees it.

#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "tutorwheel/common.hpp"

namespace tutorwheel {

using Json = nlohmann::json;

inline constexpr std::size_t kDefaultFieldCap = 1000;

/// Literal an agent uses when it has nothing to flag.
inline constexpr std::string_view kNoneSentinel = "none";

// ---------------------------------------------------------------------------
// Specialist and autograder outputs.

struct VideoReport {
  std::string relevant_segment;
  std::string key_insight;
  std::string coverage_gap;
  bool operator==(const VideoReport&) const = default;
};

struct GuidanceReport {
  std::string conceptual_gap;
  std::string pedagogical_approach;
  std::string misconception_flag;
  bool operator==(const GuidanceReport&) const = default;
};

struct CodeReport {
  std::string diagnosis;
  std::string correct_components;
  std::string next_step;
  std::string alternative_approach;
  bool operator==(const CodeReport&) const = default;
};

struct GradeResult {
  bool passed = false;
  std::string reasoning;
  bool operator==(const GradeResult&) const = default;
};

enum class ReportKind { video, guidance, code, grade };

std::string_view to_string(ReportKind kind);

enum class ViolationKind {
  missing_field,
  empty_field,
  unknown_field,
  field_too_long,
  wrong_type,
  parse_error,
};

struct Violation {
  ViolationKind kind;
  std::string field;

  bool operator==(const Violation&) const = default;
  /// "MissingField(next_step)"
  std::string to_string() const;
};

std::string describe(const std::vector<Violation>& violations);

/// Field tables for each report type. Text fields are required, non-empty
/// and capped; the grade record additionally has a boolean.
template <class Report>
struct ReportTraits;

template <>
struct ReportTraits<VideoReport> {
  static constexpr ReportKind kind = ReportKind::video;
  static constexpr std::array fields{
      std::pair{"relevant_segment", &VideoReport::relevant_segment},
      std::pair{"key_insight", &VideoReport::key_insight},
      std::pair{"coverage_gap", &VideoReport::coverage_gap},
  };
};

template <>
struct ReportTraits<GuidanceReport> {
  static constexpr ReportKind kind = ReportKind::guidance;
  static constexpr std::array fields{
      std::pair{"conceptual_gap", &GuidanceReport::conceptual_gap},
      std::pair{"pedagogical_approach", &GuidanceReport::pedagogical_approach},
      std::pair{"misconception_flag", &GuidanceReport::misconception_flag},
  };
};

template <>
struct ReportTraits<CodeReport> {
  static constexpr ReportKind kind = ReportKind::code;
  static constexpr std::array fields{
      std::pair{"diagnosis", &CodeReport::diagnosis},
      std::pair{"correct_components", &CodeReport::correct_components},
      std::pair{"next_step", &CodeReport::next_step},
      std::pair{"alternative_approach", &CodeReport::alternative_approach},
  };
};

template <>
struct ReportTraits<GradeResult> {
  static constexpr ReportKind kind = ReportKind::grade;
  static constexpr std::array fields{
      std::pair{"reasoning", &GradeResult::reasoning},
  };
};

using StructuredRecord =
    std::variant<VideoReport, GuidanceReport, CodeReport, GradeResult>;

template <class Report>
using Validated = std::variant<Report, std::vector<Violation>>;

/// Returns the typed record iff every declared field is present, textual,
/// non-empty and within `field_cap` code points; otherwise the complete list
/// of violations in declaration order followed by unknown keys.
template <class Report>
Validated<Report> validate_report(const Json& raw,
                                  std::size_t field_cap = kDefaultFieldCap);

std::variant<StructuredRecord, std::vector<Violation>> validate_record(
    ReportKind kind, const Json& raw, std::size_t field_cap = kDefaultFieldCap);

/// Parses raw model text as JSON then validates. Malformed JSON is reported
/// as a single ParseError violation.
std::variant<StructuredRecord, std::vector<Violation>> parse_record(
    ReportKind kind, std::string_view text,
    std::size_t field_cap = kDefaultFieldCap);

Json to_json(const VideoReport& r);
Json to_json(const GuidanceReport& r);
Json to_json(const CodeReport& r);
Json to_json(const GradeResult& r);
Json to_json(const StructuredRecord& r);

/// JSON-schema fragment handed to providers that support constrained output.
Json response_schema(ReportKind kind);

// ---------------------------------------------------------------------------
// Interaction events.

enum class EventCategory {
  video_playback,
  chat_message,
  code_execution,
  code_editor,
  checkpoint_evaluation,
  session_management,
  error,
};

inline constexpr std::array kAllCategories{
    EventCategory::video_playback,        EventCategory::chat_message,
    EventCategory::code_execution,        EventCategory::code_editor,
    EventCategory::checkpoint_evaluation, EventCategory::session_management,
    EventCategory::error,
};

std::string_view to_string(EventCategory c);
std::optional<EventCategory> parse_category(std::string_view s);

enum class FieldType { text, number, boolean };

struct PayloadField {
  std::string name;
  FieldType type = FieldType::text;
  bool optional = false;
  std::vector<std::string> allowed;  // empty = any value of `type`
};

/// Exact payload field list used by ingestion. Total over the enum.
const std::vector<PayloadField>& event_category_schema(EventCategory c);

/// Names of offending payload fields (missing, mistyped, unknown, or
/// conditionally required). Empty means valid.
std::vector<std::string> payload_violations(EventCategory c, const Json& payload);

struct InteractionEvent {
  std::int64_t event_id = 0;
  std::string pseudonym;
  std::string lesson_id;
  std::string session_id;
  EventCategory category = EventCategory::error;
  UnixMillis timestamp = 0;
  Json payload = Json::object();
};

Json to_json(const InteractionEvent& e);
InteractionEvent event_from_json(const Json& j);

// ---------------------------------------------------------------------------
// Session state.

struct ChatTurn {
  std::string role;  // "student" | "ai"
  std::string text;
  bool operator==(const ChatTurn&) const = default;
};

struct CellOutput {
  std::string output;
  std::optional<std::string> error;
  bool operator==(const CellOutput&) const = default;
};

struct SessionState {
  std::string session_key;
  std::map<std::string, std::string> cell_contents;  // editable cells only
  std::map<std::string, CellOutput> cell_outputs;
  std::set<std::string> completed_checkpoints;
  std::vector<ChatTurn> chat_context;

  bool operator==(const SessionState&) const = default;
};

Json to_json(const SessionState& s);
SessionState session_from_json(const Json& j);

// ---------------------------------------------------------------------------
// Timing of one teaching turn.

struct TurnTiming {
  using ms = std::chrono::milliseconds;
  ms l_video{0};
  ms l_guidance{0};
  ms l_code{0};
  ms l_synth{0};
  ms wall{0};

  ms parallel_phase() const { return std::max({l_video, l_guidance, l_code}); }

  /// wall >= max(specialists) + synth and wall <= that + overhead_budget.
  bool within_bound(ms overhead_budget = ms{250}) const {
    const auto floor = parallel_phase() + l_synth;
    return wall >= floor && wall <= floor + overhead_budget;
  }
};

Json to_json(const TurnTiming& t);
TurnTiming timing_from_json(const Json& j);

/// Salted keyed-hash token standing in for a user id in analytics data.
struct Pseudonym {
  static constexpr std::size_t kLength = 16;
  std::string value;
  bool operator==(const Pseudonym&) const = default;
};

}  // namespace tutorwheel
