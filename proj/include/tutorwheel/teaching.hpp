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

// Spoke-and-Wheel turn: three specialists in parallel, one synthesizer.

#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tutorwheel/event_pipeline.hpp"
#include "tutorwheel/lesson.hpp"
#include "tutorwheel/model_gateway.hpp"
#include "tutorwheel/session_store.hpp"

namespace tutorwheel {

/// Chat entries kept in SessionState (10 turns, student + ai each).
inline constexpr std::size_t kChatContextEntries = 20;

class InvalidQuery : public Error {
 public:
  InvalidQuery() : Error("student query must not be empty") {}
};

struct CellView {
  std::string cell_id;
  std::string source;
  std::string last_output;
  std::optional<std::string> last_error;
};

struct TurnContext {
  std::string student_query;
  std::string checkpoint_id;
  std::string checkpoint_title;
  /// Every checkpoint is done; the last one stands in as context.
  bool lesson_complete = false;
  std::string editor_language;
  std::vector<TranscriptSegment> transcript_window;
  std::vector<CellView> cells_with_outputs;
  std::map<std::string, std::string> instructions;  // per agent name
  std::vector<ErrorCatalogEntry> error_catalog;
  std::vector<ChatTurn> chat_history;
};

/// Pure function of (session, lesson, query). Throws InvalidQuery.
TurnContext build_turn_context(const SessionState& session, const LessonContent& lesson,
                               std::string query);

/// Code cells in lesson order, with the session's source (or the lesson
/// source for read-only cells) and last recorded output.
std::vector<CellView> cell_views(const SessionState& session, const LessonContent& lesson,
                                 const std::vector<std::string>* only = nullptr);

std::string format_cells(const std::vector<CellView>& cells);
std::string format_transcript(const std::vector<TranscriptSegment>& segments);
std::string format_chat(const std::vector<ChatTurn>& turns);

Bindings video_bindings(const TurnContext& ctx);
Bindings guidance_bindings(const TurnContext& ctx);
Bindings code_bindings(const TurnContext& ctx);

template <class Report>
struct SpecialistSlot {
  std::variant<Report, std::string> value;  // report or failure description
  std::chrono::milliseconds latency{0};

  bool ok() const { return std::holds_alternative<Report>(value); }
  const Report* report() const { return std::get_if<Report>(&value); }
  const std::string* failure() const { return std::get_if<std::string>(&value); }
};

struct SpecialistReports {
  SpecialistSlot<VideoReport> video;
  SpecialistSlot<GuidanceReport> guidance;
  SpecialistSlot<CodeReport> code;
};

/// Issues the three calls concurrently; a failure never aborts its siblings.
SpecialistReports run_specialists(ModelGateway& gateway, const TurnContext& ctx);

enum class FormatFinding {
  too_few_sentences,
  too_many_sentences,
  header_markup,
  list_markup,
  missing_next_action,
};

std::string_view to_string(FormatFinding f);

/// Sentences: text up to '.', '!' or '?' followed by whitespace or the end;
/// an unterminated tail counts as one more.
std::vector<std::string> split_sentences(std::string_view text);

/// Soft checks; findings are attached to the response, never blocking.
std::vector<FormatFinding> validate_response_format(std::string_view text);

/// Shown when the synthesizer cannot produce a reply.
inline constexpr std::string_view kSynthesisFallback =
    "I could not put together an answer just now. Please send your question again.";

struct SynthesizedResponse {
  std::string text;
  std::vector<FormatFinding> format_findings;
  TurnTiming timing;
  bool fallback = false;
  std::string checkpoint_id;
  /// Specialist slots that failed ("video", "guidance", "code").
  std::vector<std::string> failed_specialists;
};

Json to_json(const SynthesizedResponse& r);

/// Bindings for the synthesizer; missing reports become an explicit
/// unavailable block.
Bindings synthesizer_bindings(const SpecialistReports& reports, const TurnContext& ctx);

/// Runs the synthesizer. Throws on gateway failure; the orchestrator turns
/// that into the fallback.
std::string synthesize_text(ModelGateway& gateway, const SpecialistReports& reports,
                            const TurnContext& ctx);

class TeachingOrchestrator {
 public:
  TeachingOrchestrator(const LessonCatalog& lessons, SessionStore& sessions, SessionLocks& locks,
                       ModelGateway& gateway, EventSink& events);

  /// load -> context -> specialists -> synthesize -> persist -> emit.
  /// Throws SessionNotFound, InvalidQuery. Student events carry `timestamp`
  /// (defaults to now); the ai event is stamped after the turn's wall time.
  SynthesizedResponse handle_chat_turn(std::string_view session_key, std::string query,
                                       std::optional<UnixMillis> timestamp = std::nullopt);

 private:
  const LessonCatalog& lessons_;
  SessionStore& sessions_;
  SessionLocks& locks_;
  ModelGateway& gateway_;
  EventSink& events_;
};

}  // namespace tutorwheel
