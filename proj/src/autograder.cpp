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

#include "tutorwheel/autograder.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <set>

namespace tutorwheel {

namespace {

std::vector<std::string> lines_of(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    out.push_back(trim(text.substr(pos, end - pos)));
    pos = end + 1;
  }
  return out;
}

bool is_comment(std::string_view line) { return line.starts_with("#") || line.starts_with("//"); }

}  // namespace

bool cell_is_empty(std::string_view source, std::string_view initial_source) {
  if (trim(source) == trim(initial_source)) return true;
  std::set<std::string> scaffold_comments;
  for (auto& line : lines_of(initial_source)) {
    if (is_comment(line)) scaffold_comments.insert(std::move(line));
  }
  for (const auto& line : lines_of(source)) {
    if (!line.empty() && !scaffold_comments.contains(line)) return false;
  }
  return true;
}

Submission make_submission(const SessionState& session, const LessonContent& lesson,
                           std::string_view checkpoint_id) {
  const Checkpoint* cp = lesson.find_checkpoint(checkpoint_id);
  if (cp == nullptr) throw UnknownCheckpoint(std::string(checkpoint_id));
  Submission sub{session.session_key, cp->checkpoint_id, {}};
  for (auto& view : cell_views(session, lesson, &cp->target_cells)) {
    const Cell* cell = lesson.find_cell(view.cell_id);
    sub.cells.push_back({view.cell_id, std::move(view.source), cell->initial_source,
                         std::move(view.last_output), std::move(view.last_error)});
  }
  return sub;
}

std::optional<GradeResult> pre_grade_check(const Submission& submission) {
  for (const auto& cell : submission.cells) {
    if (!cell_is_empty(cell.source, cell.initial_source)) return std::nullopt;
  }
  return GradeResult{false, std::string(kEmptySubmissionReasoning)};
}

Bindings autograder_bindings(const Submission& submission, const LessonContent& lesson) {
  const Checkpoint* cp = lesson.find_checkpoint(submission.checkpoint_id);
  if (cp == nullptr) throw UnknownCheckpoint(submission.checkpoint_id);
  std::vector<CellView> views;
  for (const auto& c : submission.cells) {
    views.push_back({c.cell_id, c.source, c.last_output, c.last_error});
  }
  const auto it = lesson.agent_instructions.find("autograder");
  return {{"lesson_instructions",
           it == lesson.agent_instructions.end() ? std::string("(none)") : it->second},
          {"checkpoint_title", cp->title},
          {"editor_language", lesson.editor_language},
          {"grading_instructions", cp->grading_instructions()},
          {"cells", format_cells(views)}};
}

// ---------------------------------------------------------------------------

Autograder::Autograder(const LessonCatalog& lessons, SessionStore& sessions, SessionLocks& locks,
                       ModelGateway& gateway, EventSink& events)
    : lessons_(lessons), sessions_(sessions), locks_(locks), gateway_(gateway), events_(events) {}

GradeOutcome Autograder::grade(std::string_view session_key, std::string_view checkpoint_id,
                               std::optional<UnixMillis> timestamp) {
  const auto parts = parse_session_key(session_key);
  if (!parts) throw SessionNotFound(std::string(session_key));
  const LessonContent* lesson = lessons_.find(parts->lesson_id);
  if (lesson == nullptr) throw SessionNotFound(std::string(session_key));
  const Checkpoint* cp = lesson->find_checkpoint(checkpoint_id);
  if (cp == nullptr) throw UnknownCheckpoint(std::string(checkpoint_id));

  const UnixMillis at = timestamp.value_or(now_millis());
  const auto emit = [&](EventCategory category, Json payload) {
    events_.emit(make_raw_event(parts->user_id, parts->lesson_id, session_key, category, at,
                                std::move(payload)));
  };

  auto lock = locks_.acquire(session_key);
  auto state = sessions_.load(session_key);
  if (!state) throw SessionNotFound(std::string(session_key));
  const Submission submission = make_submission(*state, *lesson, checkpoint_id);

  GradeOutcome outcome;
  if (auto early = pre_grade_check(submission)) {
    outcome.result = std::move(*early);
    outcome.short_circuited = true;
  } else {
    try {
      outcome.result = gateway_.invoke_structured<GradeResult>(
          AgentName::autograder, autograder_bindings(submission, *lesson),
          fmt::format("Grade the submission for checkpoint {}.", cp->checkpoint_id));
    } catch (const std::exception& ex) {
      lock.unlock();
      spdlog::warn("grading unavailable for {}: {}", cp->checkpoint_id, ex.what());
      emit(EventCategory::error, {{"source", "autograder"}, {"message", ex.what()}});
      throw GradingUnavailable("grading is unavailable right now; please try again");
    }
    if (outcome.result.passed) {
      outcome.newly_completed = state->completed_checkpoints.insert(cp->checkpoint_id).second;
      if (outcome.newly_completed) sessions_.save(session_key, *state);
    }
  }
  lock.unlock();

  std::string cells;
  for (const auto& id : cp->target_cells) cells += (cells.empty() ? "" : ",") + id;
  emit(EventCategory::checkpoint_evaluation, {{"checkpoint_id", cp->checkpoint_id},
                                              {"cell_id", cells},
                                              {"passed", outcome.result.passed},
                                              {"reasoning", outcome.result.reasoning}});
  return outcome;
}

}  // namespace tutorwheel
