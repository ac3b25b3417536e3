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

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tutorwheel/event_pipeline.hpp"
#include "tutorwheel/lesson.hpp"
#include "tutorwheel/model_gateway.hpp"
#include "tutorwheel/session_store.hpp"
#include "tutorwheel/teaching.hpp"

namespace tutorwheel {

class GradingUnavailable : public Error {
 public:
  using Error::Error;
};

/// Reasoning attached to every short-circuited grade.
inline constexpr std::string_view kEmptySubmissionReasoning =
    "No code has been written in the checkpoint cells yet. Write your solution in the "
    "target cells, run them, and then check your progress again.";

struct SubmissionCell {
  std::string cell_id;
  std::string source;
  std::string initial_source;
  std::string last_output;
  std::optional<std::string> last_error;
};

/// Exactly the checkpoint's target cells, in lesson order.
struct Submission {
  std::string session_key;
  std::string checkpoint_id;
  std::vector<SubmissionCell> cells;
};

/// Throws UnknownCheckpoint.
Submission make_submission(const SessionState& session, const LessonContent& lesson,
                           std::string_view checkpoint_id);

/// True when the source holds nothing beyond blank lines and the unchanged
/// comment lines of the initial scaffold.
bool cell_is_empty(std::string_view source, std::string_view initial_source);

/// nullopt means proceed to the model; otherwise the short-circuit result.
std::optional<GradeResult> pre_grade_check(const Submission& submission);

Bindings autograder_bindings(const Submission& submission, const LessonContent& lesson);

struct GradeOutcome {
  GradeResult result;
  bool short_circuited = false;
  bool newly_completed = false;
};

class Autograder {
 public:
  Autograder(const LessonCatalog& lessons, SessionStore& sessions, SessionLocks& locks,
             ModelGateway& gateway, EventSink& events);

  /// Throws SessionNotFound, UnknownCheckpoint, GradingUnavailable. A pass
  /// adds the checkpoint to the session; nothing ever removes one.
  GradeOutcome grade(std::string_view session_key, std::string_view checkpoint_id,
                     std::optional<UnixMillis> timestamp = std::nullopt);

 private:
  const LessonCatalog& lessons_;
  SessionStore& sessions_;
  SessionLocks& locks_;
  ModelGateway& gateway_;
  EventSink& events_;
};

}  // namespace tutorwheel
