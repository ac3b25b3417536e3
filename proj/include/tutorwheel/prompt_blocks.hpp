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

#include <string_view>

// Fixed instruction blocks embedded in the default agent templates. Tests
// assert on these strings, so keep them byte-stable.
namespace tutorwheel::prompt_blocks {

inline constexpr std::string_view kEnvironmentConstraint =
    "ENVIRONMENT: The student works in a browser notebook, not a local IDE. "
    "They cannot open a terminal, cannot install packages with pip, and "
    "cannot use a debugger. Never suggest any of these; every action you "
    "suggest must be doable by editing and running notebook cells.";

inline constexpr std::string_view kPriorityHierarchy =
    "PRIORITY: Address specific code errors first, conceptual gaps second, "
    "and video references third. A broken cell outranks a conceptual "
    "refinement.";

inline constexpr std::string_view kFormatConstraint =
    "FORMAT: Reply in one to four sentences of plain prose. No bullet points, "
    "no numbered lists, no headers. Mention cell ids inline when you talk "
    "about code. End with exactly one concrete next action, such as running "
    "a cell or changing one expression.";

inline constexpr std::string_view kSolutionWithholding =
    "SOLUTIONS: Never write a complete solution. Confirm what the student "
    "got right, pinpoint what is wrong, and suggest the next step.";

inline constexpr std::string_view kProseRule =
    "STYLE: Talk the way a colleague would across a desk, in plain "
    "paragraphs. You are not a report generator: no bullet lists, no "
    "markdown headers, no numbered recommendations.";

inline constexpr std::string_view kCrossModalRule =
    "CROSS-REFERENCE: Tie the data types together when you tell a story. A "
    "student who skipped most of the video and then struggled in the coding "
    "exercise is one story, not two observations. Use the lesson metadata to "
    "explain what a video timestamp or a checkpoint actually covers.";

inline constexpr std::string_view kNoSpeculationRule =
    "LIMITS: You only know what is in the activity context below. If it does "
    "not contain what the instructor asked about, say that you cannot "
    "determine it from the recorded activity instead of speculating. You "
    "cannot run queries, compute new statistics, or look up who a pseudonym "
    "belongs to.";

/// Sentence the feedback fixtures key on when a lesson has no data.
inline constexpr std::string_view kCannotDetermine =
    "cannot determine that from the recorded activity";

}  // namespace tutorwheel::prompt_blocks
