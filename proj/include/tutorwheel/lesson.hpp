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

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tutorwheel/domain.hpp"

namespace tutorwheel {

struct TranscriptSegment {
  double start_s = 0;
  double end_s = 0;
  std::string text;
  bool operator==(const TranscriptSegment&) const = default;
};

enum class CellKind { markdown, code };

struct Cell {
  std::string cell_id;
  CellKind kind = CellKind::code;
  bool editable = false;
  std::string initial_source;
  bool operator==(const Cell&) const = default;
};

struct TimeWindow {
  double start_s = 0;
  double end_s = 0;
  bool operator==(const TimeWindow&) const = default;
};

struct Checkpoint {
  std::string checkpoint_id;
  std::string title;
  std::vector<std::string> target_cells;
  std::string output_criteria;
  std::string approach_criteria;
  std::optional<TimeWindow> transcript_window;

  /// Both criteria blocks, as injected into the autograder prompt.
  std::string grading_instructions() const;
  bool operator==(const Checkpoint&) const = default;
};

struct ErrorCatalogEntry {
  std::string pattern;
  std::string explanation;
  bool operator==(const ErrorCatalogEntry&) const = default;
};

struct OutlineEntry {
  double start_s = 0;
  double end_s = 0;
  std::string label;
  bool operator==(const OutlineEntry&) const = default;
};

/// Agent names a lesson must carry instruction text for.
inline constexpr std::array<std::string_view, 5> kLessonAgents{
    "video", "guidance", "code", "synthesizer", "autograder"};

struct LessonContent {
  std::string lesson_id;
  std::string title;
  std::vector<std::string> objectives;
  std::vector<TranscriptSegment> transcript;
  std::vector<Cell> cells;
  std::vector<Checkpoint> checkpoints;
  std::map<std::string, std::string> agent_instructions;
  std::vector<ErrorCatalogEntry> error_catalog;
  std::vector<OutlineEntry> video_outline;
  std::string editor_language;

  const Cell* find_cell(std::string_view id) const;
  const Checkpoint* find_checkpoint(std::string_view id) const;
  bool operator==(const LessonContent&) const = default;
};

class LessonParseError : public Error {
 public:
  explicit LessonParseError(std::string location)
      : Error("lesson parse error at " + location), location_(std::move(location)) {}
  const std::string& location() const { return location_; }

 private:
  std::string location_;
};

class LessonValidationError : public Error {
 public:
  explicit LessonValidationError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

class UnknownCheckpoint : public Error {
 public:
  explicit UnknownCheckpoint(const std::string& id)
      : Error("unknown checkpoint: " + id) {}
};

/// Every invariant violation of a lesson bundle; empty when valid.
std::vector<std::string> lesson_problems(const LessonContent& lesson);

/// Parses and fully validates one bundle. `origin` names the source in
/// error messages.
LessonContent parse_lesson(std::string_view text, std::string_view origin = "<memory>");
LessonContent load_lesson(const std::filesystem::path& path);

Json to_json(const LessonContent& lesson);

/// Transcript segments intersecting the checkpoint's declared window, or the
/// whole transcript when the checkpoint declares none.
std::vector<TranscriptSegment> transcript_window(const LessonContent& lesson,
                                                 std::string_view checkpoint_id);

/// Lessons loaded once and shared read-only afterwards.
class LessonCatalog {
 public:
  LessonCatalog() = default;
  explicit LessonCatalog(std::vector<LessonContent> lessons);

  /// Loads every *.json file in `dir`. Any invalid bundle fails the load.
  static LessonCatalog load_directory(const std::filesystem::path& dir);

  const LessonContent* find(std::string_view lesson_id) const;
  std::vector<std::string> ids() const;
  std::size_t size() const { return lessons_.size(); }

 private:
  std::map<std::string, std::shared_ptr<const LessonContent>, std::less<>> lessons_;
};

}  // namespace tutorwheel
