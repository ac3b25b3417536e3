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

#include "tutorwheel/lesson.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace tutorwheel {

std::string Checkpoint::grading_instructions() const {
  return fmt::format(
      "Output criteria: {}\nApproach criteria: {}\nA submission passes only if "
      "it meets both the output criteria and the approach criteria.",
      output_criteria, approach_criteria);
}

const Cell* LessonContent::find_cell(std::string_view id) const {
  for (const auto& c : cells) {
    if (c.cell_id == id) return &c;
  }
  return nullptr;
}

const Checkpoint* LessonContent::find_checkpoint(std::string_view id) const {
  for (const auto& c : checkpoints) {
    if (c.checkpoint_id == id) return &c;
  }
  return nullptr;
}

LessonValidationError::LessonValidationError(std::vector<std::string> problems)
    : Error([&] {
        std::string msg = "lesson failed validation:";
        for (const auto& p : problems) msg += "\n  " + p;
        return msg;
      }()),
      problems_(std::move(problems)) {}

std::vector<std::string> lesson_problems(const LessonContent& lesson) {
  std::vector<std::string> problems;
  auto add = [&](std::string p) { problems.push_back(std::move(p)); };

  if (!is_slug(lesson.lesson_id)) {
    add(fmt::format("lesson_id '{}' is not a URL-safe slug without '_'", lesson.lesson_id));
  }
  if (trim(lesson.title).empty()) add("title is empty");
  if (trim(lesson.editor_language).empty()) add("editor_language is empty");

  for (std::size_t i = 0; i < lesson.transcript.size(); ++i) {
    const auto& seg = lesson.transcript[i];
    if (!(seg.start_s >= 0 && seg.start_s < seg.end_s)) {
      add(fmt::format("transcript[{}] has invalid bounds [{}, {}]", i, seg.start_s, seg.end_s));
    }
    if (i > 0) {
      const auto& prev = lesson.transcript[i - 1];
      if (seg.start_s < prev.start_s) {
        add(fmt::format("transcript[{}] is not sorted by start time", i));
      } else if (seg.start_s < prev.end_s) {
        add(fmt::format("transcript[{}] [{}, {}] overlaps transcript[{}] [{}, {}]", i,
                        seg.start_s, seg.end_s, i - 1, prev.start_s, prev.end_s));
      }
    }
  }

  std::set<std::string> cell_ids;
  for (const auto& cell : lesson.cells) {
    if (cell.cell_id.empty()) add("cell with empty cell_id");
    if (!cell_ids.insert(cell.cell_id).second) {
      add(fmt::format("duplicate cell id '{}'", cell.cell_id));
    }
    if (cell.kind == CellKind::markdown && cell.editable) {
      add(fmt::format("markdown cell '{}' is marked editable", cell.cell_id));
    }
  }

  std::set<std::string> checkpoint_ids;
  for (const auto& cp : lesson.checkpoints) {
    if (!checkpoint_ids.insert(cp.checkpoint_id).second) {
      add(fmt::format("duplicate checkpoint id '{}'", cp.checkpoint_id));
    }
    if (cp.target_cells.empty()) {
      add(fmt::format("checkpoint '{}' has no target cells", cp.checkpoint_id));
    }
    for (const auto& target : cp.target_cells) {
      const Cell* cell = lesson.find_cell(target);
      if (cell == nullptr) {
        add(fmt::format("checkpoint '{}' references unknown cell '{}'", cp.checkpoint_id, target));
      } else if (cell->kind != CellKind::code || !cell->editable) {
        add(fmt::format("checkpoint '{}' targets non-editable or markdown cell '{}'",
                        cp.checkpoint_id, target));
      }
    }
    if (trim(cp.output_criteria).empty() || trim(cp.approach_criteria).empty()) {
      add(fmt::format("checkpoint '{}' must state both output and approach criteria",
                      cp.checkpoint_id));
    }
    if (cp.transcript_window &&
        !(cp.transcript_window->start_s >= 0 &&
          cp.transcript_window->start_s < cp.transcript_window->end_s)) {
      add(fmt::format("checkpoint '{}' has an invalid transcript window", cp.checkpoint_id));
    }
  }

  for (auto agent : kLessonAgents) {
    const auto it = lesson.agent_instructions.find(std::string(agent));
    if (it == lesson.agent_instructions.end() || trim(it->second).empty()) {
      add(fmt::format("agent_instructions missing entry for '{}'", agent));
    }
  }

  for (std::size_t i = 0; i < lesson.video_outline.size(); ++i) {
    const auto& o = lesson.video_outline[i];
    if (!(o.start_s >= 0 && o.start_s < o.end_s)) {
      add(fmt::format("video_outline[{}] has invalid bounds", i));
    }
  }
  return problems;
}

namespace {

// Reads a required member and reports the JSON pointer on any mismatch.
template <class T>
T member(const Json& obj, const std::string& key, const std::string& path) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw LessonParseError(path + "/" + key + " (missing)");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw LessonParseError(path + "/" + key + " (wrong type)");
  }
}

template <class T>
T optional_member(const Json& obj, const std::string& key, const std::string& path, T fallback) {
  if (!obj.contains(key)) return fallback;
  return member<T>(obj, key, path);
}

const Json& array_member(const Json& obj, const std::string& key, const std::string& path) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw LessonParseError(path + "/" + key + " (missing)");
  if (!it->is_array()) throw LessonParseError(path + "/" + key + " (expected array)");
  return *it;
}

std::optional<TimeWindow> window_from(const Json& obj, const std::string& path) {
  if (!obj.contains("transcript_window")) return std::nullopt;
  const auto& w = obj.at("transcript_window");
  if (!w.is_object()) throw LessonParseError(path + "/transcript_window (expected object)");
  return TimeWindow{member<double>(w, "start_s", path + "/transcript_window"),
                    member<double>(w, "end_s", path + "/transcript_window")};
}

LessonContent from_json(const Json& j) {
  if (!j.is_object()) throw LessonParseError("/ (expected object)");
  LessonContent l;
  l.lesson_id = member<std::string>(j, "lesson_id", "");
  l.title = member<std::string>(j, "title", "");
  l.editor_language = member<std::string>(j, "editor_language", "");
  l.objectives = optional_member<std::vector<std::string>>(j, "objectives", "", {});

  const auto& transcript = array_member(j, "transcript", "");
  for (std::size_t i = 0; i < transcript.size(); ++i) {
    const auto path = fmt::format("/transcript/{}", i);
    l.transcript.push_back({member<double>(transcript[i], "start_s", path),
                            member<double>(transcript[i], "end_s", path),
                            member<std::string>(transcript[i], "text", path)});
  }

  const auto& cells = array_member(j, "cells", "");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto path = fmt::format("/cells/{}", i);
    const auto kind = member<std::string>(cells[i], "kind", path);
    if (kind != "markdown" && kind != "code") {
      throw LessonParseError(path + "/kind (expected markdown|code)");
    }
    l.cells.push_back({member<std::string>(cells[i], "cell_id", path),
                       kind == "code" ? CellKind::code : CellKind::markdown,
                       optional_member<bool>(cells[i], "editable", path, false),
                       optional_member<std::string>(cells[i], "source", path, "")});
  }

  const auto& checkpoints = array_member(j, "checkpoints", "");
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    const auto path = fmt::format("/checkpoints/{}", i);
    const auto& cp = checkpoints[i];
    const auto grading_it = cp.find("grading");
    if (grading_it == cp.end() || !grading_it->is_object()) {
      throw LessonParseError(path + "/grading (missing or not an object)");
    }
    l.checkpoints.push_back(
        {member<std::string>(cp, "checkpoint_id", path), member<std::string>(cp, "title", path),
         member<std::vector<std::string>>(cp, "target_cells", path),
         member<std::string>(*grading_it, "output_criteria", path + "/grading"),
         member<std::string>(*grading_it, "approach_criteria", path + "/grading"),
         window_from(cp, path)});
  }

  l.agent_instructions =
      member<std::map<std::string, std::string>>(j, "agent_instructions", "");

  if (j.contains("error_catalog")) {
    const auto& catalog = array_member(j, "error_catalog", "");
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      const auto path = fmt::format("/error_catalog/{}", i);
      l.error_catalog.push_back({member<std::string>(catalog[i], "pattern", path),
                                 member<std::string>(catalog[i], "explanation", path)});
    }
  }
  if (j.contains("video_outline")) {
    const auto& outline = array_member(j, "video_outline", "");
    for (std::size_t i = 0; i < outline.size(); ++i) {
      const auto path = fmt::format("/video_outline/{}", i);
      l.video_outline.push_back({member<double>(outline[i], "start_s", path),
                                 member<double>(outline[i], "end_s", path),
                                 member<std::string>(outline[i], "label", path)});
    }
  }
  return l;
}

}  // namespace

LessonContent parse_lesson(std::string_view text, std::string_view origin) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw LessonParseError(fmt::format("{} byte {}", origin, e.byte));
  }
  LessonContent lesson = from_json(j);
  auto problems = lesson_problems(lesson);
  if (!problems.empty()) throw LessonValidationError(std::move(problems));
  return lesson;
}

LessonContent load_lesson(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LessonParseError(path.string() + " (unreadable)");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_lesson(buf.str(), path.string());
}

Json to_json(const LessonContent& l) {
  Json transcript = Json::array();
  for (const auto& s : l.transcript) {
    transcript.push_back({{"start_s", s.start_s}, {"end_s", s.end_s}, {"text", s.text}});
  }
  Json cells = Json::array();
  for (const auto& c : l.cells) {
    cells.push_back({{"cell_id", c.cell_id},
                     {"kind", c.kind == CellKind::code ? "code" : "markdown"},
                     {"editable", c.editable},
                     {"source", c.initial_source}});
  }
  Json checkpoints = Json::array();
  for (const auto& cp : l.checkpoints) {
    Json j{{"checkpoint_id", cp.checkpoint_id},
           {"title", cp.title},
           {"target_cells", cp.target_cells},
           {"grading",
            {{"output_criteria", cp.output_criteria},
             {"approach_criteria", cp.approach_criteria}}}};
    if (cp.transcript_window) {
      j["transcript_window"] = {{"start_s", cp.transcript_window->start_s},
                                {"end_s", cp.transcript_window->end_s}};
    }
    checkpoints.push_back(std::move(j));
  }
  Json catalog = Json::array();
  for (const auto& e : l.error_catalog) {
    catalog.push_back({{"pattern", e.pattern}, {"explanation", e.explanation}});
  }
  Json outline = Json::array();
  for (const auto& o : l.video_outline) {
    outline.push_back({{"start_s", o.start_s}, {"end_s", o.end_s}, {"label", o.label}});
  }
  return Json{{"lesson_id", l.lesson_id},           {"title", l.title},
              {"objectives", l.objectives},         {"editor_language", l.editor_language},
              {"transcript", transcript},           {"cells", cells},
              {"checkpoints", checkpoints},         {"agent_instructions", l.agent_instructions},
              {"error_catalog", catalog},           {"video_outline", outline}};
}

std::vector<TranscriptSegment> transcript_window(const LessonContent& lesson,
                                                 std::string_view checkpoint_id) {
  const Checkpoint* cp = lesson.find_checkpoint(checkpoint_id);
  if (cp == nullptr) throw UnknownCheckpoint(std::string(checkpoint_id));
  if (!cp->transcript_window) return lesson.transcript;
  const auto [lo, hi] = *cp->transcript_window;
  std::vector<TranscriptSegment> out;
  std::copy_if(lesson.transcript.begin(), lesson.transcript.end(), std::back_inserter(out),
               [&](const TranscriptSegment& s) { return s.start_s < hi && s.end_s > lo; });
  return out;
}

LessonCatalog::LessonCatalog(std::vector<LessonContent> lessons) {
  for (auto& l : lessons) {
    auto id = l.lesson_id;
    lessons_.emplace(std::move(id), std::make_shared<const LessonContent>(std::move(l)));
  }
}

LessonCatalog LessonCatalog::load_directory(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<LessonContent> lessons;
  for (const auto& f : files) lessons.push_back(load_lesson(f));
  return LessonCatalog(std::move(lessons));
}

const LessonContent* LessonCatalog::find(std::string_view lesson_id) const {
  const auto it = lessons_.find(lesson_id);
  return it == lessons_.end() ? nullptr : it->second.get();
}

std::vector<std::string> LessonCatalog::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : lessons_) out.push_back(id);
  return out;
}

}  // namespace tutorwheel
