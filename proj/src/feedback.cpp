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

#include "tutorwheel/feedback.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <random>

namespace tutorwheel {

std::map<std::size_t, std::vector<std::string>> outline_coverage(const LessonContent& lesson) {
  std::map<std::size_t, std::vector<std::string>> coverage;
  for (std::size_t i = 0; i < lesson.video_outline.size(); ++i) {
    const auto& seg = lesson.video_outline[i];
    auto& ids = coverage[i];
    for (const auto& cp : lesson.checkpoints) {
      if (cp.transcript_window && cp.transcript_window->start_s < seg.end_s &&
          cp.transcript_window->end_s > seg.start_s) {
        ids.push_back(cp.checkpoint_id);
      }
    }
  }
  return coverage;
}

std::string render_metadata(const LessonContent* lesson) {
  if (lesson == nullptr) return "LESSON METADATA\n(no lesson bundle is loaded for this lesson)\n";
  std::string out = "LESSON METADATA\n";
  out += fmt::format("Lesson {}: {}\n", lesson->lesson_id, lesson->title);
  out += "Objectives:\n";
  for (const auto& o : lesson->objectives) out += fmt::format("  {}\n", o);

  std::map<std::string, std::vector<std::string>> checkpoints_by_cell;
  for (const auto& cp : lesson->checkpoints) {
    for (const auto& c : cp.target_cells) checkpoints_by_cell[c].push_back(cp.checkpoint_id);
  }
  out += "Cells:\n";
  for (const auto& cell : lesson->cells) {
    std::string line = fmt::format("  {} ({}", cell.cell_id,
                                   cell.kind == CellKind::code ? "code" : "markdown");
    if (cell.editable) line += ", editable";
    if (const auto it = checkpoints_by_cell.find(cell.cell_id); it != checkpoints_by_cell.end()) {
      line += fmt::format(", graded by {}", fmt::join(it->second, " and "));
    }
    out += line + ")\n";
  }
  out += "Checkpoints:\n";
  for (const auto& cp : lesson->checkpoints) {
    out += fmt::format("  {} \"{}\": target cells {}", cp.checkpoint_id, cp.title,
                       fmt::join(cp.target_cells, ", "));
    if (cp.transcript_window) {
      out += fmt::format("; covers video {} to {}", format_clock(cp.transcript_window->start_s),
                         format_clock(cp.transcript_window->end_s));
    }
    out += "\n";
  }
  out += "Video outline:\n";
  const auto coverage = outline_coverage(*lesson);
  for (std::size_t i = 0; i < lesson->video_outline.size(); ++i) {
    const auto& seg = lesson->video_outline[i];
    const auto& ids = coverage.at(i);
    out += fmt::format("  {} to {} {} (checkpoint coverage: {})\n", format_clock(seg.start_s),
                       format_clock(seg.end_s), seg.label,
                       ids.empty() ? std::string("none") : fmt::format("{}", fmt::join(ids, ", ")));
  }
  return out;
}

std::string render_summary(const SummaryBlock& summary) {
  std::string out = "SUMMARY\n";
  out += fmt::format("Lesson: {}\n", summary.lesson_id);
  out += fmt::format("Total students: {}\n", summary.total_students);
  out += fmt::format("Total sessions: {}\n", summary.total_sessions);
  out += fmt::format("Total events: {}\n", summary.total_events());
  for (const auto c : kAllCategories) {
    out += fmt::format("  {}: {}\n", to_string(c), summary.count(c));
  }
  out += fmt::format("Code executions succeeded: {} of {}\n", summary.code_execution_succeeded,
                     summary.count(EventCategory::code_execution));
  return out;
}

namespace {

struct NarrativeLine {
  UnixMillis timestamp = 0;
  std::size_t seq = 0;
  std::string pseudonym;
  std::string text;
};

std::vector<NarrativeLine> narrative_lines(const LessonStreams& streams) {
  std::vector<NarrativeLine> lines;
  const auto add = [&](UnixMillis ts, const std::string& p, std::string text) {
    lines.push_back({ts, lines.size(), p, std::move(text)});
  };
  for (const auto& [p, entries] : streams.sessions) {
    for (const auto& [ts, action] : entries) add(ts, p, "session " + action);
  }
  for (const auto& [p, entries] : streams.video) {
    for (const auto& v : entries) {
      if (v.action == "seek") {
        add(v.timestamp, p,
            fmt::format("video seek {} -> {}", format_clock(v.seek_from_s.value_or(v.position_s)),
                        format_clock(v.seek_to_s.value_or(v.position_s))));
      } else {
        add(v.timestamp, p, fmt::format("video {} at {}", v.action, format_clock(v.position_s)));
      }
    }
  }
  for (const auto& [p, entries] : streams.chat) {
    for (const auto& c : entries) add(c.timestamp, p, fmt::format("chat {}: \"{}\"", c.sender, c.text));
  }
  for (const auto& [p, entries] : streams.code) {
    for (const auto& c : entries) {
      switch (c.kind) {
        case CodeEntry::Kind::execution:
          add(c.timestamp, p,
              c.passed.value_or(false)
                  ? fmt::format("code run {}: ok", c.cell_id)
                  : fmt::format("code run {}: error: {}", c.cell_id,
                                c.error_message.empty() ? "(no message)" : c.error_message));
          break;
        case CodeEntry::Kind::edit:
          add(c.timestamp, p, fmt::format("code edit {}", c.cell_id));
          break;
        case CodeEntry::Kind::checkpoint:
          add(c.timestamp, p,
              fmt::format("checkpoint {} (cells {}): {}. Grader reasoning: {}", c.checkpoint_id,
                          c.cell_id, c.passed.value_or(false) ? "PASSED" : "FAILED", c.reasoning));
          break;
      }
    }
  }
  for (const auto& [p, entries] : streams.errors) {
    for (const auto& [ts, message] : entries) add(ts, p, "system error " + message);
  }
  std::sort(lines.begin(), lines.end(), [](const auto& a, const auto& b) {
    return std::tie(a.timestamp, a.seq) < std::tie(b.timestamp, b.seq);
  });
  return lines;
}

// Per-student closing note on where video playback stopped.
std::map<std::string, std::string> video_endings(const LessonStreams& streams) {
  std::map<std::string, std::string> out;
  for (const auto& [p, entries] : streams.video) {
    if (entries.empty()) continue;
    const auto& last = entries.back();
    const double position = last.action == "seek" ? last.seek_to_s.value_or(last.position_s)
                                                  : last.position_s;
    out[p] = fmt::format("last video activity: {} at {}, no later playback recorded", last.action,
                         format_clock(position));
  }
  return out;
}

std::string render_narrative(const std::vector<NarrativeLine>& lines, std::size_t first_kept,
                             const std::map<std::string, std::string>& endings) {
  std::map<std::string, std::vector<const NarrativeLine*>> by_student;
  for (std::size_t i = first_kept; i < lines.size(); ++i) {
    by_student[lines[i].pseudonym].push_back(&lines[i]);
  }
  for (const auto& [p, note] : endings) by_student[p];
  std::string out = "STUDENT ACTIVITY\n";
  for (const auto& [p, entries] : by_student) {
    out += fmt::format("\n=== Student {} ===\n", p);
    for (const auto* line : entries) {
      out += fmt::format("[{}] {}\n", format_timestamp(line->timestamp), line->text);
    }
    if (const auto it = endings.find(p); it != endings.end()) out += fmt::format("({})\n", it->second);
  }
  if (first_kept > 0) {
    out += fmt::format("\n[{} older events were omitted to fit the context budget.]\n", first_kept);
  }
  return out;
}

std::string join_document(const ContextDocument& d) {
  return d.summary_section + "\n" + d.metadata_section + "\n" + d.narrative_section;
}

}  // namespace

ContextDocument assemble_context(EventStore& store, std::string_view lesson_id,
                                 const LessonContent* lesson, std::size_t budget) {
  auto [streams, summary] = query_lesson(store, lesson_id);
  ContextDocument doc;
  doc.lesson_id = std::string(lesson_id);
  doc.summary = summary;
  doc.assembly_timestamp = now_millis();
  doc.summary_section = render_summary(summary);
  doc.metadata_section = render_metadata(lesson);

  if (summary.total_events() == 0) {
    doc.narrative_section = "STUDENT ACTIVITY\n" + std::string(kNoActivityNotice) + "\n";
    doc.assembled_text = join_document(doc);
    return doc;
  }

  const auto lines = narrative_lines(streams);
  const auto endings = video_endings(streams);
  const auto fits = [&](std::size_t first_kept) {
    ContextDocument probe = doc;
    probe.narrative_section = render_narrative(lines, first_kept, endings);
    return join_document(probe).size() <= budget;
  };
  // Smallest number of oldest lines to drop. Size is monotone in it from one
  // onward; zero is checked alone since it renders no omission notice.
  std::size_t lo = fits(0) ? 0 : 1;
  std::size_t hi = lo == 0 ? 0 : lines.size();
  while (lo < hi) {
    const auto mid = lo + (hi - lo) / 2;
    if (fits(mid)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  doc.dropped_events = lo;
  doc.narrative_section = render_narrative(lines, lo, endings);
  doc.assembled_text = join_document(doc);
  if (doc.assembled_text.size() > budget) {
    doc.assembled_text = utf8_prefix(doc.assembled_text, budget);
    while (doc.assembled_text.size() > budget) doc.assembled_text.pop_back();
  }
  return doc;
}

// ---------------------------------------------------------------------------

Json to_json(const Conversation& c) {
  Json turns = Json::array();
  for (const auto& t : c.turns) turns.push_back({{"question", t.question}, {"answer", t.answer}});
  return {{"conversation_id", c.conversation_id},
          {"lesson_id", c.lesson_id},
          {"context_document", c.context_document},
          {"assembly_timestamp", format_timestamp(c.assembly_timestamp)},
          {"turns", turns}};
}

Conversation conversation_from_json(const Json& j) {
  Conversation c;
  c.conversation_id = j.at("conversation_id").get<std::string>();
  c.lesson_id = j.at("lesson_id").get<std::string>();
  c.context_document = j.at("context_document").get<std::string>();
  c.assembly_timestamp =
      parse_timestamp(j.at("assembly_timestamp").get<std::string>()).value_or(0);
  for (const auto& t : j.at("turns")) {
    c.turns.push_back({t.at("question").get<std::string>(), t.at("answer").get<std::string>()});
  }
  return c;
}

std::optional<Conversation> InMemoryConversationStore::load(std::string_view id) {
  std::lock_guard lock(mutex_);
  const auto it = conversations_.find(id);
  if (it == conversations_.end()) return std::nullopt;
  return it->second;
}

void InMemoryConversationStore::save(const Conversation& conversation) {
  std::lock_guard lock(mutex_);
  conversations_.insert_or_assign(conversation.conversation_id, conversation);
}

std::optional<Conversation> SqliteConversationStore::load(std::string_view id) {
  auto doc = db_->get("conversations", id);
  if (!doc) return std::nullopt;
  return conversation_from_json(Json::parse(*doc));
}

void SqliteConversationStore::save(const Conversation& conversation) {
  db_->put("conversations", conversation.conversation_id, to_json(conversation).dump());
}

// ---------------------------------------------------------------------------

namespace {

std::string new_conversation_id() {
  static std::mutex mutex;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mutex);
  return fmt::format("conv-{:016x}", rng());
}

std::string render_history(const std::vector<ConversationTurn>& turns) {
  if (turns.empty()) return "(this is the first question)";
  std::string out;
  for (const auto& t : turns) out += fmt::format("Instructor: {}\nYou: {}\n\n", t.question, t.answer);
  return out;
}

}  // namespace

FeedbackService::FeedbackService(EventStore& store, const LessonCatalog& lessons,
                                 ConversationStore& conversations, ModelGateway& gateway,
                                 std::size_t budget)
    : store_(store),
      lessons_(lessons),
      conversations_(conversations),
      gateway_(gateway),
      budget_(budget) {}

FeedbackAnswer FeedbackService::ask(std::optional<std::string> conversation_id,
                                    std::string_view lesson_id, std::string question) {
  if (trim(question).empty()) throw InvalidQuestion();

  Conversation conversation;
  std::unique_lock<std::mutex> lock;
  FeedbackAnswer answer;
  if (conversation_id) {
    lock = locks_.acquire(*conversation_id);
    auto loaded = conversations_.load(*conversation_id);
    if (!loaded || loaded->lesson_id != lesson_id) throw ConversationNotFound(*conversation_id);
    conversation = std::move(*loaded);
  } else {
    const auto doc = assemble_context(store_, lesson_id, lessons_.find(lesson_id), budget_);
    conversation.conversation_id = new_conversation_id();
    conversation.lesson_id = std::string(lesson_id);
    conversation.context_document = doc.assembled_text;
    conversation.assembly_timestamp = doc.assembly_timestamp;
    lock = locks_.acquire(conversation.conversation_id);
    answer.new_conversation = true;
  }

  const Bindings bindings{{"context_document", conversation.context_document},
                          {"conversation_history", render_history(conversation.turns)}};
  const std::vector<ToolSpec> no_tools;
  answer.answer = trim(gateway_.invoke_text(AgentName::feedback, bindings, question, no_tools));
  answer.conversation_id = conversation.conversation_id;
  conversation.turns.push_back({std::move(question), answer.answer});
  conversations_.save(conversation);
  return answer;
}

std::vector<LessonActivity> FeedbackService::list_lessons_with_activity() {
  std::vector<LessonActivity> out;
  for (const auto& id : store_.lessons()) out.push_back({id, lesson_summary(store_, id)});
  return out;
}

}  // namespace tutorwheel
