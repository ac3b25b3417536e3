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

#include "tutorwheel/teaching.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cctype>
#include <future>
#include <set>

namespace tutorwheel {

namespace {

using Clock = std::chrono::steady_clock;

std::chrono::milliseconds since(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
}

std::string instruction_for(const TurnContext& ctx, const std::string& agent) {
  const auto it = ctx.instructions.find(agent);
  return it == ctx.instructions.end() ? std::string("(none)") : it->second;
}

std::string checkpoint_label(const TurnContext& ctx) {
  if (!ctx.lesson_complete) return ctx.checkpoint_title;
  return ctx.checkpoint_title + " (every checkpoint in this lesson is already complete)";
}

}  // namespace

std::vector<CellView> cell_views(const SessionState& session, const LessonContent& lesson,
                                 const std::vector<std::string>* only) {
  std::vector<CellView> out;
  for (const auto& cell : lesson.cells) {
    if (cell.kind != CellKind::code) continue;
    if (only && std::find(only->begin(), only->end(), cell.cell_id) == only->end()) continue;
    CellView view{cell.cell_id, cell.initial_source, {}, std::nullopt};
    if (cell.editable) {
      if (const auto it = session.cell_contents.find(cell.cell_id);
          it != session.cell_contents.end()) {
        view.source = it->second;
      }
    }
    if (const auto it = session.cell_outputs.find(cell.cell_id); it != session.cell_outputs.end()) {
      view.last_output = it->second.output;
      view.last_error = it->second.error;
    }
    out.push_back(std::move(view));
  }
  return out;
}

TurnContext build_turn_context(const SessionState& session, const LessonContent& lesson,
                               std::string query) {
  if (trim(query).empty()) throw InvalidQuery();
  if (lesson.checkpoints.empty()) throw Error("lesson has no checkpoints: " + lesson.lesson_id);

  TurnContext ctx;
  ctx.student_query = std::move(query);
  const Checkpoint* active = nullptr;
  for (const auto& cp : lesson.checkpoints) {
    if (!session.completed_checkpoints.contains(cp.checkpoint_id)) {
      active = &cp;
      break;
    }
  }
  if (active == nullptr) {
    active = &lesson.checkpoints.back();
    ctx.lesson_complete = true;
  }
  ctx.checkpoint_id = active->checkpoint_id;
  ctx.checkpoint_title = active->title;
  ctx.editor_language = lesson.editor_language;
  ctx.transcript_window = transcript_window(lesson, active->checkpoint_id);
  ctx.cells_with_outputs = cell_views(session, lesson);
  ctx.instructions = lesson.agent_instructions;
  ctx.error_catalog = lesson.error_catalog;
  ctx.chat_history = session.chat_context;
  return ctx;
}

std::string format_cells(const std::vector<CellView>& cells) {
  if (cells.empty()) return "(no code cells)";
  std::string out;
  for (const auto& c : cells) {
    out += fmt::format("[cell {}]\nsource:\n{}\n", c.cell_id,
                       trim(c.source).empty() ? std::string("(empty)") : c.source);
    out += fmt::format("output:\n{}\n", c.last_output.empty() ? "(not run yet)" : c.last_output);
    if (c.last_error) out += fmt::format("error:\n{}\n", *c.last_error);
    out += "\n";
  }
  return out;
}

std::string format_transcript(const std::vector<TranscriptSegment>& segments) {
  if (segments.empty()) return "(no transcript)";
  std::string out;
  for (const auto& s : segments) {
    out += fmt::format("[{}-{}] {}\n", format_clock(s.start_s), format_clock(s.end_s), s.text);
  }
  return out;
}

std::string format_chat(const std::vector<ChatTurn>& turns) {
  if (turns.empty()) return "(no earlier messages)";
  std::string out;
  for (const auto& t : turns) out += fmt::format("{}: {}\n", t.role, t.text);
  return out;
}

Bindings video_bindings(const TurnContext& ctx) {
  return {{"lesson_instructions", instruction_for(ctx, "video")},
          {"checkpoint_title", checkpoint_label(ctx)},
          {"transcript", format_transcript(ctx.transcript_window)}};
}

Bindings guidance_bindings(const TurnContext& ctx) {
  return {{"lesson_instructions", instruction_for(ctx, "guidance")},
          {"checkpoint_title", checkpoint_label(ctx)},
          {"editor_language", ctx.editor_language},
          {"chat_history", format_chat(ctx.chat_history)}};
}

Bindings code_bindings(const TurnContext& ctx) {
  std::string catalog;
  for (const auto& e : ctx.error_catalog) catalog += fmt::format("- {}: {}\n", e.pattern, e.explanation);
  if (catalog.empty()) catalog = "(none)";
  return {{"lesson_instructions", instruction_for(ctx, "code")},
          {"error_catalog", catalog},
          {"checkpoint_title", checkpoint_label(ctx)},
          {"editor_language", ctx.editor_language},
          {"cells", format_cells(ctx.cells_with_outputs)}};
}

namespace {

template <class Report>
SpecialistSlot<Report> run_slot(ModelGateway& gateway, AgentName agent, const Bindings& bindings,
                                const std::string& query) {
  const auto start = Clock::now();
  SpecialistSlot<Report> slot{std::string("not run"), {}};
  try {
    slot.value = gateway.invoke_structured<Report>(agent, bindings, query);
  } catch (const std::exception& ex) {
    slot.value = std::string(ex.what());
  }
  slot.latency = since(start);
  return slot;
}

}  // namespace

SpecialistReports run_specialists(ModelGateway& gateway, const TurnContext& ctx) {
  auto video = std::async(std::launch::async, [&, b = video_bindings(ctx)] {
    return run_slot<VideoReport>(gateway, AgentName::video, b, ctx.student_query);
  });
  auto guidance = std::async(std::launch::async, [&, b = guidance_bindings(ctx)] {
    return run_slot<GuidanceReport>(gateway, AgentName::guidance, b, ctx.student_query);
  });
  auto code = std::async(std::launch::async, [&, b = code_bindings(ctx)] {
    return run_slot<CodeReport>(gateway, AgentName::code, b, ctx.student_query);
  });
  return SpecialistReports{video.get(), guidance.get(), code.get()};
}

// ---------------------------------------------------------------------------

std::string_view to_string(FormatFinding f) {
  switch (f) {
    case FormatFinding::too_few_sentences: return "TooFewSentences";
    case FormatFinding::too_many_sentences: return "TooManySentences";
    case FormatFinding::header_markup: return "HeaderMarkup";
    case FormatFinding::list_markup: return "ListMarkup";
    case FormatFinding::missing_next_action: return "MissingNextAction";
  }
  return "?";
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    const bool boundary =
        i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]));
    if (!boundary) continue;
    auto sentence = trim(text.substr(start, i + 1 - start));
    if (!sentence.empty() && sentence.find_first_not_of(".!?") != std::string::npos) {
      out.push_back(std::move(sentence));
    }
    start = i + 1;
  }
  auto tail = trim(text.substr(std::min(start, text.size())));
  if (!tail.empty()) out.push_back(std::move(tail));
  return out;
}

namespace {

const std::set<std::string>& action_verbs() {
  static const std::set<std::string> verbs{
      "add",     "apply",  "call",    "change", "check",   "compare", "define",  "delete",
      "edit",    "execute", "fix",    "go",     "insert",  "look",    "modify",  "move",
      "multiply", "open",  "print",   "remove", "rename",  "replace", "rerun",   "re-run",
      "return",  "review", "revisit", "rewatch", "rewrite", "run",    "scroll",  "set",
      "swap",    "test",   "try",     "update", "use",     "watch",   "write"};
  return verbs;
}

bool is_header_line(std::string_view line) {
  std::size_t hashes = 0;
  while (hashes < line.size() && line[hashes] == '#') ++hashes;
  return hashes >= 1 && hashes <= 6 && hashes < line.size() && line[hashes] == ' ';
}

bool is_list_line(std::string_view line) {
  for (std::string_view bullet : {"- ", "* ", "+ ", "• "}) {
    if (line.starts_with(bullet)) return true;
  }
  std::size_t digits = 0;
  while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) ++digits;
  return digits > 0 && digits + 1 < line.size() && (line[digits] == '.' || line[digits] == ')') &&
         line[digits + 1] == ' ';
}

bool has_action_verb(std::string_view sentence) {
  std::string word;
  const auto flush = [&] {
    const bool hit = action_verbs().contains(word);
    word.clear();
    return hit;
  };
  for (const char c : sentence) {
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '-') {
      word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (flush()) {
      return true;
    }
  }
  return flush();
}

}  // namespace

std::vector<FormatFinding> validate_response_format(std::string_view text) {
  std::vector<FormatFinding> findings;
  const auto sentences = split_sentences(text);
  if (sentences.empty()) findings.push_back(FormatFinding::too_few_sentences);
  if (sentences.size() > 4) findings.push_back(FormatFinding::too_many_sentences);

  bool header = false;
  bool list = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const auto line = trim(text.substr(pos, end - pos));
    header = header || is_header_line(line);
    list = list || is_list_line(line);
    pos = end + 1;
  }
  if (header) findings.push_back(FormatFinding::header_markup);
  if (list) findings.push_back(FormatFinding::list_markup);

  // The concluding-action heuristic only runs on otherwise clean prose.
  if (findings.empty() && !has_action_verb(sentences.back())) {
    findings.push_back(FormatFinding::missing_next_action);
  }
  return findings;
}

Json to_json(const SynthesizedResponse& r) {
  Json findings = Json::array();
  for (const auto f : r.format_findings) findings.push_back(to_string(f));
  return {{"response", r.text},
          {"format_findings", findings},
          {"timing", to_json(r.timing)},
          {"fallback", r.fallback},
          {"checkpoint_id", r.checkpoint_id},
          {"failed_specialists", r.failed_specialists}};
}

Bindings synthesizer_bindings(const SpecialistReports& reports, const TurnContext& ctx) {
  const auto block = [](const auto& slot, std::string_view name) {
    if (const auto* report = slot.report()) return to_json(*report).dump(2);
    return fmt::format("[{} specialist unavailable: {}. Answer without this report.]", name,
                       *slot.failure());
  };
  return {{"lesson_instructions", instruction_for(ctx, "synthesizer")},
          {"checkpoint_title", checkpoint_label(ctx)},
          {"chat_history", format_chat(ctx.chat_history)},
          {"code_report", block(reports.code, "Code")},
          {"guidance_report", block(reports.guidance, "Guidance")},
          {"video_report", block(reports.video, "Video")}};
}

std::string synthesize_text(ModelGateway& gateway, const SpecialistReports& reports,
                            const TurnContext& ctx) {
  return trim(gateway.invoke_text(AgentName::synthesizer, synthesizer_bindings(reports, ctx),
                                  ctx.student_query));
}

// ---------------------------------------------------------------------------

TeachingOrchestrator::TeachingOrchestrator(const LessonCatalog& lessons, SessionStore& sessions,
                                           SessionLocks& locks, ModelGateway& gateway,
                                           EventSink& events)
    : lessons_(lessons), sessions_(sessions), locks_(locks), gateway_(gateway), events_(events) {}

SynthesizedResponse TeachingOrchestrator::handle_chat_turn(std::string_view session_key,
                                                           std::string query,
                                                           std::optional<UnixMillis> timestamp) {
  if (trim(query).empty()) throw InvalidQuery();
  const auto parts = parse_session_key(session_key);
  if (!parts) throw SessionNotFound(std::string(session_key));
  const LessonContent* lesson = lessons_.find(parts->lesson_id);
  if (lesson == nullptr) throw SessionNotFound(std::string(session_key));

  const UnixMillis started_at = timestamp.value_or(now_millis());
  const auto emit = [&](EventCategory category, UnixMillis at, Json payload) {
    events_.emit(make_raw_event(parts->user_id, parts->lesson_id, session_key, category, at,
                                std::move(payload)));
  };

  auto lock = locks_.acquire(session_key);
  auto state = sessions_.load(session_key);
  if (!state) throw SessionNotFound(std::string(session_key));
  const TurnContext ctx = build_turn_context(*state, *lesson, query);

  SynthesizedResponse response;
  response.checkpoint_id = ctx.checkpoint_id;
  const auto turn_start = Clock::now();
  const SpecialistReports reports = run_specialists(gateway_, ctx);

  const auto note_failure = [&](const auto& slot, const char* name) {
    if (slot.ok()) return;
    response.failed_specialists.emplace_back(name);
    emit(EventCategory::error, started_at,
         {{"source", fmt::format("teaching.{}", name)}, {"message", *slot.failure()}});
  };
  note_failure(reports.video, "video");
  note_failure(reports.guidance, "guidance");
  note_failure(reports.code, "code");

  const auto synth_start = Clock::now();
  try {
    response.text = synthesize_text(gateway_, reports, ctx);
    if (response.text.empty()) throw EmptyResponse();
  } catch (const std::exception& ex) {
    spdlog::warn("synthesis failed: {}", ex.what());
    response.text = std::string(kSynthesisFallback);
    response.fallback = true;
    emit(EventCategory::error, started_at,
         {{"source", "teaching.synthesizer"}, {"message", ex.what()}});
  }
  response.timing.l_synth = since(synth_start);
  response.timing.wall = since(turn_start);
  response.timing.l_video = reports.video.latency;
  response.timing.l_guidance = reports.guidance.latency;
  response.timing.l_code = reports.code.latency;
  response.format_findings = response.fallback ? std::vector<FormatFinding>{}
                                               : validate_response_format(response.text);
  if (!response.format_findings.empty()) {
    std::string names;
    for (const auto f : response.format_findings) names += std::string(to_string(f)) + " ";
    spdlog::info("synthesizer format findings: {}", trim(names));
  }

  auto& chat = state->chat_context;
  chat.push_back({"student", query});
  chat.push_back({"ai", response.text});
  if (chat.size() > kChatContextEntries) {
    chat.erase(chat.begin(), chat.end() - static_cast<std::ptrdiff_t>(kChatContextEntries));
  }
  sessions_.save(session_key, *state);
  lock.unlock();

  emit(EventCategory::chat_message, started_at, {{"sender", "student"}, {"text", query}});
  emit(EventCategory::chat_message, started_at + response.timing.wall.count(),
       {{"sender", "ai"}, {"text", response.text}});
  return response;
}

}  // namespace tutorwheel
