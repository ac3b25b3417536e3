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

#include "support.hpp"
#include "tutorwheel/teaching.hpp"

namespace tutorwheel {
namespace {

using testing::qis_m2;
using testing::TempDir;

const Json kGoodReports = Json::parse(R"([
  {"agent": "video", "response": {"relevant_segment": "18:00", "key_insight": "k", "coverage_gap": "none"}},
  {"agent": "guidance", "response": {"conceptual_gap": "g", "pedagogical_approach": "p", "misconception_flag": "none"}},
  {"agent": "code", "response": {"diagnosis": "d", "correct_components": "c", "next_step": "n", "alternative_approach": "none"}}
])");

Json concat(std::initializer_list<Json> parts) {
  Json out = Json::array();
  for (const auto& part : parts) {
    for (const auto& r : part) out.push_back(r);
  }
  return out;
}

std::shared_ptr<ModelBackend> backend_of(const Json& rules) { return ScriptedBackend::from_json(rules); }

const Json kSynthOk = Json::parse(
    R"([{"agent": "synthesizer", "response": "Your c1 cell builds the state correctly. Run c1 again and compare the amplitudes."}])");

// ---------------------------------------------------------------------------

TEST(TurnContextTest, ActiveCheckpointIsFirstIncomplete) {
  InMemorySessionStore store;
  auto state = store.create("amara-k17", qis_m2()).state;
  auto ctx = build_turn_context(state, qis_m2(), "help");
  EXPECT_EQ(ctx.checkpoint_id, "cp1");
  EXPECT_FALSE(ctx.lesson_complete);
  EXPECT_EQ(ctx.transcript_window, transcript_window(qis_m2(), "cp1"));

  state.completed_checkpoints = {"cp1", "cp3"};
  EXPECT_EQ(build_turn_context(state, qis_m2(), "help").checkpoint_id, "cp2");

  for (const auto& cp : qis_m2().checkpoints) state.completed_checkpoints.insert(cp.checkpoint_id);
  ctx = build_turn_context(state, qis_m2(), "help");
  EXPECT_EQ(ctx.checkpoint_id, "cp4");
  EXPECT_TRUE(ctx.lesson_complete);
  EXPECT_THROW(build_turn_context(state, qis_m2(), "  \n"), InvalidQuery);
}

TEST(TurnContextTest, CellViewsMergeSessionSourceAndOutputs) {
  InMemorySessionStore store;
  auto state = store.create("amara-k17", qis_m2()).state;
  state.cell_contents["c1"] = "x = 1";
  state.cell_contents["setup"] = "tampered";  // read-only cells keep the lesson source
  state.cell_outputs["c1"] = CellOutput{"1", std::nullopt};
  state.cell_outputs["c2"] = CellOutput{"", "NameError: y"};
  const auto views = cell_views(state, qis_m2());
  std::vector<std::string> ids;
  for (const auto& v : views) ids.push_back(v.cell_id);
  EXPECT_EQ(ids, (std::vector<std::string>{"setup", "c1", "c2", "c3", "c4"}));
  EXPECT_EQ(views[0].source, qis_m2().find_cell("setup")->initial_source);
  EXPECT_EQ(views[1].source, "x = 1");
  EXPECT_EQ(views[1].last_output, "1");
  EXPECT_EQ(views[2].last_error, "NameError: y");
  const auto text = format_cells(views);
  EXPECT_NE(text.find("[cell c2]"), std::string::npos);
  EXPECT_NE(text.find("error:\nNameError: y"), std::string::npos);
  EXPECT_NE(text.find("(not run yet)"), std::string::npos);
}

TEST(TurnContextTest, SpecialistBindingsFillTheirTemplates) {
  InMemorySessionStore store;
  const auto ctx = build_turn_context(store.create("amara-k17", qis_m2()).state, qis_m2(), "why?");
  const std::vector<std::pair<AgentName, Bindings>> cases{
      {AgentName::video, video_bindings(ctx)},
      {AgentName::guidance, guidance_bindings(ctx)},
      {AgentName::code, code_bindings(ctx)}};
  for (const auto& [agent, bindings] : cases) {
    const auto rendered = render_template(default_agent_spec(agent).instruction_template, bindings);
    EXPECT_TRUE(rendered.unused_bindings.empty()) << to_string(agent);
  }
}

// ---------------------------------------------------------------------------

TEST(Sentences, SplitOnTerminatorsFollowedBySpace) {
  EXPECT_EQ(split_sentences("One. Two!  Three? four"),
            (std::vector<std::string>{"One.", "Two!", "Three?", "four"}));
  EXPECT_EQ(split_sentences("Use np.dot(H, zero) here."),
            std::vector<std::string>{"Use np.dot(H, zero) here."});
  EXPECT_EQ(split_sentences("Wait... really?"), (std::vector<std::string>{"Wait...", "really?"}));
  EXPECT_TRUE(split_sentences("  ").empty());
}

TEST(FormatChecks, CleanProseWithActionPasses) {
  EXPECT_TRUE(validate_response_format("Your state is normalized. Run c2 again.").empty());
}

TEST(FormatChecks, SentenceBounds) {
  EXPECT_EQ(validate_response_format(""), std::vector<FormatFinding>{FormatFinding::too_few_sentences});
  EXPECT_EQ(validate_response_format("A. B. C. D. E. Run it."),
            std::vector<FormatFinding>{FormatFinding::too_many_sentences});
}

TEST(FormatChecks, MarkupFindings) {
  EXPECT_EQ(validate_response_format("## Fix\nRun c1."),
            std::vector<FormatFinding>{FormatFinding::header_markup});
  EXPECT_EQ(validate_response_format("Steps:\n- run c1\n- check output"),
            std::vector<FormatFinding>{FormatFinding::list_markup});
  EXPECT_EQ(validate_response_format("Steps:\n1. run c1"),
            std::vector<FormatFinding>{FormatFinding::list_markup});
  EXPECT_TRUE(validate_response_format("#define is C. Run c1.").empty());
}

TEST(FormatChecks, MissingNextActionOnlyOnOtherwiseCleanText) {
  EXPECT_EQ(validate_response_format("The amplitudes are fine."),
            std::vector<FormatFinding>{FormatFinding::missing_next_action});
  EXPECT_EQ(validate_response_format("- The amplitudes are fine."),
            std::vector<FormatFinding>{FormatFinding::list_markup});
}

// ---------------------------------------------------------------------------

TEST(Specialists, OneFailureLeavesSiblingsIntact) {
  ModelGateway gateway(backend_of(concat({Json::parse(R"([{"agent": "guidance", "error": "unavailable"}])"), kGoodReports})));
  InMemorySessionStore store;
  const auto ctx = build_turn_context(store.create("amara-k17", qis_m2()).state, qis_m2(), "why?");
  const auto reports = run_specialists(gateway, ctx);
  EXPECT_TRUE(reports.video.ok());
  EXPECT_FALSE(reports.guidance.ok());
  EXPECT_TRUE(reports.code.ok());
  const auto bindings = synthesizer_bindings(reports, ctx);
  EXPECT_NE(bindings.at("guidance_report").find("unavailable"), std::string::npos);
  EXPECT_NE(bindings.at("video_report").find("18:00"), std::string::npos);
}

TEST(Specialists, RunConcurrently) {
  Json delayed = kGoodReports;
  for (auto& r : delayed) r["delay_ms"] = 150;
  ModelGateway gateway(backend_of(delayed));
  InMemorySessionStore store;
  const auto ctx = build_turn_context(store.create("amara-k17", qis_m2()).state, qis_m2(), "why?");
  const auto t0 = std::chrono::steady_clock::now();
  const auto reports = run_specialists(gateway, ctx);
  const auto wall = std::chrono::steady_clock::now() - t0;
  EXPECT_TRUE(reports.video.ok() && reports.guidance.ok() && reports.code.ok());
  EXPECT_LT(wall, std::chrono::milliseconds(400));
  EXPECT_GE(reports.code.latency, std::chrono::milliseconds(150));
}

// ---------------------------------------------------------------------------

TEST(Orchestrator, TurnPersistsChatAndEmitsEvents) {
  TempDir dir;
  testing::Stack stack(dir.path(), backend_of(concat({kSynthOk, kGoodReports})));
  const auto key = stack.create("amara-k17").session_key;
  const auto r = stack.teaching.handle_chat_turn(key, "Is my state right?", 1769958000000);
  EXPECT_FALSE(r.fallback);
  EXPECT_EQ(r.checkpoint_id, "cp1");
  EXPECT_TRUE(r.format_findings.empty());
  EXPECT_TRUE(r.timing.within_bound());
  const auto state = stack.sessions.load(key);
  ASSERT_EQ(state->chat_context.size(), 2u);
  EXPECT_EQ(state->chat_context[0], (ChatTurn{"student", "Is my state right?"}));
  EXPECT_EQ(state->chat_context[1].text, r.text);
  const auto summary = lesson_summary(stack.events, "qis-m2");
  EXPECT_EQ(summary.count(EventCategory::chat_message), 2u);
  EXPECT_EQ(summary.total_events(), 2u);
}

TEST(Orchestrator, ChatContextKeepsTheLastTwentyEntries) {
  TempDir dir;
  testing::Stack stack(dir.path(), backend_of(concat({kSynthOk, kGoodReports})));
  const auto key = stack.create("amara-k17").session_key;
  for (int i = 0; i < 13; ++i) stack.teaching.handle_chat_turn(key, "q" + std::to_string(i));
  const auto chat = stack.sessions.load(key)->chat_context;
  ASSERT_EQ(chat.size(), kChatContextEntries);
  EXPECT_EQ(chat.front(), (ChatTurn{"student", "q3"}));
  EXPECT_EQ(chat[chat.size() - 2], (ChatTurn{"student", "q12"}));
}

TEST(Orchestrator, SpecialistFailureDegradesAndIsRecorded) {
  TempDir dir;
  testing::Stack stack(dir.path(), backend_of(concat({Json::parse(R"([{"agent": "video", "error": "timeout"}])"),
                                                      kSynthOk, kGoodReports})));
  std::vector<std::string> synth_prompts;
  stack.gateway.set_observer([&](const CallRecord& c) {
    if (c.agent == AgentName::synthesizer) synth_prompts.push_back(c.prompt.text());
  });
  const auto key = stack.create("amara-k17").session_key;
  const auto r = stack.teaching.handle_chat_turn(key, "Is my state right?");
  EXPECT_FALSE(r.fallback);
  EXPECT_EQ(r.failed_specialists, std::vector<std::string>{"video"});
  ASSERT_EQ(synth_prompts.size(), 1u);
  EXPECT_NE(synth_prompts[0].find("Video specialist unavailable"), std::string::npos);
  const auto streams = query_lesson_streams(stack.events, "qis-m2");
  ASSERT_EQ(streams.errors.size(), 1u);
  EXPECT_EQ(streams.errors.begin()->second.size(), 1u);
}

TEST(Orchestrator, SynthesizerFailureYieldsFallback) {
  TempDir dir;
  testing::Stack stack(dir.path(), backend_of(concat({Json::parse(R"([{"agent": "synthesizer", "error": "unavailable"}])"),
                                                      kGoodReports})));
  const auto key = stack.create("amara-k17").session_key;
  const auto r = stack.teaching.handle_chat_turn(key, "hello?");
  EXPECT_TRUE(r.fallback);
  EXPECT_EQ(r.text, kSynthesisFallback);
  EXPECT_TRUE(r.format_findings.empty());
  EXPECT_EQ(stack.sessions.load(key)->chat_context.back().text, kSynthesisFallback);
  EXPECT_EQ(lesson_summary(stack.events, "qis-m2").count(EventCategory::error), 1u);
}

TEST(Orchestrator, FormatFindingsAreAttachedNotBlocking) {
  TempDir dir;
  const auto listy = Json::parse(R"([{"agent": "synthesizer", "response": "Try this:\n- run c1\n- run c2"}])");
  testing::Stack stack(dir.path(), backend_of(concat({listy, kGoodReports})));
  const auto r = stack.teaching.handle_chat_turn(stack.create("amara-k17").session_key, "hm?");
  EXPECT_FALSE(r.fallback);
  EXPECT_EQ(r.format_findings, std::vector<FormatFinding>{FormatFinding::list_markup});
  EXPECT_EQ(to_json(r).at("format_findings"), Json::array({"ListMarkup"}));
}

TEST(Orchestrator, RejectsUnknownSessionsAndBlankQueries) {
  TempDir dir;
  testing::Stack stack(dir.path(), backend_of(concat({kSynthOk, kGoodReports})));
  EXPECT_THROW(stack.teaching.handle_chat_turn("session_nobody_qis-m2", "hi"), SessionNotFound);
  EXPECT_THROW(stack.teaching.handle_chat_turn("session_nobody_other", "hi"), SessionNotFound);
  EXPECT_THROW(stack.teaching.handle_chat_turn("garbage", "hi"), SessionNotFound);
  const auto key = stack.create("amara-k17").session_key;
  EXPECT_THROW(stack.teaching.handle_chat_turn(key, " "), InvalidQuery);
  EXPECT_EQ(stack.gateway.backend_call_count(), 0u);
}

TEST(Orchestrator, DeadEventSinkNeverBreaksTheTurn) {
  InMemorySessionStore sessions;
  SessionLocks locks;
  ModelGateway gateway(backend_of(concat({kSynthOk, kGoodReports})));
  RecordingEventSink sink;
  sink.set_failing(true);
  TeachingOrchestrator teaching(testing::lesson_catalog(), sessions, locks, gateway, sink);
  const auto key = sessions.create("amara-k17", qis_m2()).state.session_key;
  const auto r = teaching.handle_chat_turn(key, "hi?");
  EXPECT_FALSE(r.fallback);
  EXPECT_EQ(sink.failures(), 2u);
  EXPECT_EQ(sessions.load(key)->chat_context.size(), 2u);
}

}  // namespace
}  // namespace tutorwheel
