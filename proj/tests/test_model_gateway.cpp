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

#include <chrono>

#include "support.hpp"
#include "tutorwheel/model_gateway.hpp"
#include "tutorwheel/prompt_blocks.hpp"

namespace tutorwheel {
namespace {

using namespace std::chrono_literals;
using testing::SequenceBackend;

TEST(Templates, SubstitutesOncePerMarker) {
  const auto r = render_template("Hi {name}, cell {cell}; again {name}.",
                                 {{"name", "Ada"}, {"cell", "c1"}, {"spare", "x"}});
  EXPECT_EQ(r.text, "Hi Ada, cell c1; again Ada.");
  EXPECT_EQ(r.unused_bindings, std::vector<std::string>{"spare"});
}

TEST(Templates, BoundValuesAreNeverRescanned) {
  const auto r = render_template("{a}|{b}", {{"a", "{b}"}, {"b", "{{x}}"}});
  EXPECT_EQ(r.text, "{b}|{{x}}");
}

TEST(Templates, DoubledBracesAreLiterals) {
  EXPECT_EQ(render_template("{{a}} {a} }} {", {{"a", "1"}}).text, "{a} 1 } {");
  EXPECT_EQ(render_template("json: {\"k\": 1}", {}).text, "json: {\"k\": 1}");
}

TEST(Templates, UnboundPlaceholderNamesTheMarker) {
  try {
    render_template("x {present} {absent}", {{"present", "p"}});
    FAIL();
  } catch (const UnboundPlaceholder& e) {
    EXPECT_EQ(e.name(), "absent");
  }
}

TEST(Templates, PlaceholdersInFirstAppearanceOrder) {
  EXPECT_EQ(template_placeholders("{b} {a} {b} {{c}} {_d1}"),
            (std::vector<std::string>{"b", "a", "_d1"}));
}

TEST(AgentSpecs, DefaultsCarryTemperaturesAndSharedBlocks) {
  const std::map<AgentName, double> temps{{AgentName::video, 0.3},      {AgentName::guidance, 0.4},
                                          {AgentName::code, 0.2},       {AgentName::synthesizer, 0.5},
                                          {AgentName::autograder, 0.2}, {AgentName::feedback, 0.2}};
  for (const auto a : kAllAgents) {
    const auto spec = default_agent_spec(a);
    EXPECT_EQ(spec.name, a);
    EXPECT_DOUBLE_EQ(spec.temperature, temps.at(a)) << to_string(a);
    EXPECT_EQ(parse_agent(to_string(a)), a);
  }
  const auto synth = default_agent_spec(AgentName::synthesizer).instruction_template;
  for (const auto block : {prompt_blocks::kEnvironmentConstraint, prompt_blocks::kPriorityHierarchy,
                           prompt_blocks::kFormatConstraint, prompt_blocks::kSolutionWithholding}) {
    EXPECT_NE(synth.find(block), std::string::npos);
  }
  const auto feedback = default_agent_spec(AgentName::feedback).instruction_template;
  for (const auto block : {prompt_blocks::kProseRule, prompt_blocks::kCrossModalRule,
                           prompt_blocks::kNoSpeculationRule}) {
    EXPECT_NE(feedback.find(block), std::string::npos);
  }
  EXPECT_EQ(default_agent_spec(AgentName::code).output_schema, OutputSchema::code_report);
  EXPECT_FALSE(report_kind(OutputSchema::free_text));
}

// ---------------------------------------------------------------------------

BackendRequest request_for(AgentName agent, std::string user) {
  BackendRequest r;
  r.agent = agent;
  r.prompt = Prompt{"system", std::move(user)};
  return r;
}

TEST(ScriptedBackendTest, FirstMatchingRuleWins) {
  const auto backend = ScriptedBackend::from_json(Json::parse(R"([
    {"agent": "code", "contains": ["alpha", "beta"], "response": "both"},
    {"agent": "code", "contains": "alpha", "response": {"k": 1}},
    {"agent": "*", "regex": "gam+a", "response": "re"},
    {"agent": "video", "response": "video default"}
  ])"));
  EXPECT_EQ(backend->complete(request_for(AgentName::code, "beta alpha"), 1s), "both");
  EXPECT_EQ(backend->complete(request_for(AgentName::code, "alpha only"), 1s), "{\"k\":1}");
  EXPECT_EQ(backend->complete(request_for(AgentName::guidance, "gammma"), 1s), "re");
  EXPECT_EQ(backend->complete(request_for(AgentName::video, "anything"), 1s), "video default");
  EXPECT_THROW(backend->complete(request_for(AgentName::code, "nothing"), 1s), NoMatchingRule);
}

TEST(ScriptedBackendTest, RejectsMalformedRules) {
  EXPECT_THROW(ScriptedBackend::from_json(Json::object()), Error);
  EXPECT_THROW(ScriptedBackend::from_json(Json::parse(R"([{"agent": "oracle"}])")), Error);
  EXPECT_THROW(ScriptedBackend::from_json(Json::parse(R"([{"contains": []}])")), Error);
  EXPECT_THROW(ScriptedBackend::from_json(Json::parse(R"([{"error": "flaky"}])")), Error);
}

TEST(ScriptedBackendTest, InjectedFailuresAndDelays) {
  const auto backend = ScriptedBackend::from_json(Json::parse(R"([
    {"contains": "down", "error": "unavailable"},
    {"contains": "hang", "error": "timeout"},
    {"contains": "slow", "delay_ms": 80, "response": "late"},
    {"response": "ok"}
  ])"));
  EXPECT_THROW(backend->complete(request_for(AgentName::code, "down"), 1s), BackendUnavailable);
  EXPECT_THROW(backend->complete(request_for(AgentName::code, "hang"), 10ms), Timeout);
  EXPECT_THROW(backend->complete(request_for(AgentName::code, "slow"), 20ms), Timeout);
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_EQ(backend->complete(request_for(AgentName::code, "slow"), 1s), "late");
  EXPECT_GE(std::chrono::steady_clock::now() - t0, 80ms);
}

TEST(ScriptedBackendTest, ShippedFixtureRulesLoad) {
  const auto backend = make_backend(Json{{"kind", "scripted"}, {"rules", "scripted_rules.json"}},
                                    testing::kFixturesDir.string());
  EXPECT_EQ(backend->kind(), BackendKind::scripted);
  EXPECT_THROW(make_backend(Json{{"kind", "carrier-pigeon"}}), Error);
}

TEST(PromptHash, IsStableFnv1a) {
  EXPECT_EQ(prompt_hash(""), "cbf29ce484222325");
  EXPECT_EQ(prompt_hash("a"), "af63dc4c8601ec8c");
}

// ---------------------------------------------------------------------------

const std::string kGoodVideo =
    R"({"relevant_segment": "12:00", "key_insight": "k", "coverage_gap": "none"})";

TEST(Gateway, ReturnsFirstValidRecord) {
  auto backend = std::make_shared<SequenceBackend>(std::deque<std::string>{kGoodVideo});
  ModelGateway gateway(backend);
  Bindings bindings;
  for (const auto& name : template_placeholders(gateway.spec(AgentName::video).instruction_template)) {
    bindings[name] = "value of " + name;
  }
  const auto r = gateway.invoke_structured<VideoReport>(AgentName::video, bindings, "question");
  EXPECT_NE(backend->prompts().front().find("value of transcript"), std::string::npos);
  EXPECT_EQ(r.relevant_segment, "12:00");
  EXPECT_EQ(gateway.request_count(AgentName::video), 1u);
  EXPECT_EQ(gateway.backend_call_count(), 1u);
}

TEST(Gateway, RetriesWithViolationFeedbackThenFails) {
  auto backend = std::make_shared<SequenceBackend>(
      std::deque<std::string>{"not json", R"({"relevant_segment": "x"})", R"({"extra": 1})"});
  ModelGateway gateway(backend);
  std::vector<CallRecord> calls;
  gateway.set_observer([&](const CallRecord& c) { calls.push_back(c); });
  const auto spec = default_agent_spec(AgentName::video);
  try {
    gateway.complete_structured(spec, Prompt{"sys", "ask"});
    FAIL();
  } catch (const SchemaFailure& e) {
    EXPECT_EQ(e.attempts(), 3);
    EXPECT_EQ(e.violations().front(), (Violation{ViolationKind::missing_field, "relevant_segment"}));
  }
  ASSERT_EQ(calls.size(), 3u);
  EXPECT_EQ(calls[0].prompt.user, "ask");
  EXPECT_NE(calls[1].prompt.user.find("[Validation feedback]"), std::string::npos);
  EXPECT_NE(calls[1].prompt.user.find("ParseError"), std::string::npos);
  EXPECT_NE(calls[1].prompt.user.find("Attempt 2 of 3"), std::string::npos);
  EXPECT_NE(calls[2].prompt.user.find("MissingField(key_insight)"), std::string::npos);
  // Feedback replaces the previous note instead of stacking.
  EXPECT_EQ(calls[2].prompt.user.find("[Validation feedback]"),
            calls[2].prompt.user.rfind("[Validation feedback]"));
  EXPECT_EQ(calls[2].prompt.user.find("ParseError"), std::string::npos);
  EXPECT_EQ(calls[2].attempt, 3);
  EXPECT_EQ(gateway.request_count(), 1u);
  EXPECT_EQ(gateway.backend_call_count(), 3u);
}

TEST(Gateway, RecoversOnRetry) {
  auto backend = std::make_shared<SequenceBackend>(std::deque<std::string>{"{}", kGoodVideo});
  ModelGateway gateway(backend);
  EXPECT_NO_THROW(gateway.complete_structured(default_agent_spec(AgentName::video), Prompt{"s", "u"}));
  EXPECT_EQ(gateway.backend_call_count(), 2u);
}

TEST(Gateway, RetryBudgetFollowsOptions) {
  auto backend = std::make_shared<SequenceBackend>(std::deque<std::string>{"{}"});
  ModelGateway gateway(backend, GatewayOptions{0, 1s, kDefaultFieldCap});
  EXPECT_THROW(gateway.complete_structured(default_agent_spec(AgentName::video), Prompt{"s", "u"}),
               SchemaFailure);
  EXPECT_EQ(gateway.backend_call_count(), 1u);
}

TEST(Gateway, BackendErrorsPropagateWithoutRetry) {
  auto backend = ScriptedBackend::from_json(Json::parse(R"([{"error": "unavailable"}])"));
  ModelGateway gateway(backend);
  EXPECT_THROW(gateway.complete_structured(default_agent_spec(AgentName::code), Prompt{"s", "u"}),
               BackendUnavailable);
  EXPECT_EQ(gateway.backend_call_count(), 1u);
}

TEST(Gateway, FreeTextRejectsBlankReplies) {
  auto backend = std::make_shared<SequenceBackend>(std::deque<std::string>{" \n", "prose"});
  ModelGateway gateway(backend);
  const auto spec = default_agent_spec(AgentName::synthesizer);
  EXPECT_THROW(gateway.complete_text(spec, Prompt{"s", "u"}), EmptyResponse);
  EXPECT_EQ(gateway.complete_text(spec, Prompt{"s", "u"}), "prose");
  EXPECT_THROW(gateway.complete_structured(spec, Prompt{"s", "u"}), Error);
}

TEST(Gateway, RenderFillsTheSystemPrompt) {
  auto backend = std::make_shared<SequenceBackend>(std::deque<std::string>{"x"});
  ModelGateway gateway(backend);
  AgentSpec spec = default_agent_spec(AgentName::feedback);
  spec.instruction_template = "Lesson {lesson}.";
  gateway.set_spec(spec);
  const auto p = gateway.render(AgentName::feedback, {{"lesson", "qis-m2"}}, "why?");
  EXPECT_EQ(p.system, "Lesson qis-m2.");
  EXPECT_EQ(p.user, "why?");
  EXPECT_THROW(gateway.render(AgentName::feedback, {}, "why?"), UnboundPlaceholder);
}

TEST(Gateway, ObserverSeesTheToolSurface) {
  auto backend = std::make_shared<SequenceBackend>(std::deque<std::string>{"x"});
  ModelGateway gateway(backend);
  std::vector<std::size_t> tool_counts;
  gateway.set_observer([&](const CallRecord& c) { tool_counts.push_back(c.tools.size()); });
  gateway.complete_text(default_agent_spec(AgentName::feedback), Prompt{"s", "u"});
  gateway.complete_text(default_agent_spec(AgentName::feedback), Prompt{"s", "u"},
                        {ToolSpec{"lookup", "d"}});
  EXPECT_EQ(tool_counts, (std::vector<std::size_t>{0, 1}));
}

}  // namespace
}  // namespace tutorwheel
