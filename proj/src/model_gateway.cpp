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

#include "tutorwheel/model_gateway.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "tutorwheel/prompt_blocks.hpp"

namespace tutorwheel {

std::string_view to_string(AgentName a) {
  switch (a) {
    case AgentName::video: return "video";
    case AgentName::guidance: return "guidance";
    case AgentName::code: return "code";
    case AgentName::synthesizer: return "synthesizer";
    case AgentName::autograder: return "autograder";
    case AgentName::feedback: return "feedback";
  }
  return "unknown";
}

std::optional<AgentName> parse_agent(std::string_view s) {
  for (auto a : kAllAgents) {
    if (to_string(a) == s) return a;
  }
  return std::nullopt;
}

std::optional<ReportKind> report_kind(OutputSchema s) {
  switch (s) {
    case OutputSchema::video_report: return ReportKind::video;
    case OutputSchema::guidance_report: return ReportKind::guidance;
    case OutputSchema::code_report: return ReportKind::code;
    case OutputSchema::grade_result: return ReportKind::grade;
    case OutputSchema::free_text: return std::nullopt;
  }
  return std::nullopt;
}

std::string_view to_string(BackendKind k) {
  return k == BackendKind::scripted ? "scripted" : "http_provider";
}

// ---------------------------------------------------------------------------
// Default agent templates.

namespace {

const std::string kVideoTemplate = std::string(
    "You are the video specialist of a tutoring team. You reason only about "
    "the lecture video; you do not judge code or conceptual correctness.\n\n"
    "Lesson guidance:\n{lesson_instructions}\n\n"
    "Active checkpoint: {checkpoint_title}\n\n"
    "Timestamped transcript of the current lecture segment:\n{transcript}\n\n"
    "Identify the segment(s) that address the student's question, the key "
    "insight they show, and any gap where the video does not cover what the "
    "student needs. Reply with only a JSON object with exactly these string "
    "keys: relevant_segment, key_insight, coverage_gap. Use the literal "
    "string \"none\" when there is no gap.");

const std::string kGuidanceTemplate = std::string(
    "You are the guidance specialist of a tutoring team. You reason only "
    "about conceptual understanding; you do not write code.\n\n"
    "Lesson guidance:\n{lesson_instructions}\n\n"
    "Active checkpoint: {checkpoint_title}\n"
    "Editor language: {editor_language}\n\n"
    "Recent conversation:\n{chat_history}\n\n"
    "Identify what the student fundamentally misunderstands, recommend a "
    "pedagogical approach (Socratic question, analogy, or decomposition), "
    "and flag a common misconception if one applies. Reply with only a JSON "
    "object with exactly these string keys: conceptual_gap, "
    "pedagogical_approach, misconception_flag. Use the literal string "
    "\"none\" when there is no misconception to flag.");

const std::string kCodeTemplate = std::string(
    "You are the code specialist of a tutoring team. You reason only about "
    "the student's code and its outputs; you do not cite video timestamps.\n\n"
    "Debugging guidance:\n{lesson_instructions}\n\n"
    "Known errors for this lesson:\n{error_catalog}\n\n"
    "Active checkpoint: {checkpoint_title}\n"
    "Editor language: {editor_language}\n\n"
    "Notebook cells with their latest outputs:\n{cells}\n\n"
    "If code exists and fails, diagnose the error, its location (cell id and "
    "approximate line) and its cause. If code is empty or incomplete, say "
    "what the next implementation step is. Never write a complete solution. "
    "Reply with only a JSON object with exactly these string keys: "
    "diagnosis, correct_components, next_step, alternative_approach.");

const std::string kSynthesizerTemplate =
    "You write the single reply a student sees, based on reports from three "
    "specialists.\n\n" +
    std::string(prompt_blocks::kEnvironmentConstraint) + "\n\n" +
    std::string(prompt_blocks::kPriorityHierarchy) + "\n\n" +
    std::string(prompt_blocks::kFormatConstraint) + "\n\n" +
    std::string(prompt_blocks::kSolutionWithholding) +
    "\n\nLesson guidance:\n{lesson_instructions}\n\n"
    "Active checkpoint: {checkpoint_title}\n\n"
    "Recent conversation:\n{chat_history}\n\n"
    "Code specialist report:\n{code_report}\n\n"
    "Guidance specialist report:\n{guidance_report}\n\n"
    "Video specialist report:\n{video_report}\n\n"
    "The student's message follows.";

const std::string kAutograderTemplate = std::string(
    "You grade one checkpoint submission. Decide whether it passes; do not "
    "tutor.\n\n"
    "Grading guidance:\n{lesson_instructions}\n\n"
    "Checkpoint: {checkpoint_title}\n"
    "Editor language: {editor_language}\n\n"
    "Grading instructions:\n{grading_instructions}\n\n"
    "Correct output alone is not sufficient: the implementation must also "
    "meet the approach criteria. Accept any implementation that satisfies "
    "both; reject correct-output submissions that bypass the concept.\n\n"
    "Submitted cells with their latest outputs:\n{cells}\n\n"
    "Reply with only a JSON object with keys passed (boolean) and reasoning "
    "(string).");

const std::string kFeedbackTemplate =
    "You answer an instructor's questions about student activity in one "
    "lesson. Students appear only under pseudonyms.\n\n" +
    std::string(prompt_blocks::kProseRule) + "\n\n" +
    std::string(prompt_blocks::kCrossModalRule) + "\n\n" +
    std::string(prompt_blocks::kNoSpeculationRule) +
    "\n\n=== ACTIVITY CONTEXT ===\n{context_document}\n=== END CONTEXT ===\n\n"
    "Earlier in this conversation:\n{conversation_history}\n\n"
    "The instructor's question follows.";

}  // namespace

AgentSpec default_agent_spec(AgentName name) {
  switch (name) {
    case AgentName::video:
      return {name, kVideoTemplate, 0.3, OutputSchema::video_report, false};
    case AgentName::guidance:
      return {name, kGuidanceTemplate, 0.4, OutputSchema::guidance_report, false};
    case AgentName::code:
      return {name, kCodeTemplate, 0.2, OutputSchema::code_report, false};
    case AgentName::synthesizer:
      return {name, kSynthesizerTemplate, 0.5, OutputSchema::free_text, false};
    case AgentName::autograder:
      return {name, kAutograderTemplate, 0.2, OutputSchema::grade_result, false};
    case AgentName::feedback:
      return {name, kFeedbackTemplate, 0.2, OutputSchema::free_text, false};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Templates.

namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Length of a {name} marker starting at `pos`, or 0 when it is not one.
std::size_t marker_length(std::string_view t, std::size_t pos) {
  if (pos + 2 >= t.size() || t[pos] != '{' || !is_ident_start(t[pos + 1])) return 0;
  std::size_t end = pos + 2;
  while (end < t.size() && is_ident(t[end])) ++end;
  if (end >= t.size() || t[end] != '}') return 0;
  return end - pos + 1;
}

template <class OnLiteral, class OnMarker>
void scan_template(std::string_view t, OnLiteral on_literal, OnMarker on_marker) {
  std::size_t i = 0;
  while (i < t.size()) {
    if (t.compare(i, 2, "{{") == 0 || t.compare(i, 2, "}}") == 0) {
      on_literal(t[i]);
      i += 2;
      continue;
    }
    if (const auto len = marker_length(t, i); len > 0) {
      on_marker(t.substr(i + 1, len - 2));
      i += len;
      continue;
    }
    on_literal(t[i]);
    ++i;
  }
}

}  // namespace

std::vector<std::string> template_placeholders(std::string_view tmpl) {
  std::vector<std::string> names;
  scan_template(
      tmpl, [](char) {},
      [&](std::string_view name) {
        if (std::find(names.begin(), names.end(), name) == names.end()) {
          names.emplace_back(name);
        }
      });
  return names;
}

RenderedTemplate render_template(std::string_view tmpl, const Bindings& bindings) {
  RenderedTemplate out;
  out.text.reserve(tmpl.size());
  std::set<std::string, std::less<>> used;
  scan_template(
      tmpl, [&](char c) { out.text.push_back(c); },
      [&](std::string_view name) {
        const auto it = bindings.find(name);
        if (it == bindings.end()) throw UnboundPlaceholder(std::string(name));
        out.text += it->second;
        used.emplace(name);
      });
  for (const auto& [name, _] : bindings) {
    if (!used.contains(name)) out.unused_bindings.push_back(name);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Errors.

SchemaFailure::SchemaFailure(int attempts, std::vector<Violation> violations)
    : Error(fmt::format("schema validation failed after {} attempts: {}", attempts,
                        describe(violations))),
      attempts_(attempts),
      violations_(std::move(violations)) {}

NoMatchingRule::NoMatchingRule(AgentName agent, std::string hash)
    : Error(fmt::format("no scripted rule matches agent={} prompt={}", to_string(agent), hash)),
      prompt_hash_(std::move(hash)) {}

std::string prompt_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

// ---------------------------------------------------------------------------
// Scripted backend.

bool ScriptedRule::matches(AgentName a, const std::string& prompt_text) const {
  if (agent && *agent != a) return false;
  switch (match) {
    case Match::always: return true;
    case Match::contains:
      if (prompt_text.find(pattern) == std::string::npos) return false;
      return std::all_of(also_contains.begin(), also_contains.end(), [&](const std::string& p) {
        return prompt_text.find(p) != std::string::npos;
      });
    case Match::regex: {
      if (compiled_) return std::regex_search(prompt_text, *compiled_);
      return std::regex_search(prompt_text, std::regex(pattern));
    }
  }
  return false;
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptedRule> rules)
    : rules_([&] {
        for (auto& r : rules) {
          if (r.match == ScriptedRule::Match::regex) {
            r.compiled_ = std::make_shared<const std::regex>(r.pattern);
          }
        }
        return std::move(rules);
      }()) {}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json(const Json& rules) {
  if (!rules.is_array()) throw Error("scripted rules must be a JSON array");
  std::vector<ScriptedRule> out;
  for (const auto& r : rules) {
    ScriptedRule rule;
    const auto agent = r.value("agent", std::string("*"));
    if (agent != "*") {
      rule.agent = parse_agent(agent);
      if (!rule.agent) throw Error("scripted rule names unknown agent: " + agent);
    }
    if (r.contains("contains")) {
      rule.match = ScriptedRule::Match::contains;
      const auto& c = r.at("contains");
      if (c.is_array()) {
        if (c.empty()) throw Error("scripted rule has an empty 'contains' list");
        rule.pattern = c.front().get<std::string>();
        for (std::size_t i = 1; i < c.size(); ++i) rule.also_contains.push_back(c[i].get<std::string>());
      } else {
        rule.pattern = c.get<std::string>();
      }
    } else if (r.contains("regex")) {
      rule.match = ScriptedRule::Match::regex;
      rule.pattern = r.at("regex").get<std::string>();
    }
    if (r.contains("response")) {
      const auto& resp = r.at("response");
      rule.response = resp.is_string() ? resp.get<std::string>() : resp.dump();
    }
    rule.delay = std::chrono::milliseconds(r.value("delay_ms", 0));
    const auto error = r.value("error", std::string());
    if (error == "unavailable") {
      rule.failure = ScriptedRule::Failure::unavailable;
    } else if (error == "timeout") {
      rule.failure = ScriptedRule::Failure::timeout;
    } else if (!error.empty()) {
      throw Error("scripted rule has unknown error kind: " + error);
    }
    out.push_back(std::move(rule));
  }
  return std::make_shared<ScriptedBackend>(std::move(out));
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read scripted rules: " + path);
  return from_json(Json::parse(in));
}

std::string ScriptedBackend::complete(const BackendRequest& request,
                                      std::chrono::milliseconds timeout) {
  const std::string text = request.prompt.text();
  for (const auto& rule : rules_) {
    if (!rule.matches(request.agent, text)) continue;
    if (rule.failure == ScriptedRule::Failure::unavailable) {
      throw BackendUnavailable("scripted backend: agent unavailable");
    }
    if (rule.failure == ScriptedRule::Failure::timeout || rule.delay > timeout) {
      std::this_thread::sleep_for(std::min(rule.delay, timeout));
      throw Timeout(fmt::format("scripted call exceeded {} ms", timeout.count()));
    }
    std::this_thread::sleep_for(rule.delay);
    return rule.response;
  }
  throw NoMatchingRule(request.agent, prompt_hash(text));
}

// ---------------------------------------------------------------------------
// HTTP provider backend.

HttpProviderBackend::HttpProviderBackend(HttpProviderConfig config)
    : config_(std::move(config)) {}

std::string HttpProviderBackend::complete(const BackendRequest& request,
                                          std::chrono::milliseconds timeout) {
  // Split "http://host:port/path" into the client origin and the path.
  const auto scheme_end = config_.endpoint.find("://");
  const auto path_start = config_.endpoint.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string origin = config_.endpoint.substr(0, path_start);
  const std::string path =
      path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);

  httplib::Client client(origin);
  const auto secs = timeout.count() / 1000;
  const auto usecs = (timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (!config_.credentials_env.empty()) {
    if (const char* key = std::getenv(config_.credentials_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  Json body{{"model", config_.model},
            {"temperature", request.temperature},
            {"system", request.prompt.system},
            {"user", request.prompt.user},
            {"thinking", request.thinking_enabled}};
  if (request.response_schema) body["response_schema"] = *request.response_schema;
  if (!request.tools.empty()) {
    Json tools = Json::array();
    for (const auto& t : request.tools) {
      tools.push_back({{"name", t.name}, {"description", t.description}});
    }
    body["tools"] = std::move(tools);
  }

  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    if (res.error() == httplib::Error::Read || res.error() == httplib::Error::Write) {
      throw Timeout(fmt::format("provider call failed: {}", httplib::to_string(res.error())));
    }
    throw BackendUnavailable(fmt::format("provider unreachable: {}", httplib::to_string(res.error())));
  }
  if (res->status < 200 || res->status >= 300) {
    throw BackendUnavailable(fmt::format("provider returned HTTP {}", res->status));
  }
  const Json reply = Json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("text") || !reply["text"].is_string()) {
    throw BackendUnavailable("provider reply lacks a text field");
  }
  return reply["text"].get<std::string>();
}

std::shared_ptr<ModelBackend> make_backend(const Json& config, const std::string& base_dir) {
  const auto kind = config.value("kind", std::string("scripted"));
  if (kind == "scripted") {
    const auto& rules = config.at("rules");
    if (rules.is_string()) {
      std::filesystem::path p = rules.get<std::string>();
      if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
      return ScriptedBackend::from_file(p.string());
    }
    return ScriptedBackend::from_json(rules);
  }
  if (kind == "http_provider") {
    return std::make_shared<HttpProviderBackend>(HttpProviderConfig{
        config.at("endpoint").get<std::string>(), config.value("model", std::string()),
        config.value("credentials_env", std::string())});
  }
  throw Error("unknown model backend kind: " + kind);
}

// ---------------------------------------------------------------------------
// Gateway.

ModelGateway::ModelGateway(std::shared_ptr<ModelBackend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(options) {
  if (!backend_) throw Error("model gateway needs a backend");
  for (auto a : kAllAgents) specs_.emplace(a, default_agent_spec(a));
}

const AgentSpec& ModelGateway::spec(AgentName name) const {
  std::lock_guard lock(mutex_);
  return specs_.at(name);
}

void ModelGateway::set_spec(AgentSpec spec) {
  if (spec.temperature < 0.0 || spec.temperature > 1.0) {
    throw Error("agent temperature must lie in [0, 1]");
  }
  std::lock_guard lock(mutex_);
  specs_[spec.name] = std::move(spec);
}

Prompt ModelGateway::render(AgentName agent, const Bindings& bindings, std::string user) const {
  auto rendered = render_template(spec(agent).instruction_template, bindings);
  for (const auto& name : rendered.unused_bindings) {
    spdlog::warn("template for agent {} ignores binding '{}'", to_string(agent), name);
  }
  return Prompt{std::move(rendered.text), std::move(user)};
}

std::uint64_t ModelGateway::request_count(AgentName agent) const {
  return requests_by_agent_[static_cast<std::size_t>(agent)].load();
}

void ModelGateway::set_observer(std::function<void(const CallRecord&)> observer) {
  std::lock_guard lock(mutex_);
  observer_ = std::move(observer);
}

std::string ModelGateway::call_backend(const AgentSpec& spec, const Prompt& prompt,
                                       const std::vector<ToolSpec>& tools, int attempt) {
  {
    std::lock_guard lock(mutex_);
    if (observer_) observer_(CallRecord{spec.name, prompt, tools, attempt});
  }
  BackendRequest request{spec.name, spec.temperature, spec.thinking_enabled, prompt,
                         std::nullopt, tools};
  if (const auto kind = report_kind(spec.output_schema)) {
    request.response_schema = response_schema(*kind);
  }
  ++backend_calls_;
  return backend_->complete(request, options_.call_timeout);
}

StructuredRecord ModelGateway::complete_structured(const AgentSpec& spec, Prompt prompt) {
  const auto kind = report_kind(spec.output_schema);
  if (!kind) throw Error("complete_structured needs a structured output schema");
  ++requests_total_;
  ++requests_by_agent_[static_cast<std::size_t>(spec.name)];

  const int attempts = 1 + std::max(0, options_.max_retries);
  const std::string original_user = prompt.user;
  std::vector<Violation> last;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    if (attempt > 1) {
      prompt.user = fmt::format(
          "{}\n\n[Validation feedback] Your previous reply was rejected: {}. Reply "
          "again with only the JSON object and exactly the required keys. Attempt {} of {}.",
          original_user, describe(last), attempt, attempts);
    }
    const std::string raw = call_backend(spec, prompt, {}, attempt);
    auto parsed = parse_record(*kind, raw, options_.field_cap);
    if (auto* record = std::get_if<StructuredRecord>(&parsed)) return std::move(*record);
    last = std::get<std::vector<Violation>>(std::move(parsed));
    spdlog::debug("agent {} attempt {} rejected: {}", to_string(spec.name), attempt,
                  describe(last));
  }
  throw SchemaFailure(attempts, std::move(last));
}

std::string ModelGateway::complete_text(const AgentSpec& spec, const Prompt& prompt,
                                        const std::vector<ToolSpec>& tools) {
  ++requests_total_;
  ++requests_by_agent_[static_cast<std::size_t>(spec.name)];
  std::string text = call_backend(spec, prompt, tools, 1);
  if (trim(text).empty()) throw EmptyResponse();
  return text;
}

}  // namespace tutorwheel
