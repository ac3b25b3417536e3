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

// The only path to a language model. Callers hand over an agent name and
// placeholder bindings; this module owns the instruction templates, renders
// prompts, talks to the backend and validates whatever comes back.

#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "tutorwheel/domain.hpp"

namespace tutorwheel {

enum class AgentName { video, guidance, code, synthesizer, autograder, feedback };

inline constexpr std::array kAllAgents{AgentName::video,       AgentName::guidance,
                                       AgentName::code,        AgentName::synthesizer,
                                       AgentName::autograder,  AgentName::feedback};

std::string_view to_string(AgentName a);
std::optional<AgentName> parse_agent(std::string_view s);

/// Structured kinds plus the free-text marker.
enum class OutputSchema { video_report, guidance_report, code_report, grade_result, free_text };

std::optional<ReportKind> report_kind(OutputSchema s);

struct AgentSpec {
  AgentName name = AgentName::feedback;
  std::string instruction_template;
  double temperature = 0.2;
  OutputSchema output_schema = OutputSchema::free_text;
  bool thinking_enabled = false;
};

/// Lesson-agnostic defaults. Temperatures: video 0.3, guidance 0.4, code 0.2,
/// synthesizer 0.5, autograder 0.2, feedback 0.2.
AgentSpec default_agent_spec(AgentName name);

using Bindings = std::map<std::string, std::string, std::less<>>;

struct RenderedTemplate {
  std::string text;
  std::vector<std::string> unused_bindings;
};

class UnboundPlaceholder : public Error {
 public:
  explicit UnboundPlaceholder(std::string name)
      : Error("unbound placeholder: {" + name + "}"), name_(std::move(name)) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

/// Single-pass substitution of {name} markers. Bound values are copied
/// verbatim and never re-scanned. "{{" and "}}" escape literal braces in the
/// template. Throws UnboundPlaceholder; unused bindings are reported, not
/// fatal.
RenderedTemplate render_template(std::string_view tmpl, const Bindings& bindings);

/// Placeholder names in order of first appearance.
std::vector<std::string> template_placeholders(std::string_view tmpl);

struct Prompt {
  std::string system;
  std::string user;
  /// What predicates and observers see.
  std::string text() const { return system + "\n\n" + user; }
};

/// A callable tool offered to the model. Nothing in this code base registers
/// one; the type exists so the surface handed to a backend is explicit.
struct ToolSpec {
  std::string name;
  std::string description;
};

struct BackendRequest {
  AgentName agent = AgentName::feedback;
  double temperature = 0.2;
  bool thinking_enabled = false;
  Prompt prompt;
  std::optional<Json> response_schema;
  std::vector<ToolSpec> tools;
};

enum class BackendKind { scripted, http_provider };
std::string_view to_string(BackendKind k);

class BackendUnavailable : public Error {
 public:
  using Error::Error;
};

class Timeout : public Error {
 public:
  using Error::Error;
};

class EmptyResponse : public Error {
 public:
  EmptyResponse() : Error("model returned an empty response") {}
};

class SchemaFailure : public Error {
 public:
  SchemaFailure(int attempts, std::vector<Violation> violations);
  int attempts() const { return attempts_; }
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  int attempts_;
  std::vector<Violation> violations_;
};

class NoMatchingRule : public Error {
 public:
  NoMatchingRule(AgentName agent, std::string prompt_hash);
  const std::string& prompt_hash() const { return prompt_hash_; }

 private:
  std::string prompt_hash_;
};

class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  /// Raw completion text. Throws BackendUnavailable or Timeout.
  virtual std::string complete(const BackendRequest& request,
                               std::chrono::milliseconds timeout) = 0;
  virtual BackendKind kind() const = 0;
};

// ---------------------------------------------------------------------------
// Scripted backend.

struct ScriptedRule {
  enum class Match { always, contains, regex };
  enum class Failure { none, unavailable, timeout };

  std::optional<AgentName> agent;  // nullopt matches every agent
  Match match = Match::always;
  std::string pattern;
  std::vector<std::string> also_contains;  // Match::contains only; all must appear
  std::string response;
  std::chrono::milliseconds delay{0};
  Failure failure = Failure::none;

  bool matches(AgentName a, const std::string& prompt_text) const;

 private:
  friend class ScriptedBackend;
  std::shared_ptr<const std::regex> compiled_;
};

/// Deterministic stand-in for a provider: the first rule matching
/// (agent, prompt text) fires after its injected delay. Rules are fixed at
/// construction; concurrent calls never wait on each other.
class ScriptedBackend final : public ModelBackend {
 public:
  explicit ScriptedBackend(std::vector<ScriptedRule> rules);

  /// Rule list format:
  ///   [{"agent": "code" | "*", "contains": "..." | ["...", ...] | "regex": "...",
  ///     "response": <string or JSON value>, "delay_ms": 400,
  ///     "error": "unavailable" | "timeout"}]
  static std::shared_ptr<ScriptedBackend> from_json(const Json& rules);
  static std::shared_ptr<ScriptedBackend> from_file(const std::string& path);

  std::string complete(const BackendRequest& request,
                       std::chrono::milliseconds timeout) override;
  BackendKind kind() const override { return BackendKind::scripted; }

  const std::vector<ScriptedRule>& rules() const { return rules_; }

 private:
  const std::vector<ScriptedRule> rules_;
};

std::string prompt_hash(std::string_view text);

// ---------------------------------------------------------------------------
// HTTP provider backend.

struct HttpProviderConfig {
  std::string endpoint;        // e.g. "http://127.0.0.1:9000/v1/complete"
  std::string model;
  std::string credentials_env;  // environment variable holding the API key
};

/// POSTs {model, temperature, system, user, response_schema?} and expects
/// {"text": "..."} back.
class HttpProviderBackend final : public ModelBackend {
 public:
  explicit HttpProviderBackend(HttpProviderConfig config);
  std::string complete(const BackendRequest& request,
                       std::chrono::milliseconds timeout) override;
  BackendKind kind() const override { return BackendKind::http_provider; }

 private:
  HttpProviderConfig config_;
};

/// Builds a backend from {"kind": "scripted", "rules": path | [...]} or
/// {"kind": "http_provider", "endpoint", "model", "credentials_env"}.
/// Relative rule paths resolve against `base_dir`.
std::shared_ptr<ModelBackend> make_backend(const Json& config, const std::string& base_dir = ".");

// ---------------------------------------------------------------------------

struct GatewayOptions {
  int max_retries = 2;
  std::chrono::milliseconds call_timeout{30'000};
  std::size_t field_cap = kDefaultFieldCap;
};

/// One backend attempt as seen at the gateway seam.
struct CallRecord {
  AgentName agent;
  Prompt prompt;
  std::vector<ToolSpec> tools;
  int attempt = 1;
};

class ModelGateway {
 public:
  explicit ModelGateway(std::shared_ptr<ModelBackend> backend, GatewayOptions options = {});

  const AgentSpec& spec(AgentName name) const;
  void set_spec(AgentSpec spec);
  BackendKind backend_kind() const { return backend_->kind(); }
  const GatewayOptions& options() const { return options_; }

  /// Renders the agent's template with `bindings` into the system prompt;
  /// `user` becomes the user turn.
  Prompt render(AgentName agent, const Bindings& bindings, std::string user) const;

  /// Validated record or SchemaFailure after 1 + max_retries attempts. Each
  /// retry appends the violation list to the user prompt.
  StructuredRecord complete_structured(const AgentSpec& spec, Prompt prompt);

  template <class Report>
  Report complete_structured(const AgentSpec& spec, Prompt prompt) {
    return std::get<Report>(complete_structured(spec, std::move(prompt)));
  }

  /// Renders then completes; the usual entry point for callers.
  template <class Report>
  Report invoke_structured(AgentName agent, const Bindings& bindings, std::string user) {
    return complete_structured<Report>(spec(agent), render(agent, bindings, std::move(user)));
  }

  std::string complete_text(const AgentSpec& spec, const Prompt& prompt,
                            const std::vector<ToolSpec>& tools = {});

  std::string invoke_text(AgentName agent, const Bindings& bindings, std::string user,
                          const std::vector<ToolSpec>& tools = {}) {
    return complete_text(spec(agent), render(agent, bindings, std::move(user)), tools);
  }

  /// Logical completions requested (one per complete_* call).
  std::uint64_t request_count() const { return requests_total_.load(); }
  std::uint64_t request_count(AgentName agent) const;
  /// Backend round trips, including retries.
  std::uint64_t backend_call_count() const { return backend_calls_.load(); }

  /// Sees every backend attempt. Invoked serially.
  void set_observer(std::function<void(const CallRecord&)> observer);

 private:
  std::string call_backend(const AgentSpec& spec, const Prompt& prompt,
                           const std::vector<ToolSpec>& tools, int attempt);

  std::shared_ptr<ModelBackend> backend_;
  GatewayOptions options_;
  mutable std::mutex mutex_;
  std::map<AgentName, AgentSpec> specs_;
  std::function<void(const CallRecord&)> observer_;
  std::atomic<std::uint64_t> requests_total_{0};
  std::array<std::atomic<std::uint64_t>, kAllAgents.size()> requests_by_agent_{};
  std::atomic<std::uint64_t> backend_calls_{0};
};

}  // namespace tutorwheel
