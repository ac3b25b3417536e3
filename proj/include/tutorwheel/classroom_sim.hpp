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

// Synthetic cohorts driven through the real HTTP endpoints. Scenarios are
// deterministic scripts with virtual timestamps; replay compresses time.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tutorwheel/domain.hpp"
#include "tutorwheel/event_pipeline.hpp"

namespace tutorwheel::sim {

class UnknownTemplate : public Error {
 public:
  explicit UnknownTemplate(const std::string& name) : Error("unknown scenario template: " + name) {}
};

class EndpointUnreachable : public Error {
 public:
  using Error::Error;
};

enum class ActionKind { session_start, session_end, video, edit, execute, chat, submit, error };

std::string_view to_string(ActionKind k);
std::optional<ActionKind> parse_action_kind(std::string_view s);

/// `data` by kind:
///   video   {action, position_s, seek_from_s?, seek_to_s?}
///   edit    {cell_id, source}
///   execute {cell_id, success, output, error?}
///   chat    {message}
///   submit  {checkpoint_id}
///   error   {source, message}
struct Action {
  ActionKind kind = ActionKind::video;
  UnixMillis offset_ms = 0;  // virtual time since scenario base
  Json data = Json::object();
};

struct StudentScript {
  std::string user_id;
  std::vector<Action> actions;
};

struct Scenario {
  std::string template_name;
  std::uint64_t seed = 0;
  std::string lesson_id;
  UnixMillis base_time = 0;
  std::vector<StudentScript> students;
  std::map<EventCategory, std::size_t> expected_counts;
  std::size_t expected_execution_successes = 0;

  std::vector<std::string> roster() const;
};

Json to_json(const Scenario& s);
Scenario scenario_from_json(const Json& j);

/// Templates: "pilot-volume", "deadzone", "confusion". Throws UnknownTemplate.
Scenario generate(std::string_view template_name, std::uint64_t seed);
std::vector<std::string> template_names();

/// Store events an action produces when every service is healthy.
std::map<EventCategory, std::size_t> events_of(const Action& a);

/// Index range [begin, end) of a student's actions replayed for the
/// fraction window [from, to).
std::pair<std::size_t, std::size_t> action_slice(std::size_t n, double from, double to);

struct Endpoints {
  std::string teaching;
  std::string autograde;
  std::string events;
  std::string feedback;
  std::string token;

  /// {"teaching": url, ..., "api_token_env": "NAME"}; the token is read
  /// from the named variable.
  static Endpoints from_json(const Json& j);
  static Endpoints load(const std::string& path);
};

struct ReplayOptions {
  bool strict = false;
  bool allow_live = false;
  double from = 0.0;
  double to = 1.0;
};

struct GradeRecord {
  std::string user_id;
  std::string checkpoint_id;
  bool passed = false;
  bool short_circuited = false;
};

struct RunReport {
  std::string template_name;
  std::uint64_t seed = 0;
  std::string lesson_id;
  std::map<EventCategory, std::size_t> expected;
  std::map<EventCategory, std::size_t> achieved;
  std::size_t expected_execution_successes = 0;
  std::size_t achieved_execution_successes = 0;
  std::vector<TurnTiming> turn_timings;
  std::vector<GradeRecord> grades;
  std::vector<std::string> divergences;
  std::size_t actions_issued = 0;
  std::size_t request_failures = 0;
  double elapsed_s = 0;

  std::size_t achieved_total() const;
  std::size_t expected_total() const;
  /// Successful share of achieved executions; 0 when there were none.
  double execution_success_rate() const;
};

Json to_json(const RunReport& r);
RunReport run_report_from_json(const Json& j);

class DivergenceFailure : public Error {
 public:
  explicit DivergenceFailure(RunReport report);
  const RunReport& report() const { return report_; }

 private:
  RunReport report_;
};

/// One thread per student; actions of a student are issued in order.
/// Achieved counts are the change in the lesson summary served by the
/// feedback endpoint. Throws EndpointUnreachable, DivergenceFailure
/// (strict mode), or Error when the backend is live without allow_live.
RunReport replay(const Scenario& scenario, const Endpoints& endpoints,
                 const ReplayOptions& options = {});

/// "table" mirrors the pilot volume table; "json" is to_json(report).
std::string render_report(const RunReport& report, std::string_view format);

}  // namespace tutorwheel::sim
