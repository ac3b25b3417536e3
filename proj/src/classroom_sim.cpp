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

#include "tutorwheel/classroom_sim.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "httplib.h"

namespace tutorwheel::sim {

std::string_view to_string(ActionKind k) {
  switch (k) {
    case ActionKind::session_start: return "session_start";
    case ActionKind::session_end: return "session_end";
    case ActionKind::video: return "video";
    case ActionKind::edit: return "edit";
    case ActionKind::execute: return "execute";
    case ActionKind::chat: return "chat";
    case ActionKind::submit: return "submit";
    case ActionKind::error: return "error";
  }
  return "?";
}

std::optional<ActionKind> parse_action_kind(std::string_view s) {
  for (const auto k : {ActionKind::session_start, ActionKind::session_end, ActionKind::video,
                       ActionKind::edit, ActionKind::execute, ActionKind::chat, ActionKind::submit,
                       ActionKind::error}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

std::vector<std::string> Scenario::roster() const {
  std::vector<std::string> ids;
  for (const auto& s : students) ids.push_back(s.user_id);
  return ids;
}

namespace {

Json counts_to_json(const std::map<EventCategory, std::size_t>& counts) {
  Json j = Json::object();
  for (const auto c : kAllCategories) {
    const auto it = counts.find(c);
    j[std::string(to_string(c))] = it == counts.end() ? 0 : it->second;
  }
  return j;
}

std::map<EventCategory, std::size_t> counts_from_json(const Json& j) {
  std::map<EventCategory, std::size_t> out;
  for (const auto c : kAllCategories) out[c] = 0;
  for (const auto& [name, n] : j.items()) {
    const auto c = parse_category(name);
    if (!c) throw Error("unknown event category: " + name);
    out[*c] = n.get<std::size_t>();
  }
  return out;
}

std::size_t sum(const std::map<EventCategory, std::size_t>& counts) {
  std::size_t total = 0;
  for (const auto& [c, n] : counts) total += n;
  return total;
}

}  // namespace

Json to_json(const Scenario& s) {
  Json students = Json::array();
  for (const auto& st : s.students) {
    Json actions = Json::array();
    for (const auto& a : st.actions) {
      actions.push_back({{"kind", to_string(a.kind)}, {"offset_ms", a.offset_ms}, {"data", a.data}});
    }
    students.push_back({{"user_id", st.user_id}, {"actions", actions}});
  }
  return {{"template", s.template_name},
          {"seed", s.seed},
          {"lesson_id", s.lesson_id},
          {"base_time", format_timestamp(s.base_time)},
          {"expected_counts", counts_to_json(s.expected_counts)},
          {"expected_execution_successes", s.expected_execution_successes},
          {"students", students}};
}

Scenario scenario_from_json(const Json& j) {
  Scenario s;
  s.template_name = j.at("template").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.lesson_id = j.at("lesson_id").get<std::string>();
  const auto base = parse_timestamp(j.at("base_time").get<std::string>());
  if (!base) throw Error("scenario base_time is not an ISO-8601 UTC timestamp");
  s.base_time = *base;
  s.expected_counts = counts_from_json(j.at("expected_counts"));
  s.expected_execution_successes = j.at("expected_execution_successes").get<std::size_t>();
  for (const auto& st : j.at("students")) {
    StudentScript script{st.at("user_id").get<std::string>(), {}};
    for (const auto& a : st.at("actions")) {
      const auto kind = parse_action_kind(a.at("kind").get<std::string>());
      if (!kind) throw Error("unknown action kind: " + a.at("kind").get<std::string>());
      script.actions.push_back({*kind, a.at("offset_ms").get<UnixMillis>(), a.at("data")});
    }
    s.students.push_back(std::move(script));
  }
  return s;
}

std::map<EventCategory, std::size_t> events_of(const Action& a) {
  switch (a.kind) {
    case ActionKind::session_start:
    case ActionKind::session_end: return {{EventCategory::session_management, 1}};
    case ActionKind::video: return {{EventCategory::video_playback, 1}};
    case ActionKind::edit: return {{EventCategory::code_editor, 1}};
    case ActionKind::execute: return {{EventCategory::code_execution, 1}};
    case ActionKind::chat: return {{EventCategory::chat_message, 2}};
    case ActionKind::submit: return {{EventCategory::checkpoint_evaluation, 1}};
    case ActionKind::error: return {{EventCategory::error, 1}};
  }
  return {};
}

std::pair<std::size_t, std::size_t> action_slice(std::size_t n, double from, double to) {
  const auto at = [n](double f) {
    f = std::clamp(f, 0.0, 1.0);
    return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9));
  };
  const auto begin = at(from);
  return {begin, std::max(begin, at(to))};
}

// ---------------------------------------------------------------------------
// Generation.

namespace {

constexpr std::int64_t kSecond = 1000;
constexpr std::int64_t kMinute = 60 * kSecond;
constexpr std::int64_t kHour = 60 * kMinute;
constexpr std::int64_t kDay = 24 * kHour;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }
  template <class T>
  const T& pick(const std::vector<T>& items) {
    return items[below(items.size())];
  }
  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

// Distinct templates draw distinct rosters from the same seed.
std::uint64_t template_seed(std::string_view name, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const char c : name) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  return h ^ seed;
}

// Splits `total` into `parts` near-equal shares, the first ones larger.
std::vector<std::size_t> split(std::size_t total, std::size_t parts) {
  std::vector<std::size_t> out(parts, total / parts);
  for (std::size_t i = 0; i < total % parts; ++i) ++out[i];
  return out;
}

const std::vector<std::string> kFirstNames{"amara", "bodhi", "chioma", "dmitri", "elif",
                                           "farouk", "gaia",  "hiro",   "ines",   "jonah",
                                           "kavya",  "lior",  "mateo",  "noor",   "oskar"};

std::vector<std::string> make_roster(Rng& rng, std::size_t n) {
  std::vector<std::string> names = kFirstNames;
  rng.shuffle(names);
  std::vector<std::string> roster;
  for (std::size_t i = 0; i < n; ++i) {
    const char letter = static_cast<char>('a' + rng.below(26));
    roster.push_back(fmt::format("{}-{}{:02}", names[i % names.size()], letter, rng.below(100)));
  }
  return roster;
}

const UnixMillis kBaseTime = 1769958000000;  // 2026-02-01T15:00:00Z
const std::string kLesson = "qis-m2";
constexpr double kVideoLength = 3600.0;

const std::vector<std::string> kEditableCells{"c1", "c2", "c3", "c4"};
const std::vector<std::string> kCheckpoints{"cp1", "cp2", "cp3", "cp4"};

struct CellVariant {
  std::string source;
  std::string output;
  std::string error;  // empty when the cell runs cleanly
};

const std::map<std::string, std::vector<CellVariant>>& cell_variants() {
  static const std::map<std::string, std::vector<CellVariant>> variants{
      {"c1",
       {{"plus_state = Statevector([1, 1] / np.sqrt(2))\nprint(plus_state)",
         "Statevector([0.70710678+0.j, 0.70710678+0.j],\n            dims=(2,))", ""},
        {"plus_state = Statevector.from_label('+')\nprint(plus_state)",
         "Statevector([0.70710678+0.j, 0.70710678+0.j],\n            dims=(2,))", ""},
        {"plus_state = Statevector([1, 1])\nprint(plus_state)", "",
         "QiskitError: 'Sum of amplitudes-squared is not 1, but 2.0.'"}}},
      {"c2",
       {{"state = Statevector(np.dot(H, zero))\nprint(state)",
         "Statevector([0.70710678+0.j, 0.70710678+0.j],\n            dims=(2,))", ""},
        {"state = Statevector(H @ zero)\nprint(state)",
         "Statevector([0.70710678+0.j, 0.70710678+0.j],\n            dims=(2,))", ""},
        {"state = Statevector(np.dot(H, zero)\nprint(state)", "",
         "SyntaxError: '(' was never closed"}}},
      {"c3",
       {{"qc = QuantumCircuit(1)\nqc.x(0)\nqc.h(0)\nprint(qc)",
         "   ┌───┐┌───┐\nq: ┤ X ├┤ H ├\n   └───┘└───┘", ""},
        {"qc = QuantumCircuit(1)\nqc.h(0)\nqc.x(0)\nprint(qc)",
         "   ┌───┐┌───┐\nq: ┤ H ├┤ X ├\n   └───┘└───┘", ""},
        {"qc = QuantumCircuit(1)\nqc.x(1)\nqc.h(0)", "",
         "CircuitError: 'Index 1 out of range for size 1.'"}}},
      {"c4",
       {{"counts = Statevector.from_label('+').sample_counts(1000)\nprint(counts)",
         "{'0': 497, '1': 503}", ""},
        {"counts = Statevector(qc).sample_counts(shots=1000)\nprint(counts)",
         "{'0': 512, '1': 488}", ""},
        {"counts = state.sample_count(1000)", "",
         "AttributeError: 'Statevector' object has no attribute 'sample_count'"}}},
  };
  return variants;
}

const std::vector<std::string> kChatMessages{
    "Why does my state in c1 print complex numbers when I only typed real ones?",
    "What is the difference between the H gate and the X gate here?",
    "I am getting an error in c2, can you help me understand it?",
    "Does the order of gates in c3 matter?",
    "How do I know if my measurement counts in c4 are correct?",
    "Can you explain what a unitary matrix is in simpler terms?",
    "Why is the probability 0.5 and not 0.7071?",
    "What does the lecture mean by global phase?",
    "My checkpoint failed but the output looks right, what am I missing?",
    "Is np.dot the same thing as the @ operator?",
};

const std::vector<std::pair<std::string, std::string>> kClientErrors{
    {"notebook", "Kernel connection lost; reconnecting"},
    {"notebook", "Cell output exceeded the display limit and was truncated"},
    {"video-player", "Playback stalled while buffering"},
    {"video-player", "Media segment request timed out"},
    {"editor", "Autosave request failed; retrying"},
};

Action make_action(ActionKind kind, UnixMillis at, Json data = Json::object()) {
  return Action{kind, at, std::move(data)};
}

Json video_data(const std::string& action, double position, std::optional<double> from = {},
                std::optional<double> to = {}) {
  Json j{{"action", action}, {"position_s", std::round(position * 10) / 10}};
  if (from) j["seek_from_s"] = std::round(*from * 10) / 10;
  if (to) j["seek_to_s"] = std::round(*to * 10) / 10;
  return j;
}

// Video state machine shared by the templates.
struct Player {
  double position = 0;
  bool playing = false;

  Json step(Rng& rng, std::int64_t elapsed_ms) {
    if (playing) position = std::min(kVideoLength, position + static_cast<double>(elapsed_ms) / 1000);
    if (rng.below(5) == 0) {
      const double from = position;
      const double to = static_cast<double>(rng.below(static_cast<std::uint64_t>(kVideoLength)));
      position = to;
      return video_data("seek", to, from, to);
    }
    playing = !playing;
    return video_data(playing ? "play" : "pause", position);
  }
};

void finalize_expectations(Scenario& s) {
  for (const auto c : kAllCategories) s.expected_counts[c] = 0;
  s.expected_execution_successes = 0;
  for (const auto& st : s.students) {
    for (const auto& a : st.actions) {
      for (const auto& [c, n] : events_of(a)) s.expected_counts[c] += n;
      if (a.kind == ActionKind::execute && a.data.value("success", false)) {
        ++s.expected_execution_successes;
      }
    }
  }
}

Scenario generate_pilot_volume(std::uint64_t seed) {
  // Pilot volume table: per-category totals and the 298 of 387 successful runs.
  constexpr std::size_t kStudents = 5;
  constexpr std::size_t kVisits = 62;  // 124 session events
  constexpr std::size_t kVideo = 7666;
  constexpr std::size_t kChatTurns = 167;  // 334 chat messages
  constexpr std::size_t kExecutions = 387;
  constexpr std::size_t kSuccesses = 298;
  constexpr std::size_t kEdits = 147;
  constexpr std::size_t kSubmissions = 32;
  constexpr std::size_t kErrors = 208;

  Rng rng(template_seed("pilot-volume", seed));
  Scenario s{"pilot-volume", seed, kLesson, kBaseTime, {}, {}, 0};
  const auto roster = make_roster(rng, kStudents);
  const auto visits = split(kVisits, kStudents);
  const auto video = split(kVideo, kStudents);
  const auto chats = split(kChatTurns, kStudents);
  const auto execs = split(kExecutions, kStudents);
  const auto successes = split(kSuccesses, kStudents);
  const auto edits = split(kEdits, kStudents);
  const auto submits = split(kSubmissions, kStudents);
  const auto errors = split(kErrors, kStudents);

  for (std::size_t i = 0; i < kStudents; ++i) {
    std::vector<ActionKind> tokens;
    tokens.insert(tokens.end(), video[i], ActionKind::video);
    tokens.insert(tokens.end(), chats[i], ActionKind::chat);
    tokens.insert(tokens.end(), execs[i], ActionKind::execute);
    tokens.insert(tokens.end(), edits[i], ActionKind::edit);
    tokens.insert(tokens.end(), submits[i], ActionKind::submit);
    tokens.insert(tokens.end(), errors[i], ActionKind::error);
    rng.shuffle(tokens);
    std::vector<bool> outcomes(execs[i], false);
    std::fill_n(outcomes.begin(), successes[i], true);
    rng.shuffle(outcomes);

    StudentScript script{roster[i], {}};
    Player player;
    std::map<std::string, const CellVariant*> current;
    std::string last_cell = kEditableCells.front();
    std::size_t next_token = 0;
    std::size_t next_outcome = 0;
    const auto per_visit = split(tokens.size(), visits[i]);
    for (std::size_t v = 0; v < visits[i]; ++v) {
      UnixMillis t = static_cast<UnixMillis>(v) * 2 * kDay + static_cast<UnixMillis>(i) * kHour +
                     rng.between(0, 30) * kMinute;
      script.actions.push_back(make_action(ActionKind::session_start, t, {{"action", "start"}}));
      player.playing = false;
      for (std::size_t k = 0; k < per_visit[v]; ++k) {
        const auto gap = rng.between(5, 40) * kSecond;
        t += gap;
        switch (tokens[next_token++]) {
          case ActionKind::video:
            script.actions.push_back(make_action(ActionKind::video, t, player.step(rng, gap)));
            break;
          case ActionKind::chat:
            script.actions.push_back(
                make_action(ActionKind::chat, t, {{"message", rng.pick(kChatMessages)}}));
            break;
          case ActionKind::edit: {
            last_cell = rng.pick(kEditableCells);
            const auto& options = cell_variants().at(last_cell);
            current[last_cell] = &options[rng.below(options.size())];
            script.actions.push_back(make_action(
                ActionKind::edit, t,
                {{"cell_id", last_cell}, {"source", current[last_cell]->source}}));
            break;
          }
          case ActionKind::execute: {
            const bool ok = outcomes[next_outcome++];
            const auto& options = cell_variants().at(last_cell);
            // Pick a variant whose behavior matches the pre-drawn outcome.
            const CellVariant* chosen = nullptr;
            for (std::size_t tries = 0; tries < options.size() * 4 && !chosen; ++tries) {
              const auto& cand = options[rng.below(options.size())];
              if (cand.error.empty() == ok) chosen = &cand;
            }
            if (chosen == nullptr) chosen = ok ? &options[0] : &options.back();
            Json data{{"cell_id", last_cell}, {"success", ok}, {"output", chosen->output}};
            if (!ok) data["error"] = chosen->error;
            script.actions.push_back(make_action(ActionKind::execute, t, std::move(data)));
            break;
          }
          case ActionKind::submit:
            script.actions.push_back(make_action(ActionKind::submit, t,
                                                 {{"checkpoint_id", rng.pick(kCheckpoints)}}));
            break;
          case ActionKind::error: {
            const auto& [source, message] = rng.pick(kClientErrors);
            script.actions.push_back(
                make_action(ActionKind::error, t, {{"source", source}, {"message", message}}));
            break;
          }
          default:
            break;
        }
      }
      t += rng.between(10, 60) * kSecond;
      script.actions.push_back(make_action(ActionKind::session_end, t, {{"action", "end"}}));
    }
    s.students.push_back(std::move(script));
  }
  finalize_expectations(s);
  return s;
}

Scenario generate_deadzone(std::uint64_t seed) {
  constexpr std::size_t kStudents = 5;
  constexpr std::size_t kDropouts = 4;
  Rng rng(template_seed("deadzone", seed));
  Scenario s{"deadzone", seed, kLesson, kBaseTime, {}, {}, 0};
  const auto roster = make_roster(rng, kStudents);
  for (std::size_t i = 0; i < kStudents; ++i) {
    StudentScript script{roster[i], {}};
    UnixMillis t = static_cast<UnixMillis>(i) * kHour;
    script.actions.push_back(make_action(ActionKind::session_start, t, {{"action", "start"}}));
    const bool drops = i < kDropouts;
    // Drop-off point between 41:00 and 43:40.
    const double stop_at = drops ? 2460.0 + static_cast<double>(rng.below(160)) : kVideoLength;
    // Students who finish play straight through from 38:20.
    const double loop_end = drops ? 2400.0 : 2300.0;
    double position = 0;
    while (position < loop_end) {
      script.actions.push_back(make_action(ActionKind::video, t, video_data("play", position)));
      const double watched = 240.0 + static_cast<double>(rng.below(240));
      position = std::min(position + watched, loop_end);
      t += static_cast<UnixMillis>(watched * 1000);
      script.actions.push_back(make_action(ActionKind::video, t, video_data("pause", position)));
      t += rng.between(20, 90) * kSecond;
      if (position >= 1080 && position < 1400) {
        // Work on the first two checkpoints mid-lecture.
        const auto& c1 = cell_variants().at("c1")[0];
        script.actions.push_back(make_action(ActionKind::edit, t, {{"cell_id", "c1"}, {"source", c1.source}}));
        t += 20 * kSecond;
        script.actions.push_back(make_action(
            ActionKind::execute, t, {{"cell_id", "c1"}, {"success", true}, {"output", c1.output}}));
        t += 10 * kSecond;
        script.actions.push_back(make_action(ActionKind::submit, t, {{"checkpoint_id", "cp1"}}));
        t += 30 * kSecond;
      }
    }
    if (drops) {
      // Replays around 38-42 minutes, then stops before the multi-qubit part.
      const double first_from = 2440.0 + static_cast<double>(rng.below(60));
      const double first_to = 2260.0 + static_cast<double>(rng.below(60));
      script.actions.push_back(make_action(ActionKind::video, t, video_data("play", position)));
      t += static_cast<UnixMillis>((first_from - position) * 1000);
      script.actions.push_back(make_action(ActionKind::video, t,
                                           video_data("seek", first_to, first_from, first_to)));
      t += static_cast<UnixMillis>((stop_at - first_to) * 1000);
      const double second_to = 2400.0 + static_cast<double>(rng.below(40));
      script.actions.push_back(
          make_action(ActionKind::video, t, video_data("seek", second_to, stop_at, second_to)));
      t += static_cast<UnixMillis>((stop_at - second_to) * 1000);
      script.actions.push_back(make_action(ActionKind::video, t, video_data("pause", stop_at)));
    } else {
      script.actions.push_back(make_action(ActionKind::video, t, video_data("play", position)));
      t += static_cast<UnixMillis>((kVideoLength - position) * 1000);
      script.actions.push_back(make_action(ActionKind::video, t, video_data("pause", kVideoLength)));
    }
    t += rng.between(30, 120) * kSecond;
    script.actions.push_back(make_action(ActionKind::session_end, t, {{"action", "end"}}));
    s.students.push_back(std::move(script));
  }
  finalize_expectations(s);
  return s;
}

Scenario generate_confusion(std::uint64_t seed) {
  Rng rng(template_seed("confusion", seed));
  Scenario s{"confusion", seed, kLesson, kBaseTime, {}, {}, 0};
  const auto roster = make_roster(rng, 3);

  struct Plan {
    std::string cell;
    std::string checkpoint;
    CellVariant code;
  };
  const std::vector<Plan> plans{
      // Right state, wrong variable name.
      {"c1", "cp1",
       {"psi = Statevector([1, 1] / np.sqrt(2))\nprint(psi)",
        "Statevector([0.70710678+0.j, 0.70710678+0.j],\n            dims=(2,))", ""}},
      // Element-wise * where a matrix product is needed.
      {"c2", "cp2",
       {"state = Statevector(H * zero)\nprint(state)", "",
        "QiskitError: 'Sum of amplitudes-squared is not 1, but 2.0.'"}},
      {"c1", "cp1", cell_variants().at("c1")[0]},
  };
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const auto& plan = plans[i];
    StudentScript script{roster[i], {}};
    UnixMillis t = static_cast<UnixMillis>(i) * kHour + rng.between(0, 20) * kMinute;
    script.actions.push_back(make_action(ActionKind::session_start, t, {{"action", "start"}}));
    t += 5 * kSecond;
    script.actions.push_back(make_action(ActionKind::video, t, video_data("play", 300)));
    t += 12 * kMinute;
    script.actions.push_back(make_action(ActionKind::video, t, video_data("pause", 1020)));
    t += 40 * kSecond;
    script.actions.push_back(
        make_action(ActionKind::edit, t, {{"cell_id", plan.cell}, {"source", plan.code.source}}));
    t += 15 * kSecond;
    Json run{{"cell_id", plan.cell}, {"success", plan.code.error.empty()},
             {"output", plan.code.output}};
    if (!plan.code.error.empty()) run["error"] = plan.code.error;
    script.actions.push_back(make_action(ActionKind::execute, t, std::move(run)));
    t += 20 * kSecond;
    script.actions.push_back(
        make_action(ActionKind::submit, t, {{"checkpoint_id", plan.checkpoint}}));
    t += 2 * kMinute;
    script.actions.push_back(make_action(ActionKind::session_end, t, {{"action", "end"}}));
    s.students.push_back(std::move(script));
  }
  finalize_expectations(s);
  return s;
}

}  // namespace

std::vector<std::string> template_names() { return {"pilot-volume", "deadzone", "confusion"}; }

Scenario generate(std::string_view template_name, std::uint64_t seed) {
  if (template_name == "pilot-volume") return generate_pilot_volume(seed);
  if (template_name == "deadzone") return generate_deadzone(seed);
  if (template_name == "confusion") return generate_confusion(seed);
  throw UnknownTemplate(std::string(template_name));
}

// ---------------------------------------------------------------------------
// Replay.

Endpoints Endpoints::from_json(const Json& j) {
  Endpoints e;
  e.teaching = j.at("teaching").get<std::string>();
  e.autograde = j.at("autograde").get<std::string>();
  e.events = j.at("events").get<std::string>();
  e.feedback = j.at("feedback").get<std::string>();
  const auto var = j.value("api_token_env", std::string("TUTORWHEEL_API_TOKEN"));
  const char* token = std::getenv(var.c_str());
  if (token == nullptr) throw Error("API token variable " + var + " is not set");
  e.token = token;
  return e;
}

Endpoints Endpoints::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read endpoints file " + path);
  return from_json(Json::parse(in));
}

std::size_t RunReport::achieved_total() const { return sum(achieved); }
std::size_t RunReport::expected_total() const { return sum(expected); }

double RunReport::execution_success_rate() const {
  const auto it = achieved.find(EventCategory::code_execution);
  if (it == achieved.end() || it->second == 0) return 0.0;
  return static_cast<double>(achieved_execution_successes) / static_cast<double>(it->second);
}

Json to_json(const RunReport& r) {
  Json timings = Json::array();
  for (const auto& t : r.turn_timings) timings.push_back(to_json(t));
  Json grades = Json::array();
  for (const auto& g : r.grades) {
    grades.push_back({{"user_id", g.user_id},
                      {"checkpoint_id", g.checkpoint_id},
                      {"passed", g.passed},
                      {"short_circuited", g.short_circuited}});
  }
  return {{"template", r.template_name},
          {"seed", r.seed},
          {"lesson_id", r.lesson_id},
          {"expected", counts_to_json(r.expected)},
          {"achieved", counts_to_json(r.achieved)},
          {"expected_execution_successes", r.expected_execution_successes},
          {"achieved_execution_successes", r.achieved_execution_successes},
          {"turn_timings", timings},
          {"grades", grades},
          {"divergences", r.divergences},
          {"actions_issued", r.actions_issued},
          {"request_failures", r.request_failures},
          {"elapsed_s", r.elapsed_s}};
}

RunReport run_report_from_json(const Json& j) {
  RunReport r;
  r.template_name = j.at("template").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.lesson_id = j.at("lesson_id").get<std::string>();
  r.expected = counts_from_json(j.at("expected"));
  r.achieved = counts_from_json(j.at("achieved"));
  r.expected_execution_successes = j.at("expected_execution_successes").get<std::size_t>();
  r.achieved_execution_successes = j.at("achieved_execution_successes").get<std::size_t>();
  for (const auto& t : j.at("turn_timings")) r.turn_timings.push_back(timing_from_json(t));
  for (const auto& g : j.at("grades")) {
    r.grades.push_back({g.at("user_id").get<std::string>(), g.at("checkpoint_id").get<std::string>(),
                        g.at("passed").get<bool>(), g.at("short_circuited").get<bool>()});
  }
  r.divergences = j.at("divergences").get<std::vector<std::string>>();
  r.actions_issued = j.at("actions_issued").get<std::size_t>();
  r.request_failures = j.at("request_failures").get<std::size_t>();
  r.elapsed_s = j.at("elapsed_s").get<double>();
  return r;
}

DivergenceFailure::DivergenceFailure(RunReport report)
    : Error(fmt::format("replay diverged from the scenario in {} place(s)",
                        report.divergences.size())),
      report_(std::move(report)) {}

namespace {

class Client {
 public:
  Client(const std::string& url, const std::string& token) : client_(url) {
    client_.set_connection_timeout(2, 0);
    client_.set_read_timeout(60, 0);
    client_.set_keep_alive(true);
    client_.set_tcp_nodelay(true);
    headers_ = {{"Authorization", "Bearer " + token}};
  }

  httplib::Result post(const std::string& path, const Json& body) {
    return client_.Post(path, headers_, body.dump(), "application/json");
  }
  httplib::Result put(const std::string& path, const Json& body) {
    return client_.Put(path, headers_, body.dump(), "application/json");
  }
  httplib::Result get(const std::string& path) { return client_.Get(path, headers_); }

 private:
  httplib::Client client_;
  httplib::Headers headers_;
};

std::string describe_failure(const httplib::Result& res) {
  if (!res) return httplib::to_string(res.error());
  return fmt::format("HTTP {}", res->status);
}

std::optional<SummaryBlock> fetch_summary(const Endpoints& e, const std::string& lesson_id) {
  Client client(e.feedback, e.token);
  const auto res = client.get("/feedback/lessons");
  if (!res || res->status != 200) {
    throw EndpointUnreachable("feedback endpoint unreachable: " + describe_failure(res));
  }
  const Json body = Json::parse(res->body);
  for (const auto& entry : body.at("lessons")) {
    if (entry.at("lesson_id") == lesson_id) return summary_from_json(entry.at("summary"));
  }
  return std::nullopt;
}

std::size_t summary_count(const std::optional<SummaryBlock>& s, EventCategory c) {
  return s ? s->count(c) : 0;
}

struct StudentOutcome {
  std::vector<TurnTiming> timings;
  std::vector<GradeRecord> grades;
  std::vector<std::string> divergences;
  std::size_t issued = 0;
  std::size_t failures = 0;
};

StudentOutcome replay_student(const Scenario& scenario, const StudentScript& script,
                              const Endpoints& e, std::size_t begin, std::size_t end) {
  StudentOutcome out;
  Client teaching(e.teaching, e.token);
  Client autograde(e.autograde, e.token);
  Client events(e.events, e.token);

  const auto fail = [&](std::size_t index, const Action& a, const std::string& why) {
    ++out.failures;
    out.divergences.push_back(
        fmt::format("{} action {} ({}): {}", script.user_id, index, to_string(a.kind), why));
  };

  const auto created = teaching.post("/sessions", {{"user_id", script.user_id},
                                                   {"lesson_id", scenario.lesson_id}});
  if (!created || (created->status != 200 && created->status != 201)) {
    out.divergences.push_back(fmt::format("{}: session creation failed: {}", script.user_id,
                                          describe_failure(created)));
    ++out.failures;
    return out;
  }
  const std::string key = Json::parse(created->body).at("session_key").get<std::string>();

  const auto post_event = [&](std::size_t i, const Action& a, EventCategory c, Json payload) {
    const auto res = events.post(
        "/events", make_raw_event(script.user_id, scenario.lesson_id, key, c,
                                  scenario.base_time + a.offset_ms, std::move(payload)));
    if (!res || res->status != 202) fail(i, a, "event not accepted: " + describe_failure(res));
  };

  for (std::size_t i = begin; i < end; ++i) {
    const Action& a = script.actions[i];
    const UnixMillis at = scenario.base_time + a.offset_ms;
    ++out.issued;
    switch (a.kind) {
      case ActionKind::session_start:
      case ActionKind::session_end:
        post_event(i, a, EventCategory::session_management, {{"action", a.data.at("action")}});
        break;
      case ActionKind::video:
        post_event(i, a, EventCategory::video_playback, a.data);
        break;
      case ActionKind::error:
        post_event(i, a, EventCategory::error, a.data);
        break;
      case ActionKind::edit: {
        const auto res =
            teaching.put(fmt::format("/sessions/{}/cells/{}", key, a.data.at("cell_id").get<std::string>()),
                         {{"source", a.data.at("source")}, {"timestamp", at}});
        if (!res || res->status != 200) fail(i, a, describe_failure(res));
        break;
      }
      case ActionKind::execute: {
        const auto cell = a.data.at("cell_id").get<std::string>();
        Json output{{"output", a.data.at("output")}, {"timestamp", at}};
        Json payload{{"cell_id", cell}, {"success", a.data.at("success")}};
        if (a.data.contains("error")) {
          output["error"] = a.data.at("error");
          payload["error_message"] = a.data.at("error");
        }
        const auto res = teaching.put(fmt::format("/sessions/{}/cells/{}/output", key, cell), output);
        if (!res || res->status != 200) fail(i, a, describe_failure(res));
        post_event(i, a, EventCategory::code_execution, std::move(payload));
        break;
      }
      case ActionKind::chat: {
        const auto res = teaching.post(
            "/run", {{"session_id", key}, {"message", a.data.at("message")}, {"timestamp", at}});
        if (!res || res->status != 200) {
          fail(i, a, describe_failure(res));
          break;
        }
        out.timings.push_back(timing_from_json(Json::parse(res->body).at("timing")));
        break;
      }
      case ActionKind::submit: {
        const auto checkpoint = a.data.at("checkpoint_id").get<std::string>();
        const auto res = autograde.post(
            "/grade", {{"session_id", key}, {"checkpoint_id", checkpoint}, {"timestamp", at}});
        if (!res || res->status != 200) {
          fail(i, a, describe_failure(res));
          break;
        }
        const auto body = Json::parse(res->body);
        out.grades.push_back({script.user_id, checkpoint, body.at("passed").get<bool>(),
                              body.value("short_circuited", false)});
        break;
      }
    }
  }
  return out;
}

}  // namespace

RunReport replay(const Scenario& scenario, const Endpoints& endpoints,
                 const ReplayOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  {
    Client probe(endpoints.teaching, endpoints.token);
    const auto health = probe.get("/health");
    if (!health) {
      throw EndpointUnreachable("teaching endpoint unreachable: " + describe_failure(health));
    }
    const auto body = Json::parse(health->body);
    if (body.value("backend", Json()).is_string() && body.at("backend") != "scripted" &&
        !options.allow_live) {
      throw Error("replay refuses a live model backend without --allow-live");
    }
  }

  RunReport report;
  report.template_name = scenario.template_name;
  report.seed = scenario.seed;
  report.lesson_id = scenario.lesson_id;
  for (const auto c : kAllCategories) report.expected[c] = 0;

  std::vector<std::pair<std::size_t, std::size_t>> slices;
  for (const auto& st : scenario.students) {
    const auto slice = action_slice(st.actions.size(), options.from, options.to);
    slices.push_back(slice);
    for (std::size_t i = slice.first; i < slice.second; ++i) {
      for (const auto& [c, n] : events_of(st.actions[i])) report.expected[c] += n;
      if (st.actions[i].kind == ActionKind::execute && st.actions[i].data.value("success", false)) {
        ++report.expected_execution_successes;
      }
    }
  }

  const auto before = fetch_summary(endpoints, scenario.lesson_id);

  std::vector<StudentOutcome> outcomes(scenario.students.size());
  {
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < scenario.students.size(); ++i) {
      threads.emplace_back([&, i] {
        try {
          outcomes[i] = replay_student(scenario, scenario.students[i], endpoints, slices[i].first,
                                       slices[i].second);
        } catch (const std::exception& ex) {
          outcomes[i].divergences.push_back(
              fmt::format("{}: replay aborted: {}", scenario.students[i].user_id, ex.what()));
          ++outcomes[i].failures;
        }
      });
    }
    for (auto& t : threads) t.join();
  }

  const auto after = fetch_summary(endpoints, scenario.lesson_id);
  for (const auto c : kAllCategories) {
    report.achieved[c] = summary_count(after, c) - summary_count(before, c);
  }
  report.achieved_execution_successes = (after ? after->code_execution_succeeded : 0) -
                                        (before ? before->code_execution_succeeded : 0);

  for (auto& o : outcomes) {
    report.turn_timings.insert(report.turn_timings.end(), o.timings.begin(), o.timings.end());
    report.grades.insert(report.grades.end(), o.grades.begin(), o.grades.end());
    report.divergences.insert(report.divergences.end(), o.divergences.begin(),
                              o.divergences.end());
    report.actions_issued += o.issued;
    report.request_failures += o.failures;
  }
  for (const auto c : kAllCategories) {
    if (report.achieved[c] != report.expected[c]) {
      report.divergences.push_back(fmt::format("{}: expected {} events, store gained {}",
                                               to_string(c), report.expected[c],
                                               report.achieved[c]));
    }
  }
  if (report.achieved_execution_successes != report.expected_execution_successes) {
    report.divergences.push_back(fmt::format("successful executions: expected {}, store gained {}",
                                             report.expected_execution_successes,
                                             report.achieved_execution_successes));
  }
  report.elapsed_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (options.strict && !report.divergences.empty()) throw DivergenceFailure(std::move(report));
  return report;
}

// ---------------------------------------------------------------------------

namespace {

std::string grouped(std::size_t n) {
  std::string digits = std::to_string(n);
  for (int i = static_cast<int>(digits.size()) - 3; i > 0; i -= 3) digits.insert(i, ",");
  return digits;
}

std::string percent(std::size_t part, std::size_t whole) {
  if (whole == 0) return "n/a";
  return fmt::format("{}%", static_cast<long>(std::lround(100.0 * static_cast<double>(part) /
                                                          static_cast<double>(whole))));
}

}  // namespace

std::string render_report(const RunReport& r, std::string_view format) {
  if (format == "json") return to_json(r).dump(2);
  if (format != "table") throw Error("unknown report format: " + std::string(format));

  const auto count = [](const std::map<EventCategory, std::size_t>& m, EventCategory c) {
    const auto it = m.find(c);
    return it == m.end() ? std::size_t{0} : it->second;
  };
  const auto row = [](std::string_view label, const std::string& expected,
                      const std::string& achieved) {
    return fmt::format("{:<30}{:>12}{:>12}\n", label, expected, achieved);
  };
  std::string out = fmt::format("Scenario {} (seed {}) on lesson {}\n\n", r.template_name, r.seed,
                                r.lesson_id);
  out += row("Event Category", "Expected", "Achieved");
  out += std::string(54, '-') + "\n";
  const auto cat_row = [&](std::string_view label, EventCategory c) {
    out += row(label, grouped(count(r.expected, c)), grouped(count(r.achieved, c)));
  };
  cat_row("Video playback events", EventCategory::video_playback);
  cat_row("Chat messages (student + AI)", EventCategory::chat_message);
  cat_row("Code executions", EventCategory::code_execution);
  out += row("Code execution success rate",
             percent(r.expected_execution_successes, count(r.expected, EventCategory::code_execution)),
             percent(r.achieved_execution_successes, count(r.achieved, EventCategory::code_execution)));
  cat_row("Code editor interactions", EventCategory::code_editor);
  cat_row("Session management events", EventCategory::session_management);
  cat_row("Checkpoint evaluations", EventCategory::checkpoint_evaluation);
  cat_row("Error events", EventCategory::error);
  out += std::string(54, '-') + "\n";
  out += row("Total events", grouped(r.expected_total()), grouped(r.achieved_total()));
  out += fmt::format("\nChat turns: {}  Grades: {}  Divergences: {}  Elapsed: {:.1f} s\n",
                     r.turn_timings.size(), r.grades.size(), r.divergences.size(), r.elapsed_s);
  for (const auto& d : r.divergences) out += "  divergence: " + d + "\n";
  return out;
}

}  // namespace tutorwheel::sim
