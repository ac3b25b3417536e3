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

#include "tutorwheel/domain.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace tutorwheel {

std::string_view to_string(ReportKind kind) {
  switch (kind) {
    case ReportKind::video: return "video";
    case ReportKind::guidance: return "guidance";
    case ReportKind::code: return "code";
    case ReportKind::grade: return "grade";
  }
  return "unknown";
}

std::string Violation::to_string() const {
  std::string_view name;
  switch (kind) {
    case ViolationKind::missing_field: name = "MissingField"; break;
    case ViolationKind::empty_field: name = "EmptyField"; break;
    case ViolationKind::unknown_field: name = "UnknownField"; break;
    case ViolationKind::field_too_long: name = "FieldTooLong"; break;
    case ViolationKind::wrong_type: name = "WrongType"; break;
    case ViolationKind::parse_error: name = "ParseError"; break;
  }
  return fmt::format("{}({})", name, field);
}

std::string describe(const std::vector<Violation>& violations) {
  std::string out;
  for (const auto& v : violations) {
    if (!out.empty()) out += ", ";
    out += v.to_string();
  }
  return out;
}

namespace {

// Checks one required text field; appends at most one violation.
bool check_text(const Json& raw, const char* name, std::size_t cap,
                std::vector<Violation>& out, std::string& value) {
  const auto it = raw.find(name);
  if (it == raw.end()) {
    out.push_back({ViolationKind::missing_field, name});
    return false;
  }
  if (!it->is_string()) {
    out.push_back({ViolationKind::wrong_type, name});
    return false;
  }
  const auto& s = it->get_ref<const std::string&>();
  if (trim(s).empty()) {
    out.push_back({ViolationKind::empty_field, name});
    return false;
  }
  if (utf8_length(s) > cap) {
    out.push_back({ViolationKind::field_too_long, name});
    return false;
  }
  value = s;
  return true;
}

template <class Report>
bool is_declared(std::string_view key) {
  if constexpr (std::is_same_v<Report, GradeResult>) {
    if (key == "passed") return true;
  }
  return std::any_of(ReportTraits<Report>::fields.begin(),
                     ReportTraits<Report>::fields.end(),
                     [&](const auto& f) { return key == f.first; });
}

}  // namespace

template <class Report>
Validated<Report> validate_report(const Json& raw, std::size_t field_cap) {
  std::vector<Violation> violations;
  if (!raw.is_object()) {
    violations.push_back({ViolationKind::parse_error, "<root>"});
    return violations;
  }
  Report report{};
  if constexpr (std::is_same_v<Report, GradeResult>) {
    const auto it = raw.find("passed");
    if (it == raw.end()) {
      violations.push_back({ViolationKind::missing_field, "passed"});
    } else if (!it->is_boolean()) {
      violations.push_back({ViolationKind::wrong_type, "passed"});
    } else {
      report.passed = it->get<bool>();
    }
  }
  for (const auto& [name, member] : ReportTraits<Report>::fields) {
    check_text(raw, name, field_cap, violations, report.*member);
  }
  std::vector<std::string> unknown;
  for (const auto& [key, _] : raw.items()) {
    if (!is_declared<Report>(key)) unknown.push_back(key);
  }
  std::sort(unknown.begin(), unknown.end());
  for (auto& key : unknown) {
    violations.push_back({ViolationKind::unknown_field, std::move(key)});
  }
  if (!violations.empty()) return violations;
  return report;
}

template Validated<VideoReport> validate_report<VideoReport>(const Json&, std::size_t);
template Validated<GuidanceReport> validate_report<GuidanceReport>(const Json&, std::size_t);
template Validated<CodeReport> validate_report<CodeReport>(const Json&, std::size_t);
template Validated<GradeResult> validate_report<GradeResult>(const Json&, std::size_t);

namespace {

template <class Report>
std::variant<StructuredRecord, std::vector<Violation>> widen(
    Validated<Report> v) {
  if (auto* r = std::get_if<Report>(&v)) return StructuredRecord{std::move(*r)};
  return std::get<std::vector<Violation>>(std::move(v));
}

}  // namespace

std::variant<StructuredRecord, std::vector<Violation>> validate_record(
    ReportKind kind, const Json& raw, std::size_t field_cap) {
  switch (kind) {
    case ReportKind::video: return widen(validate_report<VideoReport>(raw, field_cap));
    case ReportKind::guidance: return widen(validate_report<GuidanceReport>(raw, field_cap));
    case ReportKind::code: return widen(validate_report<CodeReport>(raw, field_cap));
    case ReportKind::grade: return widen(validate_report<GradeResult>(raw, field_cap));
  }
  return std::vector<Violation>{{ViolationKind::parse_error, "<kind>"}};
}

std::variant<StructuredRecord, std::vector<Violation>> parse_record(
    ReportKind kind, std::string_view text, std::size_t field_cap) {
  // Models like to wrap JSON in a fenced block; accept that one shape.
  std::string body = trim(text);
  if (body.starts_with("```")) {
    const auto first_nl = body.find('\n');
    const auto last_fence = body.rfind("```");
    if (first_nl != std::string::npos && last_fence > first_nl) {
      body = body.substr(first_nl + 1, last_fence - first_nl - 1);
    }
  }
  Json raw = Json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (raw.is_discarded()) {
    return std::vector<Violation>{{ViolationKind::parse_error, "<json>"}};
  }
  return validate_record(kind, raw, field_cap);
}

namespace {

template <class Report>
Json fields_to_json(const Report& r) {
  Json j = Json::object();
  for (const auto& [name, member] : ReportTraits<Report>::fields) {
    j[name] = r.*member;
  }
  return j;
}

}  // namespace

Json to_json(const VideoReport& r) { return fields_to_json(r); }
Json to_json(const GuidanceReport& r) { return fields_to_json(r); }
Json to_json(const CodeReport& r) { return fields_to_json(r); }

Json to_json(const GradeResult& r) {
  return Json{{"passed", r.passed}, {"reasoning", r.reasoning}};
}

Json to_json(const StructuredRecord& r) {
  return std::visit([](const auto& v) { return to_json(v); }, r);
}

namespace {

template <class Report>
Json schema_for() {
  Json props = Json::object();
  Json required = Json::array();
  if constexpr (std::is_same_v<Report, GradeResult>) {
    props["passed"] = {{"type", "boolean"}};
    required.push_back("passed");
  }
  for (const auto& [name, _] : ReportTraits<Report>::fields) {
    props[name] = {{"type", "string"}, {"minLength", 1},
                   {"maxLength", kDefaultFieldCap}};
    required.push_back(name);
  }
  return Json{{"type", "object"},
              {"properties", props},
              {"required", required},
              {"additionalProperties", false}};
}

}  // namespace

Json response_schema(ReportKind kind) {
  switch (kind) {
    case ReportKind::video: return schema_for<VideoReport>();
    case ReportKind::guidance: return schema_for<GuidanceReport>();
    case ReportKind::code: return schema_for<CodeReport>();
    case ReportKind::grade: return schema_for<GradeResult>();
  }
  return Json::object();
}

// ---------------------------------------------------------------------------

std::string_view to_string(EventCategory c) {
  switch (c) {
    case EventCategory::video_playback: return "video_playback";
    case EventCategory::chat_message: return "chat_message";
    case EventCategory::code_execution: return "code_execution";
    case EventCategory::code_editor: return "code_editor";
    case EventCategory::checkpoint_evaluation: return "checkpoint_evaluation";
    case EventCategory::session_management: return "session_management";
    case EventCategory::error: return "error";
  }
  return "unknown";
}

std::optional<EventCategory> parse_category(std::string_view s) {
  for (auto c : kAllCategories) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

const std::vector<PayloadField>& event_category_schema(EventCategory c) {
  using F = FieldType;
  static const std::vector<PayloadField> video{
      {"action", F::text, false, {"play", "pause", "seek"}},
      {"position_s", F::number, false, {}},
      {"seek_from_s", F::number, true, {}},
      {"seek_to_s", F::number, true, {}},
  };
  static const std::vector<PayloadField> chat{
      {"sender", F::text, false, {"student", "ai"}},
      {"text", F::text, false, {}},
  };
  static const std::vector<PayloadField> execution{
      {"cell_id", F::text, false, {}},
      {"success", F::boolean, false, {}},
      {"error_message", F::text, true, {}},
  };
  static const std::vector<PayloadField> editor{
      {"cell_id", F::text, false, {}},
  };
  static const std::vector<PayloadField> checkpoint{
      {"checkpoint_id", F::text, false, {}},
      {"cell_id", F::text, false, {}},
      {"passed", F::boolean, false, {}},
      {"reasoning", F::text, false, {}},
  };
  static const std::vector<PayloadField> session{
      {"action", F::text, false, {"start", "end"}},
  };
  static const std::vector<PayloadField> error{
      {"source", F::text, false, {}},
      {"message", F::text, false, {}},
  };
  switch (c) {
    case EventCategory::video_playback: return video;
    case EventCategory::chat_message: return chat;
    case EventCategory::code_execution: return execution;
    case EventCategory::code_editor: return editor;
    case EventCategory::checkpoint_evaluation: return checkpoint;
    case EventCategory::session_management: return session;
    case EventCategory::error: return error;
  }
  return error;
}

std::vector<std::string> payload_violations(EventCategory c,
                                            const Json& payload) {
  std::vector<std::string> bad;
  if (!payload.is_object()) return {"payload"};
  const auto& schema = event_category_schema(c);
  for (const auto& field : schema) {
    const auto it = payload.find(field.name);
    if (it == payload.end()) {
      if (!field.optional) bad.push_back(field.name);
      continue;
    }
    bool ok = false;
    switch (field.type) {
      case FieldType::text: ok = it->is_string(); break;
      case FieldType::number: ok = it->is_number() && it->get<double>() >= 0; break;
      case FieldType::boolean: ok = it->is_boolean(); break;
    }
    if (ok && !field.allowed.empty()) {
      ok = std::find(field.allowed.begin(), field.allowed.end(),
                     it->get<std::string>()) != field.allowed.end();
    }
    if (!ok) bad.push_back(field.name);
  }
  if (c == EventCategory::video_playback && payload.value("action", "") == "seek") {
    for (const char* name : {"seek_from_s", "seek_to_s"}) {
      if (!payload.contains(name)) bad.push_back(name);
    }
  }
  for (const auto& [key, _] : payload.items()) {
    const bool known = std::any_of(schema.begin(), schema.end(),
                                   [&](const auto& f) { return f.name == key; });
    if (!known) bad.push_back(key);
  }
  return bad;
}

Json to_json(const InteractionEvent& e) {
  return Json{{"event_id", e.event_id},
              {"pseudonym", e.pseudonym},
              {"lesson_id", e.lesson_id},
              {"session_id", e.session_id},
              {"category", to_string(e.category)},
              {"timestamp", format_timestamp(e.timestamp)},
              {"payload", e.payload}};
}

InteractionEvent event_from_json(const Json& j) {
  InteractionEvent e;
  e.event_id = j.at("event_id").get<std::int64_t>();
  e.pseudonym = j.at("pseudonym").get<std::string>();
  e.lesson_id = j.at("lesson_id").get<std::string>();
  e.session_id = j.at("session_id").get<std::string>();
  const auto cat = parse_category(j.at("category").get<std::string>());
  if (!cat) throw Error("unknown event category in stored record");
  e.category = *cat;
  const auto ts = parse_timestamp(j.at("timestamp").get<std::string>());
  if (!ts) throw Error("malformed timestamp in stored record");
  e.timestamp = *ts;
  e.payload = j.at("payload");
  return e;
}

// ---------------------------------------------------------------------------

Json to_json(const SessionState& s) {
  Json outputs = Json::object();
  for (const auto& [cell, out] : s.cell_outputs) {
    Json o{{"output", out.output}};
    if (out.error) o["error"] = *out.error;
    outputs[cell] = std::move(o);
  }
  Json chat = Json::array();
  for (const auto& t : s.chat_context) {
    chat.push_back({{"role", t.role}, {"text", t.text}});
  }
  return Json{{"session_key", s.session_key},
              {"cell_contents", s.cell_contents},
              {"cell_outputs", std::move(outputs)},
              {"completed_checkpoints", s.completed_checkpoints},
              {"chat_context", std::move(chat)}};
}

SessionState session_from_json(const Json& j) {
  SessionState s;
  s.session_key = j.at("session_key").get<std::string>();
  s.cell_contents = j.value("cell_contents", Json::object())
                        .get<std::map<std::string, std::string>>();
  const Json outputs = j.value("cell_outputs", Json::object());
  for (const auto& [cell, o] : outputs.items()) {
    CellOutput out{o.value("output", ""), std::nullopt};
    if (o.contains("error")) out.error = o.at("error").get<std::string>();
    s.cell_outputs.emplace(cell, std::move(out));
  }
  s.completed_checkpoints = j.value("completed_checkpoints", Json::array())
                                .get<std::set<std::string>>();
  const Json chat = j.value("chat_context", Json::array());
  for (const auto& t : chat) {
    s.chat_context.push_back(
        {t.at("role").get<std::string>(), t.at("text").get<std::string>()});
  }
  return s;
}

Json to_json(const TurnTiming& t) {
  return Json{{"l_video", t.l_video.count()},
              {"l_guidance", t.l_guidance.count()},
              {"l_code", t.l_code.count()},
              {"l_synth", t.l_synth.count()},
              {"wall", t.wall.count()}};
}

TurnTiming timing_from_json(const Json& j) {
  using ms = TurnTiming::ms;
  return TurnTiming{ms{j.value("l_video", 0)}, ms{j.value("l_guidance", 0)},
                    ms{j.value("l_code", 0)}, ms{j.value("l_synth", 0)},
                    ms{j.value("wall", 0)}};
}

}  // namespace tutorwheel
