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

#include "tutorwheel/event_pipeline.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <spdlog/spdlog.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>

namespace tutorwheel {

namespace fs = std::filesystem;

SchemaRejection::SchemaRejection(std::vector<std::string> fields)
    : Error([&] {
        std::string joined;
        for (const auto& f : fields) joined += (joined.empty() ? "" : ", ") + f;
        return "event rejected; offending fields: " + joined;
      }()),
      fields_(std::move(fields)) {}

// ---------------------------------------------------------------------------

namespace {

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string hmac_hex(const CourseSalt& salt, std::string_view message, std::size_t hex_chars) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  const auto& key = salt.bytes();
  if (HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()),
           reinterpret_cast<const unsigned char*>(message.data()), message.size(), digest,
           &length) == nullptr) {
    throw Error("HMAC-SHA256 failed");
  }
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length && out.size() < hex_chars; ++i) {
    out += kDigits[digest[i] >> 4];
    out += kDigits[digest[i] & 0x0f];
  }
  out.resize(hex_chars);
  return out;
}

bool slug_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-';
}

// Replaces occurrences of `needle` not embedded in a longer slug.
std::string replace_token(std::string_view text, std::string_view needle,
                          std::string_view replacement) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto hit = text.find(needle, pos);
    if (hit == std::string_view::npos) break;
    const auto end = hit + needle.size();
    const bool left_ok = hit == 0 || !slug_char(text[hit - 1]);
    const bool right_ok = end == text.size() || !slug_char(text[end]);
    out.append(text.substr(pos, hit - pos));
    out.append(left_ok && right_ok ? replacement : needle);
    pos = end;
  }
  out.append(text.substr(pos));
  return out;
}

void scrub(Json& value, std::string_view user_id, std::string_view pseudonym) {
  if (value.is_string()) {
    value = replace_token(value.get_ref<const std::string&>(), user_id, pseudonym);
  } else if (value.is_structured()) {
    for (auto& child : value) scrub(child, user_id, pseudonym);
  }
}

}  // namespace

CourseSalt CourseSalt::from_hex(std::string_view hex) {
  const auto text = trim(hex);
  if (text.empty()) throw MissingSalt("course salt is empty");
  if (text.size() % 2 != 0) throw MissingSalt("course salt must be an even number of hex digits");
  std::vector<unsigned char> bytes;
  for (std::size_t i = 0; i < text.size(); i += 2) {
    const int hi = hex_value(text[i]);
    const int lo = hex_value(text[i + 1]);
    if (hi < 0 || lo < 0) throw MissingSalt("course salt must be hexadecimal");
    bytes.push_back(static_cast<unsigned char>(hi * 16 + lo));
  }
  if (bytes.size() < kMinBytes) {
    throw MissingSalt(fmt::format("course salt must carry at least {} bits", kMinBytes * 8));
  }
  return CourseSalt(std::move(bytes));
}

CourseSalt CourseSalt::from_env(const std::string& variable) {
  const char* value = std::getenv(variable.c_str());
  if (value == nullptr) throw MissingSalt("course salt variable " + variable + " is not set");
  return from_hex(value);
}

Pseudonym pseudonymize(std::string_view user_id, const CourseSalt& salt) {
  return Pseudonym{hmac_hex(salt, user_id, Pseudonym::kLength)};
}

std::string pseudonymize_session(std::string_view session_id, const CourseSalt& salt) {
  return hmac_hex(salt, "session:" + std::string(session_id), Pseudonym::kLength);
}

// ---------------------------------------------------------------------------

JsonlEventStore::JsonlEventStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw StorageFailure(fmt::format("cannot create {}: {}", root_.string(), ec.message()));
  std::unique_lock lock(mutex_);
  refresh_locked();
}

void JsonlEventStore::index_locked(InteractionEvent e) {
  last_id_ = std::max(last_id_, e.event_id);
  auto& events = by_lesson_[e.lesson_id];
  const auto at = std::upper_bound(
      events.begin(), events.end(), e.event_id,
      [](std::int64_t id, const InteractionEvent& x) { return id < x.event_id; });
  events.insert(at, std::move(e));
}

void JsonlEventStore::refresh_locked() {
  std::error_code ec;
  if (!fs::is_directory(root_, ec)) return;
  std::vector<fs::path> files;
  for (const auto& lesson_dir : fs::directory_iterator(root_, ec)) {
    if (!lesson_dir.is_directory()) continue;
    for (const auto& entry : fs::directory_iterator(lesson_dir.path(), ec)) {
      if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
        files.push_back(entry.path());
      }
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    const auto size = fs::file_size(file, ec);
    if (ec) continue;
    auto& offset = offsets_[file];
    if (size <= offset) continue;
    std::ifstream in(file, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(offset));
    std::string chunk(size - offset, '\0');
    in.read(chunk.data(), static_cast<std::streamsize>(chunk.size()));
    chunk.resize(static_cast<std::size_t>(in.gcount()));
    // A trailing line without '\n' is still being written; pick it up later.
    const auto last_newline = chunk.rfind('\n');
    if (last_newline == std::string::npos) continue;
    std::size_t start = 0;
    while (start <= last_newline) {
      const auto end = chunk.find('\n', start);
      const auto line = std::string_view(chunk).substr(start, end - start);
      start = end + 1;
      if (trim(line).empty()) continue;
      try {
        index_locked(event_from_json(Json::parse(line)));
      } catch (const std::exception& ex) {
        spdlog::warn("skipping corrupt event line in {}: {}", file.string(), ex.what());
      }
    }
    offset += last_newline + 1;
  }
}

std::int64_t JsonlEventStore::append(InteractionEvent event) {
  std::unique_lock lock(mutex_);
  refresh_locked();
  event.event_id = last_id_ + 1;
  const auto dir = root_ / event.lesson_id;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw StorageFailure(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  const auto file = dir / (day_of(event.timestamp) + ".jsonl");
  {
    std::ofstream out(file, std::ios::binary | std::ios::app);
    if (!out) throw StorageFailure("cannot open " + file.string());
    out << to_json(event).dump() << '\n';
    out.flush();
    if (!out) throw StorageFailure("cannot write " + file.string());
  }
  refresh_locked();
  return event.event_id;
}

std::vector<InteractionEvent> JsonlEventStore::lesson_events(std::string_view lesson_id) {
  note_read();
  std::unique_lock lock(mutex_);
  refresh_locked();
  const auto it = by_lesson_.find(lesson_id);
  if (it == by_lesson_.end()) return {};
  return it->second;
}

std::vector<std::string> JsonlEventStore::lessons() {
  note_read();
  std::unique_lock lock(mutex_);
  refresh_locked();
  std::vector<std::string> ids;
  for (const auto& [id, events] : by_lesson_) {
    if (!events.empty()) ids.push_back(id);
  }
  return ids;
}

bool JsonlEventStore::healthy() {
  std::error_code ec;
  return fs::is_directory(root_, ec) && ::access(root_.c_str(), W_OK) == 0;
}

// ---------------------------------------------------------------------------

IngestionService::IngestionService(EventStore& store, CourseSalt salt)
    : store_(store), salt_(std::move(salt)) {}

std::int64_t IngestionService::ingest(const Json& raw) {
  static const std::set<std::string> kTopLevel{"user_id",  "lesson_id", "session_id",
                                               "category", "timestamp", "payload"};
  if (!raw.is_object()) throw SchemaRejection({"<body>"});

  std::vector<std::string> bad;
  const auto text_field = [&](const char* name, bool slug) -> std::string {
    const auto it = raw.find(name);
    if (it == raw.end() || !it->is_string() || it->get_ref<const std::string&>().empty() ||
        (slug && !is_slug(it->get_ref<const std::string&>()))) {
      bad.emplace_back(name);
      return {};
    }
    return it->get<std::string>();
  };
  const auto user_id = text_field("user_id", true);
  const auto lesson_id = text_field("lesson_id", true);
  const auto session_id = text_field("session_id", false);

  std::optional<EventCategory> category;
  if (const auto it = raw.find("category"); it != raw.end() && it->is_string()) {
    category = parse_category(it->get_ref<const std::string&>());
  }
  if (!category) bad.emplace_back("category");

  std::optional<UnixMillis> timestamp;
  if (const auto it = raw.find("timestamp"); it != raw.end()) {
    if (it->is_string()) {
      timestamp = parse_timestamp(it->get_ref<const std::string&>());
    } else if (it->is_number_integer() && it->get<std::int64_t>() >= 0) {
      timestamp = it->get<std::int64_t>();
    }
  }
  if (!timestamp) bad.emplace_back("timestamp");

  const auto payload_it = raw.find("payload");
  if (payload_it == raw.end() || !payload_it->is_object()) {
    bad.emplace_back("payload");
  } else if (category) {
    for (auto& f : payload_violations(*category, *payload_it)) bad.push_back("payload." + f);
  }

  for (const auto& [key, value] : raw.items()) {
    if (!kTopLevel.contains(key)) bad.push_back(key);
  }
  if (!bad.empty()) throw SchemaRejection(std::move(bad));

  InteractionEvent event;
  event.pseudonym = pseudonymize(user_id, salt_).value;
  event.lesson_id = lesson_id;
  event.session_id = pseudonymize_session(session_id, salt_);
  event.category = *category;
  event.timestamp = *timestamp;
  event.payload = *payload_it;
  scrub(event.payload, user_id, event.pseudonym);
  return store_.append(std::move(event));
}

// ---------------------------------------------------------------------------

std::size_t SummaryBlock::total_events() const {
  std::size_t total = 0;
  for (const auto& [c, n] : counts) total += n;
  return total;
}

std::size_t SummaryBlock::count(EventCategory c) const {
  const auto it = counts.find(c);
  return it == counts.end() ? 0 : it->second;
}

Json to_json(const SummaryBlock& s) {
  Json counts = Json::object();
  for (const auto c : kAllCategories) counts[std::string(to_string(c))] = s.count(c);
  return {{"lesson_id", s.lesson_id},
          {"total_students", s.total_students},
          {"total_sessions", s.total_sessions},
          {"total_events", s.total_events()},
          {"counts", counts},
          {"code_execution_succeeded", s.code_execution_succeeded}};
}

SummaryBlock summary_from_json(const Json& j) {
  SummaryBlock s;
  s.lesson_id = j.at("lesson_id").get<std::string>();
  s.total_students = j.at("total_students").get<std::size_t>();
  s.total_sessions = j.at("total_sessions").get<std::size_t>();
  s.code_execution_succeeded = j.at("code_execution_succeeded").get<std::size_t>();
  for (const auto& [name, n] : j.at("counts").items()) {
    const auto c = parse_category(name);
    if (!c) throw Error("unknown category in summary: " + name);
    s.counts[*c] = n.get<std::size_t>();
  }
  return s;
}

std::set<std::string> LessonStreams::pseudonyms() const {
  std::set<std::string> out;
  const auto collect = [&](const auto& m) {
    for (const auto& [p, v] : m) out.insert(p);
  };
  collect(chat);
  collect(video);
  collect(code);
  collect(sessions);
  collect(errors);
  return out;
}

namespace {

std::string text_or_empty(const Json& payload, const char* key) {
  const auto it = payload.find(key);
  return it != payload.end() && it->is_string() ? it->get<std::string>() : std::string();
}

std::optional<double> number_or_none(const Json& payload, const char* key) {
  const auto it = payload.find(key);
  if (it == payload.end() || !it->is_number()) return std::nullopt;
  return it->get<double>();
}

}  // namespace

std::pair<LessonStreams, SummaryBlock> query_lesson(EventStore& store,
                                                    std::string_view lesson_id) {
  auto events = store.lesson_events(lesson_id);
  std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
    return a.timestamp < b.timestamp;
  });

  LessonStreams streams;
  SummaryBlock summary;
  summary.lesson_id = std::string(lesson_id);
  for (const auto c : kAllCategories) summary.counts[c] = 0;
  std::set<std::string> students;
  std::set<std::string> sessions;

  for (const auto& e : events) {
    students.insert(e.pseudonym);
    sessions.insert(e.session_id);
    ++summary.counts[e.category];
    const auto& p = e.payload;
    switch (e.category) {
      case EventCategory::chat_message:
        streams.chat[e.pseudonym].push_back(
            {e.timestamp, text_or_empty(p, "sender"),
             utf8_prefix(text_or_empty(p, "text"), kChatTruncation)});
        break;
      case EventCategory::video_playback:
        streams.video[e.pseudonym].push_back({e.timestamp, text_or_empty(p, "action"),
                                              number_or_none(p, "position_s").value_or(0),
                                              number_or_none(p, "seek_from_s"),
                                              number_or_none(p, "seek_to_s")});
        break;
      case EventCategory::code_execution: {
        CodeEntry c;
        c.timestamp = e.timestamp;
        c.kind = CodeEntry::Kind::execution;
        c.cell_id = text_or_empty(p, "cell_id");
        c.passed = p.value("success", false);
        c.error_message = text_or_empty(p, "error_message");
        if (*c.passed) ++summary.code_execution_succeeded;
        streams.code[e.pseudonym].push_back(std::move(c));
        break;
      }
      case EventCategory::code_editor: {
        CodeEntry c;
        c.timestamp = e.timestamp;
        c.kind = CodeEntry::Kind::edit;
        c.cell_id = text_or_empty(p, "cell_id");
        streams.code[e.pseudonym].push_back(std::move(c));
        break;
      }
      case EventCategory::checkpoint_evaluation: {
        CodeEntry c;
        c.timestamp = e.timestamp;
        c.kind = CodeEntry::Kind::checkpoint;
        c.cell_id = text_or_empty(p, "cell_id");
        c.checkpoint_id = text_or_empty(p, "checkpoint_id");
        c.passed = p.value("passed", false);
        c.reasoning = text_or_empty(p, "reasoning");
        streams.code[e.pseudonym].push_back(std::move(c));
        break;
      }
      case EventCategory::session_management:
        streams.sessions[e.pseudonym].emplace_back(e.timestamp, text_or_empty(p, "action"));
        break;
      case EventCategory::error:
        streams.errors[e.pseudonym].emplace_back(
            e.timestamp, text_or_empty(p, "source") + ": " + text_or_empty(p, "message"));
        break;
    }
  }
  summary.total_students = students.size();
  summary.total_sessions = sessions.size();
  return {std::move(streams), std::move(summary)};
}

LessonStreams query_lesson_streams(EventStore& store, std::string_view lesson_id) {
  return query_lesson(store, lesson_id).first;
}

SummaryBlock lesson_summary(EventStore& store, std::string_view lesson_id) {
  return query_lesson(store, lesson_id).second;
}

// ---------------------------------------------------------------------------

void LocalEventSink::emit(const Json& raw_event) noexcept {
  note_attempt();
  try {
    ingestion_.ingest(raw_event);
  } catch (const std::exception& ex) {
    note_failure();
    spdlog::warn("event emission failed: {}", ex.what());
  }
}

void RecordingEventSink::emit(const Json& raw_event) noexcept {
  note_attempt();
  if (failing_) {
    note_failure();
    return;
  }
  std::lock_guard lock(mutex_);
  events_.push_back(raw_event);
}

std::vector<Json> RecordingEventSink::events() const {
  std::lock_guard lock(mutex_);
  return events_;
}

Json make_raw_event(std::string_view user_id, std::string_view lesson_id,
                    std::string_view session_id, EventCategory category, UnixMillis timestamp,
                    Json payload) {
  return {{"user_id", user_id},
          {"lesson_id", lesson_id},
          {"session_id", session_id},
          {"category", to_string(category)},
          {"timestamp", format_timestamp(timestamp)},
          {"payload", std::move(payload)}};
}

}  // namespace tutorwheel
