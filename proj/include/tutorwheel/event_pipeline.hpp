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

// Analytics path: events arrive carrying a raw user id, get pseudonymized at
// the boundary, and only then touch disk. Readers get a fixed set of
// per-lesson query shapes and nothing else.

#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "tutorwheel/domain.hpp"

namespace tutorwheel {

class MissingSalt : public Error {
 public:
  using Error::Error;
};

class SchemaRejection : public Error {
 public:
  explicit SchemaRejection(std::vector<std::string> fields);
  const std::vector<std::string>& fields() const { return fields_; }

 private:
  std::vector<std::string> fields_;
};

class StorageFailure : public Error {
 public:
  using Error::Error;
};

/// Secret key for pseudonymization; at least 128 bits.
class CourseSalt {
 public:
  static constexpr std::size_t kMinBytes = 16;

  /// Throws MissingSalt unless `hex` decodes to >= 16 bytes.
  static CourseSalt from_hex(std::string_view hex);
  /// Reads hex from the named environment variable.
  static CourseSalt from_env(const std::string& variable);

  const std::vector<unsigned char>& bytes() const { return bytes_; }

 private:
  explicit CourseSalt(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}
  std::vector<unsigned char> bytes_;
};

/// HMAC-SHA256(salt, user_id), first 16 lowercase hex characters.
Pseudonym pseudonymize(std::string_view user_id, const CourseSalt& salt);

/// Same construction over "session:" + session_id.
std::string pseudonymize_session(std::string_view session_id, const CourseSalt& salt);

/// Append-only storage. Implementations assign strictly increasing ids.
class EventStore {
 public:
  virtual ~EventStore() = default;

  /// Assigns event.event_id and persists. Throws StorageFailure.
  virtual std::int64_t append(InteractionEvent event) = 0;

  /// All events of one lesson ordered by event id.
  virtual std::vector<InteractionEvent> lesson_events(std::string_view lesson_id) = 0;
  virtual std::vector<std::string> lessons() = 0;
  virtual bool healthy() = 0;

  /// Calls to lesson_events() and lessons() so far.
  std::uint64_t read_count() const { return reads_.load(); }

 protected:
  void note_read() { ++reads_; }

 private:
  std::atomic<std::uint64_t> reads_{0};
};

/// One JSONL file per (lesson, UTC day) under `root/<lesson>/<day>.jsonl`.
/// The in-memory index is rebuilt at open and topped up from the files on
/// every read, so a reader in another process sees new appends.
class JsonlEventStore final : public EventStore {
 public:
  explicit JsonlEventStore(std::filesystem::path root);

  std::int64_t append(InteractionEvent event) override;
  std::vector<InteractionEvent> lesson_events(std::string_view lesson_id) override;
  std::vector<std::string> lessons() override;
  bool healthy() override;

  const std::filesystem::path& root() const { return root_; }

 private:
  void refresh_locked();
  void index_locked(InteractionEvent e);

  std::filesystem::path root_;
  std::shared_mutex mutex_;
  std::map<std::string, std::vector<InteractionEvent>, std::less<>> by_lesson_;
  std::map<std::filesystem::path, std::uintmax_t> offsets_;
  std::int64_t last_id_ = 0;
};

/// Ingestion boundary: validate, pseudonymize, append.
class IngestionService {
 public:
  IngestionService(EventStore& store, CourseSalt salt);

  /// Accepts {user_id, lesson_id, session_id, category, timestamp, payload}.
  /// Throws SchemaRejection (client error) or StorageFailure.
  std::int64_t ingest(const Json& raw);

  EventStore& store() { return store_; }

 private:
  EventStore& store_;
  CourseSalt salt_;
};

// ---------------------------------------------------------------------------
// Fixed query surface.

struct SummaryBlock {
  std::string lesson_id;
  std::size_t total_students = 0;
  std::size_t total_sessions = 0;
  std::map<EventCategory, std::size_t> counts;
  std::size_t code_execution_succeeded = 0;

  std::size_t total_events() const;
  std::size_t count(EventCategory c) const;
  bool operator==(const SummaryBlock&) const = default;
};

Json to_json(const SummaryBlock& s);
SummaryBlock summary_from_json(const Json& j);

inline constexpr std::size_t kChatTruncation = 300;

struct ChatEntry {
  UnixMillis timestamp = 0;
  std::string sender;
  std::string text;  // at most kChatTruncation code points
};

struct VideoEntry {
  UnixMillis timestamp = 0;
  std::string action;  // play | pause | seek
  double position_s = 0;
  std::optional<double> seek_from_s;
  std::optional<double> seek_to_s;
};

struct CodeEntry {
  enum class Kind { execution, edit, checkpoint };
  UnixMillis timestamp = 0;
  Kind kind = Kind::execution;
  std::string cell_id;
  std::optional<bool> passed;
  std::string error_message;
  std::string checkpoint_id;
  std::string reasoning;
};

/// Per-pseudonym streams, each ordered by timestamp then event id.
struct LessonStreams {
  std::map<std::string, std::vector<ChatEntry>> chat;
  std::map<std::string, std::vector<VideoEntry>> video;
  std::map<std::string, std::vector<CodeEntry>> code;
  std::map<std::string, std::vector<std::pair<UnixMillis, std::string>>> sessions;
  std::map<std::string, std::vector<std::pair<UnixMillis, std::string>>> errors;

  std::set<std::string> pseudonyms() const;
};

LessonStreams query_lesson_streams(EventStore& store, std::string_view lesson_id);
SummaryBlock lesson_summary(EventStore& store, std::string_view lesson_id);

/// Streams and summary from one read of the store.
std::pair<LessonStreams, SummaryBlock> query_lesson(EventStore& store, std::string_view lesson_id);

// ---------------------------------------------------------------------------
// Fire-and-forget emission from the student-facing services.

class EventSink {
 public:
  virtual ~EventSink() = default;
  /// Never throws; failures are logged and counted.
  virtual void emit(const Json& raw_event) noexcept = 0;

  std::uint64_t attempts() const { return attempts_.load(); }
  std::uint64_t failures() const { return failures_.load(); }

 protected:
  void note_attempt() { ++attempts_; }
  void note_failure() { ++failures_; }

 private:
  std::atomic<std::uint64_t> attempts_{0};
  std::atomic<std::uint64_t> failures_{0};
};

/// Ingests in-process.
class LocalEventSink final : public EventSink {
 public:
  explicit LocalEventSink(IngestionService& ingestion) : ingestion_(ingestion) {}
  void emit(const Json& raw_event) noexcept override;

 private:
  IngestionService& ingestion_;
};

/// Keeps events in memory; handy in tests. `fail` simulates a dead pipeline.
class RecordingEventSink final : public EventSink {
 public:
  void emit(const Json& raw_event) noexcept override;
  std::vector<Json> events() const;
  void set_failing(bool fail) { failing_ = fail; }

 private:
  mutable std::mutex mutex_;
  std::vector<Json> events_;
  std::atomic<bool> failing_{false};
};

/// Builds the raw wire form of an event the services emit themselves.
Json make_raw_event(std::string_view user_id, std::string_view lesson_id,
                    std::string_view session_id, EventCategory category, UnixMillis timestamp,
                    Json payload);

}  // namespace tutorwheel
