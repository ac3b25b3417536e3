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

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "tutorwheel/domain.hpp"
#include "tutorwheel/lesson.hpp"

struct sqlite3;

namespace tutorwheel {

class InvalidId : public Error {
 public:
  explicit InvalidId(const std::string& id) : Error("invalid id: '" + id + "'") {}
};

class SessionNotFound : public Error {
 public:
  explicit SessionNotFound(const std::string& key) : Error("session not found: " + key) {}
};

class StorageUnavailable : public Error {
 public:
  using Error::Error;
};

/// "session_" + user_id + "_" + lesson_id. Both ids must be slugs (no '_').
std::string session_key(std::string_view user_id, std::string_view lesson_id);

struct SessionKeyParts {
  std::string user_id;
  std::string lesson_id;
};

std::optional<SessionKeyParts> parse_session_key(std::string_view key);

/// Durable per-student per-lesson state. Single-key writes are atomic.
class SessionStore {
 public:
  virtual ~SessionStore() = default;

  virtual std::optional<SessionState> load(std::string_view key) = 0;
  virtual void save(std::string_view key, const SessionState& state) = 0;
  virtual bool healthy() = 0;

  struct Created {
    SessionState state;
    bool created = false;
  };

  /// Idempotent per (user, lesson): a second call returns the stored state.
  Created create(std::string_view user_id, const LessonContent& lesson);

 protected:
  /// Stores `state` unless the key exists; returns the stored value.
  virtual Created insert_if_absent(const SessionState& state) = 0;
};

class InMemorySessionStore final : public SessionStore {
 public:
  std::optional<SessionState> load(std::string_view key) override;
  void save(std::string_view key, const SessionState& state) override;
  bool healthy() override { return true; }
  std::size_t size() const;

 protected:
  Created insert_if_absent(const SessionState& state) override;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, SessionState, std::less<>> sessions_;
};

/// Shared SQLite handle; one connection serialized by a mutex.
class SqliteDatabase {
 public:
  explicit SqliteDatabase(const std::filesystem::path& path);
  ~SqliteDatabase();
  SqliteDatabase(const SqliteDatabase&) = delete;
  SqliteDatabase& operator=(const SqliteDatabase&) = delete;

  std::optional<std::string> get(std::string_view table, std::string_view key);
  void put(std::string_view table, std::string_view key, std::string_view doc);
  /// Returns the stored doc: `doc` if it was inserted, the existing one otherwise.
  std::pair<std::string, bool> put_if_absent(std::string_view table, std::string_view key,
                                             std::string_view doc);
  std::size_t count(std::string_view table);
  bool ping();

 private:
  void exec(const char* sql);
  std::mutex mutex_;
  sqlite3* db_ = nullptr;
};

class SqliteSessionStore final : public SessionStore {
 public:
  explicit SqliteSessionStore(std::shared_ptr<SqliteDatabase> db);
  explicit SqliteSessionStore(const std::filesystem::path& path);

  std::optional<SessionState> load(std::string_view key) override;
  void save(std::string_view key, const SessionState& state) override;
  bool healthy() override;
  std::size_t size();

  const std::shared_ptr<SqliteDatabase>& database() const { return db_; }

 protected:
  Created insert_if_absent(const SessionState& state) override;

 private:
  std::shared_ptr<SqliteDatabase> db_;
};

/// Per-session mutual exclusion shared by teaching turns and grading.
class SessionLocks {
 public:
  std::unique_lock<std::mutex> acquire(std::string_view key);

 private:
  std::mutex mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>, std::less<>> locks_;
};

}  // namespace tutorwheel
