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

#include "tutorwheel/session_store.hpp"

#include <fmt/format.h>
#include <sqlite3.h>

namespace tutorwheel {

std::string session_key(std::string_view user_id, std::string_view lesson_id) {
  if (!is_slug(user_id)) throw InvalidId(std::string(user_id));
  if (!is_slug(lesson_id)) throw InvalidId(std::string(lesson_id));
  return fmt::format("session_{}_{}", user_id, lesson_id);
}

std::optional<SessionKeyParts> parse_session_key(std::string_view key) {
  constexpr std::string_view prefix = "session_";
  if (!key.starts_with(prefix)) return std::nullopt;
  key.remove_prefix(prefix.size());
  const auto sep = key.find('_');
  if (sep == std::string_view::npos) return std::nullopt;
  SessionKeyParts parts{std::string(key.substr(0, sep)), std::string(key.substr(sep + 1))};
  if (!is_slug(parts.user_id) || !is_slug(parts.lesson_id)) return std::nullopt;
  return parts;
}

SessionStore::Created SessionStore::create(std::string_view user_id,
                                           const LessonContent& lesson) {
  SessionState initial;
  initial.session_key = session_key(user_id, lesson.lesson_id);
  for (const auto& cell : lesson.cells) {
    if (cell.editable) initial.cell_contents.emplace(cell.cell_id, cell.initial_source);
  }
  return insert_if_absent(initial);
}

// ---------------------------------------------------------------------------

std::optional<SessionState> InMemorySessionStore::load(std::string_view key) {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(key);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

void InMemorySessionStore::save(std::string_view key, const SessionState& state) {
  std::lock_guard lock(mutex_);
  sessions_.insert_or_assign(std::string(key), state);
}

std::size_t InMemorySessionStore::size() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

SessionStore::Created InMemorySessionStore::insert_if_absent(const SessionState& state) {
  std::lock_guard lock(mutex_);
  const auto [it, inserted] = sessions_.try_emplace(state.session_key, state);
  return {it->second, inserted};
}

// ---------------------------------------------------------------------------

namespace {

struct Statement {
  sqlite3_stmt* stmt = nullptr;
  Statement(sqlite3* db, const std::string& sql) {
    if (sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt, nullptr) != SQLITE_OK) {
      throw StorageUnavailable(fmt::format("sqlite prepare failed: {}", sqlite3_errmsg(db)));
    }
  }
  ~Statement() { sqlite3_finalize(stmt); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  void bind(int index, std::string_view text) {
    sqlite3_bind_text(stmt, index, text.data(), static_cast<int>(text.size()), SQLITE_TRANSIENT);
  }
};

std::string table_name(std::string_view table) {
  if (table != "sessions" && table != "conversations") {
    throw StorageUnavailable("unknown table: " + std::string(table));
  }
  return std::string(table);
}

}  // namespace

SqliteDatabase::SqliteDatabase(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  if (sqlite3_open(path.string().c_str(), &db_) != SQLITE_OK) {
    const std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    db_ = nullptr;
    throw StorageUnavailable(fmt::format("cannot open session database {}: {}", path.string(), msg));
  }
  sqlite3_busy_timeout(db_, 5000);
  exec("PRAGMA journal_mode=WAL");
  exec("PRAGMA synchronous=NORMAL");
  exec("CREATE TABLE IF NOT EXISTS sessions (key TEXT PRIMARY KEY, doc TEXT NOT NULL)");
  exec("CREATE TABLE IF NOT EXISTS conversations (key TEXT PRIMARY KEY, doc TEXT NOT NULL)");
}

SqliteDatabase::~SqliteDatabase() { sqlite3_close(db_); }

void SqliteDatabase::exec(const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw StorageUnavailable(fmt::format("sqlite error: {}", msg));
  }
}

std::optional<std::string> SqliteDatabase::get(std::string_view table, std::string_view key) {
  std::lock_guard lock(mutex_);
  Statement st(db_, "SELECT doc FROM " + table_name(table) + " WHERE key = ?1");
  st.bind(1, key);
  const int rc = sqlite3_step(st.stmt);
  if (rc == SQLITE_DONE) return std::nullopt;
  if (rc != SQLITE_ROW) {
    throw StorageUnavailable(fmt::format("sqlite read failed: {}", sqlite3_errmsg(db_)));
  }
  const auto* text = reinterpret_cast<const char*>(sqlite3_column_text(st.stmt, 0));
  return std::string(text, static_cast<std::size_t>(sqlite3_column_bytes(st.stmt, 0)));
}

void SqliteDatabase::put(std::string_view table, std::string_view key, std::string_view doc) {
  std::lock_guard lock(mutex_);
  Statement st(db_, "INSERT INTO " + table_name(table) +
                        " (key, doc) VALUES (?1, ?2) ON CONFLICT(key) DO UPDATE SET doc = excluded.doc");
  st.bind(1, key);
  st.bind(2, doc);
  if (sqlite3_step(st.stmt) != SQLITE_DONE) {
    throw StorageUnavailable(fmt::format("sqlite write failed: {}", sqlite3_errmsg(db_)));
  }
}

std::pair<std::string, bool> SqliteDatabase::put_if_absent(std::string_view table,
                                                           std::string_view key,
                                                           std::string_view doc) {
  std::lock_guard lock(mutex_);
  const auto name = table_name(table);
  {
    Statement st(db_, "INSERT OR IGNORE INTO " + name + " (key, doc) VALUES (?1, ?2)");
    st.bind(1, key);
    st.bind(2, doc);
    if (sqlite3_step(st.stmt) != SQLITE_DONE) {
      throw StorageUnavailable(fmt::format("sqlite write failed: {}", sqlite3_errmsg(db_)));
    }
    if (sqlite3_changes(db_) > 0) return {std::string(doc), true};
  }
  Statement st(db_, "SELECT doc FROM " + name + " WHERE key = ?1");
  st.bind(1, key);
  if (sqlite3_step(st.stmt) != SQLITE_ROW) {
    throw StorageUnavailable(fmt::format("sqlite read failed: {}", sqlite3_errmsg(db_)));
  }
  const auto* text = reinterpret_cast<const char*>(sqlite3_column_text(st.stmt, 0));
  return {std::string(text, static_cast<std::size_t>(sqlite3_column_bytes(st.stmt, 0))), false};
}

std::size_t SqliteDatabase::count(std::string_view table) {
  std::lock_guard lock(mutex_);
  Statement st(db_, "SELECT COUNT(*) FROM " + table_name(table));
  if (sqlite3_step(st.stmt) != SQLITE_ROW) {
    throw StorageUnavailable(fmt::format("sqlite read failed: {}", sqlite3_errmsg(db_)));
  }
  return static_cast<std::size_t>(sqlite3_column_int64(st.stmt, 0));
}

bool SqliteDatabase::ping() {
  std::lock_guard lock(mutex_);
  try {
    Statement st(db_, "SELECT COUNT(*) FROM sessions");
    return sqlite3_step(st.stmt) == SQLITE_ROW;
  } catch (const StorageUnavailable&) {
    return false;
  }
}

// ---------------------------------------------------------------------------

SqliteSessionStore::SqliteSessionStore(std::shared_ptr<SqliteDatabase> db) : db_(std::move(db)) {}

SqliteSessionStore::SqliteSessionStore(const std::filesystem::path& path)
    : db_(std::make_shared<SqliteDatabase>(path)) {}

std::optional<SessionState> SqliteSessionStore::load(std::string_view key) {
  auto doc = db_->get("sessions", key);
  if (!doc) return std::nullopt;
  return session_from_json(Json::parse(*doc));
}

void SqliteSessionStore::save(std::string_view key, const SessionState& state) {
  db_->put("sessions", key, to_json(state).dump());
}

bool SqliteSessionStore::healthy() { return db_->ping(); }

std::size_t SqliteSessionStore::size() { return db_->count("sessions"); }

SessionStore::Created SqliteSessionStore::insert_if_absent(const SessionState& state) {
  auto [doc, inserted] = db_->put_if_absent("sessions", state.session_key, to_json(state).dump());
  return {session_from_json(Json::parse(doc)), inserted};
}

// ---------------------------------------------------------------------------

std::unique_lock<std::mutex> SessionLocks::acquire(std::string_view key) {
  std::mutex* m = nullptr;
  {
    std::lock_guard lock(mutex_);
    auto it = locks_.find(key);
    if (it == locks_.end()) {
      it = locks_.emplace(std::string(key), std::make_unique<std::mutex>()).first;
    }
    m = it->second.get();
  }
  return std::unique_lock(*m);
}

}  // namespace tutorwheel
