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

// Shared helpers for unit and acceptance tests.

#pragma once

#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>

#include "httplib.h"
#include "tutorwheel/classroom_sim.hpp"
#include "tutorwheel/service.hpp"

namespace tutorwheel::testing {

namespace fs = std::filesystem;

inline const fs::path kSourceDir = TUTORWHEEL_SOURCE_DIR;
inline const fs::path kLessonsDir = kSourceDir / "lessons";
inline const fs::path kFixturesDir = kSourceDir / "fixtures";

inline constexpr const char* kToken = "test-token-7f3a";
inline constexpr const char* kSaltHex = "000102030405060708090a0b0c0d0e0f";

inline void set_test_env() {
  ::setenv("TUTORWHEEL_API_TOKEN", kToken, 1);
  ::setenv("TUTORWHEEL_COURSE_SALT", kSaltHex, 1);
}

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "tutorwheel-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw Error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline Json fixture_rules() { return Json::parse(read_file(kFixturesDir / "scripted_rules.json")); }

inline const LessonCatalog& lesson_catalog() {
  static const LessonCatalog catalog = LessonCatalog::load_directory(kLessonsDir);
  return catalog;
}

inline const LessonContent& qis_m2() { return *lesson_catalog().find("qis-m2"); }

/// Config with every store under `dir` and ephemeral ports.
inline GatewayConfig test_config(const fs::path& dir) {
  GatewayConfig c;
  c.base_dir = kFixturesDir;
  c.lessons_dir = kLessonsDir;
  c.session_db = dir / "sessions.db";
  c.event_store_dir = dir / "events";
  c.model_backend = Json{{"kind", "scripted"}, {"rules", "scripted_rules.json"}};
  for (const auto s : kAllServices) c.listen[s] = ListenAddress{"127.0.0.1", 0};
  return c;
}

inline std::set<Service> all_services() { return {kAllServices.begin(), kAllServices.end()}; }

inline sim::Endpoints endpoints_of(const ServiceHost& host) {
  return {host.url(Service::teaching), host.url(Service::autograde), host.url(Service::events),
          host.url(Service::feedback), kToken};
}

/// Minimal JSON client with the bearer token.
class Api {
 public:
  explicit Api(const std::string& base_url, std::string token = kToken)
      : client_(base_url), token_(std::move(token)) {
    client_.set_read_timeout(60, 0);
    client_.set_tcp_nodelay(true);
  }

  struct Reply {
    int status = 0;
    Json body;
  };

  Reply get(const std::string& path) { return wrap(client_.Get(path, headers())); }
  Reply post(const std::string& path, const Json& body) {
    return wrap(client_.Post(path, headers(), body.dump(), "application/json"));
  }
  Reply put(const std::string& path, const Json& body) {
    return wrap(client_.Put(path, headers(), body.dump(), "application/json"));
  }
  Reply post_raw(const std::string& path, const std::string& body) {
    return wrap(client_.Post(path, headers(), body, "application/json"));
  }

 private:
  httplib::Headers headers() const {
    if (token_.empty()) return {};
    return {{"Authorization", "Bearer " + token_}};
  }
  static Reply wrap(const httplib::Result& res) {
    if (!res) return {-1, Json()};
    return {res->status, Json::parse(res->body, nullptr, false)};
  }

  httplib::Client client_;
  std::string token_;
};

/// Replies from a fixed queue, then repeats the last entry. Records prompts.
class SequenceBackend final : public ModelBackend {
 public:
  explicit SequenceBackend(std::deque<std::string> replies) : replies_(std::move(replies)) {}

  std::string complete(const BackendRequest& request, std::chrono::milliseconds) override {
    std::lock_guard lock(mutex_);
    prompts_.push_back(request.prompt.text());
    if (replies_.size() > 1) {
      auto r = replies_.front();
      replies_.pop_front();
      return r;
    }
    return replies_.front();
  }
  BackendKind kind() const override { return BackendKind::scripted; }

  std::vector<std::string> prompts() const {
    std::lock_guard lock(mutex_);
    return prompts_;
  }

 private:
  mutable std::mutex mutex_;
  std::deque<std::string> replies_;
  std::vector<std::string> prompts_;
};

/// Pipeline with in-memory stores and a local event store in `dir`.
struct Stack {
  explicit Stack(const fs::path& dir, std::shared_ptr<ModelBackend> backend)
      : gateway(std::move(backend)),
        events(dir / "events"),
        ingestion(events, CourseSalt::from_hex(kSaltHex)),
        sink(ingestion),
        teaching(lesson_catalog(), sessions, locks, gateway, sink),
        grader(lesson_catalog(), sessions, locks, gateway, sink) {}

  SessionState create(const std::string& user) {
    return sessions.create(user, qis_m2()).state;
  }

  ModelGateway gateway;
  InMemorySessionStore sessions;
  SessionLocks locks;
  JsonlEventStore events;
  IngestionService ingestion;
  LocalEventSink sink;
  TeachingOrchestrator teaching;
  Autograder grader;
};

}  // namespace tutorwheel::testing
