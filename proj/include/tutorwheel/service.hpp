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

// HTTP surface of the four services. Each service gets its own listener;
// a host can run any subset of them in one process.

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "tutorwheel/autograder.hpp"
#include "tutorwheel/event_pipeline.hpp"
#include "tutorwheel/feedback.hpp"
#include "tutorwheel/lesson.hpp"
#include "tutorwheel/model_gateway.hpp"
#include "tutorwheel/session_store.hpp"
#include "tutorwheel/teaching.hpp"

namespace httplib {
class Server;
}

namespace tutorwheel {

enum class Service { teaching, autograde, events, feedback };

inline constexpr std::array kAllServices{Service::teaching, Service::autograde, Service::events,
                                         Service::feedback};

std::string_view to_string(Service s);
std::optional<Service> parse_service(std::string_view s);

struct ListenAddress {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 binds an ephemeral port
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Secrets are referenced by environment variable name only.
struct GatewayConfig {
  std::map<Service, ListenAddress> listen;
  std::string course_salt_env = "TUTORWHEEL_COURSE_SALT";
  std::string api_token_env = "TUTORWHEEL_API_TOKEN";
  Json model_backend = Json::object();
  std::filesystem::path lessons_dir;
  std::filesystem::path session_db;
  std::filesystem::path event_store_dir;
  std::string executor_url;  // empty: /execute answers 503
  std::string events_url;    // empty: emit in-process
  std::filesystem::path base_dir = ".";

  /// Relative paths resolve against `base_dir`. Throws ConfigError,
  /// including when a literal salt or token appears.
  static GatewayConfig from_json(const Json& j, const std::filesystem::path& base_dir);

  /// Reads the file then applies TUTORWHEEL_* environment overrides.
  static GatewayConfig load(const std::filesystem::path& path);

  void apply_env_overrides();
};

// ---------------------------------------------------------------------------
// Outbound clients.

/// Posts each event to a remote /events endpoint. Short timeouts; failures
/// are counted and logged without the event body.
class HttpEventSink final : public EventSink {
 public:
  HttpEventSink(std::string base_url, std::string token);
  void emit(const Json& raw_event) noexcept override;

 private:
  std::string base_url_;
  std::string token_;
};

class ExecutorUnavailable : public Error {
 public:
  using Error::Error;
};

struct ExecutionError {
  std::string type;
  std::string message;
};

struct ExecutionResult {
  std::string stdout_text;
  std::string stderr_text;
  std::string result_repr;
  std::optional<ExecutionError> error;
  double duration_ms = 0;
};

ExecutionResult execution_result_from_json(const Json& j);
Json to_json(const ExecutionResult& r);

/// Client of the sandboxed executor: POST /execute {session_id, cell_id, code}.
class ExecutorClient {
 public:
  explicit ExecutorClient(std::string base_url,
                          std::chrono::milliseconds timeout = std::chrono::seconds(35));
  /// Throws ExecutorUnavailable on transport failure or a non-200 reply.
  ExecutionResult execute(std::string_view session_id, std::string_view cell_id,
                          std::string_view code);
  bool healthy();
  const std::string& base_url() const { return base_url_; }

 private:
  std::string base_url_;
  std::chrono::milliseconds timeout_;
};

// ---------------------------------------------------------------------------

/// Test seams; anything left null is built from the config.
struct HostOverrides {
  std::shared_ptr<ModelBackend> backend;
  std::shared_ptr<EventSink> event_sink;
  GatewayOptions gateway_options;
  std::size_t context_budget = kDefaultContextBudget;
};

/// Redacts session keys ("session_<user>_<lesson>") in a request path.
std::string redact_path(std::string_view path);

class ServiceHost {
 public:
  explicit ServiceHost(GatewayConfig config, HostOverrides overrides = {});
  ~ServiceHost();
  ServiceHost(const ServiceHost&) = delete;
  ServiceHost& operator=(const ServiceHost&) = delete;

  /// Builds the components the services need, binds and starts listening.
  /// Throws ConfigError or MissingSalt.
  void start(const std::set<Service>& services);
  void stop();

  int port(Service s) const;
  std::string url(Service s) const;

  // Components (null when the running services do not need them).
  ModelGateway* gateway() { return gateway_.get(); }
  EventStore* event_store() { return event_store_.get(); }
  EventSink* event_sink() { return sink_.get(); }
  SessionStore* session_store() { return sessions_.get(); }
  FeedbackService* feedback() { return feedback_.get(); }
  const LessonCatalog& lessons() const { return lessons_; }
  const GatewayConfig& config() const { return config_; }

 private:
  struct Listener;

  void build(const std::set<Service>& services);
  void install_common(httplib::Server& server, Service s);
  void install_teaching(httplib::Server& server);
  void install_autograde(httplib::Server& server);
  void install_events(httplib::Server& server);
  void install_feedback(httplib::Server& server);
  bool store_reachable(Service s);

  GatewayConfig config_;
  HostOverrides overrides_;
  std::string token_;
  LessonCatalog lessons_;
  std::shared_ptr<ModelGateway> gateway_;
  std::shared_ptr<SqliteDatabase> db_;
  std::shared_ptr<SessionStore> sessions_;
  std::unique_ptr<ConversationStore> conversations_;
  std::unique_ptr<EventStore> event_store_;
  std::unique_ptr<IngestionService> ingestion_;
  std::shared_ptr<EventSink> sink_;
  std::unique_ptr<ExecutorClient> executor_;
  SessionLocks locks_;
  std::unique_ptr<TeachingOrchestrator> teaching_;
  std::unique_ptr<Autograder> autograder_;
  std::unique_ptr<FeedbackService> feedback_;
  std::vector<std::unique_ptr<Listener>> listeners_;
};

}  // namespace tutorwheel
