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

#include "tutorwheel/service.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <regex>

#include "httplib.h"

namespace tutorwheel {

namespace fs = std::filesystem;

std::string_view to_string(Service s) {
  switch (s) {
    case Service::teaching: return "teaching";
    case Service::autograde: return "autograde";
    case Service::events: return "events";
    case Service::feedback: return "feedback";
  }
  return "?";
}

std::optional<Service> parse_service(std::string_view s) {
  for (const auto svc : kAllServices) {
    if (to_string(svc) == s) return svc;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

namespace {

fs::path resolve(const fs::path& base, const std::string& value) {
  if (value.empty()) return {};
  const fs::path p(value);
  return p.is_absolute() ? p : base / p;
}

std::optional<std::string> env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

}  // namespace

GatewayConfig GatewayConfig::from_json(const Json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const char* literal : {"course_salt", "api_token", "salt", "token"}) {
    if (j.contains(literal)) {
      throw ConfigError(fmt::format(
          "config must not hold a literal '{}'; name an environment variable via '{}_env'",
          literal, literal));
    }
  }
  GatewayConfig c;
  c.base_dir = base_dir;
  try {
    if (const auto it = j.find("listen"); it != j.end()) {
      for (const auto& [name, addr] : it->items()) {
        const auto svc = parse_service(name);
        if (!svc) throw ConfigError("unknown service in listen: " + name);
        ListenAddress a;
        a.host = addr.value("host", a.host);
        a.port = addr.value("port", 0);
        c.listen[*svc] = a;
      }
    }
    c.course_salt_env = j.value("course_salt_env", c.course_salt_env);
    c.api_token_env = j.value("api_token_env", c.api_token_env);
    c.model_backend = j.value("model_backend", Json::object());
    c.lessons_dir = resolve(base_dir, j.value("lessons_dir", std::string()));
    c.session_db = resolve(base_dir, j.value("session_db", std::string()));
    c.event_store_dir = resolve(base_dir, j.value("event_store_dir", std::string()));
    c.executor_url = j.value("executor_url", std::string());
    c.events_url = j.value("events_url", std::string());
  } catch (const Json::exception& ex) {
    throw ConfigError(std::string("malformed config: ") + ex.what());
  }
  return c;
}

GatewayConfig GatewayConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& ex) {
    throw ConfigError(fmt::format("config {} is not JSON: {}", path.string(), ex.what()));
  }
  auto c = from_json(j, path.has_parent_path() ? path.parent_path() : fs::path("."));
  c.apply_env_overrides();
  return c;
}

void GatewayConfig::apply_env_overrides() {
  if (auto v = env("TUTORWHEEL_LESSONS_DIR")) lessons_dir = *v;
  if (auto v = env("TUTORWHEEL_SESSION_DB")) session_db = *v;
  if (auto v = env("TUTORWHEEL_EVENT_STORE_DIR")) event_store_dir = *v;
  if (auto v = env("TUTORWHEEL_EXECUTOR_URL")) executor_url = *v;
  if (auto v = env("TUTORWHEEL_EVENTS_URL")) events_url = *v;
  for (const auto svc : kAllServices) {
    std::string name = "TUTORWHEEL_" + std::string(to_string(svc)) + "_PORT";
    for (auto& ch : name) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (auto v = env(name)) listen[svc].port = std::stoi(*v);
  }
}

// ---------------------------------------------------------------------------

HttpEventSink::HttpEventSink(std::string base_url, std::string token)
    : base_url_(std::move(base_url)), token_(std::move(token)) {}

void HttpEventSink::emit(const Json& raw_event) noexcept {
  note_attempt();
  try {
    httplib::Client client(base_url_);
    client.set_connection_timeout(0, 250'000);
    client.set_read_timeout(1, 0);
    client.set_write_timeout(1, 0);
    const httplib::Headers headers{{"Authorization", "Bearer " + token_}};
    const auto res = client.Post("/events", headers, raw_event.dump(), "application/json");
    if (!res) {
      note_failure();
      spdlog::warn("event emission failed: {}", httplib::to_string(res.error()));
    } else if (res->status != 202) {
      note_failure();
      spdlog::warn("event emission rejected with HTTP {}", res->status);
    }
  } catch (const std::exception& ex) {
    note_failure();
    spdlog::warn("event emission failed: {}", ex.what());
  }
}

ExecutionResult execution_result_from_json(const Json& j) {
  ExecutionResult r;
  r.stdout_text = j.value("stdout", std::string());
  r.stderr_text = j.value("stderr", std::string());
  r.result_repr = j.value("result_repr", std::string());
  r.duration_ms = j.value("duration_ms", 0.0);
  if (const auto it = j.find("error"); it != j.end() && it->is_object()) {
    r.error = ExecutionError{it->value("type", std::string("Error")),
                             it->value("message", std::string())};
  }
  return r;
}

Json to_json(const ExecutionResult& r) {
  Json j{{"stdout", r.stdout_text},
         {"stderr", r.stderr_text},
         {"result_repr", r.result_repr},
         {"duration_ms", r.duration_ms}};
  if (r.error) {
    j["error"] = {{"type", r.error->type}, {"message", r.error->message}};
  } else {
    j["error"] = nullptr;
  }
  return j;
}

ExecutorClient::ExecutorClient(std::string base_url, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {}

ExecutionResult ExecutorClient::execute(std::string_view session_id, std::string_view cell_id,
                                        std::string_view code) {
  httplib::Client client(base_url_);
  client.set_connection_timeout(1, 0);
  client.set_read_timeout(timeout_);
  const Json body{{"session_id", session_id}, {"cell_id", cell_id}, {"code", code}};
  const auto res = client.Post("/execute", body.dump(), "application/json");
  if (!res) {
    throw ExecutorUnavailable(
        fmt::format("executor unreachable: {}", httplib::to_string(res.error())));
  }
  if (res->status != 200) {
    throw ExecutorUnavailable(fmt::format("executor returned HTTP {}", res->status));
  }
  try {
    return execution_result_from_json(Json::parse(res->body));
  } catch (const Json::exception& ex) {
    throw ExecutorUnavailable(std::string("executor reply is not JSON: ") + ex.what());
  }
}

bool ExecutorClient::healthy() {
  httplib::Client client(base_url_);
  client.set_connection_timeout(0, 500'000);
  const auto res = client.Get("/health");
  return res && res->status == 200;
}

// ---------------------------------------------------------------------------

std::string redact_path(std::string_view path) {
  static const std::regex kSessionKey(R"(session_[A-Za-z0-9.\-]+_[A-Za-z0-9.\-]+)");
  return std::regex_replace(std::string(path), kSessionKey, "session_<redacted>");
}

struct ServiceHost::Listener {
  Service service;
  std::unique_ptr<httplib::Server> server;
  std::thread thread;
  int port = 0;
  std::string host;
};

ServiceHost::ServiceHost(GatewayConfig config, HostOverrides overrides)
    : config_(std::move(config)), overrides_(std::move(overrides)) {}

ServiceHost::~ServiceHost() { stop(); }

void ServiceHost::build(const std::set<Service>& services) {
  const auto has = [&](Service s) { return services.contains(s); };
  const bool needs_gateway = has(Service::teaching) || has(Service::autograde) ||
                             has(Service::feedback);
  const bool needs_sessions = needs_gateway;
  const bool needs_sink = has(Service::teaching) || has(Service::autograde);
  const bool needs_event_store = has(Service::events) || has(Service::feedback) ||
                                 (needs_sink && !overrides_.event_sink && config_.events_url.empty());

  const auto token = env(config_.api_token_env);
  if (!token) throw ConfigError("API token variable " + config_.api_token_env + " is not set");
  token_ = *token;

  if (!config_.lessons_dir.empty()) lessons_ = LessonCatalog::load_directory(config_.lessons_dir);

  if (needs_gateway) {
    auto backend = overrides_.backend;
    if (!backend) {
      if (config_.model_backend.empty()) throw ConfigError("model_backend is not configured");
      backend = make_backend(config_.model_backend, config_.base_dir.string());
    }
    gateway_ = std::make_shared<ModelGateway>(backend, overrides_.gateway_options);
  }
  if (needs_sessions) {
    if (config_.session_db.empty()) throw ConfigError("session_db is not configured");
    db_ = std::make_shared<SqliteDatabase>(config_.session_db);
    sessions_ = std::make_shared<SqliteSessionStore>(db_);
    conversations_ = std::make_unique<SqliteConversationStore>(db_);
  }
  if (needs_event_store) {
    if (config_.event_store_dir.empty()) throw ConfigError("event_store_dir is not configured");
    event_store_ = std::make_unique<JsonlEventStore>(config_.event_store_dir);
  }
  if (has(Service::events) || (needs_sink && !overrides_.event_sink && config_.events_url.empty())) {
    ingestion_ = std::make_unique<IngestionService>(*event_store_,
                                                    CourseSalt::from_env(config_.course_salt_env));
  }
  if (needs_sink) {
    if (overrides_.event_sink) {
      sink_ = overrides_.event_sink;
    } else if (!config_.events_url.empty()) {
      sink_ = std::make_shared<HttpEventSink>(config_.events_url, token_);
    } else {
      sink_ = std::make_shared<LocalEventSink>(*ingestion_);
    }
  }
  if (!config_.executor_url.empty()) {
    executor_ = std::make_unique<ExecutorClient>(config_.executor_url);
  }
  if (has(Service::teaching)) {
    teaching_ = std::make_unique<TeachingOrchestrator>(lessons_, *sessions_, locks_, *gateway_,
                                                       *sink_);
  }
  if (has(Service::autograde)) {
    autograder_ = std::make_unique<Autograder>(lessons_, *sessions_, locks_, *gateway_, *sink_);
  }
  if (has(Service::feedback)) {
    feedback_ = std::make_unique<FeedbackService>(*event_store_, lessons_, *conversations_,
                                                  *gateway_, overrides_.context_budget);
  }
}

void ServiceHost::start(const std::set<Service>& services) {
  if (!listeners_.empty()) throw Error("service host already started");
  build(services);
  for (const auto svc : services) {
    auto listener = std::make_unique<Listener>();
    listener->service = svc;
    listener->server = std::make_unique<httplib::Server>();
    listener->server->new_task_queue = [] { return new httplib::ThreadPool(16); };
    listener->server->set_tcp_nodelay(true);
    install_common(*listener->server, svc);
    switch (svc) {
      case Service::teaching: install_teaching(*listener->server); break;
      case Service::autograde: install_autograde(*listener->server); break;
      case Service::events: install_events(*listener->server); break;
      case Service::feedback: install_feedback(*listener->server); break;
    }
    const auto addr = config_.listen.contains(svc) ? config_.listen.at(svc) : ListenAddress{};
    listener->host = addr.host;
    if (addr.port == 0) {
      listener->port = listener->server->bind_to_any_port(addr.host);
    } else if (listener->server->bind_to_port(addr.host, addr.port)) {
      listener->port = addr.port;
    } else {
      listener->port = -1;
    }
    if (listener->port <= 0) {
      stop();
      throw ConfigError(fmt::format("cannot bind {} service to {}:{}", to_string(svc), addr.host,
                                    addr.port));
    }
    auto* server = listener->server.get();
    listener->thread = std::thread([server] { server->listen_after_bind(); });
    server->wait_until_ready();
    spdlog::info("{} service listening on {}:{}", to_string(svc), addr.host, listener->port);
    listeners_.push_back(std::move(listener));
  }
}

void ServiceHost::stop() {
  for (auto& l : listeners_) {
    l->server->stop();
    if (l->thread.joinable()) l->thread.join();
  }
  listeners_.clear();
}

int ServiceHost::port(Service s) const {
  for (const auto& l : listeners_) {
    if (l->service == s) return l->port;
  }
  throw Error(fmt::format("{} service is not running", to_string(s)));
}

std::string ServiceHost::url(Service s) const {
  for (const auto& l : listeners_) {
    if (l->service == s) return fmt::format("http://{}:{}", l->host, l->port);
  }
  throw Error(fmt::format("{} service is not running", to_string(s)));
}

// ---------------------------------------------------------------------------
// Request plumbing.

namespace {

void reply(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, std::string_view message) {
  reply(res, status, Json{{"error", message}});
}

class BadRequest : public Error {
 public:
  using Error::Error;
};

Json parse_body(const httplib::Request& req) {
  try {
    auto j = Json::parse(req.body);
    if (!j.is_object()) throw BadRequest("request body must be a JSON object");
    return j;
  } catch (const Json::exception&) {
    throw BadRequest("request body is not valid JSON");
  }
}

std::string required_text(const Json& body, const char* field) {
  const auto it = body.find(field);
  if (it == body.end() || !it->is_string()) {
    throw BadRequest(fmt::format("field '{}' must be a string", field));
  }
  return it->get<std::string>();
}

std::optional<UnixMillis> optional_timestamp(const Json& body) {
  const auto it = body.find("timestamp");
  if (it == body.end() || it->is_null()) return std::nullopt;
  if (it->is_number_integer()) return it->get<std::int64_t>();
  if (it->is_string()) {
    if (auto ts = parse_timestamp(it->get_ref<const std::string&>())) return ts;
  }
  throw BadRequest("field 'timestamp' must be an ISO-8601 UTC string or epoch milliseconds");
}

// Maps library errors onto HTTP statuses; everything else is a 500.
template <class Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const BadRequest& ex) {
      reply_error(res, 400, ex.what());
    } catch (const InvalidQuery& ex) {
      reply_error(res, 400, ex.what());
    } catch (const InvalidQuestion& ex) {
      reply_error(res, 400, ex.what());
    } catch (const InvalidId& ex) {
      reply_error(res, 400, "identifiers must be URL-safe and may not contain '_'");
    } catch (const SchemaRejection& ex) {
      reply(res, 400, Json{{"error", "event rejected"}, {"fields", ex.fields()}});
    } catch (const SessionNotFound&) {
      reply_error(res, 404, "session not found");
    } catch (const UnknownCheckpoint& ex) {
      reply_error(res, 404, ex.what());
    } catch (const ConversationNotFound& ex) {
      reply_error(res, 404, ex.what());
    } catch (const GradingUnavailable& ex) {
      reply_error(res, 503, ex.what());
    } catch (const ExecutorUnavailable& ex) {
      reply_error(res, 503, ex.what());
    } catch (const StorageUnavailable& ex) {
      spdlog::error("session storage failure: {}", ex.what());
      reply_error(res, 503, "session storage unavailable");
    } catch (const StorageFailure& ex) {
      spdlog::error("event storage failure: {}", ex.what());
      reply_error(res, 500, "event storage failure");
    } catch (const BackendUnavailable& ex) {
      reply_error(res, 503, ex.what());
    } catch (const Timeout& ex) {
      reply_error(res, 503, ex.what());
    } catch (const EmptyResponse& ex) {
      reply_error(res, 503, ex.what());
    } catch (const NoMatchingRule& ex) {
      reply_error(res, 503, ex.what());
    } catch (const std::exception& ex) {
      spdlog::error("unhandled error on {}: {}", redact_path(req.path), ex.what());
      reply_error(res, 500, "internal error");
    }
  };
}

}  // namespace

bool ServiceHost::store_reachable(Service s) {
  switch (s) {
    case Service::teaching:
    case Service::autograde:
      return sessions_ && sessions_->healthy();
    case Service::events:
      return event_store_ && event_store_->healthy();
    case Service::feedback:
      return event_store_ && event_store_->healthy() && sessions_ && sessions_->healthy();
  }
  return false;
}

void ServiceHost::install_common(httplib::Server& server, Service s) {
  server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (req.path == "/health") return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("Authorization") != "Bearer " + token_) {
      reply_error(res, 401, "missing or invalid bearer token");
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });
  server.set_logger([s](const httplib::Request& req, const httplib::Response& res) {
    spdlog::info("{} {} {} -> {}", to_string(s), req.method, redact_path(req.path), res.status);
  });
  server.Get("/health", [this, s](const httplib::Request&, httplib::Response& res) {
    const bool reachable = store_reachable(s);
    Json body{{"status", reachable ? "ok" : "degraded"},
              {"service", to_string(s)},
              {"store_reachable", reachable}};
    body["backend"] = gateway_ ? Json(to_string(gateway_->backend_kind())) : Json(nullptr);
    if (!reachable) {
      body["detail"] = s == Service::events || s == Service::feedback ? "event store"
                                                                      : "session store";
    }
    reply(res, reachable ? 200 : 503, body);
  });
}

void ServiceHost::install_teaching(httplib::Server& server) {
  server.Post("/run", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto key = required_text(body, "session_id");
    auto message = required_text(body, "message");
    const auto response = teaching_->handle_chat_turn(key, std::move(message),
                                                      optional_timestamp(body));
    reply(res, 200, to_json(response));
  }));

  server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto user_id = required_text(body, "user_id");
    const auto lesson_id = required_text(body, "lesson_id");
    if (!is_slug(user_id) || !is_slug(lesson_id)) throw InvalidId(user_id + "/" + lesson_id);
    const LessonContent* lesson = lessons_.find(lesson_id);
    if (lesson == nullptr) {
      reply_error(res, 404, "unknown lesson: " + lesson_id);
      return;
    }
    const auto created = sessions_->create(user_id, *lesson);
    reply(res, created.created ? 201 : 200,
          Json{{"session_key", created.state.session_key}, {"state", to_json(created.state)}});
  }));

  server.Get(R"(/sessions/([^/]+))",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               const std::string key = req.matches[1];
               auto state = sessions_->load(key);
               if (!state) throw SessionNotFound(key);
               reply(res, 200, to_json(*state));
             }));

  // Shared lookup for the cell routes: the session's lesson and an editable code cell.
  struct CellTarget {
    std::string key;
    SessionKeyParts parts;
    const LessonContent* lesson;
    const Cell* cell;
  };
  const auto locate = [this](const httplib::Request& req) -> CellTarget {
    CellTarget t{req.matches[1], {}, nullptr, nullptr};
    const auto parts = parse_session_key(t.key);
    if (!parts) throw SessionNotFound(t.key);
    t.parts = *parts;
    t.lesson = lessons_.find(parts->lesson_id);
    if (t.lesson == nullptr) throw SessionNotFound(t.key);
    t.cell = t.lesson->find_cell(std::string(req.matches[2]));
    if (t.cell == nullptr || t.cell->kind != CellKind::code) {
      throw BadRequest("unknown code cell: " + std::string(req.matches[2]));
    }
    return t;
  };

  server.Put(R"(/sessions/([^/]+)/cells/([^/]+))",
             guarded([this, locate](const httplib::Request& req, httplib::Response& res) {
               const auto t = locate(req);
               if (!t.cell->editable) throw BadRequest("cell is read-only: " + t.cell->cell_id);
               const auto body = parse_body(req);
               auto source = required_text(body, "source");
               const auto at = optional_timestamp(body).value_or(now_millis());
               {
                 auto lock = locks_.acquire(t.key);
                 auto state = sessions_->load(t.key);
                 if (!state) throw SessionNotFound(t.key);
                 state->cell_contents[t.cell->cell_id] = std::move(source);
                 sessions_->save(t.key, *state);
               }
               sink_->emit(make_raw_event(t.parts.user_id, t.parts.lesson_id, t.key,
                                          EventCategory::code_editor, at,
                                          {{"cell_id", t.cell->cell_id}}));
               reply(res, 200, Json{{"ok", true}});
             }));

  server.Put(R"(/sessions/([^/]+)/cells/([^/]+)/output)",
             guarded([this, locate](const httplib::Request& req, httplib::Response& res) {
               const auto t = locate(req);
               const auto body = parse_body(req);
               CellOutput output{required_text(body, "output"), std::nullopt};
               if (const auto it = body.find("error"); it != body.end() && !it->is_null()) {
                 if (!it->is_string()) throw BadRequest("field 'error' must be a string");
                 output.error = it->get<std::string>();
               }
               auto lock = locks_.acquire(t.key);
               auto state = sessions_->load(t.key);
               if (!state) throw SessionNotFound(t.key);
               state->cell_outputs[t.cell->cell_id] = std::move(output);
               sessions_->save(t.key, *state);
               reply(res, 200, Json{{"ok", true}});
             }));

  server.Post(R"(/sessions/([^/]+)/cells/([^/]+)/execute)",
              guarded([this, locate](const httplib::Request& req, httplib::Response& res) {
                const auto t = locate(req);
                if (!executor_) throw ExecutorUnavailable("no executor is configured");
                const auto body = req.body.empty() ? Json::object() : parse_body(req);
                const auto at = optional_timestamp(body).value_or(now_millis());
                std::string source;
                {
                  auto lock = locks_.acquire(t.key);
                  auto state = sessions_->load(t.key);
                  if (!state) throw SessionNotFound(t.key);
                  const auto it = state->cell_contents.find(t.cell->cell_id);
                  source = it != state->cell_contents.end() ? it->second : t.cell->initial_source;
                }
                const auto result = executor_->execute(t.key, t.cell->cell_id, source);
                CellOutput output{result.stdout_text, std::nullopt};
                if (!result.result_repr.empty()) {
                  if (!output.output.empty() && output.output.back() != '\n') output.output += '\n';
                  output.output += result.result_repr;
                }
                if (result.error) {
                  output.error = fmt::format("{}: {}", result.error->type, result.error->message);
                }
                {
                  auto lock = locks_.acquire(t.key);
                  auto state = sessions_->load(t.key);
                  if (!state) throw SessionNotFound(t.key);
                  state->cell_outputs[t.cell->cell_id] = output;
                  sessions_->save(t.key, *state);
                }
                Json payload{{"cell_id", t.cell->cell_id}, {"success", !result.error.has_value()}};
                if (output.error) payload["error_message"] = *output.error;
                sink_->emit(make_raw_event(t.parts.user_id, t.parts.lesson_id, t.key,
                                           EventCategory::code_execution, at, payload));
                reply(res, 200, to_json(result));
              }));
}

void ServiceHost::install_autograde(httplib::Server& server) {
  server.Post("/grade", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto key = required_text(body, "session_id");
    const auto checkpoint = required_text(body, "checkpoint_id");
    const auto outcome = autograder_->grade(key, checkpoint, optional_timestamp(body));
    reply(res, 200, Json{{"passed", outcome.result.passed},
                         {"reasoning", outcome.result.reasoning},
                         {"short_circuited", outcome.short_circuited}});
  }));
}

void ServiceHost::install_events(httplib::Server& server) {
  server.Post("/events", guarded([this](const httplib::Request& req, httplib::Response& res) {
    Json body;
    try {
      body = Json::parse(req.body);
    } catch (const Json::exception&) {
      throw SchemaRejection({"<body>"});
    }
    const auto id = ingestion_->ingest(body);
    reply(res, 202, Json{{"event_id", id}});
  }));
}

void ServiceHost::install_feedback(httplib::Server& server) {
  server.Get("/feedback/lessons", guarded([this](const httplib::Request&, httplib::Response& res) {
    Json lessons = Json::array();
    for (const auto& a : feedback_->list_lessons_with_activity()) {
      lessons.push_back({{"lesson_id", a.lesson_id}, {"summary", to_json(a.summary)}});
    }
    reply(res, 200, Json{{"lessons", lessons}});
  }));

  server.Post("/feedback/ask", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto lesson_id = required_text(body, "lesson_id");
    const auto question = required_text(body, "question");
    std::optional<std::string> conversation;
    if (const auto it = body.find("conversation_id"); it != body.end() && !it->is_null()) {
      conversation = required_text(body, "conversation_id");
    }
    const auto answer = feedback_->ask(conversation, lesson_id, question);
    reply(res, 200, Json{{"conversation_id", answer.conversation_id},
                         {"answer", answer.answer},
                         {"new_conversation", answer.new_conversation}});
  }));
}

}  // namespace tutorwheel
