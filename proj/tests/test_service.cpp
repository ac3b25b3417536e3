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

#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "support.hpp"
#include "tutorwheel/service.hpp"

namespace tutorwheel {
namespace {

using testing::Api;
using testing::TempDir;

/// httplib server on an ephemeral port, stopped on destruction.
class FakeServer {
 public:
  FakeServer() {
    port_ = server.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeServer() {
    server.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  httplib::Server server;

 private:
  int port_ = 0;
  std::thread thread_;
};

class HostTest : public ::testing::Test {
 protected:
  void SetUp() override { testing::set_test_env(); }

  void start(GatewayConfig config, std::set<Service> services = testing::all_services(),
             HostOverrides overrides = {}) {
    host_ = std::make_unique<ServiceHost>(std::move(config), std::move(overrides));
    host_->start(services);
  }
  Api api(Service s, std::string token = testing::kToken) { return Api(host_->url(s), std::move(token)); }

  TempDir dir_;
  std::unique_ptr<ServiceHost> host_;
};

TEST(ServiceNames, RoundTrip) {
  for (const auto s : kAllServices) EXPECT_EQ(parse_service(to_string(s)), s);
  EXPECT_FALSE(parse_service("billing"));
}

TEST(Redaction, HidesSessionKeysInPaths) {
  EXPECT_EQ(redact_path("/sessions/session_amara-k17_qis-m2/cells/c1"),
            "/sessions/session_<redacted>/cells/c1");
  EXPECT_EQ(redact_path("/grade"), "/grade");
}

TEST(Config, RejectsLiteralSecrets) {
  for (const char* key : {"course_salt", "api_token", "salt", "token"}) {
    EXPECT_THROW(GatewayConfig::from_json(Json{{key, "abc"}}, "."), ConfigError) << key;
  }
  EXPECT_THROW(GatewayConfig::from_json(Json::array(), "."), ConfigError);
  EXPECT_THROW(GatewayConfig::from_json(Json{{"listen", {{"billing", {{"port", 1}}}}}}, "."), ConfigError);
}

TEST(Config, ResolvesRelativePathsAndAppliesEnvOverrides) {
  TempDir dir;
  std::ofstream(dir / "c.json") << R"({"listen": {"teaching": {"port": 8000}}, "lessons_dir": "lessons",
                                       "session_db": "/abs/s.db", "api_token_env": "MY_TOKEN"})";
  ::setenv("TUTORWHEEL_TEACHING_PORT", "9123", 1);
  ::setenv("TUTORWHEEL_EVENTS_URL", "http://127.0.0.1:1", 1);
  const auto c = GatewayConfig::load(dir / "c.json");
  ::unsetenv("TUTORWHEEL_TEACHING_PORT");
  ::unsetenv("TUTORWHEEL_EVENTS_URL");
  EXPECT_EQ(c.lessons_dir, dir / "lessons");
  EXPECT_EQ(c.session_db, "/abs/s.db");
  EXPECT_EQ(c.api_token_env, "MY_TOKEN");
  EXPECT_EQ(c.listen.at(Service::teaching).port, 9123);
  EXPECT_EQ(c.events_url, "http://127.0.0.1:1");
  EXPECT_THROW(GatewayConfig::load(dir / "missing.json"), ConfigError);
}

TEST(Config, ShippedDevConfigLoads) {
  const auto c = GatewayConfig::load(testing::kFixturesDir / "dev_config.json");
  EXPECT_EQ(c.listen.size(), 4u);
  EXPECT_EQ(c.model_backend.value("kind", ""), "scripted");
}

// ---------------------------------------------------------------------------

TEST_F(HostTest, StartupNeedsTokenAndSalt) {
  ::unsetenv("TUTORWHEEL_API_TOKEN");
  EXPECT_THROW(start(testing::test_config(dir_.path())), ConfigError);
  testing::set_test_env();
  ::setenv("TUTORWHEEL_COURSE_SALT", "0011", 1);
  EXPECT_THROW(start(testing::test_config(dir_.path())), MissingSalt);
}

TEST_F(HostTest, RequestsWithoutTheTokenAreRejected) {
  start(testing::test_config(dir_.path()));
  for (const auto s : kAllServices) {
    EXPECT_EQ(api(s, "").post("/sessions", Json::object()).status, 401) << to_string(s);
    EXPECT_EQ(api(s, "wrong").post("/events", Json::object()).status, 401) << to_string(s);
    const auto health = api(s, "").get("/health");
    EXPECT_EQ(health.status, 200) << to_string(s);
    EXPECT_EQ(health.body.at("service"), to_string(s));
    EXPECT_EQ(health.body.at("status"), "ok");
  }
  EXPECT_EQ(api(Service::teaching).get("/health").body.at("backend"), "scripted");
}

TEST_F(HostTest, SessionAndCellRoutes) {
  start(testing::test_config(dir_.path()));
  auto t = api(Service::teaching);
  const auto created = t.post("/sessions", {{"user_id", "amara-k17"}, {"lesson_id", "qis-m2"}});
  ASSERT_EQ(created.status, 201);
  const std::string key = created.body.at("session_key");
  EXPECT_EQ(t.post("/sessions", {{"user_id", "amara-k17"}, {"lesson_id", "qis-m2"}}).status, 200);
  EXPECT_EQ(t.post("/sessions", {{"user_id", "bad_id"}, {"lesson_id", "qis-m2"}}).status, 400);
  EXPECT_EQ(t.post("/sessions", {{"user_id", "x"}, {"lesson_id", "nope"}}).status, 404);
  EXPECT_EQ(t.post("/sessions", {{"user_id", 5}, {"lesson_id", "qis-m2"}}).status, 400);
  EXPECT_EQ(t.post_raw("/sessions", "{").status, 400);

  EXPECT_EQ(t.put("/sessions/" + key + "/cells/c1", {{"source", "x = 1"}}).status, 200);
  EXPECT_EQ(t.put("/sessions/" + key + "/cells/setup", {{"source", "x"}}).status, 400);
  EXPECT_EQ(t.put("/sessions/" + key + "/cells/intro", {{"source", "x"}}).status, 400);
  EXPECT_EQ(t.put("/sessions/" + key + "/cells/c1/output", {{"output", "1"}, {"error", nullptr}}).status, 200);
  EXPECT_EQ(t.put("/sessions/session_ghost_qis-m2/cells/c1", {{"source", "x"}}).status, 404);

  const auto state = t.get("/sessions/" + key);
  ASSERT_EQ(state.status, 200);
  EXPECT_EQ(state.body.at("cell_contents").at("c1"), "x = 1");
  EXPECT_EQ(state.body.at("cell_outputs").at("c1").at("output"), "1");
  EXPECT_EQ(t.get("/sessions/session_ghost_qis-m2").status, 404);

  // No executor configured.
  EXPECT_EQ(t.post("/sessions/" + key + "/cells/c1/execute", Json::object()).status, 503);
  EXPECT_EQ(lesson_summary(*host_->event_store(), "qis-m2").count(EventCategory::code_editor), 1u);
}

TEST_F(HostTest, ChatGradeEventsAndFeedbackRoutes) {
  start(testing::test_config(dir_.path()));
  auto t = api(Service::teaching);
  const std::string key =
      t.post("/sessions", {{"user_id", "amara-k17"}, {"lesson_id", "qis-m2"}}).body.at("session_key");

  const auto run = t.post("/run", {{"session_id", key}, {"message", "What is a ket?"}});
  ASSERT_EQ(run.status, 200) << run.body.dump();
  EXPECT_FALSE(run.body.at("response").get<std::string>().empty());
  EXPECT_EQ(run.body.at("checkpoint_id"), "cp1");
  EXPECT_EQ(t.post("/run", {{"session_id", key}, {"message", " "}}).status, 400);
  EXPECT_EQ(t.post("/run", {{"session_id", "session_ghost_qis-m2"}, {"message", "hi"}}).status, 404);

  auto g = api(Service::autograde);
  const auto empty = g.post("/grade", {{"session_id", key}, {"checkpoint_id", "cp1"}});
  ASSERT_EQ(empty.status, 200);
  EXPECT_TRUE(empty.body.at("short_circuited").get<bool>());
  EXPECT_EQ(g.post("/grade", {{"session_id", key}, {"checkpoint_id", "cp9"}}).status, 404);

  auto e = api(Service::events);
  const auto ok = e.post("/events", make_raw_event("amara-k17", "qis-m2", key, EventCategory::video_playback,
                                                   1769958000000, {{"action", "play"}, {"position_s", 0}}));
  EXPECT_EQ(ok.status, 202);
  EXPECT_GT(ok.body.at("event_id").get<int>(), 0);
  const auto bad = e.post("/events", {{"category", "video_playback"}});
  EXPECT_EQ(bad.status, 400);
  EXPECT_TRUE(bad.body.at("fields").is_array());
  EXPECT_EQ(e.post_raw("/events", "nope").status, 400);

  auto f = api(Service::feedback);
  const auto lessons = f.get("/feedback/lessons");
  ASSERT_EQ(lessons.status, 200);
  ASSERT_EQ(lessons.body.at("lessons").size(), 1u);
  // Student and ai chat, the grade, and the posted video event.
  EXPECT_EQ(lessons.body.at("lessons")[0].at("summary").at("counts").at("chat_message"), 2);
  const auto ask = f.post("/feedback/ask", {{"lesson_id", "qis-m2"}, {"question", "How is it going?"}});
  ASSERT_EQ(ask.status, 200);
  EXPECT_TRUE(ask.body.at("new_conversation").get<bool>());
  const auto follow = f.post("/feedback/ask", {{"lesson_id", "qis-m2"}, {"question", "More?"},
                                               {"conversation_id", ask.body.at("conversation_id")}});
  EXPECT_EQ(follow.status, 200);
  EXPECT_FALSE(follow.body.at("new_conversation").get<bool>());
  EXPECT_EQ(f.post("/feedback/ask", {{"lesson_id", "qis-m2"}, {"question", "x"},
                                     {"conversation_id", "conv-none"}}).status, 404);
}

TEST_F(HostTest, BackendOutageMapsTo503) {
  HostOverrides o;
  o.backend = ScriptedBackend::from_json(Json::parse(R"([{"error": "unavailable"}])"));
  start(testing::test_config(dir_.path()), testing::all_services(), o);
  auto t = api(Service::teaching);
  const std::string key =
      t.post("/sessions", {{"user_id", "amara-k17"}, {"lesson_id", "qis-m2"}}).body.at("session_key");
  const auto run = t.post("/run", {{"session_id", key}, {"message", "hi"}});
  EXPECT_EQ(run.status, 200);
  EXPECT_TRUE(run.body.at("fallback").get<bool>());
  EXPECT_EQ(t.put("/sessions/" + key + "/cells/c1", {{"source", "x = 1"}}).status, 200);
  EXPECT_EQ(api(Service::autograde).post("/grade", {{"session_id", key}, {"checkpoint_id", "cp1"}}).status, 503);
  EXPECT_EQ(api(Service::feedback).post("/feedback/ask", {{"lesson_id", "qis-m2"}, {"question", "x"}}).status,
            503);
}

TEST_F(HostTest, ExecuteRoutesThroughTheExecutorClient) {
  FakeServer executor;
  std::atomic<int> calls{0};
  Json last_request;
  std::mutex mutex;
  executor.server.Post("/execute", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    {
      std::lock_guard lock(mutex);
      last_request = Json::parse(req.body);
    }
    const bool fail = req.body.find("boom") != std::string::npos;
    Json reply{{"stdout", "hello\n"}, {"stderr", ""}, {"result_repr", "42"}, {"duration_ms", 3.5}};
    reply["error"] = fail ? Json{{"type", "NameError"}, {"message", "boom"}} : Json(nullptr);
    res.set_content(reply.dump(), "application/json");
  });
  auto config = testing::test_config(dir_.path());
  config.executor_url = executor.url();
  start(config);
  auto t = api(Service::teaching);
  const std::string key =
      t.post("/sessions", {{"user_id", "amara-k17"}, {"lesson_id", "qis-m2"}}).body.at("session_key");
  t.put("/sessions/" + key + "/cells/c1", {{"source", "print('hello')"}});
  const auto ok = t.post("/sessions/" + key + "/cells/c1/execute", Json::object());
  ASSERT_EQ(ok.status, 200) << ok.body.dump();
  EXPECT_TRUE(ok.body.at("error").is_null());
  {
    std::lock_guard lock(mutex);
    EXPECT_EQ(last_request.at("code"), "print('hello')");
    EXPECT_EQ(last_request.at("cell_id"), "c1");
  }
  t.put("/sessions/" + key + "/cells/c2", {{"source", "boom"}});
  EXPECT_EQ(t.post("/sessions/" + key + "/cells/c2/execute", Json::object()).status, 200);

  const auto state = t.get("/sessions/" + key).body;
  EXPECT_EQ(state.at("cell_outputs").at("c1").at("output"), "hello\n42");
  EXPECT_EQ(state.at("cell_outputs").at("c2").at("error"), "NameError: boom");
  const auto summary = lesson_summary(*host_->event_store(), "qis-m2");
  EXPECT_EQ(summary.count(EventCategory::code_execution), 2u);
  EXPECT_EQ(summary.code_execution_succeeded, 1u);
  EXPECT_EQ(calls.load(), 2);
}

// ---------------------------------------------------------------------------

TEST(ExecutorClientTest, ParsesResultsAndReportsOutages) {
  FakeServer executor;
  executor.server.Post("/execute", [](const httplib::Request& req, httplib::Response& res) {
    if (req.body.find("500") != std::string::npos) {
      res.status = 500;
      return;
    }
    if (req.body.find("junk") != std::string::npos) {
      res.set_content("not json", "text/plain");
      return;
    }
    res.set_content(R"({"stdout": "", "stderr": "w", "result_repr": "", "duration_ms": 1,
                        "error": {"type": "ZeroDivisionError", "message": "division by zero"}})",
                    "application/json");
  });
  executor.server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{}", "application/json");
  });
  ExecutorClient client(executor.url());
  EXPECT_TRUE(client.healthy());
  const auto r = client.execute("s", "c1", "1/0");
  ASSERT_TRUE(r.error);
  EXPECT_EQ(r.error->type, "ZeroDivisionError");
  EXPECT_EQ(r.stderr_text, "w");
  EXPECT_EQ(execution_result_from_json(to_json(r)).error->message, "division by zero");
  EXPECT_THROW(client.execute("s", "c1", "500"), ExecutorUnavailable);
  EXPECT_THROW(client.execute("s", "c1", "junk"), ExecutorUnavailable);

  ExecutorClient dead("http://127.0.0.1:1");
  EXPECT_FALSE(dead.healthy());
  EXPECT_THROW(dead.execute("s", "c1", "x"), ExecutorUnavailable);
}

TEST(ExecutorClientTest, SlowExecutorTimesOut) {
  FakeServer executor;
  executor.server.Post("/execute", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.set_content("{}", "application/json");
  });
  ExecutorClient client(executor.url(), std::chrono::milliseconds(200));
  EXPECT_THROW(client.execute("s", "c1", "x"), ExecutorUnavailable);
}

TEST(HttpEventSinkTest, PostsWithTokenAndCountsFailures) {
  FakeServer events;
  std::atomic<int> accepted{0};
  events.server.Post("/events", [&](const httplib::Request& req, httplib::Response& res) {
    if (req.get_header_value("Authorization") != std::string("Bearer ") + testing::kToken) {
      res.status = 401;
      return;
    }
    if (Json::parse(req.body).contains("bad")) {
      res.status = 400;
      return;
    }
    ++accepted;
    res.status = 202;
  });
  HttpEventSink sink(events.url(), testing::kToken);
  sink.emit(Json{{"ok", true}});
  sink.emit(Json{{"bad", true}});
  HttpEventSink unauthorized(events.url(), "wrong");
  unauthorized.emit(Json{{"ok", true}});
  HttpEventSink dead("http://127.0.0.1:1", testing::kToken);
  dead.emit(Json{{"ok", true}});
  EXPECT_EQ(accepted.load(), 1);
  EXPECT_EQ(sink.attempts(), 2u);
  EXPECT_EQ(sink.failures(), 1u);
  EXPECT_EQ(unauthorized.failures(), 1u);
  EXPECT_EQ(dead.failures(), 1u);
}

TEST_F(HostTest, RemoteEventSinkFeedsASeparateEventsHost) {
  auto events_config = testing::test_config(dir_.path());
  ServiceHost events_host(events_config);
  events_host.start({Service::events});

  TempDir other;
  auto teaching_config = testing::test_config(other.path());
  teaching_config.events_url = events_host.url(Service::events);
  start(teaching_config, {Service::teaching});
  EXPECT_EQ(host_->event_store(), nullptr);
  auto t = api(Service::teaching);
  const std::string key =
      t.post("/sessions", {{"user_id", "amara-k17"}, {"lesson_id", "qis-m2"}}).body.at("session_key");
  t.put("/sessions/" + key + "/cells/c1", {{"source", "x"}});
  EXPECT_EQ(lesson_summary(*events_host.event_store(), "qis-m2").count(EventCategory::code_editor), 1u);
  EXPECT_EQ(host_->event_sink()->failures(), 0u);

  events_host.stop();
  EXPECT_EQ(t.put("/sessions/" + key + "/cells/c1", {{"source", "y"}}).status, 200);
  EXPECT_EQ(host_->event_sink()->failures(), 1u);
}

}  // namespace
}  // namespace tutorwheel
