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

// Source-level checks on module boundaries.

#include <gtest/gtest.h>

#include <regex>

#include "support.hpp"

namespace tutorwheel {
namespace {

namespace fs = std::filesystem;

std::map<std::string, std::string> sources() {
  std::map<std::string, std::string> out;
  for (const auto& dir : {testing::kSourceDir / "src", testing::kSourceDir / "include" / "tutorwheel"}) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      out[entry.path().filename().string()] = testing::read_file(entry.path());
    }
  }
  return out;
}

std::vector<std::string> files_matching(const std::regex& pattern) {
  std::vector<std::string> hits;
  for (const auto& [name, text] : sources()) {
    if (std::regex_search(text, pattern)) hits.push_back(name);
  }
  return hits;
}

TEST(Boundaries, OnlyTheGatewayTalksToProviders) {
  EXPECT_EQ(files_matching(std::regex(R"(HttpProviderBackend|ScriptedBackend)")),
            (std::vector<std::string>{"model_gateway.cpp", "model_gateway.hpp"}));
  // Components reach a backend only through the gateway; the host builds one from config.
  EXPECT_EQ(files_matching(std::regex(R"(make_backend\()")),
            (std::vector<std::string>{"model_gateway.cpp", "model_gateway.hpp", "service.cpp"}));
  EXPECT_EQ(files_matching(std::regex(R"(->complete\(|\.complete\()")),
            std::vector<std::string>{"model_gateway.cpp"});
}

TEST(Boundaries, ComponentsDoNotUseHttpDirectly) {
  for (const auto* name : {"teaching.cpp", "autograder.cpp", "feedback.cpp", "event_pipeline.cpp",
                           "session_store.cpp", "lesson.cpp", "domain.cpp"}) {
    EXPECT_EQ(sources().at(name).find("httplib"), std::string::npos) << name;
  }
}

TEST(Boundaries, OnlyIngestionAppendsEvents) {
  EXPECT_EQ(files_matching(std::regex(R"(store_?\.append\(|store\(\)\.append\()")),
            std::vector<std::string>{"event_pipeline.cpp"});
  // Feedback reads through the fixed query functions only.
  const auto& feedback = sources().at("feedback.cpp");
  EXPECT_EQ(feedback.find("lesson_events("), std::string::npos);
  EXPECT_NE(feedback.find("query_lesson("), std::string::npos);
}

TEST(Boundaries, SaltNeverLeavesThePipeline) {
  EXPECT_EQ(files_matching(std::regex(R"(\.bytes\(\))")), std::vector<std::string>{"event_pipeline.cpp"});
}

}  // namespace
}  // namespace tutorwheel
