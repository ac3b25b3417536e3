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

// Instructor-facing analytics. Three fixed stages: pull the lesson's streams
// through the fixed queries, join them with lesson metadata into one plain
// text document, and hand that document to a narrator that has no tools.

#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "tutorwheel/event_pipeline.hpp"
#include "tutorwheel/lesson.hpp"
#include "tutorwheel/model_gateway.hpp"
#include "tutorwheel/session_store.hpp"

namespace tutorwheel {

inline constexpr std::size_t kDefaultContextBudget = 120'000;

inline constexpr std::string_view kNoActivityNotice =
    "No student activity has been recorded for this lesson.";

class ConversationNotFound : public Error {
 public:
  explicit ConversationNotFound(const std::string& id) : Error("conversation not found: " + id) {}
};

class InvalidQuestion : public Error {
 public:
  InvalidQuestion() : Error("question must not be empty") {}
};

struct ContextDocument {
  std::string lesson_id;
  SummaryBlock summary;
  std::string summary_section;
  std::string metadata_section;
  std::string narrative_section;
  std::string assembled_text;
  UnixMillis assembly_timestamp = 0;
  std::size_t dropped_events = 0;
};

/// Outline segments each checkpoint window touches; "none" when no window
/// overlaps. Keys are outline indices.
std::map<std::size_t, std::vector<std::string>> outline_coverage(const LessonContent& lesson);

std::string render_metadata(const LessonContent* lesson);
std::string render_summary(const SummaryBlock& summary);

/// One store read. `lesson` may be null when no bundle is loaded for the id.
ContextDocument assemble_context(EventStore& store, std::string_view lesson_id,
                                 const LessonContent* lesson,
                                 std::size_t budget = kDefaultContextBudget);

struct ConversationTurn {
  std::string question;
  std::string answer;
};

struct Conversation {
  std::string conversation_id;
  std::string lesson_id;
  std::string context_document;  // frozen at creation
  UnixMillis assembly_timestamp = 0;
  std::vector<ConversationTurn> turns;
};

Json to_json(const Conversation& c);
Conversation conversation_from_json(const Json& j);

class ConversationStore {
 public:
  virtual ~ConversationStore() = default;
  virtual std::optional<Conversation> load(std::string_view id) = 0;
  virtual void save(const Conversation& conversation) = 0;
};

class InMemoryConversationStore final : public ConversationStore {
 public:
  std::optional<Conversation> load(std::string_view id) override;
  void save(const Conversation& conversation) override;

 private:
  std::mutex mutex_;
  std::map<std::string, Conversation, std::less<>> conversations_;
};

/// Shares the session database file.
class SqliteConversationStore final : public ConversationStore {
 public:
  explicit SqliteConversationStore(std::shared_ptr<SqliteDatabase> db) : db_(std::move(db)) {}
  std::optional<Conversation> load(std::string_view id) override;
  void save(const Conversation& conversation) override;

 private:
  std::shared_ptr<SqliteDatabase> db_;
};

struct FeedbackAnswer {
  std::string conversation_id;
  std::string answer;
  bool new_conversation = false;
};

struct LessonActivity {
  std::string lesson_id;
  SummaryBlock summary;
};

class FeedbackService {
 public:
  FeedbackService(EventStore& store, const LessonCatalog& lessons,
                  ConversationStore& conversations, ModelGateway& gateway,
                  std::size_t budget = kDefaultContextBudget);

  /// Without an id, starts a conversation over a freshly assembled document.
  /// Follow-ups reuse the frozen document and never touch the store.
  /// Throws InvalidQuestion, ConversationNotFound, or gateway errors.
  FeedbackAnswer ask(std::optional<std::string> conversation_id, std::string_view lesson_id,
                     std::string question);

  std::vector<LessonActivity> list_lessons_with_activity();

 private:
  EventStore& store_;
  const LessonCatalog& lessons_;
  ConversationStore& conversations_;
  ModelGateway& gateway_;
  std::size_t budget_;
  SessionLocks locks_;
};

}  // namespace tutorwheel
