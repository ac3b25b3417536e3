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

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tutorwheel {

/// Base of every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Milliseconds since the Unix epoch, UTC.
using UnixMillis = std::int64_t;

UnixMillis now_millis();

/// "2026-02-02T15:00:00.000Z"
std::string format_timestamp(UnixMillis ms);

/// Accepts "YYYY-MM-DDTHH:MM:SS[.fff]Z". Anything else yields nullopt.
std::optional<UnixMillis> parse_timestamp(std::string_view text);

/// "YYYY-MM-DD" of the UTC day containing ms.
std::string day_of(UnixMillis ms);

/// Seconds rendered as m:ss (or h:mm:ss past an hour).
std::string format_clock(double seconds);

/// URL-safe identifier: [A-Za-z0-9.-]+, no underscores.
bool is_slug(std::string_view id);

std::string trim(std::string_view s);

/// Number of UTF-8 code points; invalid bytes count as one each.
std::size_t utf8_length(std::string_view s);

/// Longest prefix holding at most max_chars code points.
std::string utf8_prefix(std::string_view s, std::size_t max_chars);

}  // namespace tutorwheel
