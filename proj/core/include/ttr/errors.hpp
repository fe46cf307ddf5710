// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace ttr {

/// Malformed or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error("config: " + msg) {}
};

/// Missing or unreadable/unwritable files (CLI exit code 3).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error("io: " + msg) {}
};

/// Non-finite values where finite ones are required, e.g. NaN loss (CLI exit code 4).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error("numeric: " + msg) {}
};

}  // namespace ttr
