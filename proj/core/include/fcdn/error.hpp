#pragma once

#include <stdexcept>
#include <string>

namespace fcdn {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments, malformed configs, contract violations caught up front.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// File and serialization problems: missing paths, bad magic, truncated payloads.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

}  // namespace fcdn
