#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>

namespace mtag {

// Bad user input: unreadable files, malformed records, invalid options.
// The CLI maps these to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Broken invariant or failed computation inside the library (exit code 1).
class InternalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Model file could not be decoded.
class ModelFormatError : public InputError {
 public:
  enum class Kind { BadMagic, BadVersion, BadChecksum, Malformed };

  ModelFormatError(Kind kind, const std::string& what) : InputError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

using WarningSink = std::function<void(const std::string&)>;

namespace detail {
inline std::mutex& warning_mutex() {
  static std::mutex m;
  return m;
}
inline WarningSink& warning_sink() {
  static WarningSink sink = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return sink;
}
}  // namespace detail

// Replaces the process-wide warning handler; returns the previous one.
inline WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard<std::mutex> lock(detail::warning_mutex());
  std::swap(detail::warning_sink(), sink);
  return sink;
}

inline void warn(const std::string& msg) {
  std::lock_guard<std::mutex> lock(detail::warning_mutex());
  if (detail::warning_sink()) detail::warning_sink()(msg);
}

}  // namespace mtag
