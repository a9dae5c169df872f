#pragma once

#include <stdexcept>
#include <string>

namespace rulemine {

enum class ErrorCategory {
  usage,
  config,
  io,
  parse,
  data,
  numeric,
  checkpoint,
  internal,
};

inline const char* to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::config: return "config";
    case ErrorCategory::io: return "io";
    case ErrorCategory::parse: return "parse";
    case ErrorCategory::data: return "data";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::checkpoint: return "checkpoint";
    case ErrorCategory::internal: return "internal";
  }
  return "internal";
}

/// Error with a machine-parseable category; the CLI maps categories to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& msg) : std::runtime_error(msg), cat_(cat) {}
  ErrorCategory category() const { return cat_; }

 private:
  ErrorCategory cat_;
};

[[noreturn]] inline void fail(ErrorCategory cat, const std::string& msg) {
  throw Error(cat, msg);
}

}  // namespace rulemine
