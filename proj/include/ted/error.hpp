#pragma once

#include <stdexcept>
#include <string>

namespace ted {

/// Broad failure categories. The CLI maps each to its own exit code.
enum class ErrorCategory {
  config = 2,
  numerical = 3,
  io = 4,
  shape = 5,
  data = 6,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(ErrorCategory::shape, "input shape: " + what) {}
};

struct ConfigError : Error {
  ConfigError(const std::string& key, const std::string& what)
      : Error(ErrorCategory::config, "config [" + key + "]: " + what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorCategory::numerical, "numerical failure: " + what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, "io: " + what) {}
};

struct ParseError : Error {
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorCategory::io, "parse error at line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct EpisodeFinishedError : Error {
  EpisodeFinishedError() : Error(ErrorCategory::data, "step called on a finished episode") {}
};

/// Batch drawn from the replay buffer does not span two episodes.
struct InsufficientDiversityError : Error {
  explicit InsufficientDiversityError(const std::string& what) : Error(ErrorCategory::data, "insufficient diversity: " + what) {}
};

struct InsufficientEpisodeLengthError : Error {
  explicit InsufficientEpisodeLengthError(const std::string& what)
      : Error(ErrorCategory::data, "insufficient episode length: " + what) {}
};

struct DegenerateSplitError : Error {
  explicit DegenerateSplitError(const std::string& what) : Error(ErrorCategory::data, "degenerate split: " + what) {}
};

}  // namespace ted
