#pragma once

#include <stdexcept>
#include <string>

namespace routelab {

/// Invalid or infeasible configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Missing or malformed input data (CLI exit code 3).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite values during training or a failed numeric check (exit code 4).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A route stepped outside its grid; carries the offending segment index.
class SimulationError : public DataError {
 public:
  SimulationError(const std::string& msg, int segment_index)
      : DataError(msg), segment_index_(segment_index) {}
  int segment_index() const { return segment_index_; }

 private:
  int segment_index_;
};

/// A word outside the closed vocabulary.
class OovError : public DataError {
 public:
  explicit OovError(const std::string& word)
      : DataError("out-of-vocabulary word: \"" + word + "\""), word_(word) {}
  const std::string& word() const { return word_; }

 private:
  std::string word_;
};

}  // namespace routelab
