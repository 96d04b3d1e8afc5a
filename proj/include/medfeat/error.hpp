#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace medfeat {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input files, schema violations, contract violations on datasets.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Transformation program text that does not conform to the grammar.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t position)
      : Error(message + " at position " + std::to_string(position)),
        position_(position) {}

  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// Reference resolution or statistic fitting failures.
class FitError : public Error {
 public:
  using Error::Error;
};

/// Learner training failures (single-class data, bad hyperparameters).
class TrainError : public Error {
 public:
  using Error::Error;
};

/// The proposer could not produce a program (transport, missing fence, exhausted templates).
class GenerationFailure : public Error {
 public:
  using Error::Error;
};

/// Offline proposer ran out of unrejected templates for an island.
class IslandExhausted : public GenerationFailure {
 public:
  using GenerationFailure::GenerationFailure;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace medfeat
