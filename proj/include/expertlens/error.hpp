#pragma once

#include <stdexcept>
#include <string>

namespace expertlens {

/// Base for every failure raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition or invariant (bad config,
/// malformed manifest, mismatched neuron maps). The CLI maps it to exit 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// On-disk format problem: bad magic, unsupported version, truncation.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// An analysis could not be carried out on otherwise valid input.
class AnalysisError : public Error {
 public:
  using Error::Error;
};

}  // namespace expertlens
