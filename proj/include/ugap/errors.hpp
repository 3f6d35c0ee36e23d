#pragma once

#include <stdexcept>
#include <string>

namespace ugap {

/// Base class for all errors raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data: corpus lines, JSONL records, empty texts.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (bad probabilities, unknown formats, bad flags).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Network failure or non-2xx response. Retryable when `retryable()` is set.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, bool retryable)
      : Error(what), retryable_(retryable) {}
  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

/// The endpoint answered but produced nothing usable (e.g. zero generated tokens).
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Conditional and unconditional traces do not line up token-for-token.
class AlignmentError : public Error {
 public:
  AlignmentError(const std::string& what, std::size_t index)
      : Error(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// A ratio whose denominator is zero (model NLL of exactly 0).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Correlation undefined because one input is constant.
class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

/// Least-squares design matrix is singular.
class RankDeficiencyError : public Error {
 public:
  using Error::Error;
};

/// Failure while evaluating one segment pair; carries the pair identity.
class PairError : public Error {
 public:
  PairError(std::string story_id, std::size_t k, const std::string& cause, bool retryable)
      : Error("pair (" + story_id + ", " + std::to_string(k) + "): " + cause),
        story_id_(std::move(story_id)),
        k_(k),
        retryable_(retryable) {}
  const std::string& story_id() const noexcept { return story_id_; }
  std::size_t k() const noexcept { return k_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  std::string story_id_;
  std::size_t k_;
  bool retryable_;
};

}  // namespace ugap
