#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace mistrat {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file or record.
class FormatError : public Error {
 public:
  using Error::Error;
};

class EmptyCorpusError : public FormatError {
 public:
  EmptyCorpusError() : FormatError("empty corpus: input contains no rows") {}
};

/// Caller passed a value outside the operation's precondition.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Missing or inconsistent configuration (no backend, embedder mismatch, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Backend failed; `attempts` is the number of tries made before giving up.
class BackendError : public Error {
 public:
  BackendError(const std::string& message, std::size_t attempts)
      : Error(message), attempts_(attempts) {}
  std::size_t attempts() const noexcept { return attempts_; }

 private:
  std::size_t attempts_;
};

/// Retryable backend failure (HTTP 429/5xx, connection reset). Consumed by
/// the gateway's retry loop; callers normally see BackendError instead.
class TransientError : public Error {
 public:
  using Error::Error;
};

/// Backend answered but the answer violates the protocol (empty text,
/// malformed JSON).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

/// A gateway failure inside a multi-stage pipeline, tagged with the stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace mistrat
