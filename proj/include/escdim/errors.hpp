#pragma once

#include <stdexcept>
#include <string>

namespace escdim {

enum class ErrorKind { validation, numerical, io };

// Base of every error raised by the library. The kind decides the CLI exit
// code: validation -> 2, numerical -> 3, io -> 4.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, std::string stage = {})
      : std::runtime_error(stage.empty() ? what : stage + ": " + what),
        kind_(kind),
        stage_(std::move(stage)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& stage() const noexcept { return stage_; }

  int exit_code() const noexcept {
    switch (kind_) {
      case ErrorKind::validation: return 2;
      case ErrorKind::numerical: return 3;
      case ErrorKind::io: return 4;
    }
    return 1;
  }

 private:
  ErrorKind kind_;
  std::string stage_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what, std::string stage = {})
      : Error(ErrorKind::validation, what, std::move(stage)) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what, std::string stage = {})
      : Error(ErrorKind::numerical, what, std::move(stage)) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what, std::string stage = {})
      : Error(ErrorKind::io, what, std::move(stage)) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace escdim
