#pragma once

#include <stdexcept>
#include <string>

namespace trand {

// Base of every error the library throws. code() is a short stable token
// used by the command-line tool in its machine-parseable error line.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// Invalid argument, shape or configuration value.
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& message) : Error("E_PARAM", message) {}
};

// Zero-norm vector where a direction is required.
class DegenerateInputError : public Error {
 public:
  explicit DegenerateInputError(const std::string& message)
      : Error("E_DEGENERATE", message) {}
};

class EmptyTripletError : public Error {
 public:
  explicit EmptyTripletError(const std::string& message)
      : Error("E_NO_TRIPLET", message) {}
};

class EmptyAnchorSetError : public Error {
 public:
  explicit EmptyAnchorSetError(const std::string& message)
      : Error("E_NO_ANCHOR", message) {}
};

// Dataset or checkpoint could not be read back consistently.
class LoadError : public Error {
 public:
  explicit LoadError(const std::string& message) : Error("E_LOAD", message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("E_IO", message) {}
};

class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& message) : Error("E_PROTOCOL", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("E_CONFIG", message) {}
};

}  // namespace trand
