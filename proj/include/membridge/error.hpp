#pragma once

#include <stdexcept>
#include <string>

namespace membridge {

// Domain errors are violations of an operation's preconditions on valid
// input (a too-short stream, too many segments). Config errors are bad
// shapes or parameters. Format and Io errors come from file handling.
enum class ErrorKind { Domain, Config, Format, Io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const char* message) {
  if (!condition) fail(kind, message);
}

const char* to_string(ErrorKind kind) noexcept;

}  // namespace membridge
