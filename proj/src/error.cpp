#include "membridge/error.hpp"

namespace membridge {

void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Config: return "config";
    case ErrorKind::Format: return "format";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace membridge
