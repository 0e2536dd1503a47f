#pragma once

#include <stdexcept>
#include <string>

namespace alphazzle {

enum class ErrorKind {
  InvalidSpec,
  ImageTooSmall,
  InvalidOrder,
  CalledOnTerminal,
  OccupiedPosition,
  NonTerminalState,
  HintsOutOfRange,
  EmptyLegalSet,
  RemoteUnreachable,
  MalformedResponse,
  ProtocolViolation,
  CapExceeded,
  DatasetEmpty,
  Io,
  Config,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidSpec: return "invalid-spec";
    case ErrorKind::ImageTooSmall: return "image-too-small";
    case ErrorKind::InvalidOrder: return "invalid-order";
    case ErrorKind::CalledOnTerminal: return "called-on-terminal";
    case ErrorKind::OccupiedPosition: return "occupied-position";
    case ErrorKind::NonTerminalState: return "non-terminal-state";
    case ErrorKind::HintsOutOfRange: return "hints-out-of-range";
    case ErrorKind::EmptyLegalSet: return "empty-legal-set";
    case ErrorKind::RemoteUnreachable: return "remote-unreachable";
    case ErrorKind::MalformedResponse: return "malformed-response";
    case ErrorKind::ProtocolViolation: return "protocol-violation";
    case ErrorKind::CapExceeded: return "cap-exceeded";
    case ErrorKind::DatasetEmpty: return "dataset-empty";
    case ErrorKind::Io: return "io-failure";
    case ErrorKind::Config: return "config-error";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace alphazzle
