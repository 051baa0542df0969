#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hapticmesh {

enum class ErrorCode {
  InvalidConfig,
  OutOfRange,
  InvalidShape,
  EncodeError,
  ShortBuffer,
  BadVersion,
  BadType,
  ProtocolError,
  StreamCorrupt,
  CapabilityMismatch,
  SessionFull,
  NoData,
  SchemaError,
  TraceCorrupt,
  ConnectionError,
  PortInUse,
  Timeout,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig: return "invalid-config";
    case ErrorCode::OutOfRange: return "out-of-range";
    case ErrorCode::InvalidShape: return "invalid-shape";
    case ErrorCode::EncodeError: return "encode-error";
    case ErrorCode::ShortBuffer: return "short-buffer";
    case ErrorCode::BadVersion: return "bad-version";
    case ErrorCode::BadType: return "bad-type";
    case ErrorCode::ProtocolError: return "protocol-error";
    case ErrorCode::StreamCorrupt: return "stream-corrupt";
    case ErrorCode::CapabilityMismatch: return "capability-mismatch";
    case ErrorCode::SessionFull: return "session-full";
    case ErrorCode::NoData: return "no-data";
    case ErrorCode::SchemaError: return "schema-error";
    case ErrorCode::TraceCorrupt: return "trace-corrupt";
    case ErrorCode::ConnectionError: return "connection-error";
    case ErrorCode::PortInUse: return "port-in-use";
    case ErrorCode::Timeout: return "timeout";
  }
  return "unknown";
}

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& reason)
      : std::runtime_error(std::string(to_string(code)) + ": " + reason), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hapticmesh
