#pragma once

#include <stdexcept>
#include <string>

namespace admal {

// Error categories surfaced through the C API as status codes.
enum class ErrorCode {
  InvalidArgument = 1,
  Schema,
  Io,
  Storage,
  Auth,
  Transport,
  IpLiteral,
  InvalidHost,
  MalformedMessage,
  Undefined,
  ZeroBase,
  EmptyInput,
  UnknownCampaign,
  Bind,
  Config,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace admal
