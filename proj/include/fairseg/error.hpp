#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace fairseg {

enum class ErrorKind {
  Dimension,
  Determinism,
  Spec,
  Config,
  Format,
  Io,
  Label,
  State,
  Unavailable,
  Protocol,
  Verification,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; `kind` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);
  Error(ErrorKind kind, const std::string& what, std::uint64_t offset);

  ErrorKind kind() const noexcept { return kind_; }
  // Byte offset for format errors raised while parsing a file.
  std::optional<std::uint64_t> offset() const noexcept { return offset_; }

 private:
  ErrorKind kind_;
  std::optional<std::uint64_t> offset_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace fairseg
