#include "fairseg/error.hpp"

#include <cmath>

#include "fairseg/grid.hpp"

namespace fairseg {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::Determinism: return "determinism error";
    case ErrorKind::Spec: return "spec error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::Label: return "label error";
    case ErrorKind::State: return "state error";
    case ErrorKind::Unavailable: return "unavailable";
    case ErrorKind::Protocol: return "protocol error";
    case ErrorKind::Verification: return "verification failure";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

Error::Error(ErrorKind kind, const std::string& what, std::uint64_t offset)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what + " (at byte offset " +
                         std::to_string(offset) + ")"),
      kind_(kind),
      offset_(offset) {}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

bool Grid::all_finite() const noexcept {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace fairseg
