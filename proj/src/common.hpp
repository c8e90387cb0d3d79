#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace transim {

using Addr = std::uint64_t;
using Cycle = std::int64_t;

inline constexpr Addr kLineSize = 64;
inline constexpr Addr kPageSize = 4096;

constexpr Addr line_of(Addr a) { return a & ~(kLineSize - 1); }
constexpr Addr page_of(Addr a) { return a / kPageSize; }

enum class Privilege { User, Kernel };

enum class ErrorCode {
  InvalidArgument,
  Parse,
  Config,
  UnknownProfile,
  Precondition,
  Assembly,
  PrivilegedFlush,
  Internal,
};

// Every recoverable failure in the library surfaces as this exception; the
// C API maps `code()` onto its status enum.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace transim
