#pragma once

#include <stdexcept>
#include <string>

namespace ddiff {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  config,     ///< invalid parameters or configuration
  data,       ///< malformed or out-of-range input data
  domain,     ///< argument outside a function's mathematical domain
  singular,   ///< zero-mass state, infinite score or intensity
  numerical,  ///< non-convergence, bound violation, invariant breach
  io,         ///< file system failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

// Literal messages stay as const char* so the passing path never allocates.
inline void require(bool ok, ErrorKind kind, const char* what) {
  if (!ok) [[unlikely]] fail(kind, what);
}

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) [[unlikely]] fail(kind, what);
}

}  // namespace ddiff
