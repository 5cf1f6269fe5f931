#pragma once

#include <stdexcept>
#include <string>

namespace regpca {

/// Broad failure classes. The CLI maps these onto exit codes.
enum class ErrorKind {
  Io,       // file missing, unreadable, unwritable
  Config,   // invalid parameters or options
  Data,     // malformed input panel
  Numeric,  // singular systems, infeasible fits
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace regpca
