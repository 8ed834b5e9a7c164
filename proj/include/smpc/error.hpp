#pragma once

#include <stdexcept>
#include <string>

namespace smpc {

/// Coarse failure category. The CLI maps each category onto an exit code.
enum class ErrorKind {
  kDimension,
  kNumeric,
  kConfig,
  kSynthesis,
  kCertification,
  kIo,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace smpc
