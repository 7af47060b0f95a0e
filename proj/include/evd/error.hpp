#pragma once

#include <stdexcept>
#include <string>

namespace evd {

// Error family drives the CLI exit code: usage 1, data 2, numeric 3.
enum class ErrorKind { Usage = 1, Data = 2, Numeric = 3 };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_data(const std::string& what) {
  throw Error(ErrorKind::Data, what);
}

[[noreturn]] inline void throw_usage(const std::string& what) {
  throw Error(ErrorKind::Usage, what);
}

[[noreturn]] inline void throw_numeric(const std::string& what) {
  throw Error(ErrorKind::Numeric, what);
}

}  // namespace evd
