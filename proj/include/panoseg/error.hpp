#pragma once

#include <stdexcept>
#include <string>

namespace panoseg {

// Domain error carrying a stable short code ("malformed scan", "empty cloud", ...)
// that tests and callers can match on, plus a free-form detail string.
class Error : public std::runtime_error {
 public:
  explicit Error(std::string code, const std::string& detail = "")
      : std::runtime_error(detail.empty() ? code : code + ": " + detail),
        code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace panoseg
