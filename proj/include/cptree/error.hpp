#pragma once

#include <stdexcept>
#include <string>

namespace cptree {

/// Invalid input or configuration. The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// A numerical or simulation budget was exhausted (series tail too large,
/// replica budget too small, integer saturation). The CLI maps this to exit code 3.
class BudgetError : public std::runtime_error {
 public:
  explicit BudgetError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

}  // namespace cptree
