#pragma once

#include <stdexcept>
#include <string>

namespace astro {

// Raised for bad user input: malformed files, inconsistent configs, shape
// mismatches. The CLI maps this to exit code 2; anything else is exit 3.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace astro
