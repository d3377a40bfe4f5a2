#pragma once

#include <stdexcept>
#include <string>

namespace gridanneal {

// Raised for malformed input text (MATPOWER or JSON). Messages carry the
// offending line or JSON path.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a structurally well-formed case violates a model invariant
// (no slack, dangling branch endpoint, bad bounds, ...).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gridanneal
