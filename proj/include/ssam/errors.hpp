#pragma once

#include <stdexcept>
#include <string>

namespace ssam {

/// Tensor or vector dimensions disagree with what an operation expects.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A layer was driven out of order, e.g. backward without a forward.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed input file; `line()` is 1-based, 0 when not line-specific.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A loss or gradient became non-finite during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ssam
