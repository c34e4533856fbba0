#pragma once

#include <stdexcept>
#include <string>

namespace corl {

// Tensor/vector dimensions that do not chain.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A loss or bootstrap target evaluated to NaN/inf.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, long index)
      : std::runtime_error(what + " (batch index " + std::to_string(index) + ")"), index_(index) {}
  long index() const noexcept { return index_; }

 private:
  long index_;
};

// A selector or continual method asked for a network/model that was not supplied.
class MissingReferenceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace corl
