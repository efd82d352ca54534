#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace casr {

// Shapes that cannot be combined (matmul inner dims, broadcast, parameter shapes).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Caller violated an operation precondition that is not about shapes.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Object used in a state that does not allow the call (e.g. a second backward).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Bad user-supplied data: token ids, NaN logits, negative hyperparameters.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Training blew up: NaN gradients or a loss past the divergence guard.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File-level failures. `offset` is the byte position where decoding failed,
// or -1 when the failure is not positional (e.g. cannot open).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what, std::int64_t offset = -1)
      : std::runtime_error(offset >= 0 ? what + " (at byte " + std::to_string(offset) + ")" : what),
        offset_(offset) {}
  std::int64_t offset() const { return offset_; }

 private:
  std::int64_t offset_;
};

}  // namespace casr
