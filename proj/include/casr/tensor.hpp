#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace casr {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major tensor of doubles.
///
/// A Tensor is a handle: copies share storage. Values are treated as
/// immutable once the tensor has been used as an op input; the one sanctioned
/// mutation path is `mutable_values()` on parameters between training steps.
class Tensor {
 public:
  Tensor();  // 0-d zero
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->values.size(); }

  std::span<const double> values() const { return impl_->values; }
  std::span<double> mutable_values() { return impl_->values; }
  const std::vector<double>& vec() const { return impl_->values; }

  double item() const;
  double operator[](std::size_t flat) const { return impl_->values[flat]; }
  // 2-D accessor.
  double at(std::size_t row, std::size_t col) const {
    return impl_->values[row * impl_->shape.back() + col];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
  }

  // Fresh storage with the same shape and values, detached from any tape.
  Tensor clone() const;

  // Identity of the underlying storage; two handles to one tensor compare equal.
  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Ordered record of differentiable ops for one forward pass.
///
/// Ops record themselves on the tape installed for the current thread by a
/// `Tape::Scope`, but only when at least one input requires a gradient.
/// Gradients are owned by the tape, not by the tensors, so several tapes can
/// differentiate through the same shared parameters on different threads.
class Tape {
 public:
  // Reads the output gradient from the tape and accumulates into inputs.
  using BackwardFn = std::function<void(Tape&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* current();

  // Suspends recording on this thread, e.g. while decoding with trainable parameters.
  class Pause {
   public:
    Pause();
    ~Pause();
    Pause(const Pause&) = delete;
    Pause& operator=(const Pause&) = delete;

   private:
    Tape* previous_;
  };

  // Records `output` as produced from `inputs`. Marks `output` as requiring grad.
  void record(std::vector<Tensor> inputs, Tensor& output, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and walks the tape in reverse recording order.
  void backward(const Tensor& loss);

  // Gradient of the last backward with respect to `t`; empty if `t` received none.
  std::span<const double> grad(const Tensor& t) const;
  bool has_grad(const Tensor& t) const;

  // Mutable buffer for accumulating into `t`; empty span when `t` needs no grad.
  std::span<double> grad_buffer(const Tensor& t);

  void reset();
  std::size_t size() const { return entries_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  struct Entry {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
  std::unordered_map<const void*, std::vector<double>> grads_;
  std::vector<Tensor> keep_alive_;
  bool backward_done_ = false;
};

// Returns the active tape when any input requires grad, else nullptr.
Tape* recording_tape(std::initializer_list<const Tensor*> inputs);

enum class Activation { kSigmoid, kTanh, kRelu, kSwish };

// ---- linear algebra / elementwise -------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

// `b` may equal `a` in shape, be a 1-element tensor, or match a trailing
// suffix of `a`'s shape (broadcast along leading axes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor mul(const Tensor& a, double b);

Tensor activation(const Tensor& x, Activation kind);
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::kSigmoid); }
inline Tensor tanh(const Tensor& x) { return activation(x, Activation::kTanh); }
inline Tensor relu(const Tensor& x) { return activation(x, Activation::kRelu); }
inline Tensor swish(const Tensor& x) { return activation(x, Activation::kSwish); }

// ---- reductions ---------------------------------------------------------------

Tensor sum(const Tensor& x);
// Reduces `axis` away. Slices that are entirely -inf reduce to -inf.
Tensor log_sum_exp(const Tensor& x, std::size_t axis);

// Softmax over the last axis of a 2-D tensor. Where `mask` is given
// (row-major, same numel), false entries get probability 0. Every row must
// keep at least one entry.
Tensor softmax_rows(const Tensor& x, const std::vector<bool>* mask = nullptr);

inline constexpr double kLayerNormEps = 1e-5;
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

struct ConvPadding {
  std::size_t left = 0;
  std::size_t right = 0;
  static ConvPadding causal(std::size_t kernel) { return {kernel - 1, 0}; }
  static ConvPadding same(std::size_t kernel) { return {(kernel - 1) / 2, (kernel - 1) / 2}; }
};
// x: [T x d], kernel: [k x d]. out[t][c] = sum_j kernel[j][c] * x[t + j - left][c].
Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel, ConvPadding padding);

// ---- shape plumbing -----------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);  // 2-D
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);  // 2-D
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);  // 2-D
Tensor concat_cols(const std::vector<Tensor>& parts);                    // 2-D
Tensor pad_rows(const Tensor& x, std::size_t extra);  // append zero rows, 2-D
Tensor flip_rows(const Tensor& x);                     // reverse time, 2-D
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
// a: [T x H], b: [U x H] -> [T x U x H], out[t][u] = a[t] + b[u].
Tensor pairwise_add(const Tensor& a, const Tensor& b);

}  // namespace casr
