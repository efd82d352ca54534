#include "casr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "casr/errors.hpp"

namespace casr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_to_string(t.shape()));
  }
}

// How `b` lines up against `a` for elementwise ops.
enum class Broadcast { kSame, kScalar, kTrailing };

Broadcast classify(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.numel() == 1 && b.rank() <= 1) return Broadcast::kScalar;
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sb.size() < sa.size() && std::equal(sb.begin(), sb.end(), sa.end() - sb.size())) {
    return Broadcast::kTrailing;
  }
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_to_string(sb) + " onto " +
                       shape_to_string(sa));
}

template <class F>
void record_if_needed(std::initializer_list<const Tensor*> inputs, Tensor& out, F&& backward) {
  Tape* tape = recording_tape(inputs);
  if (tape == nullptr) return;
  std::vector<Tensor> ins;
  ins.reserve(inputs.size());
  for (const Tensor* t : inputs) ins.push_back(*t);
  tape->record(std::move(ins), out, std::forward<F>(backward));
}

thread_local Tape* g_current_tape = nullptr;

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---- Tensor ---------------------------------------------------------------------

Tensor::Tensor() : impl_(std::make_shared<Impl>()) { impl_->values.assign(1, 0.0); }

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<Impl>()) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor: shape " + shape_to_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item: tensor " + shape_to_string(shape()) + " is not scalar");
  return impl_->values[0];
}

Tensor Tensor::clone() const { return Tensor(shape(), vec()); }

// ---- Tape -------------------------------------------------------------------------

Tape::Scope::Scope(Tape& tape) : previous_(g_current_tape) { g_current_tape = &tape; }
Tape::Scope::~Scope() { g_current_tape = previous_; }

Tape* Tape::current() { return g_current_tape; }

Tape::Pause::Pause() : previous_(g_current_tape) { g_current_tape = nullptr; }
Tape::Pause::~Pause() { g_current_tape = previous_; }

Tape* recording_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = g_current_tape;
  if (tape == nullptr) return nullptr;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return tape;
  }
  return nullptr;
}

void Tape::record(std::vector<Tensor> inputs, Tensor& output, BackwardFn backward) {
  if (backward_done_) throw StateError("tape: cannot record after backward; call reset()");
  output.set_requires_grad(true);
  entries_.push_back(Entry{std::move(inputs), output, std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_to_string(loss.shape()));
  }
  if (backward_done_) throw StateError("backward: already run on this tape; call reset() first");
  backward_done_ = true;
  grads_.clear();
  if (!loss.requires_grad()) return;
  grads_[loss.id()].assign(1, 1.0);
  keep_alive_.push_back(loss);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (grads_.find(it->output.id()) == grads_.end()) continue;
    it->backward(*this);
  }
}

std::span<const double> Tape::grad(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) return {};
  return it->second;
}

bool Tape::has_grad(const Tensor& t) const { return grads_.count(t.id()) != 0; }

std::span<double> Tape::grad_buffer(const Tensor& t) {
  if (!t.requires_grad()) return {};
  auto [it, inserted] = grads_.try_emplace(t.id());
  if (inserted) {
    it->second.assign(t.numel(), 0.0);
    keep_alive_.push_back(t);
  }
  return it->second;
}

void Tape::reset() {
  entries_.clear();
  grads_.clear();
  keep_alive_.clear();
  backward_done_ = false;
}

// ---- matmul ---------------------------------------------------------------------

namespace {

// c[m x n] += a[m x k] * b[k x n]; each output row depends only on its row of a.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  gemm_acc(a.values().data(), b.values().data(), out.data(), m, k, n);
  Tensor c({m, n}, std::move(out));
  record_if_needed({&a, &b}, c, [a, b, c, m, k, n](Tape& tape) {
    const auto g = tape.grad(c);
    if (auto ga = tape.grad_buffer(a); !ga.empty()) {
      // dA = dC * B^T
      const auto bv = b.values();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (auto gb = tape.grad_buffer(b); !gb.empty()) {
      // dB = A^T * dC
      const auto av = a.values();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
      }
    }
  });
  return c;
}

// ---- elementwise ------------------------------------------------------------------

namespace {

enum class Binary { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, Binary kind, const char* name) {
  const Broadcast mode = classify(a, b, name);
  const std::size_t n = a.numel();
  const std::size_t bn = b.numel();
  const auto av = a.values();
  const auto bv = b.values();
  auto b_index = [mode, bn](std::size_t i) -> std::size_t {
    switch (mode) {
      case Broadcast::kSame: return i;
      case Broadcast::kScalar: return 0;
      case Broadcast::kTrailing: return i % bn;
    }
    return i;
  };
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[i], y = bv[b_index(i)];
    switch (kind) {
      case Binary::kAdd: out[i] = x + y; break;
      case Binary::kSub: out[i] = x - y; break;
      case Binary::kMul: out[i] = x * y; break;
    }
  }
  Tensor c(a.shape(), std::move(out));
  record_if_needed({&a, &b}, c, [a, b, c, kind, n, b_index](Tape& tape) {
    const auto g = tape.grad(c);
    const auto av = a.values();
    const auto bv = b.values();
    if (auto ga = tape.grad_buffer(a); !ga.empty()) {
      for (std::size_t i = 0; i < n; ++i) {
        ga[i] += kind == Binary::kMul ? g[i] * bv[b_index(i)] : g[i];
      }
    }
    if (auto gb = tape.grad_buffer(b); !gb.empty()) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = b_index(i);
        switch (kind) {
          case Binary::kAdd: gb[j] += g[i]; break;
          case Binary::kSub: gb[j] -= g[i]; break;
          case Binary::kMul: gb[j] += g[i] * av[i]; break;
        }
      }
    }
  });
  return c;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kMul, "mul"); }
Tensor add(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
Tensor mul(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }

Tensor activation(const Tensor& x, Activation kind) {
  const std::size_t n = x.numel();
  const auto xv = x.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = xv[i];
    switch (kind) {
      case Activation::kSigmoid: out[i] = stable_sigmoid(v); break;
      case Activation::kTanh: out[i] = std::tanh(v); break;
      case Activation::kRelu: out[i] = v > 0.0 ? v : 0.0; break;
      case Activation::kSwish: out[i] = v * stable_sigmoid(v); break;
    }
  }
  Tensor y(x.shape(), std::move(out));
  record_if_needed({&x}, y, [x, y, kind, n](Tape& tape) {
    const auto g = tape.grad(y);
    auto gx = tape.grad_buffer(x);
    const auto xv = x.values();
    const auto yv = y.values();
    for (std::size_t i = 0; i < n; ++i) {
      double d = 0.0;
      switch (kind) {
        case Activation::kSigmoid: d = yv[i] * (1.0 - yv[i]); break;
        case Activation::kTanh: d = 1.0 - yv[i] * yv[i]; break;
        case Activation::kRelu: d = xv[i] > 0.0 ? 1.0 : 0.0; break;
        case Activation::kSwish: {
          const double s = stable_sigmoid(xv[i]);
          d = s + xv[i] * s * (1.0 - s);
          break;
        }
      }
      gx[i] += g[i] * d;
    }
  });
  return y;
}

// ---- reductions -----------------------------------------------------------------

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  Tensor y = Tensor::scalar(acc);
  record_if_needed({&x}, y, [x, y](Tape& tape) {
    const double g = tape.grad(y)[0];
    for (double& v : tape.grad_buffer(x)) v += g;
  });
  return y;
}

Tensor log_sum_exp(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("log_sum_exp: axis " + std::to_string(axis) + " out of range for " +
                         shape_to_string(x.shape()));
  }
  const auto& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out_shape.push_back(s[i]);
  }
  const auto xv = x.values();
  std::vector<double> out(outer * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      double mx = kNegInf;
      for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, xv[(o * n + k) * inner + in]);
      if (mx == kNegInf) {
        out[o * inner + in] = kNegInf;
        continue;
      }
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += std::exp(xv[(o * n + k) * inner + in] - mx);
      out[o * inner + in] = mx + std::log(acc);
    }
  }
  Tensor y(std::move(out_shape), std::move(out));
  record_if_needed({&x}, y, [x, y, outer, inner, n](Tape& tape) {
    const auto g = tape.grad(y);
    auto gx = tape.grad_buffer(x);
    const auto xv = x.values();
    const auto yv = y.values();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const double lse = yv[o * inner + in];
        if (lse == kNegInf) continue;
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t idx = (o * n + k) * inner + in;
          gx[idx] += g[o * inner + in] * std::exp(xv[idx] - lse);
        }
      }
    }
  });
  return y;
}

Tensor softmax_rows(const Tensor& x, const std::vector<bool>* mask) {
  require_rank(x, 2, "softmax_rows");
  if (mask != nullptr && mask->size() != x.numel()) {
    throw DimensionError("softmax_rows: mask size does not match " + shape_to_string(x.shape()));
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  const auto xv = x.values();
  std::vector<double> out(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = kNegInf;
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask && !(*mask)[r * cols + c]) continue;
      mx = std::max(mx, xv[r * cols + c]);
    }
    if (mx == kNegInf) throw ContractError("softmax_rows: row " + std::to_string(r) + " fully masked");
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask && !(*mask)[r * cols + c]) continue;
      out[r * cols + c] = std::exp(xv[r * cols + c] - mx);
      z += out[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= z;
  }
  Tensor y({rows, cols}, std::move(out));
  record_if_needed({&x}, y, [x, y, rows, cols](Tape& tape) {
    const auto g = tape.grad(y);
    auto gx = tape.grad_buffer(x);
    const auto yv = y.values();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * yv[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        gx[r * cols + c] += yv[r * cols + c] * (g[r * cols + c] - dot);
      }
    }
  });
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  if (x.rank() == 0 || gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != x.shape().back() ||
      bias.dim(0) != x.shape().back()) {
    throw DimensionError("layer_norm: input " + shape_to_string(x.shape()) + " with gain " +
                         shape_to_string(gain.shape()) + " and bias " + shape_to_string(bias.shape()));
  }
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += row[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mean) * (row[i] - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t i = 0; i < d; ++i) {
      xhat[r * d + i] = (row[i] - mean) * inv_std[r];
      out[r * d + i] = xhat[r * d + i] * gv[i] + bv[i];
    }
  }
  Tensor y(x.shape(), std::move(out));
  record_if_needed({&x, &gain, &bias}, y,
                   [x, gain, bias, y, d, rows, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)](Tape& tape) {
                     const auto g = tape.grad(y);
                     const auto gv = gain.values();
                     if (auto gg = tape.grad_buffer(gain); !gg.empty()) {
                       for (std::size_t i = 0; i < rows * d; ++i) gg[i % d] += g[i] * xhat[i];
                     }
                     if (auto gb = tape.grad_buffer(bias); !gb.empty()) {
                       for (std::size_t i = 0; i < rows * d; ++i) gb[i % d] += g[i];
                     }
                     if (auto gx = tape.grad_buffer(x); !gx.empty()) {
                       for (std::size_t r = 0; r < rows; ++r) {
                         double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                         for (std::size_t i = 0; i < d; ++i) {
                           const double dxh = g[r * d + i] * gv[i];
                           mean_dxhat += dxh;
                           mean_dxhat_xhat += dxh * xhat[r * d + i];
                         }
                         mean_dxhat /= static_cast<double>(d);
                         mean_dxhat_xhat /= static_cast<double>(d);
                         for (std::size_t i = 0; i < d; ++i) {
                           const double dxh = g[r * d + i] * gv[i];
                           gx[r * d + i] += inv_std[r] *
                                            (dxh - mean_dxhat - xhat[r * d + i] * mean_dxhat_xhat);
                         }
                       }
                     }
                   });
  return y;
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel, ConvPadding padding) {
  require_rank(x, 2, "depthwise_conv1d");
  require_rank(kernel, 2, "depthwise_conv1d");
  const std::size_t T = x.dim(0), d = x.dim(1), k = kernel.dim(0);
  if (k == 0 || kernel.dim(1) != d || padding.left + padding.right != k - 1) {
    throw DimensionError("depthwise_conv1d: input " + shape_to_string(x.shape()) + ", kernel " +
                         shape_to_string(kernel.shape()) + ", padding " +
                         std::to_string(padding.left) + "/" + std::to_string(padding.right));
  }
  const auto xv = x.values();
  const auto kv = kernel.values();
  const auto left = static_cast<std::ptrdiff_t>(padding.left);
  std::vector<double> out(T * d, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - left;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
      for (std::size_t c = 0; c < d; ++c) out[t * d + c] += kv[j * d + c] * xv[src * d + c];
    }
  }
  Tensor y({T, d}, std::move(out));
  record_if_needed({&x, &kernel}, y, [x, kernel, y, T, d, k, left](Tape& tape) {
    const auto g = tape.grad(y);
    const auto xv = x.values();
    const auto kv = kernel.values();
    auto gx = tape.grad_buffer(x);
    auto gk = tape.grad_buffer(kernel);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - left;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
        for (std::size_t c = 0; c < d; ++c) {
          if (!gx.empty()) gx[src * d + c] += g[t * d + c] * kv[j * d + c];
          if (!gk.empty()) gk[j * d + c] += g[t * d + c] * xv[src * d + c];
        }
      }
    }
  });
  return y;
}

// ---- shape plumbing ---------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_to_string(x.shape()) + " -> " + shape_to_string(shape));
  }
  Tensor y(std::move(shape), x.vec());
  record_if_needed({&x}, y, [x, y](Tape& tape) {
    const auto g = tape.grad(y);
    auto gx = tape.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
  return y;
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  const auto xv = x.values();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  }
  Tensor y({c, r}, std::move(out));
  record_if_needed({&x}, y, [x, y, r, c](Tape& tape) {
    const auto g = tape.grad(y);
    auto gx = tape.grad_buffer(x);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
    }
  });
  return y;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_cols");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (begin > end || end > c) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of " + shape_to_string(x.shape()));
  }
  const std::size_t w = end - begin;
  const auto xv = x.values();
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(xv.data() + i * c + begin, w, out.data() + i * w);
  }
  Tensor y({r, w}, std::move(out));
  record_if_needed({&x}, y, [x, y, r, c, w, begin](Tape& tape) {
    const auto g = tape.grad(y);
    auto gx = tape.grad_buffer(x);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < w; ++j) gx[i * c + begin + j] += g[i * w + j];
    }
  });
  return y;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_rows");
  const std::size_t c = x.dim(1);
  if (begin > end || end > x.dim(0)) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of " + shape_to_string(x.shape()));
  }
  const auto xv = x.values();
  Tensor y({end - begin, c}, std::vector<double>(xv.begin() + begin * c, xv.begin() + end * c));
  record_if_needed({&x}, y, [x, y, begin, c](Tape& tape) {
    const auto g = tape.grad(y);
    auto gx = tape.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin * c + i] += g[i];
  });
  return y;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t r = parts[0].dim(0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != r) throw DimensionError("concat_cols: row mismatch " + shape_to_string(p.shape()));
    total += p.dim(1);
  }
  std::vector<double> out(r * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    const auto pv = p.values();
    for (std::size_t i = 0; i < r; ++i) std::copy_n(pv.data() + i * w, w, out.data() + i * total + offset);
    offset += w;
  }
  Tensor y({r, total}, std::move(out));
  Tape* tape = Tape::current();
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (tape != nullptr && any) {
    tape->record(parts, y, [parts, y, r, total](Tape& t) {
      const auto g = t.grad(y);
      std::size_t off = 0;
      for (const auto& p : parts) {
        const std::size_t w = p.dim(1);
        if (auto gp = t.grad_buffer(p); !gp.empty()) {
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * total + off + j];
          }
        }
        off += w;
      }
    });
  }
  return y;
}

Tensor pad_rows(const Tensor& x, std::size_t extra) {
  require_rank(x, 2, "pad_rows");
  std::vector<double> out = x.vec();
  out.resize((x.dim(0) + extra) * x.dim(1), 0.0);
  Tensor y({x.dim(0) + extra, x.dim(1)}, std::move(out));
  record_if_needed({&x}, y, [x, y](Tape& tape) {
    const auto g = tape.grad(y);
    auto gx = tape.grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
  return y;
}

Tensor flip_rows(const Tensor& x) {
  require_rank(x, 2, "flip_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  const auto xv = x.values();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) std::copy_n(xv.data() + (r - 1 - i) * c, c, out.data() + i * c);
  Tensor y({r, c}, std::move(out));
  record_if_needed({&x}, y, [x, y, r, c](Tape& tape) {
    const auto g = tape.grad(y);
    auto gx = tape.grad_buffer(x);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) gx[(r - 1 - i) * c + j] += g[i * c + j];
    }
  });
  return y;
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_rank(table, 2, "gather_rows");
  const std::size_t rows = table.dim(0), c = table.dim(1);
  const auto tv = table.values();
  std::vector<double> out(ids.size() * c);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows) {
      throw InputError("gather_rows: id " + std::to_string(ids[i]) + " out of range [0," +
                       std::to_string(rows) + ")");
    }
    std::copy_n(tv.data() + ids[i] * c, c, out.data() + i * c);
  }
  Tensor y({ids.size(), c}, std::move(out));
  record_if_needed({&table}, y,
                   [table, y, c, idv = std::vector<std::size_t>(ids.begin(), ids.end())](Tape& tape) {
                     const auto g = tape.grad(y);
                     auto gt = tape.grad_buffer(table);
                     for (std::size_t i = 0; i < idv.size(); ++i) {
                       for (std::size_t j = 0; j < c; ++j) gt[idv[i] * c + j] += g[i * c + j];
                     }
                   });
  return y;
}

Tensor pairwise_add(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "pairwise_add");
  require_rank(b, 2, "pairwise_add");
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("pairwise_add: " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
  const std::size_t T = a.dim(0), U = b.dim(0), H = a.dim(1);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(T * U * H);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u < U; ++u) {
      for (std::size_t h = 0; h < H; ++h) out[(t * U + u) * H + h] = av[t * H + h] + bv[u * H + h];
    }
  }
  Tensor y({T, U, H}, std::move(out));
  record_if_needed({&a, &b}, y, [a, b, y, T, U, H](Tape& tape) {
    const auto g = tape.grad(y);
    auto ga = tape.grad_buffer(a);
    auto gb = tape.grad_buffer(b);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t u = 0; u < U; ++u) {
        for (std::size_t h = 0; h < H; ++h) {
          const double v = g[(t * U + u) * H + h];
          if (!ga.empty()) ga[t * H + h] += v;
          if (!gb.empty()) gb[u * H + h] += v;
        }
      }
    }
  });
  return y;
}

}  // namespace casr
