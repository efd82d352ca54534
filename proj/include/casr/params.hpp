#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "casr/rng.hpp"
#include "casr/tensor.hpp"

namespace casr {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Owns every trainable tensor of a model, in registration order.
///
/// Modules keep Tensor handles into the store, so in-place updates by the
/// optimizer or a checkpoint load are visible everywhere without rebinding.
class ParamStore {
 public:
  // uniform(-s, s) with s = 1/sqrt(fan_in).
  Tensor uniform(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng);
  Tensor constant(const std::string& name, Shape shape, double value);

  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::vector<NamedTensor>& entries() { return entries_; }
  const Tensor* find(const std::string& name) const;
  std::size_t total_size() const;

 private:
  Tensor add(const std::string& name, Tensor t);
  std::vector<NamedTensor> entries_;
};

/// y = x W + b, x: [N x in].
struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]

  static Linear create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                       Rng& rng);
  Tensor operator()(const Tensor& x) const;
  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  static LayerNormParams create(ParamStore& store, const std::string& name, std::size_t dim);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

}  // namespace casr
