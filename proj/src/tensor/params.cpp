#include "casr/params.hpp"

#include <cmath>

#include "casr/errors.hpp"

namespace casr {

Tensor ParamStore::add(const std::string& name, Tensor t) {
  if (find(name) != nullptr) throw ContractError("duplicate parameter name " + name);
  t.set_requires_grad(true);
  entries_.push_back({name, t});
  return t;
}

Tensor ParamStore::uniform(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = rng.uniform(-s, s);
  return add(name, Tensor(std::move(shape), std::move(values)));
}

Tensor ParamStore::constant(const std::string& name, Shape shape, double value) {
  return add(name, Tensor::full(std::move(shape), value));
}

const Tensor* ParamStore::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e.tensor;
  }
  return nullptr;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

Linear Linear::create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                      Rng& rng) {
  Linear l;
  l.weight = store.uniform(name + "/w", {in, out}, in, rng);
  l.bias = store.uniform(name + "/b", {out}, in, rng);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

LayerNormParams LayerNormParams::create(ParamStore& store, const std::string& name, std::size_t dim) {
  return {store.constant(name + "/gain", {dim}, 1.0), store.constant(name + "/bias", {dim}, 0.0)};
}

}  // namespace casr
