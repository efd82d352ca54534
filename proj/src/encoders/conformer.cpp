#include <cmath>

#include "casr/encoders.hpp"
#include "casr/errors.hpp"

namespace casr {

AttentionParams AttentionParams::create(ParamStore& store, const std::string& name, std::size_t dim,
                                        std::size_t heads, Rng& rng) {
  if (heads == 0 || dim % heads != 0) {
    throw InputError("attention: dim " + std::to_string(dim) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  AttentionParams p;
  p.query = Linear::create(store, name + "/query", dim, dim, rng);
  p.key = Linear::create(store, name + "/key", dim, dim, rng);
  p.value = Linear::create(store, name + "/value", dim, dim, rng);
  p.output = Linear::create(store, name + "/output", dim, dim, rng);
  p.heads = heads;
  return p;
}

std::vector<bool> attention_mask(std::size_t T, std::optional<std::size_t> left, std::size_t right) {
  std::vector<bool> mask(T * T, false);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t lo = (left && *left < t) ? t - *left : 0;
    const std::size_t hi = std::min(T - 1, t + right);
    for (std::size_t s = lo; s <= hi; ++s) mask[t * T + s] = true;
  }
  return mask;
}

Tensor masked_self_attention(const Tensor& x, const AttentionParams& p,
                             std::optional<std::size_t> left, std::size_t right) {
  const std::size_t T = x.dim(0), dim = x.dim(1);
  if (p.heads == 0 || dim % p.heads != 0) {
    throw DimensionError("attention: dim " + std::to_string(dim) + " not divisible by heads");
  }
  const std::size_t dk = dim / p.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const std::vector<bool> mask = attention_mask(T, left, right);
  const Tensor q = p.query(x), k = p.key(x), v = p.value(x);
  std::vector<Tensor> heads;
  heads.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    const Tensor qh = slice_cols(q, h * dk, (h + 1) * dk);
    const Tensor kh = slice_cols(k, h * dk, (h + 1) * dk);
    const Tensor vh = slice_cols(v, h * dk, (h + 1) * dk);
    const Tensor scores = mul(matmul(qh, transpose(kh)), scale);
    heads.push_back(matmul(softmax_rows(scores, &mask), vh));
  }
  return p.output(p.heads == 1 ? heads[0] : concat_cols(heads));
}

ConformerParams ConformerParams::create(ParamStore& store, const std::string& name, std::size_t dim,
                                        std::size_t ff_dim, std::size_t heads, std::size_t kernel,
                                        Rng& rng) {
  ConformerParams p;
  p.ff1_norm = LayerNormParams::create(store, name + "/ff1_norm", dim);
  p.ff1_in = Linear::create(store, name + "/ff1_in", dim, ff_dim, rng);
  p.ff1_out = Linear::create(store, name + "/ff1_out", ff_dim, dim, rng);
  p.attn_norm = LayerNormParams::create(store, name + "/attn_norm", dim);
  p.attn = AttentionParams::create(store, name + "/attn", dim, heads, rng);
  p.conv_norm = LayerNormParams::create(store, name + "/conv_norm", dim);
  p.conv_expand = Linear::create(store, name + "/conv_expand", dim, 2 * dim, rng);
  p.conv_depthwise = store.uniform(name + "/conv_depthwise", {kernel, dim}, kernel, rng);
  p.conv_mid_norm = LayerNormParams::create(store, name + "/conv_mid_norm", dim);
  p.conv_project = Linear::create(store, name + "/conv_project", dim, dim, rng);
  p.ff2_norm = LayerNormParams::create(store, name + "/ff2_norm", dim);
  p.ff2_in = Linear::create(store, name + "/ff2_in", dim, ff_dim, rng);
  p.ff2_out = Linear::create(store, name + "/ff2_out", ff_dim, dim, rng);
  p.final_norm = LayerNormParams::create(store, name + "/final_norm", dim);
  return p;
}

namespace {

Tensor feed_forward(const Tensor& x, const LayerNormParams& norm, const Linear& in, const Linear& out) {
  return out(swish(in(norm(x))));
}

Tensor conv_module(const Tensor& x, const ConformerParams& p, std::size_t right) {
  const std::size_t dim = x.dim(1);
  const std::size_t k = p.conv_depthwise.dim(0);
  const Tensor expanded = p.conv_expand(p.conv_norm(x));
  const Tensor glu = mul(slice_cols(expanded, 0, dim), sigmoid(slice_cols(expanded, dim, 2 * dim)));
  const std::size_t reach = std::min((k - 1) / 2, right);
  const ConvPadding pad{k - 1 - reach, reach};
  const Tensor conv = depthwise_conv1d(glu, p.conv_depthwise, pad);
  return p.conv_project(swish(p.conv_mid_norm(conv)));
}

}  // namespace

Tensor conformer_layer_forward(const Tensor& x, const ConformerParams& p, std::size_t right) {
  Tensor h = add(x, mul(feed_forward(x, p.ff1_norm, p.ff1_in, p.ff1_out), 0.5));
  h = add(h, masked_self_attention(p.attn_norm(h), p.attn, std::nullopt, right));
  h = add(h, conv_module(h, p, right));
  h = add(h, mul(feed_forward(h, p.ff2_norm, p.ff2_in, p.ff2_out), 0.5));
  return p.final_norm(h);
}

Tensor time_reduce(const Tensor& x, const Linear& proj) {
  const std::size_t T = x.dim(0), dim = x.dim(1);
  if (proj.in_dim() != 2 * dim) {
    throw DimensionError("time_reduce: input " + shape_to_string(x.shape()) + " vs projection " +
                         shape_to_string(proj.weight.shape()));
  }
  const Tensor even = (T % 2 == 0) ? x : pad_rows(x, 1);
  return proj(reshape(even, {(T + 1) / 2, 2 * dim}));
}

}  // namespace casr
