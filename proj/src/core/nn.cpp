// SPDX-License-Identifier: Apache-2.0
#include "duet/nn.hpp"

#include <cmath>

#include "duet/errors.hpp"
#include "duet/rng.hpp"

namespace duet {

Parameter make_parameter(std::string name, Shape shape, Init init, std::uint64_t seed, double stddev) {
  const std::size_t n = shape_numel(shape);
  std::vector<double> data(n, init == Init::ones ? 1.0 : 0.0);
  if (init == Init::normal) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(name.data());
    Rng rng(Rng::derive(seed, fnv1a({bytes, name.size()})));
    for (double& v : data) v = stddev * rng.normal();
  }
  Parameter p;
  p.name = std::move(name);
  p.tensor = Tensor::from(std::move(shape), std::move(data), true);
  return p;
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed, bool with_bias) {
  weight = make_parameter(name + ".weight", {in, out}, Init::normal, seed, 1.0 / std::sqrt(static_cast<double>(in)));
  if (with_bias) bias = make_parameter(name + ".bias", {out}, Init::zeros, seed);
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight.tensor);
  return bias.tensor.defined() ? add_rowwise(y, bias.tensor) : y;
}

void Linear::collect(ParameterRefs& out) {
  out.push_back(&weight);
  if (bias.tensor.defined()) out.push_back(&bias);
}

LayerNorm::LayerNorm(const std::string& name, std::size_t dim)
    : gamma(make_parameter(name + ".gamma", {dim}, Init::ones, 0)),
      beta(make_parameter(name + ".beta", {dim}, Init::zeros, 0)) {}

Tensor LayerNorm::operator()(const Tensor& x) const { return layernorm(x, gamma.tensor, beta.tensor); }

void LayerNorm::collect(ParameterRefs& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

TransformerBlock::TransformerBlock(const std::string& name, std::size_t dim_, std::size_t heads_,
                                   std::uint64_t seed)
    : dim(dim_),
      heads(heads_),
      ln1(name + ".ln1", dim_),
      qkv(name + ".attn.qkv", dim_, 3 * dim_, seed),
      attn_out(name + ".attn.out", dim_, dim_, seed),
      ln2(name + ".ln2", dim_),
      fc1(name + ".mlp.fc1", dim_, 4 * dim_, seed),
      fc2(name + ".mlp.fc2", 4 * dim_, dim_, seed) {
  if (heads_ == 0 || dim_ % heads_ != 0) {
    throw DimensionError("transformer block " + name + ": dim " + std::to_string(dim_) +
                         " not divisible by heads " + std::to_string(heads_));
  }
}

Tensor multi_head_attention(const Tensor& qkv, std::size_t heads, bool causal) {
  const std::size_t B = qkv.dim(0);
  const std::size_t T = qkv.dim(1);
  const std::size_t D = qkv.dim(2) / 3;
  const std::size_t dh = D / heads;
  // [B, T, 3, H, dh] -> [3, B, H, T, dh]
  Tensor split = permute(reshape(qkv, {B, T, 3, heads, dh}), {2, 0, 3, 1, 4});
  Tensor q = reshape(slice(split, 0, 0, 1), {B * heads, T, dh});
  Tensor k = slice(split, 0, 1, 2);
  Tensor v = reshape(slice(split, 0, 2, 3), {B * heads, T, dh});
  Tensor kt = reshape(permute(reshape(k, {B * heads, T, dh}), {0, 2, 1}), {B * heads, dh, T});
  Tensor scores = scale(matmul(q, kt), 1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor att = softmax_lastdim(scores, causal);
  Tensor ctx = matmul(att, v);  // [B*H, T, dh]
  return reshape(permute(reshape(ctx, {B, heads, T, dh}), {0, 2, 1, 3}), {B, T, D});
}

Tensor TransformerBlock::operator()(const Tensor& x, bool causal) const {
  const std::size_t B = x.dim(0);
  const std::size_t T = x.dim(1);
  if (x.dim(2) != dim) {
    throw DimensionError("transformer block: input " + shape_str(x.shape()) + " vs dim " + std::to_string(dim));
  }
  Tensor flat = reshape(x, {B * T, dim});
  Tensor packed = reshape(qkv(ln1(flat)), {B, T, 3 * dim});
  Tensor attn = attn_out(reshape(multi_head_attention(packed, heads, causal), {B * T, dim}));
  Tensor h = add(flat, attn);
  Tensor mlp = fc2(gelu(fc1(ln2(h))));
  return reshape(add(h, mlp), {B, T, dim});
}

void TransformerBlock::collect(ParameterRefs& out) {
  ln1.collect(out);
  qkv.collect(out);
  attn_out.collect(out);
  ln2.collect(out);
  fc1.collect(out);
  fc2.collect(out);
}

}  // namespace duet
