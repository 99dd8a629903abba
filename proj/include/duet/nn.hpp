// SPDX-License-Identifier: Apache-2.0
#pragma once

// Parameters and the transformer building blocks shared by the vision
// encoders and the language model.

#include <cstdint>
#include <string>
#include <vector>

#include "duet/tensor.hpp"

namespace duet {

/// A named trainable tensor. `frozen` parameters are skipped by the optimizer
/// but still let gradients pass through to their inputs.
struct Parameter {
  std::string name;
  Tensor tensor;
  bool frozen = false;
};

using ParameterRefs = std::vector<Parameter*>;

enum class Init { zeros, ones, normal };

/// Deterministic init: the stream depends only on (seed, name).
Parameter make_parameter(std::string name, Shape shape, Init init, std::uint64_t seed,
                         double stddev = 0.0);

struct Linear {
  Parameter weight;  // [in, out]
  Parameter bias;    // [out], undefined tensor when bias-free

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed,
         bool with_bias = true);

  std::size_t in_dim() const { return weight.tensor.dim(0); }
  std::size_t out_dim() const { return weight.tensor.dim(1); }
  /// x: [rows, in] -> [rows, out]
  Tensor operator()(const Tensor& x) const;
  void collect(ParameterRefs& out);
};

struct LayerNorm {
  Parameter gamma;
  Parameter beta;

  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim);
  Tensor operator()(const Tensor& x) const;
  void collect(ParameterRefs& out);
};

/// Pre-norm block: x + Attn(LN(x)), then x + MLP(LN(x)) with a GELU MLP of ratio 4.
struct TransformerBlock {
  std::size_t dim = 0;
  std::size_t heads = 1;
  LayerNorm ln1;
  Linear qkv;
  Linear attn_out;
  LayerNorm ln2;
  Linear fc1;
  Linear fc2;

  TransformerBlock() = default;
  TransformerBlock(const std::string& name, std::size_t dim, std::size_t heads, std::uint64_t seed);
  /// x: [batch, tokens, dim]
  Tensor operator()(const Tensor& x, bool causal) const;
  void collect(ParameterRefs& out);
};

/// Multi-head scaled dot-product attention on [batch, tokens, 3*dim] packed q|k|v.
Tensor multi_head_attention(const Tensor& qkv, std::size_t heads, bool causal);

}  // namespace duet
