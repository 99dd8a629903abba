// SPDX-License-Identifier: Apache-2.0
#include "duet/errors.hpp"
#include "duet/fusion.hpp"

namespace duet {

Projector::Projector(const std::string& name, std::size_t in_dim, std::size_t hidden, std::size_t d_lm,
                     std::uint64_t seed)
    : fc1(name + ".fc1", in_dim, hidden, seed), fc2(name + ".fc2", hidden, d_lm, seed) {}

Tensor Projector::operator()(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_dim()) {
    throw DimensionError("projector: input " + shape_str(x.shape()) + " vs in_dim " + std::to_string(in_dim()));
  }
  return fc2(gelu(fc1(x)));
}

void Projector::collect(ParameterRefs& out) {
  fc1.collect(out);
  fc2.collect(out);
}

Tensor flatten_tokens(const TokenGrid& grid) {
  const std::size_t n = grid.n_tiles;
  const std::size_t C = grid.channels;
  const std::size_t T = grid.side * grid.side;
  return reshape(permute(reshape(grid.data, {n, C, T}), {0, 2, 1}), {n * T, C});
}

VisualSequence project(const Projector& p, const TokenGrid& tokens, Branch branch) {
  if (tokens.channels != p.in_dim()) {
    throw DimensionError("project: token channels " + std::to_string(tokens.channels) + " vs projector in_dim " +
                         std::to_string(p.in_dim()));
  }
  VisualSequence out;
  out.n_tiles = tokens.n_tiles;
  out.embeddings = p(flatten_tokens(tokens));
  const std::size_t T = tokens.side * tokens.side;
  out.provenance.reserve(tokens.n_tiles * T);
  for (std::size_t t = 0; t < tokens.n_tiles; ++t) {
    for (std::size_t i = 0; i < T; ++i) out.provenance.push_back({t, branch, i});
  }
  return out;
}

}  // namespace duet
