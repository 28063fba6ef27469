#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "dnp/array.hpp"
#include "dnp/conformation.hpp"

namespace dnp {

// Directed neighbor graph under a distance cutoff. Edge e = (src[e], dst[e])
// carries disp(e) = x_src - x_dst and dist[e] = |disp(e)|. Edges come in
// both directions and are sorted lexicographically by (src, dst).
struct MolecularGraph {
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;
  Array disp;  // E x 3
  std::vector<double> dist;
  double cutoff = 0.0;
  std::size_t n_atoms = 0;

  std::size_t n_edges() const { return src.size(); }
};

// All ordered pairs with 0 < d_ij <= cutoff (brute-force O(N^2)). Throws
// DomainError for cutoff <= 0 and GeometryError when two atoms coincide.
MolecularGraph build_graph(const Conformation& conf, double cutoff);

// Gaussian smearing exp(-gamma (d - mu_k)^2) with n_rbf centers evenly spaced
// on [0, cutoff] and gamma = 1 / (2 delta_mu^2).
std::vector<double> rbf_expand(double d, std::size_t n_rbf, double cutoff);

struct RbfBasis {
  std::vector<double> centers;
  double gamma = 0.0;
};
RbfBasis rbf_basis(std::size_t n_rbf, double cutoff);

}  // namespace dnp
