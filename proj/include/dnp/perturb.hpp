#pragma once

#include <span>
#include <vector>

#include "dnp/conformation.hpp"
#include "dnp/rng.hpp"

namespace dnp {

// Gaussian coordinate noise: perturbed = original + noise, noise ~ N(0, sigma^2)
// independently per component.
struct Perturbation {
  Array noise;      // N x 3
  double sigma = 0.0;
  Array perturbed;  // N x 3
};

// sigma == 0 gives exactly zero noise and does not consume the generator.
Perturbation perturb(const Conformation& conf, double sigma, Rng& rng);

// Per-molecule split. Conformations are grouped by mol_id (groups in order of
// first appearance), each group is shuffled with rng, and partition k gets
// floor(ratios[k] * n) conformations of the group; the remainder goes to
// partition 0. Returned partitions hold dataset indices.
std::vector<std::vector<std::size_t>> split_conformations(std::span<const Conformation> dataset,
                                                          std::span<const double> ratios, Rng& rng);

// Fisher-Yates shuffle driven by 64-bit draws, independent of the standard
// library's shuffle implementation.
void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng);

}  // namespace dnp
