#include "dnp/graph.hpp"

#include <cmath>
#include <string>

namespace dnp {

MolecularGraph build_graph(const Conformation& conf, double cutoff) {
  if (!(cutoff > 0.0)) throw DomainError("cutoff must be positive");
  conf.validate();
  const std::size_t n = conf.size();
  const Array& x = conf.coords;
  MolecularGraph g;
  g.cutoff = cutoff;
  g.n_atoms = n;
  std::vector<double> disp;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dx = x(i, 0) - x(j, 0);
      const double dy = x(i, 1) - x(j, 1);
      const double dz = x(i, 2) - x(j, 2);
      const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
      if (d == 0.0) {
        throw GeometryError("atoms " + std::to_string(std::min(i, j)) + " and " +
                            std::to_string(std::max(i, j)) + " coincide");
      }
      if (d > cutoff) continue;
      g.src.push_back(i);
      g.dst.push_back(j);
      disp.insert(disp.end(), {dx, dy, dz});
      g.dist.push_back(d);
    }
  }
  g.disp = Array(g.src.size(), 3, std::move(disp));
  return g;
}

RbfBasis rbf_basis(std::size_t n_rbf, double cutoff) {
  if (n_rbf < 2) throw DomainError("rbf expansion needs at least two centers");
  if (!(cutoff > 0.0)) throw DomainError("cutoff must be positive");
  RbfBasis b;
  const double delta = cutoff / static_cast<double>(n_rbf - 1);
  b.centers.resize(n_rbf);
  for (std::size_t k = 0; k < n_rbf; ++k) b.centers[k] = delta * static_cast<double>(k);
  b.gamma = 1.0 / (2.0 * delta * delta);
  return b;
}

std::vector<double> rbf_expand(double d, std::size_t n_rbf, double cutoff) {
  const RbfBasis b = rbf_basis(n_rbf, cutoff);
  if (!(d > 0.0 && d <= cutoff)) {
    throw DomainError("distance " + std::to_string(d) + " outside (0, cutoff]");
  }
  std::vector<double> out(n_rbf);
  for (std::size_t k = 0; k < n_rbf; ++k) {
    const double u = d - b.centers[k];
    out[k] = std::exp(-b.gamma * u * u);
  }
  return out;
}

}  // namespace dnp
