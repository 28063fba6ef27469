#include "dnp/perturb.hpp"

#include <cmath>
#include <map>
#include <numeric>
#include <string>

namespace dnp {

Perturbation perturb(const Conformation& conf, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw DomainError("noise scale must be non-negative");
  Perturbation p;
  p.sigma = sigma;
  p.noise = Array(conf.coords.rows, 3, 0.0);
  if (sigma > 0.0) {
    std::normal_distribution<double> normal(0.0, sigma);
    for (double& v : p.noise.data) v = normal(rng);
  }
  p.perturbed = conf.coords;
  for (std::size_t i = 0; i < p.perturbed.size(); ++i) p.perturbed.data[i] += p.noise.data[i];
  // perturbed - original must reproduce the noise bit for bit; rounding in the
  // addition can break that, so store the difference that was actually applied.
  for (std::size_t i = 0; i < p.noise.size(); ++i) {
    p.noise.data[i] = p.perturbed.data[i] - conf.coords.data[i];
  }
  return p;
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

std::vector<std::vector<std::size_t>> split_conformations(std::span<const Conformation> dataset,
                                                          std::span<const double> ratios,
                                                          Rng& rng) {
  if (ratios.empty()) throw DomainError("split needs at least one ratio");
  double total = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw DomainError("split ratios must be positive");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("split ratios must sum to 1");

  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    auto [it, inserted] = groups.try_emplace(dataset[i].mol_id);
    if (inserted) order.push_back(dataset[i].mol_id);
    it->second.push_back(i);
  }

  std::vector<std::vector<std::size_t>> parts(ratios.size());
  for (const std::string& id : order) {
    std::vector<std::size_t>& members = groups[id];
    shuffle_indices(members, rng);
    const std::size_t n = members.size();
    std::vector<std::size_t> counts(ratios.size());
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < ratios.size(); ++k) {
      // The epsilon keeps products like 0.95 * 100 from flooring to 94.
      counts[k] = static_cast<std::size_t>(std::floor(ratios[k] * static_cast<double>(n) + 1e-9));
      assigned += counts[k];
    }
    counts[0] += n - assigned;
    std::size_t pos = 0;
    for (std::size_t k = 0; k < ratios.size(); ++k) {
      parts[k].insert(parts[k].end(), members.begin() + static_cast<std::ptrdiff_t>(pos),
                      members.begin() + static_cast<std::ptrdiff_t>(pos + counts[k]));
      pos += counts[k];
    }
  }
  return parts;
}

}  // namespace dnp
