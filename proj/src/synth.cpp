#include "dnp/synth.hpp"

#include <cmath>
#include <exception>
#include <numbers>

namespace dnp {

const char* potential_kind_name(PotentialKind kind) {
  switch (kind) {
    case PotentialKind::lennard_jones: return "lj";
    case PotentialKind::harmonic_well: return "harmonic";
    case PotentialKind::morse: return "morse";
  }
  return "?";
}

OraclePotential OraclePotential::lennard_jones(double epsilon, double sigma) {
  OraclePotential p;
  p.kind = PotentialKind::lennard_jones;
  p.lj_epsilon = epsilon;
  p.lj_sigma = sigma;
  p.validate();
  return p;
}

OraclePotential OraclePotential::harmonic(double stiffness, Array equilibrium) {
  OraclePotential p;
  p.kind = PotentialKind::harmonic_well;
  p.stiffness = stiffness;
  p.equilibrium = std::move(equilibrium);
  p.validate();
  return p;
}

OraclePotential OraclePotential::morse(double depth, double width, double r0) {
  OraclePotential p;
  p.kind = PotentialKind::morse;
  p.morse_depth = depth;
  p.morse_width = width;
  p.morse_r0 = r0;
  p.validate();
  return p;
}

void OraclePotential::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(std::string(what) + " must be positive");
  };
  switch (kind) {
    case PotentialKind::lennard_jones:
      positive(lj_epsilon, "LJ well depth");
      positive(lj_sigma, "LJ radius");
      break;
    case PotentialKind::harmonic_well:
      positive(stiffness, "harmonic stiffness");
      if (equilibrium.rows < 2 || equilibrium.cols != 3) {
        throw DomainError("harmonic well needs an equilibrium geometry with at least two atoms");
      }
      break;
    case PotentialKind::morse:
      positive(morse_depth, "Morse depth");
      positive(morse_width, "Morse width");
      positive(morse_r0, "Morse equilibrium distance");
      break;
  }
}

namespace {

// Pair energy and dE/dd.
std::pair<double, double> pair_term(const OraclePotential& p, double d, double d0) {
  switch (p.kind) {
    case PotentialKind::lennard_jones: {
      const double s6 = std::pow(p.lj_sigma / d, 6);
      const double s12 = s6 * s6;
      return {4.0 * p.lj_epsilon * (s12 - s6), 4.0 * p.lj_epsilon * (-12.0 * s12 + 6.0 * s6) / d};
    }
    case PotentialKind::harmonic_well: {
      const double u = d - d0;
      return {p.stiffness * u * u, 2.0 * p.stiffness * u};
    }
    case PotentialKind::morse: {
      const double e = std::exp(-p.morse_width * (d - p.morse_r0));
      const double one = 1.0 - e;
      return {p.morse_depth * one * one - p.morse_depth, 2.0 * p.morse_depth * one * p.morse_width * e};
    }
  }
  return {0.0, 0.0};
}

double distance(const Array& x, std::size_t i, std::size_t j) {
  const double dx = x(i, 0) - x(j, 0), dy = x(i, 1) - x(j, 1), dz = x(i, 2) - x(j, 2);
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

constexpr int kCycle[4] = {1, 6, 7, 8};

}  // namespace

OracleResult oracle_energy(const OraclePotential& potential, const Conformation& conf) {
  conf.validate();
  const Array& x = conf.coords;
  const std::size_t n = conf.size();
  if (potential.kind == PotentialKind::harmonic_well && potential.equilibrium.rows != n) {
    throw DomainError("harmonic well defined for " + std::to_string(potential.equilibrium.rows) +
                      " atoms, conformation has " + std::to_string(n));
  }
  OracleResult res;
  res.gradient = Array(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = distance(x, i, j);
      if (d == 0.0) {
        throw GeometryError("atoms " + std::to_string(i) + " and " + std::to_string(j) + " coincide");
      }
      const double d0 = potential.kind == PotentialKind::harmonic_well
                            ? distance(potential.equilibrium, i, j)
                            : 0.0;
      const auto [e, de] = pair_term(potential, d, d0);
      res.energy += e;
      for (std::size_t k = 0; k < 3; ++k) {
        const double g = de * (x(i, k) - x(j, k)) / d;
        res.gradient(i, k) += g;
        res.gradient(j, k) -= g;
      }
    }
  }
  return res;
}

void SamplingSpec::validate() const {
  if (n_molecules == 0) throw DomainError("need at least one molecule");
  if (conformations_per_molecule == 0) throw DomainError("need at least one conformation per molecule");
  if (min_atoms < 2 || max_atoms < min_atoms) throw DomainError("invalid atom count range");
  if (!(displacement_std >= 0.0) || !std::isfinite(displacement_std)) {
    throw DomainError("displacement std must be non-negative");
  }
  if (!(tolerance > 0.0)) throw DomainError("minimization tolerance must be positive");
}

MinimizationResult minimize(const OraclePotential& potential, const Conformation& start,
                            std::size_t max_steps, double tolerance) {
  Conformation c = start;
  OracleResult cur = oracle_energy(potential, c);
  double step = 1e-2;
  MinimizationResult res;
  for (std::size_t it = 0;; ++it) {
    double g2 = 0.0;
    for (double v : cur.gradient.data) g2 += v * v;
    res.gradient_norm = std::sqrt(g2);
    res.steps = it;
    if (res.gradient_norm < tolerance) {
      res.converged = true;
      break;
    }
    if (it >= max_steps) break;
    bool accepted = false;
    while (step > 1e-16) {
      Conformation trial = c;
      for (std::size_t i = 0; i < trial.coords.size(); ++i) {
        trial.coords.data[i] -= step * cur.gradient.data[i];
      }
      OracleResult next;
      try {
        next = oracle_energy(potential, trial);
      } catch (const GeometryError&) {
        step *= 0.5;
        continue;
      }
      if (next.energy <= cur.energy - 1e-4 * step * g2) {
        c = std::move(trial);
        cur = std::move(next);
        step *= 1.5;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  res.coords = c.coords;
  res.energy = cur.energy;
  return res;
}

namespace {

// Atoms placed one at a time next to a random earlier atom, keeping every
// pair at least min_sep apart, so the cluster starts compact and connected.
Array random_cluster(std::size_t n, double bond, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.9, 1.3);
  Array x(n, 3);
  const double min_sep = 0.85 * bond;
  for (std::size_t a = 1; a < n; ++a) {
    for (int attempt = 0;; ++attempt) {
      std::uniform_int_distribution<std::size_t> pick(0, a - 1);
      const std::size_t anchor = pick(rng);
      double v[3] = {normal(rng), normal(rng), normal(rng)};
      const double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
      const double r = uni(rng) * bond;
      for (std::size_t k = 0; k < 3; ++k) x(a, k) = x(anchor, k) + r * v[k] / len;
      bool ok = true;
      for (std::size_t b = 0; b < a && ok; ++b) ok = distance(x, a, b) >= min_sep;
      if (ok || attempt > 1000) break;
    }
  }
  return x;
}

double natural_bond_length(const OraclePotential& p) {
  switch (p.kind) {
    case PotentialKind::lennard_jones: return std::pow(2.0, 1.0 / 6.0) * p.lj_sigma;
    case PotentialKind::morse: return p.morse_r0;
    case PotentialKind::harmonic_well: return 1.0;
  }
  return 1.0;
}

Conformation molecule_start(const OraclePotential& potential, const SamplingSpec& spec, Rng& rng) {
  Conformation c;
  std::size_t n = 0;
  if (potential.kind == PotentialKind::harmonic_well) {
    n = potential.equilibrium.rows;
    c.coords = potential.equilibrium;
    std::normal_distribution<double> normal(0.0, 0.1);
    for (double& v : c.coords.data) v += normal(rng);
  } else {
    std::uniform_int_distribution<std::size_t> count(spec.min_atoms, spec.max_atoms);
    n = count(rng);
    c.coords = random_cluster(n, natural_bond_length(potential), rng);
  }
  c.species.resize(n);
  for (std::size_t a = 0; a < n; ++a) c.species[a] = kCycle[a % 4];
  return c;
}

std::string molecule_id(const SamplingSpec& spec, std::size_t m) {
  return spec.mol_prefix + std::to_string(m);
}

MinimizationResult minimize_molecule(const OraclePotential& potential, const SamplingSpec& spec,
                                     std::size_t m, Conformation& start) {
  Rng rng = make_rng(spec.seed, {m});
  start = molecule_start(potential, spec, rng);
  MinimizationResult mr = minimize(potential, start, spec.max_steps, spec.tolerance);
  if (!mr.converged) {
    throw SamplingError("minimization of molecule " + std::to_string(m) + " stopped after " +
                        std::to_string(mr.steps) + " steps with gradient norm " +
                        std::to_string(mr.gradient_norm));
  }
  return mr;
}

}  // namespace

std::vector<MinimizationResult> sample_minima(const OraclePotential& potential, const SamplingSpec& spec) {
  potential.validate();
  spec.validate();
  std::vector<MinimizationResult> minima(spec.n_molecules);
  std::vector<std::exception_ptr> errors(spec.n_molecules);
  const auto nm = static_cast<std::ptrdiff_t>(spec.n_molecules);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t m = 0; m < nm; ++m) {
    try {
      Conformation start;
      minima[static_cast<std::size_t>(m)] =
          minimize_molecule(potential, spec, static_cast<std::size_t>(m), start);
    } catch (...) {
      errors[static_cast<std::size_t>(m)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return minima;
}

std::vector<Conformation> sample_dataset(const OraclePotential& potential, const SamplingSpec& spec) {
  potential.validate();
  spec.validate();
  const std::size_t per = spec.conformations_per_molecule;
  std::vector<Conformation> out(spec.n_molecules * per);
  std::vector<std::exception_ptr> errors(spec.n_molecules);
  const auto nm = static_cast<std::ptrdiff_t>(spec.n_molecules);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t mi = 0; mi < nm; ++mi) {
    const auto m = static_cast<std::size_t>(mi);
    try {
      Conformation base;
      const MinimizationResult mr = minimize_molecule(potential, spec, m, base);
      base.coords = mr.coords;
      base.mol_id = molecule_id(spec, m);
      Rng rng = make_rng(spec.seed, {m, 1});
      std::normal_distribution<double> normal(0.0, spec.displacement_std > 0 ? spec.displacement_std : 1.0);
      for (std::size_t c = 0; c < per; ++c) {
        Conformation conf = base;
        if (spec.displacement_std > 0.0) {
          for (double& v : conf.coords.data) v += normal(rng);
        }
        conf.energy = oracle_energy(potential, conf).energy;
        out[m * per + c] = std::move(conf);
      }
    } catch (...) {
      errors[m] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<Conformation> harmonic_well_dataset(const HarmonicWell& well, std::size_t n, Rng& rng) {
  if (!(well.tau >= 0.0) || !(well.d0 > 0.0)) throw DomainError("invalid harmonic well");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> box(-well.box, well.box);
  const double k = well.tau > 0.0 ? 1.0 / (2.0 * well.tau * well.tau) : 0.0;
  std::vector<Conformation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = well.d0 + well.tau * normal(rng);
    double v[3] = {normal(rng), normal(rng), normal(rng)};
    const double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    const double c[3] = {box(rng), box(rng), box(rng)};
    Conformation conf;
    conf.species = {1, 1};
    conf.coords = Array(2, 3);
    for (std::size_t a = 0; a < 3; ++a) {
      const double half = 0.5 * d * v[a] / len;
      conf.coords(0, a) = c[a] + half;
      conf.coords(1, a) = c[a] - half;
    }
    conf.energy = k * (d - well.d0) * (d - well.d0);
    conf.mol_id = "well";
    out.push_back(std::move(conf));
  }
  return out;
}

}  // namespace dnp
