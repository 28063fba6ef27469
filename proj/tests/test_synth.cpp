#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "dnp/errors.hpp"
#include "dnp/perturb.hpp"
#include "dnp/synth.hpp"
#include "support.hpp"

using dnp::Array;
using dnp::Conformation;
using dnp::OraclePotential;

namespace {

Conformation dimer(double d) {
  Conformation c;
  c.species = {1, 1};
  c.coords = Array(2, 3, std::vector<double>{0.3, -0.2, 0.1, 0.3 + d, -0.2, 0.1});
  return c;
}

double bond(const Conformation& c) {
  double s = 0.0;
  for (int a = 0; a < 3; ++a) s += std::pow(c.coords(0, a) - c.coords(1, a), 2);
  return std::sqrt(s);
}

std::vector<OraclePotential> potentials(const Array& equilibrium) {
  return {OraclePotential::lennard_jones(1.0, 1.35), OraclePotential::lennard_jones(0.3, 2.0),
          OraclePotential::harmonic(2.5, equilibrium), OraclePotential::morse(1.7, 1.3, 1.4)};
}

dnp::SamplingSpec quick_spec() {
  dnp::SamplingSpec s;
  s.n_molecules = 4;
  s.conformations_per_molecule = 25;
  s.seed = 3;
  return s;
}

}  // namespace

TEST_CASE("Lennard-Jones dimer") {
  const auto lj = OraclePotential::lennard_jones(1.0, 1.35);
  const auto at_min = dnp::oracle_energy(lj, dimer(std::pow(2.0, 1.0 / 6.0) * 1.35));
  CHECK(at_min.energy == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(testing::max_abs(at_min.gradient) <= 1e-9);
  CHECK(dnp::oracle_energy(lj, dimer(1.35)).energy == 0.0);
  CHECK_THROWS_AS(dnp::oracle_energy(lj, dimer(0.0)), dnp::GeometryError);
  CHECK_THROWS_AS(OraclePotential::lennard_jones(-1.0, 1.0), dnp::DomainError);
  CHECK_THROWS_AS(OraclePotential::morse(1.0, 0.0, 1.0), dnp::DomainError);
}

TEST_CASE("oracle gradients against central differences") {
  dnp::Rng rng(1);
  double worst = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    Conformation c = testing::random_conformation(2 + trial % 8, rng, 3.0, 1.0);
    for (const auto& pot : potentials(testing::random_array(c.size(), 3, rng, 0.0, 3.0))) {
      const auto res = dnp::oracle_energy(pot, c);
      const Array fd = testing::numeric_gradient(
          [&](const Array& x) {
            Conformation m = c;
            m.coords = x;
            return dnp::oracle_energy(pot, m).energy;
          },
          c.coords);
      worst = std::max(worst, testing::rel_err(res.gradient, fd));
    }
  }
  CHECK(worst <= 1e-7);
}

TEST_CASE("oracle energy is invariant under rigid motions and permutations") {
  dnp::Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    Conformation c = testing::random_conformation(6, rng, 3.0, 1.0);
    const Array eq = testing::random_array(6, 3, rng, 0.0, 3.0);
    auto r = testing::random_orthogonal(rng, trial % 2 == 0);
    const double t[3] = {4.0, -1.5, 0.25};
    std::vector<std::size_t> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    dnp::shuffle_indices(perm, rng);
    for (const auto& pot : potentials(eq)) {
      const double e = dnp::oracle_energy(pot, c).energy;
      Conformation m = c;
      m.coords = testing::transform(c.coords, r, t);
      CHECK(std::abs(dnp::oracle_energy(pot, m).energy - e) <= 1e-10);
      if (pot.kind == dnp::PotentialKind::harmonic_well) {
        auto permuted_pot = OraclePotential::harmonic(pot.stiffness, testing::permute_rows(eq, perm));
        m.coords = testing::permute_rows(c.coords, perm);
        CHECK(std::abs(dnp::oracle_energy(permuted_pot, m).energy - e) <= 1e-10);
      } else {
        m.coords = testing::permute_rows(c.coords, perm);
        CHECK(std::abs(dnp::oracle_energy(pot, m).energy - e) <= 1e-10);
      }
    }
  }
}

TEST_CASE("harmonic pair oracle vanishes at the equilibrium geometry") {
  dnp::Rng rng(3);
  const Array eq = testing::random_array(5, 3, rng, 0.0, 3.0);
  Conformation c;
  c.species.assign(5, 6);
  c.coords = eq;
  const auto res = dnp::oracle_energy(OraclePotential::harmonic(3.0, eq), c);
  CHECK(res.energy == 0.0);
  CHECK(testing::max_abs(res.gradient) == 0.0);
}

TEST_CASE("minimize reaches the LJ dimer minimum") {
  const auto lj = OraclePotential::lennard_jones(1.0, 1.35);
  const auto res = dnp::minimize(lj, dimer(1.9), 20000, 1e-8);
  CHECK(res.converged);
  CHECK(res.gradient_norm <= 1e-8);
  Conformation out = dimer(0.0);
  out.coords = res.coords;
  CHECK(bond(out) == doctest::Approx(std::pow(2.0, 1.0 / 6.0) * 1.35).epsilon(1e-8));
  CHECK(res.energy == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("sample_dataset") {
  const auto lj = OraclePotential::lennard_jones(1.0, 1.35);
  dnp::SamplingSpec spec;
  spec.n_molecules = 10;
  spec.conformations_per_molecule = 100;
  spec.seed = 11;
  const auto data = dnp::sample_dataset(lj, spec);
  CHECK(data.size() == 1000);
  std::set<std::string> ids;
  for (const auto& c : data) ids.insert(c.mol_id);
  CHECK(ids.size() == 10);

  const auto minima = dnp::sample_minima(lj, spec);
  REQUIRE(minima.size() == 10);
  for (std::size_t m = 0; m < 10; ++m) {
    CHECK(minima[m].converged);
    CHECK(minima[m].gradient_norm < spec.tolerance);
    for (std::size_t k = 0; k < 100; ++k) {
      const auto& c = data[m * 100 + k];
      CHECK(c.size() == minima[m].coords.rows);
      CHECK(c.size() >= spec.min_atoms);
      CHECK(c.size() <= spec.max_atoms);
      CHECK(*c.energy >= minima[m].energy - 1e-9);
      CHECK(*c.energy == dnp::oracle_energy(lj, c).energy);
      for (std::size_t i = 0; i < c.size(); ++i) CHECK(c.species[i] == std::vector<int>{1, 6, 7, 8}[i % 4]);
    }
  }
  CHECK(dnp::sample_dataset(lj, spec) == data);
}

TEST_CASE("zero displacement reproduces the minimum") {
  auto spec = quick_spec();
  spec.displacement_std = 0.0;
  const auto lj = OraclePotential::lennard_jones(1.0, 1.35);
  const auto data = dnp::sample_dataset(lj, spec);
  const auto minima = dnp::sample_minima(lj, spec);
  for (const auto& c : data) {
    const std::size_t m = std::stoul(c.mol_id.substr(3));
    CHECK(c.coords == minima[m].coords);
    CHECK(*c.energy == *data[m * spec.conformations_per_molecule].energy);
  }
}

TEST_CASE("sampling errors") {
  auto spec = quick_spec();
  spec.max_steps = 2;
  CHECK_THROWS_AS(dnp::sample_dataset(OraclePotential::lennard_jones(1.0, 1.35), spec), dnp::SamplingError);
  spec = quick_spec();
  spec.displacement_std = -0.1;
  CHECK_THROWS(spec.validate());
  spec = quick_spec();
  spec.min_atoms = 6;
  spec.max_atoms = 5;
  CHECK_THROWS(spec.validate());
}

TEST_CASE("harmonic well dataset statistics") {
  dnp::HarmonicWell well;
  dnp::Rng rng(21);
  const auto data = dnp::harmonic_well_dataset(well, 100000, rng);
  double s = 0.0, s2 = 0.0, dir[3] = {0, 0, 0};
  for (const auto& c : data) {
    const double d = bond(c);
    s += d;
    s2 += d * d;
    for (int a = 0; a < 3; ++a) dir[a] += (c.coords(0, a) - c.coords(1, a)) / d;
    const double k = 1.0 / (2.0 * well.tau * well.tau);
    CHECK(*c.energy == doctest::Approx(k * (d - well.d0) * (d - well.d0)).epsilon(1e-9).scale(1.0));
  }
  const double n = static_cast<double>(data.size());
  const double mean = s / n;
  CHECK(std::abs(std::sqrt(s2 / n - mean * mean) - well.tau) <= 0.01 * well.tau);
  CHECK(std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]) / n <= 0.02);

  dnp::HarmonicWell rigid = well;
  rigid.tau = 1e-15;
  for (const auto& c : dnp::harmonic_well_dataset(rigid, 1000, rng)) {
    CHECK(std::abs(bond(c) - well.d0) <= 1e-12);
  }
}
