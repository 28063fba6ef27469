#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dnp/conformation.hpp"
#include "dnp/rng.hpp"

namespace dnp {

enum class PotentialKind { lennard_jones, harmonic_well, morse };

const char* potential_kind_name(PotentialKind kind);

// Ground-truth pair potentials used to label synthetic conformations. All of
// them depend on interatomic distances only and ignore species.
struct OraclePotential {
  PotentialKind kind = PotentialKind::lennard_jones;
  // Lennard-Jones: 4 eps [(s/d)^12 - (s/d)^6] per pair
  double lj_epsilon = 1.0;  // kcal/mol
  double lj_sigma = 1.35;   // Angstrom
  // Harmonic: sum_{i<j} k (d_ij - d0_ij)^2 with d0 from the equilibrium geometry
  double stiffness = 1.0;   // kcal/mol/A^2
  Array equilibrium;        // N x 3
  // Morse: D (1 - exp(-a (d - r0)))^2 - D per pair
  double morse_depth = 1.0;
  double morse_width = 2.0;
  double morse_r0 = 1.5;

  static OraclePotential lennard_jones(double epsilon, double sigma);
  static OraclePotential harmonic(double stiffness, Array equilibrium);
  static OraclePotential morse(double depth, double width, double r0);

  // Throws DomainError for non-positive parameters.
  void validate() const;
};

struct OracleResult {
  double energy = 0.0;  // kcal/mol
  Array gradient;       // N x 3, kcal/mol/A
};

// Throws GeometryError for coincident atoms.
OracleResult oracle_energy(const OraclePotential& potential, const Conformation& conf);

struct SamplingSpec {
  std::size_t n_molecules = 10;
  std::size_t conformations_per_molecule = 100;
  std::size_t min_atoms = 5;
  std::size_t max_atoms = 9;
  double displacement_std = 0.1;  // Angstrom
  std::size_t max_steps = 20000;
  double tolerance = 1e-6;        // gradient norm, kcal/mol/A
  std::uint64_t seed = 0;
  std::string mol_prefix = "mol";

  void validate() const;
};

struct MinimizationResult {
  Array coords;
  double energy = 0.0;
  double gradient_norm = 0.0;
  std::size_t steps = 0;
  bool converged = false;
};

// Steepest descent with a backtracking (Armijo) line search.
MinimizationResult minimize(const OraclePotential& potential, const Conformation& start,
                            std::size_t max_steps, double tolerance);

// Per molecule: random compact starting geometry, minimization on the oracle,
// then Gaussian displacements of every coordinate around the minimum, each
// labeled with the oracle energy. Species cycle through H, C, N, O. Molecule
// m uses its own generator derived from (seed, m). Throws SamplingError when a
// minimization does not reach the tolerance.
std::vector<Conformation> sample_dataset(const OraclePotential& potential, const SamplingSpec& spec);

// Molecule minima produced by sample_dataset for the same spec, in order.
std::vector<MinimizationResult> sample_minima(const OraclePotential& potential, const SamplingSpec& spec);

// Diatomic harmonic well: bond length ~ N(d0, tau^2), uniformly random
// orientation and a centroid uniform in [-box, box]^3. Energies come from the
// pair harmonic k (d - d0)^2 with k = 1 / (2 tau^2), so the bond-length
// distribution is the Boltzmann distribution at kT = 1 kcal/mol.
struct HarmonicWell {
  double d0 = 1.2;
  double tau = 0.15;
  double box = 5.0;
};

std::vector<Conformation> harmonic_well_dataset(const HarmonicWell& well, std::size_t n, Rng& rng);

}  // namespace dnp
