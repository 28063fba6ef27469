#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dnp/array.hpp"

namespace dnp {

// Largest atomic number known to the element table (Cl).
inline constexpr int kMaxAtomicNumber = 17;

// Atomic number for a symbol in {H, C, N, O, F, S, Cl}; nullopt otherwise.
std::optional<int> atomic_number(std::string_view symbol);
// Symbol for a supported atomic number; throws UnknownElementError otherwise.
std::string element_symbol(int z);
bool is_supported_element(int z);

// One molecular conformation: species, Cartesian coordinates in Angstrom,
// an optional reference energy in kcal/mol and the molecule it belongs to.
struct Conformation {
  std::vector<int> species;
  Array coords;  // N x 3
  std::optional<double> energy;
  std::string mol_id;

  std::size_t size() const { return species.size(); }

  // Throws DataError when N == 0, counts disagree, coordinates are not N x 3,
  // or any coordinate is non-finite.
  void validate() const;
  friend bool operator==(const Conformation&, const Conformation&) = default;
};

}  // namespace dnp
