#include "dnp/conformation.hpp"

#include <array>
#include <cmath>
#include <utility>

namespace dnp {
namespace {

constexpr std::array<std::pair<std::string_view, int>, 7> kElements{{
    {"H", 1}, {"C", 6}, {"N", 7}, {"O", 8}, {"F", 9}, {"S", 16}, {"Cl", 17},
}};

}  // namespace

std::optional<int> atomic_number(std::string_view symbol) {
  for (const auto& [s, z] : kElements) {
    if (s == symbol) return z;
  }
  return std::nullopt;
}

bool is_supported_element(int z) {
  for (const auto& e : kElements) {
    if (e.second == z) return true;
  }
  return false;
}

std::string element_symbol(int z) {
  for (const auto& [s, zz] : kElements) {
    if (zz == z) return std::string(s);
  }
  throw UnknownElementError("unsupported atomic number " + std::to_string(z));
}

void Conformation::validate() const {
  if (species.empty()) throw DataError("conformation has no atoms");
  if (coords.rows != species.size() || coords.cols != 3) {
    throw DataError("conformation with " + std::to_string(species.size()) +
                    " atoms has coordinates of shape " + coords.shape_str());
  }
  for (int z : species) {
    if (z <= 0) throw DataError("non-positive atomic number " + std::to_string(z));
  }
  for (double v : coords.data) {
    if (!std::isfinite(v)) throw DataError("non-finite coordinate");
  }
}

}  // namespace dnp
