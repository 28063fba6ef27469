#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dnp/conformation.hpp"

namespace dnp {

// Extended-XYZ reader/writer.
//
// Frame layout:
//   line 1  atom count
//   line 2  whitespace separated key=value pairs; `energy` (kcal/mol) and
//           `mol_id` are recognized, other keys are ignored
//   N lines element symbol or atomic number, then x y z in Angstrom; extra
//           columns are ignored
//
// The writer prints coordinates and energies with 17 significant digits, so
// parse(write(x)) == x exactly.
std::vector<Conformation> parse_xyz(std::string_view text);
std::string write_xyz(std::span<const Conformation> confs);

std::vector<Conformation> read_xyz_file(const std::filesystem::path& path);
void write_xyz_file(const std::filesystem::path& path, std::span<const Conformation> confs);

// "%.17g" formatting shared by every text writer in the project.
std::string format_double(double v);

}  // namespace dnp
