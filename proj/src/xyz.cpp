#include "dnp/xyz.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dnp {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    if (i >= s.size()) break;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

template <class Int>
bool parse_int(std::string_view s, Int& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

// key=value pairs; values may be double-quoted to contain spaces.
std::vector<std::pair<std::string, std::string>> parse_comment(std::string_view line) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size()) break;
    std::size_t eq = i;
    while (eq < line.size() && line[eq] != '=' && !std::isspace(static_cast<unsigned char>(line[eq]))) ++eq;
    std::string key(line.substr(i, eq - i));
    if (eq >= line.size() || line[eq] != '=') {
      kv.emplace_back(std::move(key), "");
      i = eq;
      continue;
    }
    std::size_t v = eq + 1;
    std::string value;
    if (v < line.size() && line[v] == '"') {
      const auto close = line.find('"', v + 1);
      const std::size_t end = close == std::string_view::npos ? line.size() : close;
      value = std::string(line.substr(v + 1, end - v - 1));
      i = close == std::string_view::npos ? line.size() : close + 1;
    } else {
      std::size_t e = v;
      while (e < line.size() && !std::isspace(static_cast<unsigned char>(line[e]))) ++e;
      value = std::string(line.substr(v, e - v));
      i = e;
    }
    kv.emplace_back(std::move(key), std::move(value));
  }
  return kv;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<Conformation> parse_xyz(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();

  std::vector<Conformation> confs;
  std::size_t li = 0;
  while (li < lines.size()) {
    const std::size_t header_line = li + 1;
    std::size_t n = 0;
    if (!parse_int(trim(lines[li]), n)) {
      throw ParseError("expected an atom count, got '" + std::string(trim(lines[li])) + "'",
                       header_line);
    }
    if (n == 0) throw ParseError("frame with zero atoms", header_line);
    if (li + 1 >= lines.size()) throw ParseError("missing comment line", header_line + 1);

    Conformation c;
    for (const auto& [key, value] : parse_comment(lines[li + 1])) {
      if (key == "energy") {
        double e = 0.0;
        if (!parse_double(value, e)) {
          throw ParseError("non-numeric energy '" + value + "'", li + 2);
        }
        c.energy = e;
      } else if (key == "mol_id") {
        c.mol_id = value;
      }
    }

    c.species.reserve(n);
    c.coords = Array(n, 3);
    for (std::size_t a = 0; a < n; ++a) {
      const std::size_t idx = li + 2 + a;
      if (idx >= lines.size()) {
        throw ParseError("atom count " + std::to_string(n) + " but only " + std::to_string(a) +
                             " atom lines follow",
                         idx + 1);
      }
      const auto tok = split_ws(lines[idx]);
      if (tok.size() < 4) {
        throw ParseError("atom line needs an element and three coordinates", idx + 1);
      }
      int z = 0;
      if (parse_int(tok[0], z)) {
        if (!is_supported_element(z)) {
          throw ParseError("unknown element '" + std::string(tok[0]) + "'", idx + 1);
        }
      } else if (auto zz = atomic_number(tok[0])) {
        z = *zz;
      } else {
        throw ParseError("unknown element '" + std::string(tok[0]) + "'", idx + 1);
      }
      c.species.push_back(z);
      for (std::size_t k = 0; k < 3; ++k) {
        double v = 0.0;
        if (!parse_double(tok[k + 1], v) || !std::isfinite(v)) {
          throw ParseError("non-numeric coordinate '" + std::string(tok[k + 1]) + "'", idx + 1);
        }
        c.coords(a, k) = v;
      }
    }
    confs.push_back(std::move(c));
    li += 2 + n;
  }
  return confs;
}

std::string write_xyz(std::span<const Conformation> confs) {
  std::string out;
  for (const Conformation& c : confs) {
    c.validate();
    out += std::to_string(c.size());
    out += '\n';
    std::string comment;
    if (c.energy) comment += "energy=" + format_double(*c.energy);
    if (!c.mol_id.empty()) {
      if (!comment.empty()) comment += ' ';
      const bool quote = c.mol_id.find_first_of(" \t") != std::string::npos;
      comment += "mol_id=" + (quote ? '"' + c.mol_id + '"' : c.mol_id);
    }
    out += comment;
    out += '\n';
    for (std::size_t a = 0; a < c.size(); ++a) {
      out += element_symbol(c.species[a]);
      for (std::size_t k = 0; k < 3; ++k) {
        out += ' ';
        out += format_double(c.coords(a, k));
      }
      out += '\n';
    }
  }
  return out;
}

std::vector<Conformation> read_xyz_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_xyz(ss.str());
}

void write_xyz_file(const std::filesystem::path& path, std::span<const Conformation> confs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << write_xyz(confs);
}

}  // namespace dnp
