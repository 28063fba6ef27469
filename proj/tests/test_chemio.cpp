#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "dnp/errors.hpp"
#include "dnp/graph.hpp"
#include "dnp/perturb.hpp"
#include "dnp/xyz.hpp"
#include "support.hpp"

using dnp::Array;
using dnp::Conformation;

namespace {

std::set<std::pair<std::size_t, std::size_t>> brute_force_edges(const Conformation& c, double cutoff) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (i == j) continue;
      double d2 = 0.0;
      for (int a = 0; a < 3; ++a) d2 += std::pow(c.coords(i, a) - c.coords(j, a), 2);
      const double d = std::sqrt(d2);
      if (d > 0.0 && d <= cutoff) out.emplace(i, j);
    }
  }
  return out;
}

std::vector<Conformation> grouped(std::size_t n, std::size_t groups) {
  std::vector<Conformation> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].species = {1};
    out[i].coords = Array(1, 3, 0.0);
    out[i].mol_id = "m" + std::to_string(i % groups);
  }
  return out;
}

}  // namespace

TEST_CASE("element table") {
  CHECK(dnp::atomic_number("H") == 1);
  CHECK(dnp::atomic_number("Cl") == 17);
  CHECK_FALSE(dnp::atomic_number("Xx").has_value());
  CHECK(dnp::element_symbol(8) == "O");
  CHECK_THROWS_AS(dnp::element_symbol(2), dnp::UnknownElementError);
}

TEST_CASE("parse_xyz examples") {
  auto one = dnp::parse_xyz("1\nenergy=-0.5\nH 0 0 0\n");
  REQUIRE(one.size() == 1);
  CHECK(one[0].size() == 1);
  CHECK(one[0].species[0] == 1);
  REQUIRE(one[0].energy.has_value());
  CHECK(*one[0].energy == -0.5);

  auto none = dnp::parse_xyz("2\nmol_id=water\nO 0 0 0\n1 0.9 0 0\n");
  CHECK_FALSE(none[0].energy.has_value());
  CHECK(none[0].mol_id == "water");
  CHECK(none[0].species == std::vector<int>{8, 1});

  auto two = dnp::parse_xyz("1\nenergy=1\nC 0 0 0\n1\nenergy=2 mol_id=\"a b\"\nN 1 2 3\n\n");
  REQUIRE(two.size() == 2);
  CHECK(two[1].mol_id == "a b");
  CHECK(two[1].coords == Array(1, 3, std::vector<double>{1, 2, 3}));
}

TEST_CASE("parse_xyz errors carry line numbers") {
  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      dnp::parse_xyz(text);
    } catch (const dnp::ParseError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("2\nenergy=0\nH 0 0 0\n") == 4);
  CHECK(line_of("1\nenergy=0\nQq 0 0 0\n") == 3);
  CHECK(line_of("1\nenergy=0\nH 0 zero 0\n") == 3);
  CHECK(line_of("1\nenergy=0\nH 0 0 0\nx\n") == 4);
  CHECK(line_of("1\nenergy=abc\nH 0 0 0\n") == 2);
  CHECK(line_of("1\nenergy=0\nH 0 0\n") == 3);
}

TEST_CASE("write then parse 50 random conformations") {
  dnp::Rng rng(4);
  std::vector<Conformation> confs;
  for (int i = 0; i < 50; ++i) {
    Conformation c = testing::random_conformation(1 + rng() % 12, rng);
    std::normal_distribution<double> n(0.0, 50.0);
    c.energy = n(rng);
    if (i % 7 == 0) c.energy.reset();
    c.mol_id = "mol" + std::to_string(i % 5);
    for (double& v : c.coords.data) v *= 1.0 + 1e-9 * n(rng);
    confs.push_back(c);
  }
  const std::string text = dnp::write_xyz(confs);
  const auto back = dnp::parse_xyz(text);
  REQUIRE(back.size() == confs.size());
  for (std::size_t i = 0; i < confs.size(); ++i) {
    CHECK(back[i].species == confs[i].species);
    CHECK(back[i].coords == confs[i].coords);
    CHECK(back[i].energy == confs[i].energy);
    CHECK(back[i].mol_id == confs[i].mol_id);
  }
  CHECK(dnp::write_xyz(back) == text);

  const auto path = std::filesystem::temp_directory_path() / "dnp_chemio_roundtrip.xyz";
  dnp::write_xyz_file(path, confs);
  CHECK(dnp::write_xyz(dnp::read_xyz_file(path)) == text);
  std::filesystem::remove(path);
}

TEST_CASE("build_graph examples") {
  Conformation c;
  c.species = {1, 1};
  c.coords = Array(2, 3, std::vector<double>{0, 0, 0, 1, 0, 0});
  auto g = dnp::build_graph(c, 5.0);
  CHECK(g.src == std::vector<std::size_t>{0, 1});
  CHECK(g.dst == std::vector<std::size_t>{1, 0});
  CHECK(g.dist == std::vector<double>{1.0, 1.0});
  CHECK(g.disp == Array(2, 3, std::vector<double>{-1, 0, 0, 1, 0, 0}));

  c.coords(1, 0) = 6.0;
  CHECK(dnp::build_graph(c, 5.0).n_edges() == 0);
  c.coords(1, 0) = 5.0;
  CHECK(dnp::build_graph(c, 5.0).n_edges() == 2);

  CHECK_THROWS_AS(dnp::build_graph(c, 0.0), dnp::DomainError);
  c.coords(1, 0) = 0.0;
  CHECK_THROWS_AS(dnp::build_graph(c, 5.0), dnp::GeometryError);
}

TEST_CASE("build_graph matches brute force for N up to 64") {
  dnp::Rng rng(9);
  for (std::size_t n : {1, 2, 3, 8, 8, 8, 16, 31, 64}) {
    Conformation c = testing::random_conformation(n, rng, n == 8 ? 4.0 : 6.0, 0.1);
    const double cutoff = n == 8 ? 2.0 : 3.0;
    auto g = dnp::build_graph(c, cutoff);
    std::set<std::pair<std::size_t, std::size_t>> got;
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
      CHECK(got.emplace(g.src[e], g.dst[e]).second);
      if (e > 0) CHECK(std::pair(g.src[e - 1], g.dst[e - 1]) < std::pair(g.src[e], g.dst[e]));
      double d2 = 0.0;
      for (int a = 0; a < 3; ++a) d2 += g.disp(e, a) * g.disp(e, a);
      CHECK(std::abs(std::sqrt(d2) - g.dist[e]) <= 1e-15 * g.dist[e]);
      CHECK(g.dist[e] > 0.0);
      CHECK(g.dist[e] <= cutoff);
    }
    CHECK(got == brute_force_edges(c, cutoff));
  }
}

TEST_CASE("graph symmetry, translation and rotation") {
  dnp::Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    Conformation c = testing::random_conformation(12, rng, 5.0, 0.5);
    auto g = dnp::build_graph(c, 2.5);
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
      bool found = false;
      for (std::size_t f = 0; f < g.n_edges(); ++f) {
        if (g.src[f] == g.dst[e] && g.dst[f] == g.src[e]) {
          found = true;
          for (int a = 0; a < 3; ++a) CHECK(g.disp(f, a) == -g.disp(e, a));
        }
      }
      CHECK(found);
    }

    // Integer shifts keep every coordinate difference exact.
    Conformation shifted = c;
    for (std::size_t i = 0; i < c.size(); ++i) {
      shifted.coords(i, 0) += 8.0;
      shifted.coords(i, 1) -= 16.0;
      shifted.coords(i, 2) += 4.0;
    }
    auto gs = dnp::build_graph(shifted, 2.5);
    CHECK(gs.src == g.src);
    CHECK(gs.dst == g.dst);
    CHECK(testing::max_abs_diff(gs.disp, g.disp) <= 1e-14);

    auto r = testing::random_orthogonal(rng);
    Conformation rotated = c;
    rotated.coords = testing::transform(c.coords, r);
    auto gr = dnp::build_graph(rotated, 2.5);
    // Pairs right at the cutoff can flip; compare the shared ones.
    std::size_t shared = 0;
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
      for (std::size_t f = 0; f < gr.n_edges(); ++f) {
        if (gr.src[f] != g.src[e] || gr.dst[f] != g.dst[e]) continue;
        ++shared;
        CHECK(std::abs(gr.dist[f] - g.dist[e]) <= 1e-12);
        Array one(1, 3, std::vector<double>{g.disp(e, 0), g.disp(e, 1), g.disp(e, 2)});
        Array turned = testing::transform(one, r);
        for (int a = 0; a < 3; ++a) CHECK(std::abs(turned(0, a) - gr.disp(f, a)) <= 1e-12);
      }
    }
    CHECK(shared == g.n_edges());
  }
}

TEST_CASE("rbf_expand") {
  const auto basis = dnp::rbf_basis(16, 5.0);
  const double delta = 5.0 / 15.0;
  CHECK(basis.gamma == doctest::Approx(1.0 / (2.0 * delta * delta)).epsilon(1e-14));
  auto at_center = dnp::rbf_expand(basis.centers[4], 16, 5.0);
  CHECK(at_center[4] == 1.0);
  for (double d : {1e-6, 0.3, 2.5, 4.99, 5.0}) {
    for (double v : dnp::rbf_expand(d, 16, 5.0)) {
      CHECK(v > 0.0);
      CHECK(v <= 1.0);
    }
  }
  const auto mid = dnp::rbf_expand(2.5, 16, 5.0);
  for (int k = 0; k < 16; ++k) {
    const double mu = k * delta;
    CHECK(mid[k] == doctest::Approx(std::exp(-(2.5 - mu) * (2.5 - mu) / (2 * delta * delta))).epsilon(1e-14));
  }
  CHECK_THROWS_AS(dnp::rbf_expand(0.0, 16, 5.0), dnp::DomainError);
  CHECK_THROWS_AS(dnp::rbf_expand(5.0001, 16, 5.0), dnp::DomainError);
  CHECK_THROWS_AS(dnp::rbf_expand(1.0, 1, 5.0), dnp::DomainError);
}

TEST_CASE("perturb") {
  dnp::Rng rng(12);
  Conformation c = testing::random_conformation(5, rng);
  auto zero = dnp::perturb(c, 0.0, rng);
  CHECK(zero.perturbed == c.coords);
  CHECK(zero.noise == Array(5, 3, 0.0));

  dnp::Rng a(99), b(99);
  auto pa = dnp::perturb(c, 0.2, a);
  auto pb = dnp::perturb(c, 0.2, b);
  CHECK(pa.noise == pb.noise);
  for (std::size_t i = 0; i < pa.noise.size(); ++i) {
    CHECK(pa.perturbed.data[i] - c.coords.data[i] == pa.noise.data[i]);
  }

  Conformation big;
  big.species.assign(100000 / 3 + 1, 1);
  big.coords = Array(big.species.size(), 3, 0.0);
  for (std::size_t i = 0; i < big.size(); ++i) big.coords(i, 0) = 1e3 * static_cast<double>(i % 17);
  auto p = dnp::perturb(big, 0.2, rng);
  double s = 0.0, s2 = 0.0;
  for (double v : p.noise.data) {
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(p.noise.size());
  const double mean = s / n;
  const double std = std::sqrt(s2 / n - mean * mean);
  CHECK(std::abs(std - 0.2) <= 0.005);
  CHECK(std::abs(mean) <= 5.0 * 0.2 / std::sqrt(n));
}

TEST_CASE("split counts follow floor plus remainder") {
  const double r95[] = {0.95, 0.05};
  const double r811[] = {0.8, 0.1, 0.1};
  struct Case {
    std::size_t n;
    std::span<const double> ratios;
    std::vector<std::size_t> counts;
  };
  for (const Case& c : {Case{100, r95, {95, 5}}, Case{1000, r95, {950, 50}}, Case{7, r95, {7, 0}},
                        Case{100, r811, {80, 10, 10}}, Case{1000, r811, {800, 100, 100}},
                        Case{7, r811, {7, 0, 0}}}) {
    CAPTURE(c.n);
    auto data = grouped(c.n, 1);
    dnp::Rng rng(1);
    auto parts = dnp::split_conformations(data, c.ratios, rng);
    REQUIRE(parts.size() == c.counts.size());
    std::set<std::size_t> all;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      CHECK(parts[k].size() == c.counts[k]);
      for (auto i : parts[k]) CHECK(all.insert(i).second);
    }
    CHECK(all.size() == c.n);
  }
}

TEST_CASE("split is per molecule and seeded") {
  const double r811[] = {0.8, 0.1, 0.1};
  auto data = grouped(103, 3);  // groups of 35, 34, 34
  dnp::Rng a(5), b(5), c(6);
  auto pa = dnp::split_conformations(data, r811, a);
  auto pb = dnp::split_conformations(data, r811, b);
  auto pc = dnp::split_conformations(data, r811, c);
  CHECK(pa == pb);
  CHECK(pa != pc);
  // floor(0.8 n) + remainder per group: 35 -> 29/3/3, 34 -> 28/3/3
  CHECK(pa[0].size() == 29 + 28 + 28);
  CHECK(pa[1].size() == 9);
  CHECK(pa[2].size() == 9);
  for (std::size_t g = 0; g < 3; ++g) {
    std::size_t in_val = 0;
    for (auto i : pa[1]) in_val += data[i].mol_id == "m" + std::to_string(g);
    CHECK(in_val == 3);
  }

  dnp::Rng r(0);
  CHECK(dnp::split_conformations(std::span<const Conformation>{}, r811, r) ==
        std::vector<std::vector<std::size_t>>(3));
  const double bad[] = {0.5, 0.6};
  CHECK_THROWS(dnp::split_conformations(data, bad, r));
}
