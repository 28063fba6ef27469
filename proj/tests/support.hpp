#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dnp/array.hpp"
#include "dnp/conformation.hpp"
#include "dnp/rng.hpp"

namespace testing {

using dnp::Array;

inline Array random_array(std::size_t r, std::size_t c, dnp::Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Array a(r, c);
  for (double& v : a.data) v = u(rng);
  return a;
}

// Central differences of a scalar function of one array.
inline Array numeric_gradient(const std::function<double(const Array&)>& f, const Array& x, double h = 1e-5) {
  Array g(x.rows, x.cols);
  Array xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = xp.data[i];
    xp.data[i] = keep + h;
    const double fp = f(xp);
    xp.data[i] = keep - h;
    const double fm = f(xp);
    xp.data[i] = keep;
    g.data[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double max_abs(const Array& a) {
  double m = 0.0;
  for (double v : a.data) m = std::max(m, std::abs(v));
  return m;
}

inline double max_abs_diff(const Array& a, const Array& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

// Largest deviation relative to the largest reference entry.
inline double rel_err(const Array& analytic, const Array& reference) {
  return max_abs_diff(analytic, reference) / std::max(max_abs(reference), 1e-12);
}

inline Array matmul3(const Array& x, const double r[3][3]) {
  Array out(x.rows, 3);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (int a = 0; a < 3; ++a) {
      double s = 0.0;
      for (int b = 0; b < 3; ++b) s += r[a][b] * x(i, b);
      out(i, a) = s;
    }
  }
  return out;
}

// Random orthogonal matrix from a normalized quaternion, optionally with a
// reflection.
struct Orthogonal {
  double m[3][3];
};

inline Orthogonal random_orthogonal(dnp::Rng& rng, bool reflect = false) {
  std::normal_distribution<double> n(0.0, 1.0);
  double q[4] = {n(rng), n(rng), n(rng), n(rng)};
  const double len = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  for (double& v : q) v /= len;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Orthogonal r{{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
                {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
                {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
  if (reflect) {
    for (auto& row : r.m) row[0] = -row[0];
  }
  return r;
}

inline Array transform(const Array& x, const Orthogonal& r, const double t[3] = nullptr) {
  Array out = matmul3(x, r.m);
  if (t) {
    for (std::size_t i = 0; i < out.rows; ++i) {
      for (int a = 0; a < 3; ++a) out(i, a) += t[a];
    }
  }
  return out;
}

inline Array permute_rows(const Array& x, const std::vector<std::size_t>& perm) {
  Array out(x.rows, x.cols);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (std::size_t c = 0; c < x.cols; ++c) out(i, c) = x(perm[i], c);
  }
  return out;
}

// Atoms placed one by one at least min_sep apart inside a cube.
inline dnp::Conformation random_conformation(std::size_t n, dnp::Rng& rng, double box = 3.0,
                                             double min_sep = 0.8) {
  static const int kSpecies[] = {1, 6, 7, 8};
  std::uniform_real_distribution<double> u(0.0, box);
  dnp::Conformation c;
  c.coords = Array(n, 3);
  c.mol_id = "random";
  for (std::size_t i = 0; i < n; ++i) {
    c.species.push_back(kSpecies[rng() % 4]);
    for (int attempt = 0;; ++attempt) {
      double p[3] = {u(rng), u(rng), u(rng)};
      bool ok = true;
      for (std::size_t j = 0; j < i && ok; ++j) {
        double d2 = 0.0;
        for (int a = 0; a < 3; ++a) d2 += (p[a] - c.coords(j, a)) * (p[a] - c.coords(j, a));
        ok = d2 >= min_sep * min_sep || attempt > 1000;
      }
      if (ok) {
        for (int a = 0; a < 3; ++a) c.coords(i, a) = p[a];
        break;
      }
    }
  }
  return c;
}

}  // namespace testing
