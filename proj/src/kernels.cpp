#include "dnp/kernels.hpp"

#include <omp.h>

#include <cmath>
#include <string>

namespace dnp::kernels {
namespace {

struct Dims {
  std::size_t m, k, n;
};

Dims check_matmul(const Array& a, bool ta, const Array& b, bool tb) {
  const std::size_t m = ta ? a.cols : a.rows;
  const std::size_t ka = ta ? a.rows : a.cols;
  const std::size_t kb = tb ? b.cols : b.rows;
  const std::size_t n = tb ? b.rows : b.cols;
  if (ka != kb) {
    throw ShapeError("matmul inner dimensions differ: " + a.shape_str() +
                     (ta ? "^T" : "") + " * " + b.shape_str() + (tb ? "^T" : ""));
  }
  return {m, ka, n};
}

void prepare_out(Array& out, std::size_t m, std::size_t n, bool accumulate) {
  if (accumulate) {
    if (out.rows != m || out.cols != n) {
      throw ShapeError("matmul accumulate target has shape " + out.shape_str());
    }
    return;
  }
  out.rows = m;
  out.cols = n;
  out.data.assign(m * n, 0.0);
}

bool go_parallel(std::size_t work) {
  return work >= kParallelThreshold && !omp_in_parallel();
}

}  // namespace

void matmul(const Array& a, bool ta, const Array& b, bool tb, Array& out,
            bool accumulate) {
  const auto [m, k, n] = check_matmul(a, ta, b, tb);
  prepare_out(out, m, n, accumulate);
  const double* A = a.data.data();
  const double* B = b.data.data();
  double* C = out.data.data();
  const bool par = go_parallel(m * k * n);
  const auto lda = static_cast<std::ptrdiff_t>(a.cols);
  const auto ldb = static_cast<std::ptrdiff_t>(b.cols);
  const auto mm = static_cast<std::ptrdiff_t>(m);

  if (!ta && !tb) {
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t i = 0; i < mm; ++i) {
      double* c = C + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = A[i * lda + p];
        const double* brow = B + p * ldb;
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
      }
    }
  } else if (!ta && tb) {
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t i = 0; i < mm; ++i) {
      const double* arow = A + i * lda;
      double* c = C + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = B + j * ldb;
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
        c[j] += s;
      }
    }
  } else if (ta && !tb) {
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t i = 0; i < mm; ++i) {
      double* c = C + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = A[p * lda + i];
        const double* brow = B + p * ldb;
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
      }
    }
  } else {
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t i = 0; i < mm; ++i) {
      double* c = C + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += A[p * lda + i] * B[j * ldb + p];
        c[j] += s;
      }
    }
  }
}

void segment_sum(const Array& values, std::span<const std::size_t> ids,
                 std::size_t n_segments, Array& out) {
  if (ids.size() != values.rows) {
    throw ShapeError("segment_sum: " + std::to_string(ids.size()) +
                     " ids for " + std::to_string(values.rows) + " rows");
  }
  out.rows = n_segments;
  out.cols = values.cols;
  out.data.assign(n_segments * values.cols, 0.0);
  const std::size_t f = values.cols;
  for (std::size_t e = 0; e < ids.size(); ++e) {
    if (ids[e] >= n_segments) {
      throw IndexError("segment id " + std::to_string(ids[e]) + " at row " +
                       std::to_string(e) + " exceeds segment count " +
                       std::to_string(n_segments));
    }
    double* dst = out.data.data() + ids[e] * f;
    const double* src = values.data.data() + e * f;
#pragma omp simd
    for (std::size_t j = 0; j < f; ++j) dst[j] += src[j];
  }
}

void gather_rows(const Array& values, std::span<const std::size_t> ids, Array& out) {
  const std::size_t f = values.cols;
  for (std::size_t e = 0; e < ids.size(); ++e) {
    if (ids[e] >= values.rows) {
      throw IndexError("gather index " + std::to_string(ids[e]) + " exceeds row count " +
                       std::to_string(values.rows));
    }
  }
  out.rows = ids.size();
  out.cols = f;
  out.data.resize(ids.size() * f);
  const auto ne = static_cast<std::ptrdiff_t>(ids.size());
#pragma omp parallel for schedule(static) if (go_parallel(ids.size() * f))
  for (std::ptrdiff_t e = 0; e < ne; ++e) {
    const double* src = values.data.data() + ids[e] * f;
    double* dst = out.data.data() + e * f;
    for (std::size_t j = 0; j < f; ++j) dst[j] = src[j];
  }
}

double shifted_softplus(double x) {
  // ln(0.5 e^x + 0.5) = softplus(x) - ln 2, softplus(x) = max(x,0) + log1p(e^-|x|)
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))) - std::log(2.0);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace reference {

void matmul(const Array& a, bool ta, const Array& b, bool tb, Array& out,
            bool accumulate) {
  const auto [m, k, n] = check_matmul(a, ta, b, tb);
  prepare_out(out, m, n, accumulate);
  auto A = [&](std::size_t i, std::size_t p) { return ta ? a(p, i) : a(i, p); };
  auto B = [&](std::size_t p, std::size_t j) { return tb ? b(j, p) : b(p, j); };
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += A(i, p) * B(p, j);
      out(i, j) += s;
    }
  }
}

void segment_sum(const Array& values, std::span<const std::size_t> ids,
                 std::size_t n_segments, Array& out) {
  if (ids.size() != values.rows) throw ShapeError("segment_sum: id count mismatch");
  out = Array(n_segments, values.cols);
  for (std::size_t e = 0; e < ids.size(); ++e) {
    if (ids[e] >= n_segments) throw IndexError("segment id out of range");
    for (std::size_t j = 0; j < values.cols; ++j) out(ids[e], j) += values(e, j);
  }
}

void gather_rows(const Array& values, std::span<const std::size_t> ids, Array& out) {
  out = Array(ids.size(), values.cols);
  for (std::size_t e = 0; e < ids.size(); ++e) {
    if (ids[e] >= values.rows) throw IndexError("gather index out of range");
    for (std::size_t j = 0; j < values.cols; ++j) out(e, j) = values(ids[e], j);
  }
}

}  // namespace reference

}  // namespace dnp::kernels
