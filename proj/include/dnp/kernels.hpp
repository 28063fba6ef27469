#pragma once

#include <cstddef>
#include <span>

#include "dnp/array.hpp"

// Raw numeric kernels behind the autodiff operations. The functions in
// dnp::kernels are the production versions, parallelized with OpenMP over
// independent output rows once the work is large enough. Every output element
// is always accumulated by a single thread in a fixed order, so results are
// bit-identical for any thread count.
//
// dnp::kernels::reference holds straightforward serial versions that the
// tests and the benchmark compare against.
namespace dnp::kernels {

// Work (multiply-adds) below which kernels stay serial.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

// out = op(a) * op(b), op = transpose when the flag is set. When accumulate is
// true the product is added into out, which must already have the right shape.
void matmul(const Array& a, bool trans_a, const Array& b, bool trans_b,
            Array& out, bool accumulate = false);

// out[ids[e], :] += values[e, :]; out is resized to n_segments x cols.
void segment_sum(const Array& values, std::span<const std::size_t> ids,
                 std::size_t n_segments, Array& out);

// out[e, :] = values[ids[e], :]
void gather_rows(const Array& values, std::span<const std::size_t> ids, Array& out);

// Shifted softplus ln(0.5 e^x + 0.5) and the logistic sigmoid, both stable for
// large |x|.
double shifted_softplus(double x);
double sigmoid(double x);

namespace reference {

void matmul(const Array& a, bool trans_a, const Array& b, bool trans_b,
            Array& out, bool accumulate = false);
void segment_sum(const Array& values, std::span<const std::size_t> ids,
                 std::size_t n_segments, Array& out);
void gather_rows(const Array& values, std::span<const std::size_t> ids, Array& out);

}  // namespace reference

}  // namespace dnp::kernels
