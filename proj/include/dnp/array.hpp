#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dnp/errors.hpp"

namespace dnp {

// Dense row-major matrix of doubles. Every numeric quantity in the library
// is rank 2; scalars are 1x1 and vectors are 1xn or nx1.
struct Array {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Array() = default;
  Array(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}
  Array(std::size_t r, std::size_t c, std::vector<double> values)
      : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) {
      throw ShapeError("array data length " + std::to_string(data.size()) +
                       " does not match shape " + std::to_string(r) + "x" +
                       std::to_string(c));
    }
  }

  static Array scalar(double v) { return Array(1, 1, v); }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool is_scalar() const { return rows == 1 && cols == 1; }
  bool same_shape(const Array& o) const { return rows == o.rows && cols == o.cols; }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::vector<std::size_t> shape() const { return {rows, cols}; }
  std::string shape_str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

  friend bool operator==(const Array&, const Array&) = default;
};

}  // namespace dnp
