#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

namespace avatar {

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> d;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0) : rows(r), cols(c), d(static_cast<size_t>(r) * c, fill) {}

  double& at(int r, int c) { return d[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return d[static_cast<size_t>(r) * cols + c]; }
  const double* row(int r) const { return d.data() + static_cast<size_t>(r) * cols; }
  double* row(int r) { return d.data() + static_cast<size_t>(r) * cols; }

  int size() const { return rows * cols; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double x : d)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.rows, t.cols); }

}  // namespace avatar
