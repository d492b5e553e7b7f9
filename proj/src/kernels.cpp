#include "avatar/kernels.hpp"

#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace avatar::kern {

namespace {
void check_mm(const Tensor& a, const Tensor& b, int ak, int bk) {
  if (ak != bk) throw std::invalid_argument("matmul: inner dimensions disagree");
  (void)a;
  (void)b;
}

inline void mm_row(double* out, const double* arow, const Tensor& b) {
  const int n = b.cols, k = b.rows;
  for (int j = 0; j < n; ++j) out[j] = 0.0;
  for (int p = 0; p < k; ++p) {
    const double av = arow[p];
    const double* brow = b.row(p);
    for (int j = 0; j < n; ++j) out[j] += av * brow[j];
  }
}

inline void mm_nt_row(double* out, const double* arow, const Tensor& b) {
  const int n = b.rows, k = b.cols;
  for (int j = 0; j < n; ++j) {
    const double* brow = b.row(j);
    double s = 0.0;
    for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
    out[j] = s;
  }
}
}  // namespace

void matmul_serial(Tensor& c, const Tensor& a, const Tensor& b) {
  check_mm(a, b, a.cols, b.rows);
  c = Tensor(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) mm_row(c.row(i), a.row(i), b);
}

void matmul_omp(Tensor& c, const Tensor& a, const Tensor& b) {
  check_mm(a, b, a.cols, b.rows);
  c = Tensor(a.rows, b.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) mm_row(c.row(i), a.row(i), b);
}

void matmul_nt_serial(Tensor& c, const Tensor& a, const Tensor& b) {
  check_mm(a, b, a.cols, b.cols);
  c = Tensor(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) mm_nt_row(c.row(i), a.row(i), b);
}

void matmul_nt_omp(Tensor& c, const Tensor& a, const Tensor& b) {
  check_mm(a, b, a.cols, b.cols);
  c = Tensor(a.rows, b.rows);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) mm_nt_row(c.row(i), a.row(i), b);
}

void matmul_tn_serial(Tensor& c, const Tensor& a, const Tensor& b) {
  check_mm(a, b, a.rows, b.rows);
  c = Tensor(a.cols, b.cols);
  for (int i = 0; i < a.cols; ++i) {
    double* crow = c.row(i);
    for (int p = 0; p < a.rows; ++p) {
      const double av = a.at(p, i);
      const double* brow = b.row(p);
      for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_tn_omp(Tensor& c, const Tensor& a, const Tensor& b) {
  check_mm(a, b, a.rows, b.rows);
  c = Tensor(a.cols, b.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.cols; ++i) {
    double* crow = c.row(i);
    for (int p = 0; p < a.rows; ++p) {
      const double av = a.at(p, i);
      const double* brow = b.row(p);
      for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
    }
  }
}

void sqdist_serial(Tensor& d, const Tensor& x, const Tensor& c) {
  check_mm(x, c, x.cols, c.cols);
  d = Tensor(x.rows, c.rows);
  for (int i = 0; i < x.rows; ++i) {
    const double* xi = x.row(i);
    for (int j = 0; j < c.rows; ++j) {
      const double* cj = c.row(j);
      double s = 0.0;
      for (int p = 0; p < x.cols; ++p) {
        const double diff = xi[p] - cj[p];
        s += diff * diff;
      }
      d.at(i, j) = s;
    }
  }
}

void sqdist_omp(Tensor& d, const Tensor& x, const Tensor& c) {
  check_mm(x, c, x.cols, c.cols);
  d = Tensor(x.rows, c.rows);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < x.rows; ++i) {
    const double* xi = x.row(i);
    for (int j = 0; j < c.rows; ++j) {
      const double* cj = c.row(j);
      double s = 0.0;
      for (int p = 0; p < x.cols; ++p) {
        const double diff = xi[p] - cj[p];
        s += diff * diff;
      }
      d.at(i, j) = s;
    }
  }
}

namespace {
// Flop threshold below which the fork/join costs more than it saves.
constexpr long long kParallelFlops = 1 << 17;
}  // namespace

void matmul(Tensor& c, const Tensor& a, const Tensor& b) {
  const long long flops = 2LL * a.rows * a.cols * b.cols;
  if (flops >= kParallelFlops)
    matmul_omp(c, a, b);
  else
    matmul_serial(c, a, b);
}

void matmul_nt(Tensor& c, const Tensor& a, const Tensor& b) {
  const long long flops = 2LL * a.rows * a.cols * b.rows;
  if (flops >= kParallelFlops)
    matmul_nt_omp(c, a, b);
  else
    matmul_nt_serial(c, a, b);
}

void matmul_tn(Tensor& c, const Tensor& a, const Tensor& b) {
  const long long flops = 2LL * a.rows * a.cols * b.cols;
  if (flops >= kParallelFlops)
    matmul_tn_omp(c, a, b);
  else
    matmul_tn_serial(c, a, b);
}

void sqdist(Tensor& d, const Tensor& x, const Tensor& c) {
  const long long flops = 3LL * x.rows * c.rows * x.cols;
  if (flops >= kParallelFlops)
    sqdist_omp(d, x, c);
  else
    sqdist_serial(d, x, c);
}

}  // namespace avatar::kern
