#pragma once

#include "avatar/tensor.hpp"

namespace avatar::kern {

// Each kernel has a serial reference and an OpenMP version. The OpenMP
// versions parallelize over output rows with an unchanged inner loop, so
// they are bitwise identical to the serial reference.

// C = A * B
void matmul_serial(Tensor& c, const Tensor& a, const Tensor& b);
void matmul_omp(Tensor& c, const Tensor& a, const Tensor& b);

// C = A * B^T
void matmul_nt_serial(Tensor& c, const Tensor& a, const Tensor& b);
void matmul_nt_omp(Tensor& c, const Tensor& a, const Tensor& b);

// C = A^T * B
void matmul_tn_serial(Tensor& c, const Tensor& a, const Tensor& b);
void matmul_tn_omp(Tensor& c, const Tensor& a, const Tensor& b);

// D(i,j) = ||X_i - C_j||^2 for k-means assignment
void sqdist_serial(Tensor& d, const Tensor& x, const Tensor& c);
void sqdist_omp(Tensor& d, const Tensor& x, const Tensor& c);

// Dispatchers: pick the OpenMP kernel when the work is large enough to pay
// for the fork/join.
void matmul(Tensor& c, const Tensor& a, const Tensor& b);
void matmul_nt(Tensor& c, const Tensor& a, const Tensor& b);
void matmul_tn(Tensor& c, const Tensor& a, const Tensor& b);
void sqdist(Tensor& d, const Tensor& x, const Tensor& c);

}  // namespace avatar::kern
