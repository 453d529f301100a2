#pragma once

#include <utility>
#include <vector>

#include "lorasb/adapter.hpp"
#include "lorasb/matrix.hpp"
#include "lorasb/model.hpp"

namespace lorasb {

// Slow, independently coded reference implementations used to verify the
// primary path. Nothing here shares factorization or backprop code with the
// rest of the library: the eigensolver, the least-squares solve, and the
// finite-difference gradients are written from scratch on purpose, so an
// agreement between primary and oracle actually means something.

// O(mnp) three-loop reference product.
Matrix matmul_reference(const Matrix& a, const Matrix& b);

// Best Frobenius rank-r approximation of m, computed from a symmetric
// Jacobi eigendecomposition of m^T m (not from the primary SVD).
Matrix best_rank_r_oracle(const Matrix& m, int r);

// Eigendecomposition of a symmetric matrix, exposed for tests: eigenvalues
// descending, columns of the returned matrix are the eigenvectors.
std::pair<std::vector<double>, Matrix> symmetric_eigen_oracle(const Matrix& sym);

// argmin_X || s B X A - g ||_F solved as an explicit dense least-squares
// problem in the r^2 unknowns via vectorization and Gaussian elimination
// on the normal equations.
Matrix lstsq_core_oracle(const Matrix& b, const Matrix& a, double s, const Matrix& g);

// Central finite differences of the loss w.r.t. one weight matrix of the
// model, at the listed coordinates (all coordinates when the list is empty).
// Untouched coordinates are returned as 0.
Matrix fd_gradient_oracle(const ModelStack& model, const Batch& batch, int layer, double h,
                          const std::vector<std::pair<int, int>>& coords = {});

// Central finite differences of the loss w.r.t. the adapter core R of a
// single-module model: each probe rebuilds the effective weight and runs a
// fresh forward.
Matrix fd_core_gradient_oracle(const AdapterState& st, const Batch& batch, double h,
                               Activation act = Activation::identity,
                               LossKind loss = LossKind::mse);

} // namespace lorasb
