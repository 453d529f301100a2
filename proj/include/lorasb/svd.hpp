#pragma once

#include <vector>

#include "lorasb/matrix.hpp"

namespace lorasb {

// Thin SVD m = U * diag(s) * Vt with k = min(rows, cols) columns.
// U is rows x k with orthonormal columns, Vt is k x cols with orthonormal
// rows, s is sorted descending and non-negative.
struct SvdResult {
    Matrix u;
    std::vector<double> s;
    Matrix vt;
};

// One-sided Jacobi on columns. Converges when the off-diagonal energy of
// every column pair falls under 1e-12 relative to the column norms; gives
// up (NumericalFailure carrying the sweep count) after 100 * min(rows, cols)
// sweeps. Sign convention: in each U column the entry of largest magnitude
// (ties broken by lowest row index) is made non-negative, compensated in Vt.
// Rank-deficient inputs get an orthonormal basis completion in U, so U is
// always a full orthonormal frame.
SvdResult svd(const Matrix& m);

// First r singular triples of svd(m). Requires 1 <= r <= min(rows, cols).
SvdResult truncated_svd(const Matrix& m, int r);

// U * diag(s) * Vt.
Matrix svd_reconstruct(const SvdResult& f);

// sigma_max / sigma_min; infinity when sigma_min is exactly zero.
double condition_estimate(const Matrix& m);

// Exact inverse of a small square matrix (n <= 256), computed from the SVD.
// Throws SingularityError (carrying the condition estimate) when the
// condition number exceeds 1e12.
Matrix inverse_small(const Matrix& m);

} // namespace lorasb
