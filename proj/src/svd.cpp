#include "lorasb/svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lorasb/error.hpp"

namespace lorasb {

namespace {

constexpr double kPairTol = 1e-12;

// One-sided Jacobi for rows >= cols. Rotates column pairs of a working
// copy until all pairs are numerically orthogonal; the accumulated
// rotations form V, the column norms the singular values.
SvdResult jacobi_tall(const Matrix& m) {
    const int rows = m.rows();
    const int cols = m.cols();
    Matrix g = m;
    Matrix v = Matrix::identity(cols);
    const long max_sweeps = 100L * std::min(rows, cols);

    long sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (int p = 0; p < cols - 1; ++p) {
            for (int q = p + 1; q < cols; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (int i = 0; i < rows; ++i) {
                    const double gp = g(i, p);
                    const double gq = g(i, q);
                    alpha += gp * gp;
                    beta += gq * gq;
                    gamma += gp * gq;
                }
                if (alpha == 0.0 || beta == 0.0) continue;
                if (std::fabs(gamma) <= kPairTol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double tau = (beta - alpha) / (2.0 * gamma);
                const double sgn = tau < 0.0 ? -1.0 : 1.0;
                const double t = sgn / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int i = 0; i < rows; ++i) {
                    const double gp = g(i, p);
                    const double gq = g(i, q);
                    g(i, p) = c * gp - s * gq;
                    g(i, q) = s * gp + c * gq;
                }
                for (int i = 0; i < cols; ++i) {
                    const double vp = v(i, p);
                    const double vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }
    if (sweep == max_sweeps) {
        throw NumericalFailure("svd did not converge", max_sweeps);
    }

    std::vector<double> sigma(cols, 0.0);
    for (int j = 0; j < cols; ++j) {
        double acc = 0.0;
        for (int i = 0; i < rows; ++i) acc += g(i, j) * g(i, j);
        sigma[j] = std::sqrt(acc);
    }

    // Sort triples by descending sigma; stable on the original index so
    // equal singular values keep a deterministic order.
    std::vector<int> order(cols);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return sigma[a] > sigma[b]; });

    SvdResult out;
    out.u = Matrix(rows, cols);
    out.vt = Matrix(cols, cols);
    out.s.resize(cols);
    const double sigma_max = sigma[order[0]];
    const double tiny = sigma_max * cols * std::numeric_limits<double>::epsilon();

    int completed_from = cols;
    for (int j = 0; j < cols; ++j) {
        const int src = order[j];
        out.s[j] = sigma[src];
        for (int i = 0; i < cols; ++i) out.vt(j, i) = v(i, src);
        if (sigma[src] > tiny && sigma[src] > 0.0) {
            const double inv = 1.0 / sigma[src];
            for (int i = 0; i < rows; ++i) out.u(i, j) = g(i, src) * inv;
        } else {
            completed_from = std::min(completed_from, j);
        }
    }

    // Orthonormal completion for (numerically) zero singular directions:
    // Gram-Schmidt standard basis vectors against the columns built so far.
    for (int j = completed_from; j < cols; ++j) {
        std::vector<double> cand(rows, 0.0);
        bool ok = false;
        for (int e = 0; e < rows && !ok; ++e) {
            std::fill(cand.begin(), cand.end(), 0.0);
            cand[e] = 1.0;
            for (int k = 0; k < j; ++k) {
                double dot = 0.0;
                for (int i = 0; i < rows; ++i) dot += cand[i] * out.u(i, k);
                for (int i = 0; i < rows; ++i) cand[i] -= dot * out.u(i, k);
            }
            double nrm = 0.0;
            for (double x : cand) nrm += x * x;
            nrm = std::sqrt(nrm);
            if (nrm > 1e-3) {
                for (int i = 0; i < rows; ++i) out.u(i, j) = cand[i] / nrm;
                ok = true;
            }
        }
        if (!ok) throw NumericalFailure("svd basis completion failed", 0);
    }
    return out;
}

void apply_sign_convention(SvdResult& f) {
    const int rows = f.u.rows();
    const int k = f.u.cols();
    for (int j = 0; j < k; ++j) {
        int arg = 0;
        double best = -1.0;
        for (int i = 0; i < rows; ++i) {
            const double a = std::fabs(f.u(i, j));
            if (a > best) {
                best = a;
                arg = i;
            }
        }
        if (f.u(arg, j) < 0.0) {
            for (int i = 0; i < rows; ++i) f.u(i, j) = -f.u(i, j);
            for (int i = 0; i < f.vt.cols(); ++i) f.vt(j, i) = -f.vt(j, i);
        }
    }
}

} // namespace

SvdResult svd(const Matrix& m) {
    if (m.empty()) throw InvalidInputError("svd of empty matrix");
    m.check_finite("svd input");
    SvdResult f;
    if (m.rows() >= m.cols()) {
        f = jacobi_tall(m);
    } else {
        // Factor the transpose and swap the roles of U and V.
        SvdResult t = jacobi_tall(transpose(m));
        f.s = std::move(t.s);
        f.u = transpose(t.vt);
        f.vt = transpose(t.u);
    }
    apply_sign_convention(f);
    f.u.check_finite("svd");
    f.vt.check_finite("svd");
    return f;
}

SvdResult truncated_svd(const Matrix& m, int r) {
    const int k = std::min(m.rows(), m.cols());
    if (r < 1 || r > k) {
        throw InvalidInputError("truncation rank " + std::to_string(r) +
                                " out of range [1, " + std::to_string(k) + "]");
    }
    SvdResult full = svd(m);
    SvdResult out;
    out.s.assign(full.s.begin(), full.s.begin() + r);
    out.u = Matrix(m.rows(), r);
    out.vt = Matrix(r, m.cols());
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < r; ++j) out.u(i, j) = full.u(i, j);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < m.cols(); ++j) out.vt(i, j) = full.vt(i, j);
    return out;
}

Matrix svd_reconstruct(const SvdResult& f) {
    Matrix us = f.u;
    for (int j = 0; j < us.cols(); ++j)
        for (int i = 0; i < us.rows(); ++i) us(i, j) *= f.s[j];
    return matmul(us, f.vt);
}

double condition_estimate(const Matrix& m) {
    SvdResult f = svd(m);
    const double lo = f.s.back();
    const double hi = f.s.front();
    if (lo == 0.0) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

Matrix inverse_small(const Matrix& m) {
    if (m.rows() != m.cols()) throw InvalidInputError("inverse of non-square matrix");
    if (m.rows() > 256) {
        throw InvalidInputError("inverse_small is limited to n <= 256, got n = " +
                                std::to_string(m.rows()));
    }
    SvdResult f = svd(m);
    const double hi = f.s.front();
    const double lo = f.s.back();
    const double cond = lo == 0.0 ? std::numeric_limits<double>::infinity() : hi / lo;
    if (!(cond <= 1e12)) {
        throw SingularityError("matrix is singular or too ill conditioned to invert", cond);
    }
    // inv = V * diag(1/s) * Ut
    Matrix vsinv = transpose(f.vt);
    for (int j = 0; j < vsinv.cols(); ++j) {
        const double inv = 1.0 / f.s[j];
        for (int i = 0; i < vsinv.rows(); ++i) vsinv(i, j) *= inv;
    }
    return matmul(vsinv, transpose(f.u));
}

} // namespace lorasb
