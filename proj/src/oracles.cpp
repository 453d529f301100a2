#include "lorasb/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lorasb/error.hpp"

namespace lorasb {

Matrix matmul_reference(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw InvalidInputError("matmul_reference shape mismatch");
    Matrix c(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
            c(i, j) = acc;
        }
    }
    return c;
}

std::pair<std::vector<double>, Matrix> symmetric_eigen_oracle(const Matrix& sym) {
    if (sym.rows() != sym.cols()) throw InvalidInputError("eigen oracle needs a square matrix");
    const int n = sym.rows();
    Matrix a = sym;
    Matrix v = Matrix::identity(n);

    // Cyclic two-sided Jacobi. Plain and slow; that is the point.
    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-26) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double sign = theta >= 0.0 ? 1.0 : -1.0;
                const double t = sign / (std::fabs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<double> evals(n);
    for (int i = 0; i < n; ++i) evals[i] = a(i, i);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return evals[x] > evals[y]; });

    std::vector<double> sorted(n);
    Matrix vectors(n, n);
    for (int j = 0; j < n; ++j) {
        sorted[j] = evals[order[j]];
        for (int i = 0; i < n; ++i) vectors(i, j) = v(i, order[j]);
    }
    return {sorted, vectors};
}

Matrix best_rank_r_oracle(const Matrix& m, int r) {
    if (r < 1 || r > std::min(m.rows(), m.cols())) {
        throw InvalidInputError("best_rank_r_oracle rank out of range");
    }
    const Matrix gram = matmul_reference(transpose(m), m);
    auto [evals, vecs] = symmetric_eigen_oracle(gram);

    Matrix approx(m.rows(), m.cols());
    for (int k = 0; k < r; ++k) {
        const double sigma = std::sqrt(std::max(evals[k], 0.0));
        if (sigma <= 1e-13 * std::sqrt(std::max(evals[0], 0.0)) || sigma == 0.0) continue;
        // u_k = m v_k / sigma; add sigma u_k v_k^T = (m v_k) v_k^T.
        std::vector<double> mv(m.rows(), 0.0);
        for (int i = 0; i < m.rows(); ++i) {
            double acc = 0.0;
            for (int j = 0; j < m.cols(); ++j) acc += m(i, j) * vecs(j, k);
            mv[i] = acc;
        }
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < m.cols(); ++j) approx(i, j) += mv[i] * vecs(j, k);
    }
    return approx;
}

Matrix lstsq_core_oracle(const Matrix& b, const Matrix& a, double s, const Matrix& g) {
    if (b.rows() != g.rows() || a.cols() != g.cols()) {
        throw InvalidInputError("lstsq oracle shape mismatch");
    }
    const int m = b.rows();
    const int n = a.cols();
    const int rb = b.cols();
    const int ra = a.rows();
    const int unknowns = rb * ra;

    // Design matrix over vec(X), row index (i, j) of the residual,
    // column index (p, q) of X: coefficient s * B(i, p) * A(q, j).
    Matrix design(m * n, unknowns);
    std::vector<double> rhs(static_cast<std::size_t>(m) * n);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            const int row = i * n + j;
            rhs[row] = g(i, j);
            for (int p = 0; p < rb; ++p)
                for (int q = 0; q < ra; ++q) design(row, p * ra + q) = s * b(i, p) * a(q, j);
        }
    }

    // Normal equations, then Gaussian elimination with partial pivoting.
    Matrix ata(unknowns, unknowns);
    std::vector<double> atb(unknowns, 0.0);
    for (int c1 = 0; c1 < unknowns; ++c1) {
        for (int c2 = c1; c2 < unknowns; ++c2) {
            double acc = 0.0;
            for (int row = 0; row < m * n; ++row) acc += design(row, c1) * design(row, c2);
            ata(c1, c2) = acc;
            ata(c2, c1) = acc;
        }
        double acc = 0.0;
        for (int row = 0; row < m * n; ++row) acc += design(row, c1) * rhs[row];
        atb[c1] = acc;
    }

    for (int col = 0; col < unknowns; ++col) {
        int pivot = col;
        for (int row = col + 1; row < unknowns; ++row)
            if (std::fabs(ata(row, col)) > std::fabs(ata(pivot, col))) pivot = row;
        if (std::fabs(ata(pivot, col)) < 1e-300) {
            throw SingularityError("lstsq oracle: singular normal equations",
                                   std::numeric_limits<double>::infinity());
        }
        if (pivot != col) {
            for (int k = 0; k < unknowns; ++k) std::swap(ata(col, k), ata(pivot, k));
            std::swap(atb[col], atb[pivot]);
        }
        for (int row = col + 1; row < unknowns; ++row) {
            const double f = ata(row, col) / ata(col, col);
            if (f == 0.0) continue;
            for (int k = col; k < unknowns; ++k) ata(row, k) -= f * ata(col, k);
            atb[row] -= f * atb[col];
        }
    }
    std::vector<double> x(unknowns, 0.0);
    for (int row = unknowns - 1; row >= 0; --row) {
        double acc = atb[row];
        for (int k = row + 1; k < unknowns; ++k) acc -= ata(row, k) * x[k];
        x[row] = acc / ata(row, row);
    }

    Matrix core(rb, ra);
    for (int p = 0; p < rb; ++p)
        for (int q = 0; q < ra; ++q) core(p, q) = x[static_cast<std::size_t>(p) * ra + q];
    return core;
}

Matrix fd_gradient_oracle(const ModelStack& model, const Batch& batch, int layer, double h,
                          const std::vector<std::pair<int, int>>& coords) {
    if (layer < 0 || layer >= static_cast<int>(model.weights.size())) {
        throw InvalidInputError("fd oracle layer index out of range");
    }
    if (!(h > 0.0)) throw InvalidInputError("fd step h must be positive");

    ModelStack probe = model;
    Matrix& w = probe.weights[layer];
    Matrix grad(w.rows(), w.cols());

    std::vector<std::pair<int, int>> all;
    const std::vector<std::pair<int, int>>* use = &coords;
    if (coords.empty()) {
        for (int i = 0; i < w.rows(); ++i)
            for (int j = 0; j < w.cols(); ++j) all.emplace_back(i, j);
        use = &all;
    }
    for (const auto& [i, j] : *use) {
        const double saved = w(i, j);
        w(i, j) = saved + h;
        const double up = forward(probe, batch);
        w(i, j) = saved - h;
        const double down = forward(probe, batch);
        w(i, j) = saved;
        grad(i, j) = (up - down) / (2.0 * h);
    }
    return grad;
}

Matrix fd_core_gradient_oracle(const AdapterState& st, const Batch& batch, double h,
                               Activation act, LossKind loss) {
    if (!(h > 0.0)) throw InvalidInputError("fd step h must be positive");
    AdapterState probe = st;
    const int r = probe.r_core.rows();
    Matrix grad(r, r);
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < r; ++j) {
            const double saved = probe.r_core(i, j);
            probe.r_core(i, j) = saved + h;
            const double up = forward(make_linear_model(effective_weight(probe), act, loss), batch);
            probe.r_core(i, j) = saved - h;
            const double down =
                forward(make_linear_model(effective_weight(probe), act, loss), batch);
            probe.r_core(i, j) = saved;
            grad(i, j) = (up - down) / (2.0 * h);
        }
    }
    return grad;
}

} // namespace lorasb
