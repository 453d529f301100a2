#include <doctest.h>

#include <cmath>

#include "lorasb/matrix.hpp"
#include "lorasb/oracles.hpp"
#include "lorasb/rng.hpp"

using namespace lorasb;

namespace {

Matrix random_matrix(Rng& rng, int m, int n) {
    Matrix a(m, n);
    for (long long i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    return a;
}

} // namespace

TEST_CASE("fast matmul agrees with the three loop reference") {
    Rng rng(71);
    const int shapes[][3] = {{5, 7, 3}, {1, 9, 1}, {8, 1, 8}};
    for (const auto& shape : shapes) {
        const int m = shape[0], k = shape[1], n = shape[2];
        const Matrix a = random_matrix(rng, m, k);
        const Matrix b = random_matrix(rng, k, n);
        const Matrix fast = matmul(a, b);
        const Matrix slow = matmul_reference(a, b);
        CHECK(frob_norm(fast - slow) <= 1e-13 * std::max(1.0, frob_norm(slow)));
    }
}

TEST_CASE("symmetric eigen oracle on a worked example") {
    const Matrix sym = {{2.0, 1.0}, {1.0, 2.0}};
    auto [evals, vecs] = symmetric_eigen_oracle(sym);
    CHECK(evals[0] == doctest::Approx(3.0).epsilon(1e-13));
    CHECK(evals[1] == doctest::Approx(1.0).epsilon(1e-13));
    // reconstruct V diag(lambda) V^T
    Matrix lambda(2, 2);
    lambda(0, 0) = evals[0];
    lambda(1, 1) = evals[1];
    const Matrix rebuilt = matmul(vecs, matmul(lambda, transpose(vecs)));
    CHECK(frob_norm(rebuilt - sym) < 1e-12);
}

TEST_CASE("best rank r oracle recovers an exact low rank matrix") {
    Rng rng(72);
    const Matrix u = random_matrix(rng, 9, 2);
    const Matrix v = random_matrix(rng, 2, 6);
    const Matrix low = matmul(u, v);
    CHECK(frob_norm(best_rank_r_oracle(low, 2) - low) < 1e-10 * frob_norm(low));
    const Matrix full = random_matrix(rng, 5, 5);
    CHECK(frob_norm(best_rank_r_oracle(full, 5) - full) < 1e-10 * frob_norm(full));
    // truncation residual never grows as r increases
    double prev = frob_norm(best_rank_r_oracle(full, 1) - full);
    for (int r = 2; r <= 5; ++r) {
        const double cur = frob_norm(best_rank_r_oracle(full, r) - full);
        CHECK(cur <= prev + 1e-12);
        prev = cur;
    }
}

TEST_CASE("least squares oracle recovers a planted core") {
    Rng rng(73);
    const Matrix b = random_matrix(rng, 8, 3);
    const Matrix a = random_matrix(rng, 3, 7);
    const Matrix planted = random_matrix(rng, 3, 3);
    const Matrix g = 0.5 * matmul(b, matmul(planted, a));  // s = 0.5 consumed by g
    const Matrix solved = lstsq_core_oracle(b, a, 0.5, g);
    CHECK(frob_norm(solved - planted) < 1e-9 * frob_norm(planted));
}

TEST_CASE("finite difference oracle honors the coordinate list") {
    ModelStack model = make_linear_model(Matrix({{1.0, 2.0}, {3.0, 4.0}}));
    Batch batch;
    batch.inputs = Matrix({{1.0, -1.0}});
    batch.targets = Matrix({{0.0, 0.0}});
    const Matrix fd = fd_gradient_oracle(model, batch, 0, 1e-6, {{0, 1}});
    CHECK(fd(0, 0) == 0.0);  // untouched coordinates stay zero
    CHECK(fd(1, 0) == 0.0);
    CHECK(fd(1, 1) == 0.0);
    // d mse / dW01 at W = [[1,2],[3,4]], x = (1,-1), t = 0: y = (-1, -1),
    // loss = (y0^2 + y1^2) / 2, dy0/dW01 = x1 = -1, so d loss/dW01 = y0 * (-1) = 1
    CHECK(fd(0, 1) == doctest::Approx(1.0).epsilon(1e-9));
}
