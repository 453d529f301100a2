#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "lorasb/error.hpp"
#include "lorasb/gradient.hpp"
#include "lorasb/oracles.hpp"
#include "lorasb/rng.hpp"
#include "lorasb/svd.hpp"

using namespace lorasb;

namespace {

Matrix random_matrix(Rng& rng, int m, int n) {
    Matrix a(m, n);
    for (long long i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    return a;
}

} // namespace

TEST_CASE("xs gradient on a worked example") {
    const Matrix b = {{1.0}, {2.0}};
    const Matrix a = {{0.0, 1.0}};
    const Matrix g = {{1.0, 2.0}, {3.0, 4.0}};
    // s B^T g A^T = 2 * [1 2] g [0 1]^T = 2 * (1*2 + 2*4)
    const Matrix gr = xs_gradient(b, a, 2.0, g);
    CHECK(gr.rows() == 1);
    CHECK(gr.cols() == 1);
    CHECK(gr(0, 0) == 20.0);
}

TEST_CASE("optimal correction agrees with the least squares oracle") {
    Rng rng(61);
    for (const auto& [m, n, r, s] : {std::tuple{9, 7, 3, 1.0}, {5, 12, 2, 0.5}, {6, 6, 4, 2.0}}) {
        const Matrix b = random_matrix(rng, m, r);
        const Matrix a = random_matrix(rng, r, n);
        const Matrix g = random_matrix(rng, m, n);
        const Matrix mine = optimal_correction(b, a, s, xs_gradient(b, a, s, g));
        const Matrix oracle = lstsq_core_oracle(b, a, s, g);
        CHECK(frob_norm(mine - oracle) / frob_norm(oracle) < 1e-9);
    }
}

TEST_CASE("correction collapses to the raw gradient for orthonormal factors") {
    Rng rng(62);
    const SvdResult fb = svd(random_matrix(rng, 8, 3));
    const SvdResult fa = svd(random_matrix(rng, 3, 10));
    const Matrix b = fb.u;   // 8 x 3, orthonormal columns
    const Matrix a = fa.vt;  // 3 x 10, orthonormal rows
    const Matrix g = random_matrix(rng, 8, 10);
    const Matrix raw = xs_gradient(b, a, 1.0, g);
    const Matrix corrected = optimal_correction(b, a, 1.0, raw);
    CHECK(frob_norm(corrected - raw) / frob_norm(raw) < 1e-12);
}

TEST_CASE("rank deficient factors are refused") {
    Rng rng(63);
    Matrix b = random_matrix(rng, 6, 2);
    for (int i = 0; i < 6; ++i) b(i, 1) = 2.0 * b(i, 0);  // dependent columns
    const Matrix a = random_matrix(rng, 2, 5);
    CHECK_THROWS_AS(make_correction_operator(b, a, 1.0), SingularityError);
    try {
        make_correction_operator(b, a, 1.0);
    } catch (const SingularityError& e) {
        CHECK(e.condition_estimate() > 1e10);
    }
}

TEST_CASE("correction operator matches the one shot path") {
    Rng rng(64);
    const Matrix b = random_matrix(rng, 7, 3);
    const Matrix a = random_matrix(rng, 3, 6);
    const CorrectionOperator op = make_correction_operator(b, a, 1.5);
    for (int trial = 0; trial < 5; ++trial) {
        const Matrix g = random_matrix(rng, 7, 6);
        const Matrix g_xs = xs_gradient(b, a, 1.5, g);
        CHECK(op.apply(g_xs).bit_equal(optimal_correction(b, a, 1.5, g_xs)));
    }
}

TEST_CASE("predicted loss decrement sign and validation") {
    Rng rng(65);
    const Matrix b = random_matrix(rng, 6, 2);
    const Matrix a = random_matrix(rng, 2, 6);
    const Matrix g = random_matrix(rng, 6, 6);
    const Matrix g_xs = xs_gradient(b, a, 1.0, g);
    CHECK(predicted_loss_decrement(g_xs, g_xs, 0.1) <= 0.0);
    CHECK(predicted_loss_decrement(g_xs, optimal_correction(b, a, 1.0, g_xs), 0.1) <= 0.0);
    CHECK_THROWS_AS(predicted_loss_decrement(g_xs, g_xs, 0.0), InvalidInputError);
    CHECK_THROWS_AS(predicted_loss_decrement(g_xs, g_xs, -1.0), InvalidInputError);
}

TEST_CASE("raw equivalent gradient gains exactly s squared") {
    Rng rng(66);
    const Matrix b = random_matrix(rng, 8, 3);
    const Matrix a = random_matrix(rng, 3, 7);
    const Matrix g = random_matrix(rng, 8, 7);
    const Matrix at_one = equivalent_gradient(b, a, 1.0, xs_gradient(b, a, 1.0, g));
    const Matrix at_two = equivalent_gradient(b, a, 2.0, xs_gradient(b, a, 2.0, g));
    // s = 2 scales by a power of two, so the factor of 4 is bit exact
    CHECK(at_two.bit_equal(4.0 * at_one));
}

TEST_CASE("scale invariance report structure and serialization") {
    Rng rng(67);
    const Matrix b = random_matrix(rng, 6, 2);
    const Matrix a = random_matrix(rng, 2, 6);
    const Matrix g = random_matrix(rng, 6, 6);
    const ScaleInvarianceReport rep = scale_invariance_report(b, a, g, {0.25, 1.0, 4.0});
    CHECK(rep.probes.size() == 3);
    CHECK(rep.reference_scale == 0.25);
    CHECK(rep.max_corrected_deviation < 1e-8 * rep.corrected_reference_norm);
    for (const auto& p : rep.probes) {
        CHECK(std::fabs(p.raw_norm_over_s2 - rep.probes[0].raw_norm_over_s2) <
              1e-9 * rep.probes[0].raw_norm_over_s2);
    }
    const auto j = nlohmann::json::parse(rep.to_json());
    CHECK(j.at("schema") == "lorasb.scale_invariance.v1");
    CHECK(j.at("probes").size() == 3);
}
