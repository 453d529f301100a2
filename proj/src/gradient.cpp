#include "lorasb/gradient.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "lorasb/error.hpp"
#include "lorasb/svd.hpp"

namespace lorasb {

namespace {

void require_factor_shapes(const Matrix& b, const Matrix& a) {
    if (b.empty() || a.empty() || b.cols() != a.rows()) {
        throw InvalidInputError("factor shapes incompatible: B is " + std::to_string(b.rows()) +
                                "x" + std::to_string(b.cols()) + ", A is " +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
    }
}

// Factors must be numerically full rank for the Gram inverses to mean
// anything; threshold 1e-10 relative to the largest singular value.
void require_full_rank(const Matrix& factor, const char* which) {
    SvdResult f = svd(factor);
    const double hi = f.s.front();
    const double lo = f.s.back();
    if (!(lo > 1e-10 * hi)) {
        const double cond = lo == 0.0 ? std::numeric_limits<double>::infinity() : hi / lo;
        throw SingularityError(std::string(which) + " is rank deficient", cond);
    }
}

} // namespace

Matrix xs_gradient(const Matrix& b, const Matrix& a, double s, const Matrix& g) {
    require_factor_shapes(b, a);
    if (g.rows() != b.rows() || g.cols() != a.cols()) {
        throw InvalidInputError("gradient shape does not match factors");
    }
    return s * matmul(transpose(b), matmul(g, transpose(a)));
}

Matrix xs_gradient(const AdapterState& st, const Matrix& g) {
    return xs_gradient(st.b, st.a, st.s, g);
}

CorrectionOperator make_correction_operator(const Matrix& b, const Matrix& a, double s) {
    require_factor_shapes(b, a);
    if (!(s > 0.0)) throw InvalidInputError("scale s must be positive");
    require_full_rank(b, "B");
    require_full_rank(a, "A");
    CorrectionOperator op;
    op.bgram_inv = inverse_small(matmul(transpose(b), b));
    op.agram_inv = inverse_small(matmul(a, transpose(a)));
    op.inv_s2 = 1.0 / (s * s);
    return op;
}

Matrix CorrectionOperator::apply(const Matrix& g_r_xs) const {
    return inv_s2 * matmul(bgram_inv, matmul(g_r_xs, agram_inv));
}

Matrix optimal_correction(const Matrix& b, const Matrix& a, double s, const Matrix& g_r_xs) {
    const CorrectionOperator op = make_correction_operator(b, a, s);
    if (g_r_xs.rows() != b.cols() || g_r_xs.cols() != a.rows()) {
        throw InvalidInputError("core gradient shape does not match factors");
    }
    return op.apply(g_r_xs);
}

Matrix optimal_correction(const AdapterState& st, const Matrix& g_r_xs) {
    return optimal_correction(st.b, st.a, st.s, g_r_xs);
}

Matrix equivalent_gradient(const Matrix& b, const Matrix& a, double s, const Matrix& g_r) {
    require_factor_shapes(b, a);
    if (g_r.rows() != b.cols() || g_r.cols() != a.rows()) {
        throw InvalidInputError("core gradient shape does not match factors");
    }
    return s * matmul(b, matmul(g_r, a));
}

Matrix equivalent_gradient(const AdapterState& st, const Matrix& g_r) {
    return equivalent_gradient(st.b, st.a, st.s, g_r);
}

double predicted_loss_decrement(const Matrix& g_r_xs, const Matrix& g_applied, double eta) {
    if (!(eta > 0.0)) throw InvalidInputError("step size eta must be positive");
    return -eta * frob_inner(g_r_xs, g_applied);
}

ScaleInvarianceReport scale_invariance_report(const Matrix& b, const Matrix& a, const Matrix& g,
                                              const std::vector<double>& scales) {
    if (scales.empty()) throw InvalidInputError("need at least one scale to probe");
    for (double s : scales) {
        if (!(s > 0.0)) throw InvalidInputError("scales must be positive");
    }

    ScaleInvarianceReport report;
    report.reference_scale = scales.front();

    Matrix corrected_ref;
    for (std::size_t i = 0; i < scales.size(); ++i) {
        const double s = scales[i];
        const Matrix g_xs = xs_gradient(b, a, s, g);
        const Matrix g_opt = optimal_correction(b, a, s, g_xs);
        const Matrix full_corrected = equivalent_gradient(b, a, s, g_opt);
        const Matrix full_raw = equivalent_gradient(b, a, s, g_xs);
        if (i == 0) {
            corrected_ref = full_corrected;
            report.corrected_reference_norm = frob_norm(corrected_ref);
        }
        ScaleProbe probe;
        probe.s = s;
        probe.corrected_deviation = frob_norm(full_corrected - corrected_ref);
        probe.raw_norm = frob_norm(full_raw);
        probe.raw_norm_over_s2 = probe.raw_norm / (s * s);
        report.max_corrected_deviation =
            std::max(report.max_corrected_deviation, probe.corrected_deviation);
        report.probes.push_back(probe);
    }
    return report;
}

std::string ScaleInvarianceReport::to_json() const {
    nlohmann::json j;
    j["schema"] = "lorasb.scale_invariance.v1";
    j["reference_scale"] = reference_scale;
    j["corrected_reference_norm"] = corrected_reference_norm;
    j["max_corrected_deviation"] = max_corrected_deviation;
    j["probes"] = nlohmann::json::array();
    for (const auto& p : probes) {
        j["probes"].push_back({{"s", p.s},
                               {"corrected_deviation", p.corrected_deviation},
                               {"raw_norm", p.raw_norm},
                               {"raw_norm_over_s2", p.raw_norm_over_s2}});
    }
    return j.dump(2) + "\n";
}

} // namespace lorasb
