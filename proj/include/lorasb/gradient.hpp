#pragma once

#include <string>
#include <vector>

#include "lorasb/adapter.hpp"
#include "lorasb/matrix.hpp"

namespace lorasb {

// Gradient algebra for the W = W0 + s B R A parameterization with B and A
// frozen. g below is always the full-weight gradient dL/dW (m x n).

// Chain-rule gradient of the core: dL/dR = s B^T g A^T.
Matrix xs_gradient(const Matrix& b, const Matrix& a, double s, const Matrix& g);
Matrix xs_gradient(const AdapterState& st, const Matrix& g);

// Closed-form minimizer of || s B X A - g ||_F over X:
//   X* = (1/s^2) (B^T B)^{-1} (s B^T g A^T) (A A^T)^{-1}.
// Requires B and A numerically full rank (smallest singular value above
// 1e-10 times the largest); otherwise throws SingularityError.
Matrix optimal_correction(const Matrix& b, const Matrix& a, double s, const Matrix& g_r_xs);
Matrix optimal_correction(const AdapterState& st, const Matrix& g_r_xs);

// Update induced on the full weight by a core update direction: s B g_r A.
Matrix equivalent_gradient(const Matrix& b, const Matrix& a, double s, const Matrix& g_r);
Matrix equivalent_gradient(const AdapterState& st, const Matrix& g_r);

// First-order loss change of an SGD step of size eta along g_applied:
// -eta * <g_r_xs, g_applied>. Non-positive whenever g_applied is the raw
// gradient or its optimal correction.
double predicted_loss_decrement(const Matrix& g_r_xs, const Matrix& g_applied, double eta);

// Precomputed Gram inverses for repeated corrections with frozen factors.
struct CorrectionOperator {
    Matrix bgram_inv;  // (B^T B)^{-1}
    Matrix agram_inv;  // (A A^T)^{-1}
    double inv_s2 = 1.0;

    Matrix apply(const Matrix& g_r_xs) const;
};
CorrectionOperator make_correction_operator(const Matrix& b, const Matrix& a, double s);

// How the full-weight step reacts to the scale s: the corrected pathway is
// invariant in exact arithmetic, the raw pathway gains a factor s^2.
struct ScaleProbe {
    double s = 0.0;
    double corrected_deviation = 0.0;  // ||corrected(s) - corrected(s_ref)||_F
    double raw_norm = 0.0;             // ||raw equivalent gradient||_F
    double raw_norm_over_s2 = 0.0;
};

struct ScaleInvarianceReport {
    double reference_scale = 0.0;
    double corrected_reference_norm = 0.0;
    double max_corrected_deviation = 0.0;
    std::vector<ScaleProbe> probes;

    std::string to_json() const;
};

ScaleInvarianceReport scale_invariance_report(const Matrix& b, const Matrix& a, const Matrix& g,
                                              const std::vector<double>& scales);

} // namespace lorasb
