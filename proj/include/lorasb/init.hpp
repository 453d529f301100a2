#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lorasb/adapter.hpp"
#include "lorasb/matrix.hpp"
#include "lorasb/model.hpp"

namespace lorasb {

// Adapter initialization recipes. lora_sb factors the estimated first
// update; the others are controlled departures from it used in ablations:
//   pissa_style  factors the frozen base weight instead of the update
//   noisy_sb     factors update + Gaussian noise of std sigma
//   nonortho_sb  absorbs the singular values into B, so B^T B != I
//   kaiming_svd  factors a Kaiming-style random matrix (no data at all)
//   zero_b       B = 0: the adapter can never move, a negative control
enum class InitKind { lora_sb, pissa_style, noisy_sb, nonortho_sb, kaiming_svd, zero_b };

// Which optimizer's first step the update estimate models. adamw_sign uses
// the sign of the accumulated gradient (AdamW's first step direction up to
// epsilon), sgd uses the mean gradient.
enum class OptimizerModel { adamw_sign, sgd };

const char* to_string(InitKind k);
const char* to_string(OptimizerModel m);
InitKind init_kind_from_string(const std::string& s);
OptimizerModel optimizer_model_from_string(const std::string& s);

struct InitRecipe {
    InitKind kind = InitKind::lora_sb;
    int rank = 0;
    double eta = 1.0;  // step size of the modeled first update
    OptimizerModel optimizer_model = OptimizerModel::sgd;
    long long sample_budget = 0;  // how many dataset rows the estimate may touch
    std::uint64_t seed = 0;       // noise / random-matrix draws
    double sigma = 0.0;           // noisy_sb only
};

// Estimated first update Delta W_avg for every weight matrix of the model,
// from per-sample gradients at the current weights. Does not modify the
// model. adamw_sign: -eta * sign(sum of per-sample gradients); sgd:
// -eta * mean of per-sample gradients. sign(0) = 0.
struct UpdateEstimate {
    std::vector<Matrix> deltas;
    long long samples_used = 0;
    OptimizerModel optimizer_model = OptimizerModel::sgd;
    double eta = 0.0;
};

UpdateEstimate estimate_update(const ModelStack& model, const Batch& data,
                               const InitRecipe& recipe);

// Factors of one module's initialization. For SVD-of-update recipes:
// B = U_r, A = V_r^T, R = diag(sigma_1..sigma_r) / s, so s B R A is the
// best rank-r approximation of the factored matrix. Singular directions
// with sigma_i < 1e-12 * sigma_1 keep their orthonormal basis vectors but
// get R_ii = 0, and a warning is recorded.
struct InitFactors {
    Matrix b;
    Matrix r_core;
    Matrix a;
    double s = 1.0;
    std::vector<std::string> warnings;
};

InitFactors init_lora_sb(const Matrix& delta_avg, int r, double s);

// Dispatch over InitKind. delta_avg feeds the update-based kinds, w0 feeds
// pissa_style; kaiming_svd and zero_b only use shapes and recipe.seed.
InitFactors init_factors(const InitRecipe& recipe, const Matrix& delta_avg, const Matrix& w0,
                         double s);

// Assemble a ready-to-train adapter around a frozen base weight.
AdapterState make_adapter(AdapterMethod method, const Matrix& w0, const InitFactors& f);

} // namespace lorasb
