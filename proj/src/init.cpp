#include "lorasb/init.hpp"

#include <algorithm>
#include <cmath>

#include "lorasb/error.hpp"
#include "lorasb/rng.hpp"
#include "lorasb/svd.hpp"

namespace lorasb {

const char* to_string(InitKind k) {
    switch (k) {
        case InitKind::lora_sb: return "lora_sb";
        case InitKind::pissa_style: return "pissa_style";
        case InitKind::noisy_sb: return "noisy_sb";
        case InitKind::nonortho_sb: return "nonortho_sb";
        case InitKind::kaiming_svd: return "kaiming_svd";
        case InitKind::zero_b: return "zero_b";
    }
    return "?";
}

const char* to_string(OptimizerModel m) {
    return m == OptimizerModel::adamw_sign ? "adamw_sign" : "sgd";
}

InitKind init_kind_from_string(const std::string& s) {
    if (s == "lora_sb") return InitKind::lora_sb;
    if (s == "pissa_style") return InitKind::pissa_style;
    if (s == "noisy_sb") return InitKind::noisy_sb;
    if (s == "nonortho_sb") return InitKind::nonortho_sb;
    if (s == "kaiming_svd") return InitKind::kaiming_svd;
    if (s == "zero_b") return InitKind::zero_b;
    throw InvalidInputError("unknown init kind: " + s);
}

OptimizerModel optimizer_model_from_string(const std::string& s) {
    if (s == "adamw_sign") return OptimizerModel::adamw_sign;
    if (s == "sgd") return OptimizerModel::sgd;
    throw InvalidInputError("unknown optimizer model: " + s);
}

UpdateEstimate estimate_update(const ModelStack& model, const Batch& data,
                               const InitRecipe& recipe) {
    model.validate();
    if (recipe.sample_budget < 1) {
        throw InvalidInputError("sample budget must be >= 1");
    }
    if (recipe.sample_budget > data.inputs.rows()) {
        throw InvalidInputError("sample budget " + std::to_string(recipe.sample_budget) +
                                " exceeds available samples " +
                                std::to_string(data.inputs.rows()));
    }
    if (!(recipe.eta > 0.0)) throw InvalidInputError("recipe eta must be positive");

    const long long budget = recipe.sample_budget;
    std::vector<Matrix> sums;
    for (const auto& w : model.weights) sums.emplace_back(w.rows(), w.cols());

    // One forward/backward per sample, accumulated. Order is data order, so
    // the estimate is deterministic for a deterministic dataset.
    for (long long row = 0; row < budget; ++row) {
        Batch one;
        one.inputs = Matrix(1, data.inputs.cols());
        one.targets = Matrix(1, data.targets.cols());
        for (int j = 0; j < data.inputs.cols(); ++j)
            one.inputs(0, j) = data.inputs(static_cast<int>(row), j);
        for (int j = 0; j < data.targets.cols(); ++j)
            one.targets(0, j) = data.targets(static_cast<int>(row), j);

        ForwardCache cache;
        forward(model, one, &cache);
        Gradients grads = backward(model, cache);
        for (std::size_t li = 0; li < sums.size(); ++li) sums[li] = sums[li] + grads.weights[li];
    }

    UpdateEstimate est;
    est.samples_used = budget;
    est.optimizer_model = recipe.optimizer_model;
    est.eta = recipe.eta;
    for (auto& sum : sums) {
        if (recipe.optimizer_model == OptimizerModel::adamw_sign) {
            est.deltas.push_back((-recipe.eta) * sign_matrix(sum));
        } else {
            est.deltas.push_back((-recipe.eta / static_cast<double>(budget)) * sum);
        }
    }
    return est;
}

namespace {

constexpr double kDegenerateRel = 1e-12;

// Shared body of the SVD-of-a-matrix recipes.
InitFactors factor_matrix(const Matrix& source, int r, double s, const char* what) {
    InitFactors f;
    SvdResult t = truncated_svd(source, r);
    f.b = t.u;
    f.a = t.vt;
    f.r_core = Matrix(r, r);
    f.s = s;
    const double sigma_top = t.s.front();
    for (int i = 0; i < r; ++i) {
        if (t.s[i] < kDegenerateRel * sigma_top || sigma_top == 0.0) {
            f.warnings.push_back(std::string(what) + ": singular direction " + std::to_string(i) +
                                 " is degenerate (sigma = " + format_double(t.s[i]) +
                                 "), R entry set to 0");
            f.r_core(i, i) = 0.0;
        } else {
            f.r_core(i, i) = t.s[i] / s;
        }
    }
    return f;
}

} // namespace

InitFactors init_lora_sb(const Matrix& delta_avg, int r, double s) {
    if (!(s > 0.0)) throw InvalidInputError("scale s must be positive");
    return factor_matrix(delta_avg, r, s, "lora_sb init");
}

InitFactors init_factors(const InitRecipe& recipe, const Matrix& delta_avg, const Matrix& w0,
                         double s) {
    if (!(s > 0.0)) throw InvalidInputError("scale s must be positive");
    const int r = recipe.rank;
    const int m = w0.rows();
    const int n = w0.cols();
    if (r < 1 || r > std::min(m, n)) {
        throw InvalidInputError("init rank " + std::to_string(r) + " out of range");
    }

    switch (recipe.kind) {
        case InitKind::lora_sb:
            return init_lora_sb(delta_avg, r, s);

        case InitKind::pissa_style:
            return factor_matrix(w0, r, s, "pissa_style init");

        case InitKind::noisy_sb: {
            if (recipe.sigma < 0.0) throw InvalidInputError("noise sigma must be non-negative");
            // The noise matrix is drawn unconditionally so that sigma = 0 is
            // bit-identical to lora_sb with the same inputs.
            Rng rng(Rng::derive(recipe.seed, 0x6e6f697379ULL));
            Matrix noisy = delta_avg;
            for (long long i = 0; i < noisy.size(); ++i)
                noisy.data()[i] += recipe.sigma * rng.normal();
            return factor_matrix(noisy, r, s, "noisy_sb init");
        }

        case InitKind::nonortho_sb: {
            // Same subspaces as lora_sb but with the singular values folded
            // into B: B = U_r diag(sigma), A = V_r^T, R = I.
            SvdResult t = truncated_svd(delta_avg, r);
            InitFactors f;
            f.b = t.u;
            for (int j = 0; j < r; ++j)
                for (int i = 0; i < f.b.rows(); ++i) f.b(i, j) *= t.s[j];
            f.a = t.vt;
            f.r_core = Matrix::identity(r);
            f.s = s;
            const double sigma_top = t.s.front();
            for (int i = 0; i < r; ++i) {
                if (t.s[i] < kDegenerateRel * sigma_top || sigma_top == 0.0) {
                    f.warnings.push_back("nonortho_sb init: singular direction " +
                                         std::to_string(i) + " is degenerate, B column is ~0");
                }
            }
            return f;
        }

        case InitKind::kaiming_svd: {
            // Data-free control: factor a Kaiming-style random matrix
            // (entries N(0, 2/m)) instead of the update estimate.
            Rng rng(Rng::derive(recipe.seed, 0x6b61696dULL));
            Matrix k(m, n);
            const double std_dev = std::sqrt(2.0 / static_cast<double>(m));
            for (long long i = 0; i < k.size(); ++i) k.data()[i] = rng.normal(0.0, std_dev);
            return factor_matrix(k, r, s, "kaiming_svd init");
        }

        case InitKind::zero_b: {
            // Negative control: B = 0 blocks any movement of the effective
            // weight. A is an arbitrary orthonormal row frame, R = I, both
            // nonzero so the stall is attributable to B alone.
            Rng rng(Rng::derive(recipe.seed, 0x7a65726fULL));
            Matrix probe(m, n);
            for (long long i = 0; i < probe.size(); ++i) probe.data()[i] = rng.normal();
            SvdResult t = truncated_svd(probe, r);
            InitFactors f;
            f.b = Matrix(m, r);
            f.a = t.vt;
            f.r_core = Matrix::identity(r);
            f.s = s;
            return f;
        }
    }
    throw InvalidInputError("unreachable init kind");
}

AdapterState make_adapter(AdapterMethod method, const Matrix& w0, const InitFactors& f) {
    AdapterState st;
    st.method = method;
    st.w0 = w0;
    st.s = f.s;
    switch (method) {
        case AdapterMethod::full_ft:
            st.delta = Matrix(w0.rows(), w0.cols());
            break;
        case AdapterMethod::lora:
            // Collapse the core into A so only two factors remain.
            st.b = f.b;
            st.a = matmul(f.r_core, f.a);
            break;
        case AdapterMethod::lora_xs:
        case AdapterMethod::lora_sb:
            st.b = f.b;
            st.r_core = f.r_core;
            st.a = f.a;
            break;
    }
    st.validate();
    return st;
}

} // namespace lorasb
