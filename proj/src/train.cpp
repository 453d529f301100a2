#include "lorasb/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lorasb/error.hpp"
#include "lorasb/gradient.hpp"
#include "lorasb/rng.hpp"

namespace lorasb {

const char* to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adamw"; }
const char* to_string(Pathway p) { return p == Pathway::raw_xs ? "raw_xs" : "corrected"; }
const char* to_string(LrSchedule s) { return s == LrSchedule::constant ? "constant" : "linear"; }

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adamw") return OptimizerKind::adamw;
    throw InvalidInputError("unknown optimizer: " + s);
}

Pathway pathway_from_string(const std::string& s) {
    if (s == "raw_xs") return Pathway::raw_xs;
    if (s == "corrected") return Pathway::corrected;
    throw InvalidInputError("unknown pathway: " + s);
}

LrSchedule schedule_from_string(const std::string& s) {
    if (s == "constant") return LrSchedule::constant;
    if (s == "linear") return LrSchedule::linear;
    throw InvalidInputError("unknown lr schedule: " + s);
}

void sgd_step(Matrix& param, const Matrix& grad, double eta) {
    if (!param.same_shape(grad)) throw InvalidInputError("sgd_step shape mismatch");
    for (long long i = 0; i < param.size(); ++i) param.data()[i] -= eta * grad.data()[i];
    param.check_finite("sgd_step");
}

void adamw_step(Matrix& param, AdamWState& state, const Matrix& grad, const AdamWParams& hp,
                double eta) {
    if (!param.same_shape(grad)) throw InvalidInputError("adamw_step shape mismatch");
    if (state.t == 0) {
        state.m = Matrix(param.rows(), param.cols());
        state.v = Matrix(param.rows(), param.cols());
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
    for (long long i = 0; i < param.size(); ++i) {
        const double g = grad.data()[i];
        const double m = hp.beta1 * state.m.data()[i] + (1.0 - hp.beta1) * g;
        const double v = hp.beta2 * state.v.data()[i] + (1.0 - hp.beta2) * g * g;
        state.m.data()[i] = m;
        state.v.data()[i] = v;
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        // Decoupled weight decay: the decay term never enters the moments.
        param.data()[i] -= eta * (mhat / (std::sqrt(vhat) + hp.eps));
        param.data()[i] -= eta * hp.weight_decay * param.data()[i];
    }
    param.check_finite("adamw_step");
}

namespace {

bool is_core_method(AdapterMethod m) {
    return m == AdapterMethod::lora_xs || m == AdapterMethod::lora_sb;
}

double orth_residual_cols(const Matrix& b) {
    return frob_norm(matmul(transpose(b), b) - Matrix::identity(b.cols()));
}

double orth_residual_rows(const Matrix& a) {
    return frob_norm(matmul(a, transpose(a)) - Matrix::identity(a.rows()));
}

// Membership with the zero-update shortcut: a zero update lies in every
// subspace, and the shortcut also avoids projector trouble when B or A is
// singular (the zero_b control).
bool safe_membership(const AdapterState& st, const Matrix& update, double tol) {
    const double scale = std::max(1.0, frob_norm(update));
    if (frob_norm(update) <= tol * scale) return true;
    try {
        return subspace_membership(st.b, st.a, update, tol);
    } catch (const SingularityError&) {
        return false;
    }
}

struct LayerWork {
    // Correction operators are built once: B and A are frozen for the core
    // methods, so the Gram inverses never change.
    CorrectionOperator correction;
    bool has_correction = false;
    Matrix frozen_b;
    Matrix frozen_a;
    AdamWState opt_delta, opt_b, opt_a, opt_core;
};

struct BatchPlan {
    std::vector<int> order;
    std::size_t cursor = 0;
    Rng rng;
    explicit BatchPlan(std::uint64_t seed) : rng(seed) {}
};

Batch next_batch(const Batch& data, int batch_size, BatchPlan& plan) {
    const int rows = data.inputs.rows();
    if (batch_size <= 0 || batch_size >= rows) return data;
    if (plan.order.size() != static_cast<std::size_t>(rows)) {
        plan.order.resize(rows);
        std::iota(plan.order.begin(), plan.order.end(), 0);
        plan.cursor = plan.order.size();  // force first shuffle
    }
    if (plan.cursor + batch_size > plan.order.size()) {
        // Fisher-Yates with the run's own stream; epoch boundary reshuffle.
        for (int i = rows - 1; i > 0; --i) {
            const int j = static_cast<int>(plan.rng.below(static_cast<std::uint64_t>(i) + 1));
            std::swap(plan.order[i], plan.order[j]);
        }
        plan.cursor = 0;
    }
    Batch out;
    out.inputs = Matrix(batch_size, data.inputs.cols());
    out.targets = Matrix(batch_size, data.targets.cols());
    for (int i = 0; i < batch_size; ++i) {
        const int src = plan.order[plan.cursor + i];
        for (int j = 0; j < data.inputs.cols(); ++j) out.inputs(i, j) = data.inputs(src, j);
        for (int j = 0; j < data.targets.cols(); ++j) out.targets(i, j) = data.targets(src, j);
    }
    plan.cursor += batch_size;
    return out;
}

} // namespace

RunReport train(const ModelStack& model, std::vector<AdapterState>& adapters,
                const TrainConfig& config, const Batch& data) {
    const auto t_start = std::chrono::steady_clock::now();
    model.validate();
    if (adapters.size() != model.layers.size()) {
        throw InvalidInputError("need exactly one adapter per layer");
    }
    for (std::size_t i = 0; i < adapters.size(); ++i) {
        adapters[i].validate();
        if (!adapters[i].w0.bit_equal(model.weights[i])) {
            throw InvalidInputError("adapter " + std::to_string(i) +
                                    " w0 does not match the model weight");
        }
    }
    if (config.steps < 1) throw InvalidInputError("steps must be >= 1");
    if (!(config.eta > 0.0)) throw InvalidInputError("eta must be positive");
    if (config.log_every < 1) throw InvalidInputError("log_every must be >= 1");

    const std::size_t n_layers = adapters.size();
    std::vector<LayerWork> work(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i) {
        const AdapterState& st = adapters[i];
        if (is_core_method(st.method)) {
            work[i].frozen_b = st.b;
            work[i].frozen_a = st.a;
            if (config.pathway == Pathway::corrected) {
                // Fails loudly here (SingularityError) if B or A is rank
                // deficient; the raw pathway has no such requirement.
                work[i].correction = make_correction_operator(st.b, st.a, st.s);
                work[i].has_correction = true;
            }
        }
    }

    ModelStack scratch = model;
    BatchPlan plan(Rng::derive(config.seed, 0x62617463685fULL));
    RunReport report;

    Batch current = next_batch(data, config.batch_size, plan);
    int release_consistency_counter = 0;

    for (int step = 0; step < config.steps; ++step) {
        for (std::size_t i = 0; i < n_layers; ++i)
            scratch.weights[i] = effective_weight(adapters[i]);

        ForwardCache cache;
        const double loss = forward(scratch, current, &cache);
        if (step == 0) report.initial_loss = loss;
        Gradients grads = backward(scratch, cache);

        const double eta_t =
            config.schedule == LrSchedule::linear
                ? config.eta * (1.0 - static_cast<double>(step) / config.steps)
                : config.eta;

        const bool log_this = step % config.log_every == 0 || step == config.steps - 1;
        StepRecord rec;
        rec.step = step;
        rec.loss = loss;

        double grad_sq = 0.0;
        double dl_pred = 0.0;

        for (std::size_t i = 0; i < n_layers; ++i) {
            AdapterState& st = adapters[i];
            const Matrix& g = grads.weights[i];
            switch (st.method) {
                case AdapterMethod::full_ft: {
                    grad_sq += frob_inner(g, g);
                    Matrix before = st.delta;
                    if (config.optimizer == OptimizerKind::sgd) {
                        sgd_step(st.delta, g, eta_t);
                    } else {
                        adamw_step(st.delta, work[i].opt_delta, g, config.adamw, eta_t);
                    }
                    dl_pred += frob_inner(g, st.delta - before);
                    break;
                }
                case AdapterMethod::lora: {
                    // dL/dB = s g A^T, dL/dA = s B^T g.
                    Matrix gb = st.s * matmul(g, transpose(st.a));
                    Matrix ga = st.s * matmul(transpose(st.b), g);
                    grad_sq += frob_inner(gb, gb) + frob_inner(ga, ga);
                    Matrix b_before = st.b;
                    Matrix a_before = st.a;
                    if (config.optimizer == OptimizerKind::sgd) {
                        sgd_step(st.b, gb, eta_t);
                        sgd_step(st.a, ga, eta_t);
                    } else {
                        adamw_step(st.b, work[i].opt_b, gb, config.adamw, eta_t);
                        adamw_step(st.a, work[i].opt_a, ga, config.adamw, eta_t);
                    }
                    dl_pred += frob_inner(gb, st.b - b_before) + frob_inner(ga, st.a - a_before);
                    break;
                }
                case AdapterMethod::lora_xs:
                case AdapterMethod::lora_sb: {
                    Matrix g_xs = xs_gradient(st, g);

                    // The same contraction in another association order must
                    // agree; a cheap tripwire against backprop corruption.
                    // Every step in debug builds, sampled in release.
#ifdef NDEBUG
                    const bool check_consistency = (release_consistency_counter++ % 50) == 0;
#else
                    const bool check_consistency = true;
                    (void)release_consistency_counter;
#endif
                    if (check_consistency) {
                        Matrix alt = st.s * matmul(matmul(transpose(st.b), g), transpose(st.a));
                        const double dev = frob_norm(g_xs - alt);
                        if (dev > 1e-9 * std::max(1.0, frob_norm(g_xs))) {
                            throw NumericalFailure("core gradient association mismatch", step);
                        }
                    }

                    grad_sq += frob_inner(g_xs, g_xs);
                    Matrix applied = config.pathway == Pathway::corrected
                                         ? work[i].correction.apply(g_xs)
                                         : g_xs;
                    Matrix before = st.r_core;
                    if (config.optimizer == OptimizerKind::sgd) {
                        sgd_step(st.r_core, applied, eta_t);
                    } else {
                        adamw_step(st.r_core, work[i].opt_core, applied, config.adamw, eta_t);
                    }
                    dl_pred += frob_inner(g_xs, st.r_core - before);
                    break;
                }
            }
        }
        rec.grad_norm = std::sqrt(grad_sq);
        rec.dl_pred = dl_pred;

        // Invariant sweep on the post-step state.
        bool frozen_ok = true;
        bool subspace_ok = true;
        double orth_b = -1.0, orth_a = -1.0;
        for (std::size_t i = 0; i < n_layers; ++i) {
            const AdapterState& st = adapters[i];
            if (!is_core_method(st.method)) continue;
            frozen_ok = frozen_ok && st.b.bit_equal(work[i].frozen_b) &&
                        st.a.bit_equal(work[i].frozen_a);
            if (log_this) {
                subspace_ok =
                    subspace_ok && safe_membership(st, update_matrix(st), config.membership_tol);
                const double ob = orth_residual_cols(st.b);
                const double oa = orth_residual_rows(st.a);
                orth_b = std::max(orth_b, ob);
                orth_a = std::max(orth_a, oa);
            }
        }
        rec.frozen_ok = frozen_ok ? 1 : 0;
        rec.subspace_ok = subspace_ok ? 1 : 0;
        rec.orth_b = orth_b;
        rec.orth_a = orth_a;

        if (config.strict) {
            if (!frozen_ok) throw InvariantViolation("frozen factor changed", step);
            if (log_this && !subspace_ok) {
                throw InvariantViolation("update left the adapter subspace", step);
            }
            if (rec.dl_pred > 1e-12 * std::max(1.0, std::fabs(rec.dl_pred)) &&
                config.optimizer == OptimizerKind::sgd) {
                throw InvariantViolation("predicted loss change is positive", step);
            }
        }

        if (log_this) report.steps.push_back(rec);
        if (config.batch_size > 0 && config.batch_size < data.inputs.rows()) {
            current = next_batch(data, config.batch_size, plan);
        }
    }

    // Closing measurement: fills the last dl_real and the final loss.
    for (std::size_t i = 0; i < n_layers; ++i)
        scratch.weights[i] = effective_weight(adapters[i]);
    report.final_loss = forward(scratch, current);
    for (std::size_t i = 0; i < n_layers; ++i) {
        report.final_update_norms.push_back(frob_norm(update_matrix(adapters[i])));
    }

    // dl_real per logged row: next measured loss minus this row's loss.
    // Only exact when consecutive rows are one step apart on the same data,
    // i.e. full batch with log_every == 1; otherwise it is the observed
    // inter-log change, recorded as-is.
    for (std::size_t i = 0; i + 1 < report.steps.size(); ++i) {
        report.steps[i].dl_real = report.steps[i + 1].loss - report.steps[i].loss;
    }
    if (!report.steps.empty()) {
        report.steps.back().dl_real = report.final_loss - report.steps.back().loss;
    }

    report.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

double probe_stable_eta(const ModelStack& model, const std::vector<AdapterState>& adapters,
                        const TrainConfig& config, const Batch& data) {
    double eta = 1e-2;
    for (int attempt = 0; attempt < 60; ++attempt) {
        std::vector<AdapterState> probe = adapters;
        TrainConfig c = config;
        c.eta = eta;
        c.steps = 20;
        c.batch_size = 0;
        c.strict = false;
        c.optimizer = OptimizerKind::sgd;
        c.log_every = 1;
        RunReport r = train(model, probe, c, data);
        bool monotone = true;
        for (std::size_t i = 0; i + 1 < r.steps.size(); ++i) {
            if (r.steps[i + 1].loss > r.steps[i].loss) {
                monotone = false;
                break;
            }
        }
        if (monotone && r.final_loss <= r.steps.back().loss) return eta;
        eta *= 0.5;
    }
    throw NumericalFailure("no stable step size found above 1e-2 / 2^60", 60);
}

std::string run_report_csv(const RunReport& report) {
    std::ostringstream out;
    out << "# schema: lorasb.run.v1\n";
    out << "step,loss,grad_norm,dl_pred,dl_real,subspace_ok,frozen_ok,orth_b,orth_a\n";
    for (const auto& r : report.steps) {
        out << r.step << ',' << format_double(r.loss) << ',' << format_double(r.grad_norm) << ','
            << format_double(r.dl_pred) << ',' << format_double(r.dl_real) << ','
            << r.subspace_ok << ',' << r.frozen_ok << ',' << format_double(r.orth_b) << ','
            << format_double(r.orth_a) << '\n';
    }
    return out.str();
}

} // namespace lorasb
