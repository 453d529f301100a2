#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lorasb/adapter.hpp"
#include "lorasb/matrix.hpp"
#include "lorasb/model.hpp"

namespace lorasb {

enum class OptimizerKind { sgd, adamw };
enum class Pathway { raw_xs, corrected };
enum class LrSchedule { constant, linear };

const char* to_string(OptimizerKind k);
const char* to_string(Pathway p);
const char* to_string(LrSchedule s);
OptimizerKind optimizer_from_string(const std::string& s);
Pathway pathway_from_string(const std::string& s);
LrSchedule schedule_from_string(const std::string& s);

struct AdamWParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled, applied directly to the parameter
};

// One first/second moment pair per trained matrix. Moments accumulate the
// gradient that is actually applied (for lora_sb that is the corrected one).
struct AdamWState {
    Matrix m;
    Matrix v;
    long t = 0;
};

void sgd_step(Matrix& param, const Matrix& grad, double eta);
void adamw_step(Matrix& param, AdamWState& state, const Matrix& grad, const AdamWParams& hp,
                double eta);

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::sgd;
    AdamWParams adamw;
    Pathway pathway = Pathway::corrected;  // only consulted for lora_xs / lora_sb
    LrSchedule schedule = LrSchedule::constant;
    double eta = 1e-2;
    int steps = 100;
    int batch_size = 0;  // 0 means full batch
    std::uint64_t seed = 0;  // minibatch shuffling only
    bool strict = false;     // abort (InvariantViolation) on any per-step invariant failure
    double membership_tol = 1e-8;
    int log_every = 1;
};

// One row per logged step. loss is measured before the step; dl_real is the
// loss change the step produced (filled by the next measurement on the same
// batch slice). subspace_ok / frozen_ok are 1/0 flags; orth_b / orth_a are
// || B^T B - I ||_F and || A A^T - I ||_F, or -1 where factors do not apply.
struct StepRecord {
    int step = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    double dl_pred = 0.0;
    double dl_real = 0.0;
    int subspace_ok = 1;
    int frozen_ok = 1;
    double orth_b = -1.0;
    double orth_a = -1.0;
};

struct RunReport {
    std::vector<StepRecord> steps;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<double> final_update_norms;  // ||W_eff - W0||_F per layer
    double wall_clock_s = 0.0;               // excluded from determinism comparisons
    std::vector<std::string> notes;
};

// Fine-tune the adapters of every layer against the data. The model is the
// frozen architecture + base weights; adapters[i] wraps layer i and must
// have w0 bit-equal to the model's weight. Adapters are updated in place.
//
// Per step, for the core methods: g_r_xs = s B^T g A^T from the model's own
// backward pass; the applied gradient is g_r_xs (raw_xs) or the closed-form
// correction (corrected). Invariants monitored every logged step: update
// stays inside Col(B) x Row(A), frozen factors stay bit-identical, and the
// first-order predicted loss change is never positive. strict mode turns a
// violation into an InvariantViolation throw; otherwise it is flagged in
// the report.
RunReport train(const ModelStack& model, std::vector<AdapterState>& adapters,
                const TrainConfig& config, const Batch& data);

// Largest eta of the form 1e-2 / 2^k whose first 20 full-batch SGD steps
// are non-increasing, probed on scratch copies.
double probe_stable_eta(const ModelStack& model, const std::vector<AdapterState>& adapters,
                        const TrainConfig& config, const Batch& data);

// CSV with a schema comment line, then one row per logged step, 17
// significant digits. Byte-stable for identical runs.
std::string run_report_csv(const RunReport& report);

} // namespace lorasb
