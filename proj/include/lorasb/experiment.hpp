#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lorasb/adapter.hpp"
#include "lorasb/init.hpp"
#include "lorasb/train.hpp"

namespace lorasb {

// Experiment harness: a single JSON config describes a teacher-student
// task, a list of adapter arms, and shared training settings; commands
// below fan (arm x seed) jobs over a worker pool and write CSV/JSON
// artifacts. Every default is materialized back into the emitted config so
// runs are self-describing, and everything is deterministic under
// (config, seeds).

struct TaskSpec {
    int m = 64;
    int n = 64;
    int r_true = 4;
    int num_samples = 128;
    double noise_std = 0.0;
    std::string activation = "identity";
    std::string loss = "mse";
    bool whiten = true;
};

// One competitor in a comparison. Arms share the task and the step budget;
// they differ in method, init recipe and gradient pathway.
struct ArmSpec {
    std::string name;
    std::string method = "lora_sb";
    std::string pathway = "corrected";
    std::string init = "lora_sb";
    int rank = 4;
    double eta_est = 1.0;  // step size of the modeled first update
    std::string optimizer_model = "sgd";
    double sigma = 0.0;           // noisy_sb only
    long long sample_budget = 0;  // 0: derive from budget_fraction
    double s = 1.0;
    double alpha = 0.0;  // when > 0, s = alpha / rank
};

struct ExperimentConfig {
    TaskSpec task;
    std::vector<ArmSpec> arms;
    TrainConfig train;
    std::vector<std::uint64_t> seeds;
    std::string out_dir = "out";
    double budget_fraction = 0.001;
    int workers = 1;

    void validate() const;  // throws InvalidInputError
    std::string to_json() const;
    std::string config_hash() const;  // FNV-1a over the materialized JSON
};

ExperimentConfig default_experiment_config();
ExperimentConfig experiment_config_from_json(const std::string& text);
ExperimentConfig experiment_config_from_file(const std::string& path);

// How many dataset rows an arm's estimate may touch: the explicit
// sample_budget if set, otherwise ceil(num_samples * budget_fraction)
// raised to the training batch size (full batch when batch_size = 0) and
// clamped to the dataset.
long long resolve_sample_budget(const ExperimentConfig& config, const ArmSpec& arm);

struct ArmRunResult {
    std::string arm;
    std::uint64_t seed = 0;
    RunReport report;
    std::vector<std::string> init_warnings;
};

// One arm on one seed: build task, estimate, init, train. Seeds for the
// three stages are derived as (seed, 1), (seed, 2), (seed, 3) so arms see
// identical data on the same seed.
ArmRunResult run_one(const ExperimentConfig& config, const ArmSpec& arm, std::uint64_t seed);

// All (arm x seed) jobs over a bounded worker pool, results in job order
// (arms outer, seeds inner). Worker count: config.workers.
std::vector<ArmRunResult> run_all(const ExperimentConfig& config,
                                  const std::vector<ArmSpec>& arms);

// Command bodies shared by the CLI and the acceptance gate. All write under
// config.out_dir and return what the CLI prints.
std::string cmd_estimate(const ExperimentConfig& config);
std::string cmd_train(const ExperimentConfig& config);
std::string cmd_ablate(const ExperimentConfig& config);

struct CheckOutcome {
    std::string json;
    bool pass = false;
};
// suite: one battery name or "all".
CheckOutcome cmd_check(const std::string& suite);

// method: one AdapterMethod name or "all".
std::string cmd_params(const std::string& layout_path, const std::string& method, int rank);

// The arm grids cmd_ablate sweeps, exposed for the acceptance gate.
std::vector<ArmSpec> ablation_grid_arms();
std::vector<ArmSpec> ablation_cross_arms();

std::string fnv1a_hex(const std::string& text);

} // namespace lorasb
