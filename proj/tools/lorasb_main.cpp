#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lorasb/error.hpp"
#include "lorasb/experiment.hpp"
#include "lorasb/version.hpp"

namespace {

// Exit codes: 0 ok, 1 property failure, 2 config/I-O error, 3 strict-mode
// invariant abort.
constexpr int kExitOk = 0;
constexpr int kExitPropertyFailure = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitInvariantAbort = 3;

struct CommonOpts {
    std::string config_path;
    std::string seed_list;
    double budget_fraction = -1.0;  // < 0: keep config value
    bool strict = false;
    std::string out_dir;
    int workers = 0;  // 0: keep config value
};

void add_common_options(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config JSON (defaults built in)");
    cmd->add_option("--seed-list", opts.seed_list, "comma-separated seeds, overrides config");
    cmd->add_option("--budget-fraction", opts.budget_fraction,
                    "fraction of samples the estimate may touch (default 0.001)");
    cmd->add_flag("--strict", opts.strict, "abort on any per-step invariant violation");
    cmd->add_option("--out", opts.out_dir, "output directory, overrides config");
    cmd->add_option("--workers", opts.workers, "worker threads (env LORASB_WORKERS overrides)");
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, ',')) {
        std::size_t used = 0;
        std::uint64_t value = 0;
        try {
            value = std::stoull(token, &used);
        } catch (const std::exception&) {
            throw lorasb::InvalidInputError("bad seed: '" + token + "'");
        }
        if (used != token.size()) throw lorasb::InvalidInputError("bad seed: '" + token + "'");
        seeds.push_back(value);
    }
    if (seeds.empty()) throw lorasb::InvalidInputError("empty seed list");
    return seeds;
}

lorasb::ExperimentConfig load_config(const CommonOpts& opts) {
    lorasb::ExperimentConfig config = opts.config_path.empty()
                                          ? lorasb::default_experiment_config()
                                          : lorasb::experiment_config_from_file(opts.config_path);
    if (!opts.seed_list.empty()) config.seeds = parse_seed_list(opts.seed_list);
    if (opts.budget_fraction >= 0.0) config.budget_fraction = opts.budget_fraction;
    if (opts.strict) config.train.strict = true;
    if (!opts.out_dir.empty()) config.out_dir = opts.out_dir;
    if (opts.workers > 0) config.workers = opts.workers;
    if (const char* env = std::getenv("LORASB_WORKERS"); env != nullptr && *env != '\0') {
        std::size_t used = 0;
        int value = 0;
        try {
            value = std::stoi(env, &used);
        } catch (const std::exception&) {
            throw lorasb::InvalidInputError(std::string("bad LORASB_WORKERS: '") + env + "'");
        }
        if (used != std::string(env).size() || value < 1)
            throw lorasb::InvalidInputError(std::string("bad LORASB_WORKERS: '") + env + "'");
        config.workers = value;
    }
    config.validate();
    return config;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "low-rank adapter lab: update-estimate initialization, corrected gradient "
        "training, property checks, parameter counting"};
    app.set_version_flag("--version", lorasb::kVersion);
    app.require_subcommand(1);

    CommonOpts estimate_opts;
    CLI::App* estimate = app.add_subcommand("estimate", "dump the estimated first update");
    add_common_options(estimate, estimate_opts);

    CommonOpts train_opts;
    CLI::App* train = app.add_subcommand("train", "run every (arm, seed) and write reports");
    add_common_options(train, train_opts);

    CommonOpts ablate_opts;
    CLI::App* ablate =
        app.add_subcommand("ablate", "initialization grid + pathway cross on the config task");
    add_common_options(ablate, ablate_opts);

    std::string suite = "all";
    std::string check_out;
    CLI::App* check = app.add_subcommand("check", "seeded property batteries");
    check->add_option("--suite", suite,
                      "all, lemma1, lemma2, thm1, thm2, thm3, thm4, eckart_young, gradcheck");
    check->add_option("--out", check_out, "also write the JSON report under this directory");

    std::string layout_path;
    std::string method = "all";
    int rank = 0;
    CLI::App* params = app.add_subcommand("params", "trainable parameter counts for a layout");
    params->add_option("layout", layout_path, "architecture layout JSON")->required();
    params->add_option("method", method, "full_ft, lora, lora_xs, lora_sb or all");
    params->add_option("-r,--rank", rank, "adapter rank")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (estimate->parsed()) {
            std::cout << lorasb::cmd_estimate(load_config(estimate_opts));
        } else if (train->parsed()) {
            std::cout << lorasb::cmd_train(load_config(train_opts));
        } else if (ablate->parsed()) {
            std::cout << lorasb::cmd_ablate(load_config(ablate_opts));
        } else if (check->parsed()) {
            const lorasb::CheckOutcome outcome = lorasb::cmd_check(suite);
            std::cout << outcome.json;
            if (!check_out.empty()) {
                std::filesystem::create_directories(check_out);
                const std::string path =
                    (std::filesystem::path(check_out) / ("check_" + suite + ".json")).string();
                std::ofstream out(path, std::ios::binary);
                if (!out) throw lorasb::IoError("cannot open for writing: " + path);
                out << outcome.json;
            }
            return outcome.pass ? kExitOk : kExitPropertyFailure;
        } else if (params->parsed()) {
            std::cout << lorasb::cmd_params(layout_path, method, rank);
        }
    } catch (const lorasb::InvariantViolation& e) {
        std::cerr << "invariant violation: " << e.what() << " (step " << e.step() << ")\n";
        return kExitInvariantAbort;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfigError;
    }
    return kExitOk;
}
