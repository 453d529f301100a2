// Acceptance gate: twelve criteria, one PASS/FAIL line each, exit 0 only
// when every line passes. Each criterion is self-contained and seeded, so a
// failure line carries enough context to replay it.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "lorasb/adapter.hpp"
#include "lorasb/checks.hpp"
#include "lorasb/error.hpp"
#include "lorasb/experiment.hpp"
#include "lorasb/gradient.hpp"
#include "lorasb/init.hpp"
#include "lorasb/layout.hpp"
#include "lorasb/matrix.hpp"
#include "lorasb/model.hpp"
#include "lorasb/oracles.hpp"
#include "lorasb/rng.hpp"
#include "lorasb/svd.hpp"
#include "lorasb/train.hpp"

#ifndef LORASB_LAYOUT_DIR
#define LORASB_LAYOUT_DIR "layouts"
#endif

using namespace lorasb;

namespace {

struct CriterionResult {
    int id = 0;
    bool pass = false;
    std::string text;
    double seconds = 0.0;
};

std::vector<CriterionResult> g_results;

class Timed {
public:
    Timed() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void record(int id, bool pass, const std::string& text, double seconds) {
    g_results.push_back({id, pass, text, seconds});
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// Step flags from every training run below feed criterion 7.
long long g_steps_seen = 0;
long long g_steps_bad = 0;

void harvest_flags(const RunReport& report) {
    for (const auto& s : report.steps) {
        ++g_steps_seen;
        if (!(s.subspace_ok == 1 && s.frozen_ok == 1)) ++g_steps_bad;
    }
}

std::string layout_file(const char* name) {
    return std::string(LORASB_LAYOUT_DIR) + "/" + name + ".json";
}

// ---- criterion 1: parameter table ----

void criterion_params() {
    Timed timer;
    struct Cell {
        const char* layout;
        AdapterMethod method;
        int rank;
        long long count;
        const char* formatted;
    };
    const std::vector<Cell> cells = {
        {"mistral7b", AdapterMethod::lora_xs, 32, 229376, "0.23 M"},
        {"mistral7b", AdapterMethod::lora_xs, 64, 917504, "0.92 M"},
        {"mistral7b", AdapterMethod::lora_xs, 96, 2064384, "2.06 M"},
        {"mistral7b", AdapterMethod::lora, 32, 83886080, "83.89 M"},
        {"gemma2-9b", AdapterMethod::lora_xs, 32, 301056, "0.30 M"},
        {"gemma2-9b", AdapterMethod::lora_xs, 64, 1204224, "1.20 M"},
        {"gemma2-9b", AdapterMethod::lora_xs, 96, 2709504, "2.71 M"},
        {"gemma2-9b", AdapterMethod::lora, 32, 108036096, "108.04 M"},
        {"llama3.2-3b", AdapterMethod::lora_xs, 32, 200704, "0.20 M"},
        {"llama3.2-3b", AdapterMethod::lora_xs, 64, 802816, "0.80 M"},
        {"llama3.2-3b", AdapterMethod::lora_xs, 96, 1806336, "1.81 M"},
        {"llama3.2-3b", AdapterMethod::lora, 32, 48627712, "48.63 M"},
        {"roberta-large", AdapterMethod::lora_sb, 8, 6144, "6.14 K"},
        {"roberta-large", AdapterMethod::lora_sb, 16, 24576, "24.58 K"},
        {"roberta-large", AdapterMethod::lora_sb, 24, 55296, "55.30 K"},
        {"roberta-large", AdapterMethod::lora, 8, 2162688, "2162.69 K"},
    };
    int exact = 0;
    int formatted = 0;
    std::string first_fail;
    for (const auto& cell : cells) {
        const ArchLayout layout = load_layout(layout_file(cell.layout));
        const long long count = layout_param_count(layout, cell.method, cell.rank);
        const std::string text = format_param_count(count, layout.display_unit);
        if (count == cell.count) ++exact;
        if (text == cell.formatted) ++formatted;
        if ((count != cell.count || text != cell.formatted) && first_fail.empty()) {
            first_fail = std::string(cell.layout) + "/" + to_string(cell.method) + "/r" +
                         std::to_string(cell.rank) + " got " + std::to_string(count) + " '" +
                         text + "'";
        }
    }
    const bool pass = exact == 16 && formatted == 16;
    std::string note = "parameter table: " + std::to_string(exact) + "/16 integer cells exact, " +
                       std::to_string(formatted) + "/16 renderings stable";
    note += "; renderings round half-away-from-zero in the last printed digit";
    if (!first_fail.empty()) note += "; first mismatch: " + first_fail;
    record(1, pass, note, timer.seconds());
}

// ---- criteria driven by the check batteries ----

std::string suite_summary(const CheckReport& report) {
    double worst_ratio = 0.0;
    for (const auto& item : report.items) {
        if (item.bound > 0.0) worst_ratio = std::max(worst_ratio, item.measured / item.bound);
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "worst margin %.2e of bound", worst_ratio);
    std::string text = buf;
    for (const auto& item : report.items) {
        if (!item.pass) {
            text += "; FAILED '" + item.name + "' measured " + format_double(item.measured) +
                    " vs " + format_double(item.bound);
            if (!item.detail.empty()) text += " at " + item.detail;
        }
    }
    return text;
}

void criterion_suite(int id, const char* label, const std::vector<std::string>& suites) {
    Timed timer;
    bool pass = true;
    std::string note = label;
    for (const auto& suite : suites) {
        const CheckReport report = run_check_suite(suite);
        pass = pass && report.pass;
        note += std::string(": ") + suite + " " + (report.pass ? "ok" : "FAILED") + " (" +
                suite_summary(report) + ")";
    }
    record(id, pass, note, timer.seconds());
}

// ---- criterion 8: corrected == raw trajectories under the canonical init ----

void criterion_pathway_equivalence() {
    Timed timer;
    ExperimentConfig config = default_experiment_config();
    config.train.steps = 100;
    config.seeds = {1, 2, 3};

    ArmSpec corrected = config.arms[0];  // lora_sb / corrected
    ArmSpec raw = corrected;
    raw.name = "lora_sb_raw";
    raw.pathway = "raw_xs";

    double worst = 0.0;
    bool pass = true;
    for (const auto seed : config.seeds) {
        const ArmRunResult a = run_one(config, corrected, seed);
        const ArmRunResult b = run_one(config, raw, seed);
        harvest_flags(a.report);
        harvest_flags(b.report);
        for (std::size_t i = 0; i < a.report.steps.size(); ++i) {
            const double la = a.report.steps[i].loss;
            const double lb = b.report.steps[i].loss;
            worst = std::max(worst, std::fabs(la - lb) / std::max(std::fabs(lb), 1e-300));
        }
    }
    pass = worst < 1e-10;
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "corrected vs raw under orthonormal init, s=1: max relative loss deviation "
                  "%.2e over 100 steps x 3 seeds (bound 1e-10)",
                  worst);
    record(8, pass, buf, timer.seconds());
}

// ---- criteria 9-11: comparative runs on the default task ----

struct ArmCurves {
    std::vector<std::vector<double>> losses;  // [seed][step]
    std::vector<double> finals;
};

std::vector<ArmCurves> run_arms(const ExperimentConfig& config,
                                const std::vector<ArmSpec>& arms) {
    const std::vector<ArmRunResult> results = run_all(config, arms);
    std::vector<ArmCurves> curves(arms.size());
    const std::size_t seeds = config.seeds.size();
    for (std::size_t ai = 0; ai < arms.size(); ++ai) {
        for (std::size_t si = 0; si < seeds; ++si) {
            const ArmRunResult& r = results[ai * seeds + si];
            harvest_flags(r.report);
            std::vector<double> losses;
            for (const auto& s : r.report.steps) losses.push_back(s.loss);
            curves[ai].losses.push_back(losses);
            curves[ai].finals.push_back(r.report.final_loss);
        }
    }
    return curves;
}

void criterion_default_task_ordering(const ArmCurves& sb, const ArmCurves& xs, double seconds) {
    const double sb_median = median(sb.finals);
    const double xs_median = median(xs.finals);
    int seeds_with_ordering = 0;
    for (std::size_t si = 0; si < sb.losses.size(); ++si) {
        std::size_t below = 0;
        for (std::size_t i = 0; i < sb.losses[si].size(); ++i) {
            if (sb.losses[si][i] < xs.losses[si][i]) ++below;
        }
        if (below * 10 >= sb.losses[si].size() * 8) ++seeds_with_ordering;
    }
    const bool pass = sb_median < xs_median && seeds_with_ordering >= 8;
    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "default-task ordering: median final loss %.3e (lora_sb) vs %.3e (lora_xs), "
                  "curve below at >=80%% of steps for %d/10 seeds (need >=8)",
                  sb_median, xs_median, seeds_with_ordering);
    record(9, pass, buf, seconds);
}

void criterion_noise_ablation(const ExperimentConfig& config, const std::vector<ArmSpec>& arms,
                      const std::vector<ArmCurves>& curves, double seconds) {
    auto arm_index = [&](const std::string& name) {
        for (std::size_t i = 0; i < arms.size(); ++i)
            if (arms[i].name == name) return i;
        throw InvalidInputError("missing arm " + name);
    };
    const std::vector<std::string> sigma_arms = {"noisy_sigma0", "noisy_sigma1e-4",
                                                 "noisy_sigma1e-3", "noisy_sigma1e-2"};
    int monotone_seeds = 0;
    const std::size_t seeds = config.seeds.size();
    for (std::size_t si = 0; si < seeds; ++si) {
        bool monotone = true;
        for (std::size_t k = 0; k + 1 < sigma_arms.size(); ++k) {
            const double lo = curves[arm_index(sigma_arms[k])].finals[si];
            const double hi = curves[arm_index(sigma_arms[k + 1])].finals[si];
            if (!(lo <= hi)) monotone = false;
        }
        if (monotone) ++monotone_seeds;
    }

    // kaiming against every other data-estimated SVD init; the W0-based
    // pissa_style arm answers a different question and stays out of this set.
    const std::vector<std::string> svd_set = {"lora_sb",        "noisy_sigma0",
                                              "noisy_sigma1e-4", "noisy_sigma1e-3",
                                              "noisy_sigma1e-2", "nonortho_sb",
                                              "kaiming_svd"};
    const double kaiming = median(curves[arm_index("kaiming_svd")].finals);
    bool kaiming_worst = true;
    for (const auto& name : svd_set) {
        if (median(curves[arm_index(name)].finals) > kaiming) kaiming_worst = false;
    }

    const bool pass = monotone_seeds >= 8 && kaiming_worst;
    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "noise ablation: final loss non-decreasing in sigma for %d/10 seeds (need "
                  ">=8); kaiming median %.3e is %s among update-SVD inits",
                  monotone_seeds, kaiming, kaiming_worst ? "worst-or-tied" : "NOT the worst");
    record(10, pass, buf, seconds);
}

void criterion_pathway_cross(const ExperimentConfig& config, double* out_seconds) {
    Timed timer;
    const std::vector<ArmSpec> cross = ablation_cross_arms();
    const std::vector<ArmCurves> curves = run_arms(config, cross);
    const double raw = median(curves[0].finals);
    const double corrected = median(curves[1].finals);
    const bool pass = corrected < raw;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "non-orthonormal factors: median final loss %.3e corrected vs %.3e raw "
                  "(corrected must win)",
                  corrected, raw);
    *out_seconds = timer.seconds();
    record(11, pass, buf, *out_seconds);
}

// ---- criterion 12: byte determinism of every artifact class ----

void criterion_determinism() {
    Timed timer;
    ExperimentConfig config = default_experiment_config();
    config.seeds = {1};
    config.train.steps = 120;

    const ArmRunResult r1 = run_one(config, config.arms[0], 1);
    const ArmRunResult r2 = run_one(config, config.arms[0], 1);
    const bool runs_equal = run_report_csv(r1.report) == run_report_csv(r2.report);

    const TeacherStudentTask t1 = make_teacher_student_task(64, 64, 4, 128, 0.0, Rng::derive(1, 1));
    const TeacherStudentTask t2 = make_teacher_student_task(64, 64, 4, 128, 0.0, Rng::derive(1, 1));
    InitRecipe recipe;
    recipe.rank = 4;
    recipe.sample_budget = 128;
    recipe.seed = Rng::derive(1, 2);
    const ModelStack m1 = make_linear_model(t1.w0);
    const ModelStack m2 = make_linear_model(t2.w0);
    const bool estimates_equal =
        to_csv(estimate_update(m1, t1.data, recipe).deltas[0]) ==
        to_csv(estimate_update(m2, t2.data, recipe).deltas[0]);

    const bool checks_equal =
        run_check_suite("thm3").to_json() == run_check_suite("thm3").to_json();

    const bool pass = runs_equal && estimates_equal && checks_equal;
    std::string note = "byte reproducibility: run csv ";
    note += runs_equal ? "ok" : "DIFFERS";
    note += ", estimate dump ";
    note += estimates_equal ? "ok" : "DIFFERS";
    note += ", check report ";
    note += checks_equal ? "ok" : "DIFFERS";
    harvest_flags(r1.report);
    harvest_flags(r2.report);
    record(12, pass, note, timer.seconds());
}

} // namespace

int main() {
    try {
        criterion_params();
        criterion_suite(2, "closed-form correction optimality", {"thm1"});
        criterion_suite(3, "descent direction", {"thm2"});
        criterion_suite(4, "scale invariance", {"thm3"});
        criterion_suite(5, "core chain rule vs finite differences", {"lemma2"});
        criterion_suite(6, "initialization optimality", {"eckart_young", "thm4"});

        // Comparative runs next; their per-step flags also feed criterion 7.
        criterion_pathway_equivalence();

        ExperimentConfig config = default_experiment_config();
        {
            Timed timer;
            const std::vector<ArmCurves> pair = run_arms(config, config.arms);
            criterion_default_task_ordering(pair[0], pair[1], timer.seconds());
        }
        {
            Timed timer;
            const std::vector<ArmSpec> grid = ablation_grid_arms();
            const std::vector<ArmCurves> curves = run_arms(config, grid);
            criterion_noise_ablation(config, grid, curves, timer.seconds());
        }
        {
            double seconds = 0.0;
            criterion_pathway_cross(config, &seconds);
        }
        criterion_determinism();

        // Criterion 7 last: the run-scale half aggregates every run above.
        {
            Timed timer;
            const CheckReport lemma1 = run_check_suite("lemma1");
            const bool pass = lemma1.pass && g_steps_bad == 0 && g_steps_seen > 0;
            char buf[192];
            std::snprintf(buf, sizeof(buf),
                          "subspace confinement: lemma1 battery %s; %lld/%lld logged steps "
                          "across all acceptance runs kept membership and frozen factors",
                          lemma1.pass ? "ok" : "FAILED", g_steps_seen - g_steps_bad,
                          g_steps_seen);
            record(7, pass, buf, timer.seconds());
        }
    } catch (const std::exception& e) {
        std::printf("[--] FAIL unhandled exception: %s\n", e.what());
        return 1;
    }

    std::sort(g_results.begin(), g_results.end(),
              [](const CriterionResult& a, const CriterionResult& b) { return a.id < b.id; });
    bool all = true;
    for (const auto& r : g_results) {
        all = all && r.pass;
        std::printf("[%2d] %s %s (%.1f s)\n", r.id, r.pass ? "PASS" : "FAIL", r.text.c_str(),
                    r.seconds);
    }
    std::printf("%s\n", all ? "ACCEPTANCE: all 12 criteria passed"
                            : "ACCEPTANCE: at least one criterion failed");
    return all ? 0 : 1;
}
