#include "lorasb/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "lorasb/checks.hpp"
#include "lorasb/error.hpp"
#include "lorasb/layout.hpp"
#include "lorasb/rng.hpp"
#include "lorasb/version.hpp"

namespace fs = std::filesystem;

namespace lorasb {

namespace {

double median(std::vector<double> v) {
    if (v.empty()) throw InvalidInputError("median of empty set");
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

std::string group_digits(long long value) {
    std::string digits = std::to_string(value);
    std::string out;
    int run = 0;
    for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
        if (run == 3 && *it != '-') {
            out.push_back(',');
            run = 0;
        }
        out.push_back(*it);
        ++run;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

nlohmann::json task_to_json(const TaskSpec& t) {
    nlohmann::json j;
    j["m"] = t.m;
    j["n"] = t.n;
    j["r_true"] = t.r_true;
    j["num_samples"] = t.num_samples;
    j["noise_std"] = t.noise_std;
    j["activation"] = t.activation;
    j["loss"] = t.loss;
    j["whiten"] = t.whiten;
    return j;
}

nlohmann::json arm_to_json(const ArmSpec& a) {
    nlohmann::json j;
    j["name"] = a.name;
    j["method"] = a.method;
    j["pathway"] = a.pathway;
    j["init"] = a.init;
    j["rank"] = a.rank;
    j["eta_est"] = a.eta_est;
    j["optimizer_model"] = a.optimizer_model;
    j["sigma"] = a.sigma;
    j["sample_budget"] = a.sample_budget;
    j["s"] = a.s;
    j["alpha"] = a.alpha;
    return j;
}

nlohmann::json train_to_json(const TrainConfig& t) {
    nlohmann::json j;
    j["optimizer"] = to_string(t.optimizer);
    j["pathway"] = to_string(t.pathway);
    j["schedule"] = to_string(t.schedule);
    j["eta"] = t.eta;
    j["steps"] = t.steps;
    j["batch_size"] = t.batch_size;
    j["strict"] = t.strict;
    j["membership_tol"] = t.membership_tol;
    j["log_every"] = t.log_every;
    j["adamw"]["beta1"] = t.adamw.beta1;
    j["adamw"]["beta2"] = t.adamw.beta2;
    j["adamw"]["eps"] = t.adamw.eps;
    j["adamw"]["weight_decay"] = t.adamw.weight_decay;
    return j;
}

void task_from_json(const nlohmann::json& j, TaskSpec& t) {
    t.m = j.value("m", t.m);
    t.n = j.value("n", t.n);
    t.r_true = j.value("r_true", t.r_true);
    t.num_samples = j.value("num_samples", t.num_samples);
    t.noise_std = j.value("noise_std", t.noise_std);
    t.activation = j.value("activation", t.activation);
    t.loss = j.value("loss", t.loss);
    t.whiten = j.value("whiten", t.whiten);
}

void arm_from_json(const nlohmann::json& j, ArmSpec& a) {
    a.name = j.value("name", a.name);
    a.method = j.value("method", a.method);
    a.pathway = j.value("pathway", a.pathway);
    a.init = j.value("init", a.init);
    a.rank = j.value("rank", a.rank);
    a.eta_est = j.value("eta_est", a.eta_est);
    a.optimizer_model = j.value("optimizer_model", a.optimizer_model);
    a.sigma = j.value("sigma", a.sigma);
    a.sample_budget = j.value("sample_budget", a.sample_budget);
    a.s = j.value("s", a.s);
    a.alpha = j.value("alpha", a.alpha);
}

void train_from_json(const nlohmann::json& j, TrainConfig& t) {
    if (j.contains("optimizer")) t.optimizer = optimizer_from_string(j.at("optimizer"));
    if (j.contains("pathway")) t.pathway = pathway_from_string(j.at("pathway"));
    if (j.contains("schedule")) t.schedule = schedule_from_string(j.at("schedule"));
    t.eta = j.value("eta", t.eta);
    t.steps = j.value("steps", t.steps);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.strict = j.value("strict", t.strict);
    t.membership_tol = j.value("membership_tol", t.membership_tol);
    t.log_every = j.value("log_every", t.log_every);
    if (j.contains("adamw")) {
        const auto& a = j.at("adamw");
        t.adamw.beta1 = a.value("beta1", t.adamw.beta1);
        t.adamw.beta2 = a.value("beta2", t.adamw.beta2);
        t.adamw.eps = a.value("eps", t.adamw.eps);
        t.adamw.weight_decay = a.value("weight_decay", t.adamw.weight_decay);
    }
}

double arm_scale(const ArmSpec& arm) {
    return arm.alpha > 0.0 ? arm.alpha / arm.rank : arm.s;
}

TeacherStudentTask build_task(const TaskSpec& task, std::uint64_t seed) {
    TaskOptions opts;
    opts.act = activation_from_string(task.activation);
    opts.loss = loss_from_string(task.loss);
    opts.whiten = task.whiten;
    return make_teacher_student_task(task.m, task.n, task.r_true, task.num_samples,
                                     task.noise_std, seed, opts);
}

InitRecipe build_recipe(const ExperimentConfig& config, const ArmSpec& arm,
                        std::uint64_t run_seed) {
    InitRecipe recipe;
    recipe.kind = init_kind_from_string(arm.init);
    recipe.rank = arm.rank;
    recipe.eta = arm.eta_est;
    recipe.optimizer_model = optimizer_model_from_string(arm.optimizer_model);
    recipe.sample_budget = resolve_sample_budget(config, arm);
    recipe.seed = Rng::derive(run_seed, 2);
    recipe.sigma = arm.sigma;
    return recipe;
}

bool recipe_uses_data(InitKind kind) {
    return kind == InitKind::lora_sb || kind == InitKind::noisy_sb ||
           kind == InitKind::nonortho_sb;
}

} // namespace

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void ExperimentConfig::validate() const {
    if (task.m < 1 || task.n < 1) throw InvalidInputError("task dims must be positive");
    if (task.r_true < 0) throw InvalidInputError("r_true must be >= 0");
    if (task.num_samples < 1) throw InvalidInputError("num_samples must be >= 1");
    if (task.noise_std < 0.0) throw InvalidInputError("noise_std must be >= 0");
    activation_from_string(task.activation);
    loss_from_string(task.loss);
    if (arms.empty()) throw InvalidInputError("need at least one arm");
    if (seeds.empty()) throw InvalidInputError("need at least one seed");
    if (train.steps < 1) throw InvalidInputError("steps must be >= 1");
    if (!(budget_fraction > 0.0) || budget_fraction > 1.0)
        throw InvalidInputError("budget_fraction must be in (0, 1]");
    if (workers < 1) throw InvalidInputError("workers must be >= 1");
    std::vector<std::string> names;
    for (const auto& arm : arms) {
        if (arm.name.empty()) throw InvalidInputError("arm without a name");
        adapter_method_from_string(arm.method);
        pathway_from_string(arm.pathway);
        init_kind_from_string(arm.init);
        optimizer_model_from_string(arm.optimizer_model);
        if (arm.rank < 1) throw InvalidInputError("arm " + arm.name + ": rank must be >= 1");
        if (arm.sigma < 0.0) throw InvalidInputError("arm " + arm.name + ": sigma must be >= 0");
        if (arm.sample_budget < 0)
            throw InvalidInputError("arm " + arm.name + ": sample_budget must be >= 0");
        if (!(arm_scale(arm) > 0.0))
            throw InvalidInputError("arm " + arm.name + ": scale must be positive");
        names.push_back(arm.name);
    }
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end())
        throw InvalidInputError("arm names must be unique");
}

std::string ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["task"] = task_to_json(task);
    j["train"] = train_to_json(train);
    j["arms"] = nlohmann::json::array();
    for (const auto& arm : arms) j["arms"].push_back(arm_to_json(arm));
    j["seeds"] = seeds;
    j["out_dir"] = out_dir;
    j["budget_fraction"] = budget_fraction;
    j["workers"] = workers;
    return j.dump(2) + "\n";
}

std::string ExperimentConfig::config_hash() const {
    // Identify the experiment, not the execution: where results land and how
    // many threads ran cannot change them, so they stay out of the hash.
    ExperimentConfig normalized = *this;
    normalized.out_dir = "";
    normalized.workers = 1;
    return fnv1a_hex(normalized.to_json());
}

ExperimentConfig default_experiment_config() {
    ExperimentConfig c;
    c.train.optimizer = OptimizerKind::sgd;
    c.train.eta = 1.0;
    c.train.steps = 500;
    c.train.batch_size = 0;
    c.train.log_every = 1;

    ArmSpec sb;
    sb.name = "lora_sb";
    sb.method = "lora_sb";
    sb.pathway = "corrected";
    sb.init = "lora_sb";

    ArmSpec xs;
    xs.name = "lora_xs";
    xs.method = "lora_xs";
    xs.pathway = "raw_xs";
    xs.init = "pissa_style";

    c.arms = {sb, xs};
    c.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    return c;
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
    ExperimentConfig c = default_experiment_config();
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        if (j.contains("task")) task_from_json(j.at("task"), c.task);
        if (j.contains("train")) train_from_json(j.at("train"), c.train);
        if (j.contains("arms")) {
            c.arms.clear();
            for (const auto& ja : j.at("arms")) {
                ArmSpec arm;
                arm_from_json(ja, arm);
                c.arms.push_back(arm);
            }
        }
        if (j.contains("seeds")) {
            c.seeds.clear();
            for (const auto& s : j.at("seeds")) c.seeds.push_back(s.get<std::uint64_t>());
        }
        c.out_dir = j.value("out_dir", c.out_dir);
        c.budget_fraction = j.value("budget_fraction", c.budget_fraction);
        c.workers = j.value("workers", c.workers);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInputError(std::string("config parse: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig experiment_config_from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return experiment_config_from_json(buf.str());
}

long long resolve_sample_budget(const ExperimentConfig& config, const ArmSpec& arm) {
    const long long samples = config.task.num_samples;
    if (arm.sample_budget > 0) return std::min(arm.sample_budget, samples);
    const long long fraction = static_cast<long long>(
        std::ceil(config.budget_fraction * static_cast<double>(samples)));
    const long long batch_floor =
        config.train.batch_size > 0 ? config.train.batch_size : samples;
    return std::min(samples, std::max({fraction, batch_floor, 1LL}));
}

ArmRunResult run_one(const ExperimentConfig& config, const ArmSpec& arm, std::uint64_t seed) {
    TeacherStudentTask task = build_task(config.task, Rng::derive(seed, 1));
    const Activation act = activation_from_string(config.task.activation);
    const LossKind loss = loss_from_string(config.task.loss);
    ModelStack base = make_linear_model(task.w0, act, loss);

    const InitRecipe recipe = build_recipe(config, arm, seed);
    Matrix delta(config.task.m, config.task.n);
    if (recipe_uses_data(recipe.kind)) {
        delta = estimate_update(base, task.data, recipe).deltas[0];
    }
    const InitFactors f = init_factors(recipe, delta, task.w0, arm_scale(arm));
    std::vector<AdapterState> adapters = {
        make_adapter(adapter_method_from_string(arm.method), task.w0, f)};

    TrainConfig train_cfg = config.train;
    train_cfg.pathway = pathway_from_string(arm.pathway);
    train_cfg.seed = Rng::derive(seed, 3);

    ArmRunResult result;
    result.arm = arm.name;
    result.seed = seed;
    result.init_warnings = f.warnings;
    result.report = train(base, adapters, train_cfg, task.data);
    return result;
}

std::vector<ArmRunResult> run_all(const ExperimentConfig& config,
                                  const std::vector<ArmSpec>& arms) {
    struct Job {
        const ArmSpec* arm;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const auto& arm : arms)
        for (const auto seed : config.seeds) jobs.push_back({&arm, seed});

    std::vector<ArmRunResult> results(jobs.size());
    const int workers =
        std::max(1, std::min<int>(config.workers, static_cast<int>(jobs.size())));
    if (workers == 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i)
            results[i] = run_one(config, *jobs[i].arm, jobs[i].seed);
        return results;
    }

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto body = [&] {
        while (!failed.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            try {
                results[i] = run_one(config, *jobs[i].arm, jobs[i].seed);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
    return results;
}

std::string cmd_estimate(const ExperimentConfig& config) {
    config.validate();
    const std::uint64_t seed = config.seeds.front();
    std::ostringstream out;
    for (const auto& arm : config.arms) {
        TeacherStudentTask task = build_task(config.task, Rng::derive(seed, 1));
        ModelStack base = make_linear_model(task.w0, activation_from_string(config.task.activation),
                                            loss_from_string(config.task.loss));
        const InitRecipe recipe = build_recipe(config, arm, seed);
        const UpdateEstimate est = estimate_update(base, task.data, recipe);

        const fs::path dir = fs::path(config.out_dir) / "estimate" / arm.name;
        fs::create_directories(dir);
        nlohmann::json manifest;
        manifest["schema"] = "lorasb.estimate.v1";
        manifest["version"] = kVersion;
        manifest["config_hash"] = config.config_hash();
        manifest["arm"] = arm.name;
        manifest["seed"] = seed;
        manifest["samples_used"] = est.samples_used;
        manifest["num_samples"] = config.task.num_samples;
        manifest["optimizer_model"] = to_string(est.optimizer_model);
        manifest["eta"] = est.eta;
        manifest["modules"] = nlohmann::json::array();
        for (std::size_t i = 0; i < est.deltas.size(); ++i) {
            const std::string file = "module_" + std::to_string(i) + ".csv";
            write_csv_file(est.deltas[i], (dir / file).string());
            nlohmann::json jm;
            jm["file"] = file;
            jm["rows"] = est.deltas[i].rows();
            jm["cols"] = est.deltas[i].cols();
            jm["frob_norm"] = frob_norm(est.deltas[i]);
            manifest["modules"].push_back(jm);
        }
        write_text_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
        out << "estimate[" << arm.name << "]: " << est.samples_used << "/"
            << config.task.num_samples << " samples, " << to_string(est.optimizer_model)
            << " model -> " << dir.string() << "\n";
    }
    return out.str();
}

namespace {

std::string run_file_stem(const ArmRunResult& r) {
    return r.arm + "_seed" + std::to_string(r.seed);
}

nlohmann::json run_summary_json(const ExperimentConfig& config, const ArmSpec& arm,
                                const ArmRunResult& r) {
    nlohmann::json j;
    j["schema"] = "lorasb.runsummary.v1";
    j["version"] = kVersion;
    j["config_hash"] = config.config_hash();
    j["arm"] = arm.name;
    j["seed"] = r.seed;
    j["method"] = arm.method;
    j["init"] = arm.init;
    j["pathway"] = arm.pathway;
    j["steps"] = config.train.steps;
    j["initial_loss"] = r.report.initial_loss;
    j["final_loss"] = r.report.final_loss;
    j["final_update_norms"] = r.report.final_update_norms;
    j["wall_clock_s"] = r.report.wall_clock_s;
    nlohmann::json warnings = nlohmann::json::array();
    for (const auto& w : r.init_warnings) warnings.push_back(w);
    for (const auto& n : r.report.notes) warnings.push_back(n);
    j["warnings"] = warnings;
    return j;
}

const ArmSpec& find_arm(const std::vector<ArmSpec>& arms, const std::string& name) {
    for (const auto& a : arms)
        if (a.name == name) return a;
    throw InvalidInputError("unknown arm: " + name);
}

std::string ablation_csv(const std::vector<ArmSpec>& arms,
                         const std::vector<ArmRunResult>& results) {
    std::ostringstream out;
    out << "# schema: lorasb.ablation.v1\n";
    out << "arm,init,sigma,pathway,seed,final_loss\n";
    for (const auto& r : results) {
        const ArmSpec& arm = find_arm(arms, r.arm);
        out << arm.name << ',' << arm.init << ',' << format_double(arm.sigma) << ','
            << arm.pathway << ',' << r.seed << ',' << format_double(r.report.final_loss)
            << '\n';
    }
    return out.str();
}

std::string median_table(const std::vector<ArmSpec>& arms,
                         const std::vector<ArmRunResult>& results) {
    std::ostringstream out;
    for (const auto& arm : arms) {
        std::vector<double> finals;
        for (const auto& r : results)
            if (r.arm == arm.name) finals.push_back(r.report.final_loss);
        out << "  " << arm.name << ": median final loss " << format_double(median(finals))
            << "\n";
    }
    return out.str();
}

} // namespace

std::string cmd_train(const ExperimentConfig& config) {
    config.validate();
    const std::vector<ArmRunResult> results = run_all(config, config.arms);

    const fs::path dir = fs::path(config.out_dir) / "runs";
    fs::create_directories(dir);
    write_text_file((fs::path(config.out_dir) / "config.json").string(), config.to_json());
    for (const auto& r : results) {
        const ArmSpec& arm = find_arm(config.arms, r.arm);
        write_text_file((dir / (run_file_stem(r) + ".csv")).string(),
                        run_report_csv(r.report));
        write_text_file((dir / (run_file_stem(r) + ".json")).string(),
                        run_summary_json(config, arm, r).dump(2) + "\n");
    }

    std::ostringstream out;
    out << "wrote " << results.size() << " runs to " << dir.string() << "\n";
    out << median_table(config.arms, results);
    return out.str();
}

std::vector<ArmSpec> ablation_grid_arms() {
    std::vector<ArmSpec> arms;
    auto corrected = [](const std::string& name, const std::string& init) {
        ArmSpec a;
        a.name = name;
        a.method = init == "pissa_style" || init == "kaiming_svd" ? "lora_xs" : "lora_sb";
        a.pathway = "corrected";
        a.init = init;
        return a;
    };
    arms.push_back(corrected("lora_sb", "lora_sb"));
    const double sigmas[] = {0.0, 1e-4, 1e-3, 1e-2};
    const char* names[] = {"noisy_sigma0", "noisy_sigma1e-4", "noisy_sigma1e-3",
                           "noisy_sigma1e-2"};
    for (int i = 0; i < 4; ++i) {
        ArmSpec a = corrected(names[i], "noisy_sb");
        a.sigma = sigmas[i];
        arms.push_back(a);
    }
    arms.push_back(corrected("kaiming_svd", "kaiming_svd"));
    arms.push_back(corrected("nonortho_sb", "nonortho_sb"));
    arms.push_back(corrected("pissa_style", "pissa_style"));
    return arms;
}

std::vector<ArmSpec> ablation_cross_arms() {
    ArmSpec raw;
    raw.name = "nonortho_raw";
    raw.method = "lora_sb";
    raw.pathway = "raw_xs";
    raw.init = "nonortho_sb";
    ArmSpec corrected = raw;
    corrected.name = "nonortho_corrected";
    corrected.pathway = "corrected";
    return {raw, corrected};
}

std::string cmd_ablate(const ExperimentConfig& config) {
    config.validate();
    const std::vector<ArmSpec> grid = ablation_grid_arms();
    const std::vector<ArmSpec> cross = ablation_cross_arms();

    const std::vector<ArmRunResult> grid_results = run_all(config, grid);
    const std::vector<ArmRunResult> cross_results = run_all(config, cross);

    fs::create_directories(config.out_dir);
    write_text_file((fs::path(config.out_dir) / "ablation_grid.csv").string(),
                    ablation_csv(grid, grid_results));
    write_text_file((fs::path(config.out_dir) / "ablation_cross.csv").string(),
                    ablation_csv(cross, cross_results));

    nlohmann::json summary;
    summary["schema"] = "lorasb.ablation.v1";
    summary["version"] = kVersion;
    summary["config_hash"] = config.config_hash();
    for (const auto& arm : grid) {
        std::vector<double> finals;
        for (const auto& r : grid_results)
            if (r.arm == arm.name) finals.push_back(r.report.final_loss);
        summary["grid_median_final_loss"][arm.name] = median(finals);
    }
    for (const auto& arm : cross) {
        std::vector<double> finals;
        for (const auto& r : cross_results)
            if (r.arm == arm.name) finals.push_back(r.report.final_loss);
        summary["cross_median_final_loss"][arm.name] = median(finals);
    }
    write_text_file((fs::path(config.out_dir) / "ablation_summary.json").string(),
                    summary.dump(2) + "\n");

    std::ostringstream out;
    out << "ablation grid (" << grid_results.size() << " runs):\n"
        << median_table(grid, grid_results);
    out << "pathway cross (" << cross_results.size() << " runs):\n"
        << median_table(cross, cross_results);
    out << "wrote " << (fs::path(config.out_dir) / "ablation_grid.csv").string() << ", "
        << (fs::path(config.out_dir) / "ablation_cross.csv").string() << "\n";
    return out.str();
}

CheckOutcome cmd_check(const std::string& suite) {
    if (suite == "all") {
        nlohmann::json j;
        j["schema"] = "lorasb.checkset.v1";
        j["version"] = kVersion;
        j["suites"] = nlohmann::json::array();
        bool all = true;
        for (const auto& name : check_suite_names()) {
            const CheckReport report = run_check_suite(name);
            all = all && report.pass;
            j["suites"].push_back(nlohmann::json::parse(report.to_json()));
        }
        j["pass"] = all;
        return {j.dump(2) + "\n", all};
    }
    const CheckReport report = run_check_suite(suite);
    return {report.to_json(), report.pass};
}

std::string cmd_params(const std::string& layout_path, const std::string& method, int rank) {
    const ArchLayout layout = load_layout(layout_path);
    std::vector<AdapterMethod> methods;
    if (method == "all") {
        methods = {AdapterMethod::full_ft, AdapterMethod::lora, AdapterMethod::lora_xs,
                   AdapterMethod::lora_sb};
    } else {
        methods = {adapter_method_from_string(method)};
    }
    std::ostringstream out;
    out << layout.name << ", r=" << rank << "\n";
    for (const AdapterMethod m : methods) {
        const long long count = layout_param_count(layout, m, rank);
        out << "  " << to_string(m) << ": " << group_digits(count) << " ("
            << format_param_count(count, layout.display_unit) << ")\n";
    }
    return out.str();
}

} // namespace lorasb
