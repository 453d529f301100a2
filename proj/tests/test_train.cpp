#include <doctest.h>

#include <cmath>

#include "lorasb/error.hpp"
#include "lorasb/gradient.hpp"
#include "lorasb/init.hpp"
#include "lorasb/model.hpp"
#include "lorasb/oracles.hpp"
#include "lorasb/rng.hpp"
#include "lorasb/train.hpp"

using namespace lorasb;

namespace {

struct Fixture {
    TeacherStudentTask task;
    ModelStack model;
    std::vector<AdapterState> adapters;
};

Fixture make_fixture(InitKind kind, int m, int n, std::uint64_t seed, double s = 1.0) {
    Fixture f{make_teacher_student_task(m, n, 2, 2 * std::max(m, n), 0.0, seed), {}, {}};
    f.model = make_linear_model(f.task.w0);
    InitRecipe recipe;
    recipe.kind = kind;
    recipe.rank = 2;
    recipe.eta = 1.0;
    recipe.sample_budget = f.task.data.inputs.rows();
    recipe.seed = seed;
    Matrix delta(m, n);
    if (kind != InitKind::kaiming_svd && kind != InitKind::zero_b &&
        kind != InitKind::pissa_style) {
        delta = estimate_update(f.model, f.task.data, recipe).deltas[0];
    }
    const InitFactors factors = init_factors(recipe, delta, f.task.w0, s);
    f.adapters = {make_adapter(kind == InitKind::pissa_style ? AdapterMethod::lora_xs
                                                             : AdapterMethod::lora_sb,
                               f.task.w0, factors)};
    return f;
}

} // namespace

TEST_CASE("sgd_step on a worked example") {
    Matrix p = {{1.0, -2.0}};
    sgd_step(p, Matrix({{0.5, 0.5}}), 0.1);
    CHECK(p(0, 0) == doctest::Approx(0.95).epsilon(1e-15));
    CHECK(p(0, 1) == doctest::Approx(-2.05).epsilon(1e-15));
}

TEST_CASE("adamw_step matches a hand rolled reference") {
    const AdamWParams hp;  // defaults
    Matrix p = {{1.0}};
    AdamWState st;
    st.m = Matrix(1, 1);
    st.v = Matrix(1, 1);
    double rm = 0.0, rv = 0.0, rp = 1.0;
    for (int t = 1; t <= 5; ++t) {
        const double g = 0.5 / t;
        adamw_step(p, st, Matrix({{g}}), hp, 1e-2);
        rm = hp.beta1 * rm + (1.0 - hp.beta1) * g;
        rv = hp.beta2 * rv + (1.0 - hp.beta2) * g * g;
        const double mhat = rm / (1.0 - std::pow(hp.beta1, t));
        const double vhat = rv / (1.0 - std::pow(hp.beta2, t));
        rp -= 1e-2 * mhat / (std::sqrt(vhat) + hp.eps);
        CHECK(p(0, 0) == doctest::Approx(rp).epsilon(1e-12));
    }
    CHECK(st.t == 5);
}

TEST_CASE("adamw weight decay is decoupled from the moments") {
    AdamWParams hp;
    hp.weight_decay = 0.1;
    Matrix p = {{2.0}};
    AdamWState st;
    st.m = Matrix(1, 1);
    st.v = Matrix(1, 1);
    adamw_step(p, st, Matrix({{0.0}}), hp, 0.5);
    // zero gradient: only the decay acts, p -> p - eta * wd * p
    CHECK(p(0, 0) == doctest::Approx(2.0 - 0.5 * 0.1 * 2.0).epsilon(1e-15));
    CHECK(st.m(0, 0) == 0.0);
    CHECK(st.v(0, 0) == 0.0);
}

TEST_CASE("corrected sgd run descends and keeps every invariant") {
    Fixture f = make_fixture(InitKind::lora_sb, 24, 24, 301);
    TrainConfig cfg;
    cfg.eta = 1.0;
    cfg.steps = 100;
    cfg.pathway = Pathway::corrected;
    const Matrix b_before = f.adapters[0].b;
    const RunReport rep = train(f.model, f.adapters, cfg, f.task.data);

    CHECK(rep.steps.size() == 100);
    CHECK(rep.final_loss < 1e-6 * rep.initial_loss);
    CHECK(rep.final_update_norms.size() == 1);
    for (std::size_t i = 0; i + 1 < rep.steps.size(); ++i)
        CHECK(rep.steps[i + 1].loss <= rep.steps[i].loss);
    for (const auto& s : rep.steps) {
        CHECK(s.subspace_ok == 1);
        CHECK(s.frozen_ok == 1);
        CHECK(s.dl_pred <= 0.0);
        CHECK(s.orth_b >= 0.0);
        CHECK(s.orth_b < 1e-10);
        CHECK(s.orth_a < 1e-10);
    }
    CHECK(f.adapters[0].b.bit_equal(b_before));
    // dl_real of step i is the measured loss difference to step i+1
    CHECK(rep.steps[3].dl_real ==
          doctest::Approx(rep.steps[4].loss - rep.steps[3].loss).epsilon(1e-15));
}

TEST_CASE("corrected and raw coincide under orthonormal init with scale one") {
    Fixture fa = make_fixture(InitKind::lora_sb, 16, 16, 302);
    Fixture fb = make_fixture(InitKind::lora_sb, 16, 16, 302);
    TrainConfig cfg;
    cfg.eta = 0.5;
    cfg.steps = 20;
    cfg.pathway = Pathway::corrected;
    const RunReport corrected = train(fa.model, fa.adapters, cfg, fa.task.data);
    cfg.pathway = Pathway::raw_xs;
    const RunReport raw = train(fb.model, fb.adapters, cfg, fb.task.data);
    for (int i = 0; i < 20; ++i) {
        CHECK(std::fabs(corrected.steps[i].loss - raw.steps[i].loss) <=
              1e-12 * std::max(1.0, raw.steps[i].loss));
    }
}

TEST_CASE("training full_ft reaches the teacher exactly on a whitened task") {
    const TeacherStudentTask task = make_teacher_student_task(12, 12, 2, 48, 0.0, 303);
    ModelStack model = make_linear_model(task.w0);
    AdapterState st;
    st.method = AdapterMethod::full_ft;
    st.w0 = task.w0;
    st.delta = Matrix(12, 12);
    st.s = 1.0;
    std::vector<AdapterState> adapters = {st};
    TrainConfig cfg;
    cfg.eta = 1.0;
    cfg.steps = 200;
    const RunReport rep = train(model, adapters, cfg, task.data);
    CHECK(rep.final_loss < 1e-20);
    CHECK(frob_norm(effective_weight(adapters[0]) - task.w_target) < 1e-10);
}

TEST_CASE("train validates wiring and config") {
    Fixture f = make_fixture(InitKind::lora_sb, 8, 8, 304);
    TrainConfig cfg;
    cfg.steps = 0;
    CHECK_THROWS_AS(train(f.model, f.adapters, cfg, f.task.data), InvalidInputError);
    cfg.steps = 5;
    cfg.eta = 0.0;
    CHECK_THROWS_AS(train(f.model, f.adapters, cfg, f.task.data), InvalidInputError);
    cfg.eta = 0.1;
    cfg.log_every = 0;
    CHECK_THROWS_AS(train(f.model, f.adapters, cfg, f.task.data), InvalidInputError);
    cfg.log_every = 1;
    f.adapters[0].w0(0, 0) += 1.0;  // no longer the model's base weight
    CHECK_THROWS_AS(train(f.model, f.adapters, cfg, f.task.data), InvalidInputError);
}

TEST_CASE("minibatch shuffling is seeded and logged runs are byte stable") {
    Fixture f1 = make_fixture(InitKind::lora_sb, 12, 12, 305);
    Fixture f2 = make_fixture(InitKind::lora_sb, 12, 12, 305);
    Fixture f3 = make_fixture(InitKind::lora_sb, 12, 12, 305);
    TrainConfig cfg;
    cfg.eta = 0.05;
    cfg.steps = 30;
    cfg.batch_size = 4;
    cfg.seed = 7;
    const RunReport a = train(f1.model, f1.adapters, cfg, f1.task.data);
    const RunReport b = train(f2.model, f2.adapters, cfg, f2.task.data);
    CHECK(run_report_csv(a) == run_report_csv(b));
    cfg.seed = 8;
    const RunReport c = train(f3.model, f3.adapters, cfg, f3.task.data);
    CHECK(run_report_csv(a) != run_report_csv(c));
}

TEST_CASE("linear schedule anneals to a different endpoint") {
    Fixture f1 = make_fixture(InitKind::nonortho_sb, 12, 12, 306);
    Fixture f2 = make_fixture(InitKind::nonortho_sb, 12, 12, 306);
    TrainConfig cfg;
    cfg.eta = 0.5;
    cfg.steps = 40;
    cfg.pathway = Pathway::raw_xs;
    const RunReport constant = train(f1.model, f1.adapters, cfg, f1.task.data);
    cfg.schedule = LrSchedule::linear;
    const RunReport linear = train(f2.model, f2.adapters, cfg, f2.task.data);
    CHECK(constant.final_loss != linear.final_loss);
    CHECK(linear.final_loss < linear.initial_loss);
}

TEST_CASE("adamw training works on the core pathway") {
    Fixture f = make_fixture(InitKind::lora_sb, 16, 16, 307);
    TrainConfig cfg;
    cfg.optimizer = OptimizerKind::adamw;
    cfg.eta = 0.05;
    cfg.steps = 400;
    const RunReport rep = train(f.model, f.adapters, cfg, f.task.data);
    CHECK(rep.final_loss < 0.1 * rep.initial_loss);
    for (const auto& s : rep.steps) CHECK(s.frozen_ok == 1);
}

TEST_CASE("strict mode passes on a healthy run") {
    Fixture f = make_fixture(InitKind::lora_sb, 12, 12, 308);
    TrainConfig cfg;
    cfg.eta = 1.0;
    cfg.steps = 20;
    cfg.strict = true;
    CHECK_NOTHROW(train(f.model, f.adapters, cfg, f.task.data));
}

TEST_CASE("probe_stable_eta finds a non increasing step size") {
    Fixture f = make_fixture(InitKind::lora_sb, 12, 12, 309);
    TrainConfig cfg;
    const double eta = probe_stable_eta(f.model, f.adapters, cfg, f.task.data);
    CHECK(eta <= 1e-2);
    CHECK(eta > 0.0);
    // the probe must not have trained the real adapters
    TrainConfig run_cfg;
    run_cfg.eta = eta;
    run_cfg.steps = 20;
    const RunReport rep = train(f.model, f.adapters, run_cfg, f.task.data);
    for (std::size_t i = 0; i + 1 < rep.steps.size(); ++i)
        CHECK(rep.steps[i + 1].loss <= rep.steps[i].loss);
}

TEST_CASE("log_every thins the report but keeps the last step") {
    Fixture f = make_fixture(InitKind::lora_sb, 12, 12, 310);
    TrainConfig cfg;
    cfg.eta = 0.5;
    cfg.steps = 25;
    cfg.log_every = 10;
    const RunReport rep = train(f.model, f.adapters, cfg, f.task.data);
    CHECK(rep.steps.size() == 4);  // 0, 10, 20, 24
    CHECK(rep.steps.back().step == 24);
    const std::string csv = run_report_csv(rep);
    CHECK(csv.rfind("# schema: lorasb.run.v1", 0) == 0);
}
