#include "triphase/calibration.hpp"
#include "triphase/design.hpp"
#include "triphase/domain.hpp"
#include "triphase/estimators.hpp"
#include "triphase/glm.hpp"
#include "triphase/mi.hpp"
#include "triphase/rng.hpp"
#include "triphase/sim.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace triphase;

SimConfig small_config() {
    SimConfig cfg;
    cfg.n1 = 3000;
    cfg.n2 = 600;
    cfg.n3 = 120;
    cfg.B = 5;
    cfg.n_sims = 1;
    return cfg;
}

void bench_generate(benchmark::State& state) {
    SimConfig cfg = small_config();
    cfg.n1 = static_cast<int>(state.range(0));
    cfg.n2 = cfg.n1 / 6;
    cfg.n3 = cfg.n1 / 25;
    for (auto _ : state) {
        Cohort c = generate_cohort(cfg, 7);
        benchmark::DoNotOptimize(c.subjects.size());
    }
}
BENCHMARK(bench_generate)->Arg(3000)->Arg(15000);

void bench_logistic_fit(benchmark::State& state) {
    const Eigen::Index n = state.range(0);
    SplitRng rng(42);
    DesignData dd;
    dd.family = Family::binomial;
    dd.link = Link::logit;
    dd.X.resize(n, 3);
    dd.y.resize(n);
    dd.offset_log = Eigen::VectorXd::Zero(n);
    dd.cluster.resize(n);
    dd.colnames = {"(intercept)", "x1", "x2"};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x1 = rng.normal(), x2 = rng.normal();
        dd.X(i, 0) = 1;
        dd.X(i, 1) = x1;
        dd.X(i, 2) = x2;
        const double p = 1.0 / (1.0 + std::exp(-(-2.0 + 0.5 * x1 + 0.5 * x2)));
        dd.y(i) = rng.bernoulli(p) ? 1 : 0;
        dd.cluster[i] = static_cast<int>(i / 18);
    }
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
    for (auto _ : state) {
        FitResult fit = fit_glm(dd, w);
        benchmark::DoNotOptimize(fit.beta.sum());
    }
}
BENCHMARK(bench_logistic_fit)->Arg(20000)->Arg(270000);

void bench_raking_newton(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    SplitRng rng(5);
    Eigen::VectorXd d(n);
    Eigen::MatrixXd aux(n, 4);
    std::vector<std::uint8_t> R(n, 0);
    for (int i = 0; i < n; ++i) {
        d(i) = 1.0 + 3.0 * rng.uniform();
        aux(i, 0) = 1.0;
        for (int j = 1; j < 4; ++j) aux(i, j) = rng.normal();
        R[i] = rng.bernoulli(0.3) ? 1 : 0;
    }
    Eigen::VectorXd totals = Eigen::VectorXd::Zero(4);
    for (int i = 0; i < n; ++i)
        if (R[i]) totals += d(i) * aux.row(i).transpose() * (1.0 + 0.05 * rng.normal());
    for (auto _ : state) {
        CalibratedWeights cw = calibrate(d, R, aux, totals, Distance::poisson_deviance);
        benchmark::DoNotOptimize(cw.w.sum());
    }
}
BENCHMARK(bench_raking_newton)->Arg(2000)->Arg(20000);

void bench_mi_pass(benchmark::State& state) {
    SimConfig cfg = small_config();
    Cohort obs = sample_phases(generate_cohort(cfg, 11), cfg, 12);
    const FlatTable flat = flatten(obs);
    const ThreePhaseDesign design = design_from_counts(flat);
    const ModelSpec analysis = ModelSpec::parse(Family::binomial, "y ~ x1 + x2");
    MiOptions mo;
    mo.B = 5;
    mo.mode = MiMode::three_phase;
    mo.seed = 3;
    mo.roles.x2_error_prone = false;
    for (auto _ : state) {
        MiArtifacts art = mi_pass(flat, analysis, mo, false, true, &design);
        benchmark::DoNotOptimize(art.report.beta.sum());
    }
}
BENCHMARK(bench_mi_pass);

} // namespace

BENCHMARK_MAIN();
