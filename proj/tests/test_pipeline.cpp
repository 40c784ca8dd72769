#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "dmkde/pipeline.hpp"
#include "test_support.hpp"

using namespace dmkde;

namespace {

Eigen::VectorXd to_vec(std::initializer_list<double> vals) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(vals.size()));
    Eigen::Index i = 0;
    for (double x : vals) v[i++] = x;
    return v;
}

/// Oracle: AUC by exhaustive pair counting with half-weight ties.
double pair_count_auc(const std::vector<Label>& truth, const Eigen::VectorXd& densities) {
    double wins = 0.0;
    long pairs = 0;
    for (Eigen::Index i = 0; i < densities.size(); ++i) {
        if (truth[static_cast<std::size_t>(i)] != Label::outlier) continue;
        for (Eigen::Index j = 0; j < densities.size(); ++j) {
            if (truth[static_cast<std::size_t>(j)] != Label::normal) continue;
            ++pairs;
            if (densities[i] < densities[j]) wins += 1.0;
            else if (densities[i] == densities[j]) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

ExperimentConfig base_config() {
    ExperimentConfig cfg;
    cfg.split.seed = 5;
    cfg.embedding = EmbeddingKind::rff;
    cfg.dim_features = 4;
    cfg.gamma = 1.0 / 128.0;
    cfg.embedding_seed = 11;
    cfg.state = StateKind::mixed;
    cfg.backend = Backend::classical;
    cfg.repeats = 1;
    cfg.threads = 2;
    return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("select_threshold interpolates order statistics") {
    Eigen::VectorXd d(10);
    d << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10;

    const double t = select_threshold(d, 0.096);
    CHECK(t > 1.0);
    CHECK(t < 2.0);
    int strictly_below = 0;
    for (int i = 0; i < 10; ++i)
        if (d[i] < t) ++strictly_below;
    CHECK(strictly_below == 1);  // floor(0.96) or ceil(0.96)

    Eigen::VectorXd sym(5);
    sym << 3, 1, 2, 5, 4;
    CHECK(select_threshold(sym, 0.5) == 3.0);  // median

    Eigen::VectorXd ties = Eigen::VectorXd::Constant(8, 2.5);
    CHECK(select_threshold(ties, 0.3) == 2.5);
    CHECK(classify(ties, select_threshold(ties, 0.3)) ==
          std::vector<Label>(8, Label::normal));  // zero strictly below

    CHECK_THROWS_AS(select_threshold(Eigen::VectorXd(), 0.5), ParameterError);
    CHECK_THROWS_AS(select_threshold(d, 0.0), ParameterError);
    CHECK_THROWS_AS(select_threshold(d, 1.0), ParameterError);
}

TEST_CASE("classify uses a strict inequality") {
    const Eigen::VectorXd d = to_vec({0.1, 0.5, 0.5, 0.9});
    const std::vector<Label> got = classify(d, 0.5);
    CHECK(got == std::vector<Label>{Label::outlier, Label::normal, Label::normal, Label::normal});

    const std::vector<Label> all = classify(d, 2.0);
    CHECK(std::all_of(all.begin(), all.end(), [](Label l) { return l == Label::outlier; }));

    // matches a naive per-element loop
    for (Eigen::Index i = 0; i < d.size(); ++i)
        CHECK((got[static_cast<std::size_t>(i)] == Label::outlier) == (d[i] < 0.5));
}

TEST_CASE("metrics on hand-checked cases") {
    // truth (O,O,N,N,N,N), densities (0.1,0.4,0.3,0.5,0.6,0.7): AUC = 7/8
    const std::vector<Label> truth{Label::outlier, Label::outlier, Label::normal,
                                   Label::normal,  Label::normal,  Label::normal};
    const Eigen::VectorXd dens = to_vec({0.1, 0.4, 0.3, 0.5, 0.6, 0.7});
    const std::vector<Label> pred = classify(dens, select_threshold(dens, 0.3));
    const MetricSet ms = compute_metrics(pred, truth, dens);
    CHECK(ms.auc == doctest::Approx(0.875));

    // perfect separation
    const Eigen::VectorXd sep = to_vec({0.1, 0.2, 0.5, 0.6, 0.7, 0.8});
    CHECK(compute_metrics(classify(sep, 0.4), truth, sep).auc == 1.0);

    // predictions equal to truth give accuracy 1 and F1 1
    const MetricSet perfect = compute_metrics(truth, truth, sep);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.f1_outlier == 1.0);

    CHECK_THROWS_AS(compute_metrics(truth, std::vector<Label>(6, Label::normal), dens),
                    ParameterError);
}

TEST_CASE("rank-based AUC equals exhaustive pair counting with ties") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 5 + static_cast<int>(rng() % 45);
        std::vector<Label> truth;
        Eigen::VectorXd dens(n);
        int outliers = 0;
        for (int i = 0; i < n; ++i) {
            const bool out = rng() % 4 == 0;
            outliers += out;
            truth.push_back(out ? Label::outlier : Label::normal);
            dens[i] = static_cast<double>(rng() % 12) / 4.0;  // forces ties
        }
        if (outliers == 0 || outliers == n) {
            continue;
        }
        const std::vector<Label> pred = classify(dens, select_threshold(dens, 0.25));
        const MetricSet ms = compute_metrics(pred, truth, dens);
        CHECK(ms.auc == pair_count_auc(truth, dens));
    }
}

TEST_CASE("monotone invariance under positive density scaling") {
    std::mt19937_64 rng(12);
    const int n = 40;
    std::vector<Label> truth;
    Eigen::VectorXd dens(n);
    for (int i = 0; i < n; ++i) {
        truth.push_back(rng() % 5 == 0 ? Label::outlier : Label::normal);
        dens[i] = std::abs(testutil::random_vector(rng, 1)[0]) + 0.01;
    }
    if (std::count(truth.begin(), truth.end(), Label::outlier) == 0) truth[0] = Label::outlier;

    const double t = select_threshold(dens, 0.2);
    const std::vector<Label> pred = classify(dens, t);
    const MetricSet ms = compute_metrics(pred, truth, dens);

    for (const double c : {0.5, 2.0, 8.0}) {  // power-of-two scales are float-exact
        const Eigen::VectorXd scaled = c * dens;
        const double ts = select_threshold(scaled, 0.2);
        CHECK(ts == c * t);
        const std::vector<Label> preds = classify(scaled, ts);
        CHECK(preds == pred);
        const MetricSet mss = compute_metrics(preds, truth, scaled);
        CHECK(mss.accuracy == ms.accuracy);
        CHECK(mss.f1_outlier == ms.f1_outlier);
        CHECK(mss.auc == ms.auc);
    }
}

TEST_CASE("classical and exact-simulator backends produce identical reports") {
    const LabeledDataset data = make_anomaly_benchmark(400, 6, 0.12, 21);

    for (const StateKind state : {StateKind::pure, StateKind::mixed}) {
        ExperimentConfig cfg = base_config();
        cfg.state = state;

        ExperimentConfig sim = cfg;
        sim.backend = Backend::simulator_exact;

        const ExperimentResult a = run_experiment(data, cfg);
        const ExperimentResult b = run_experiment(data, sim);
        REQUIRE(a.runs.size() == 1);
        REQUIRE(b.runs.size() == 1);

        CHECK((a.runs[0].densities_val - b.runs[0].densities_val).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK((a.runs[0].densities_test - b.runs[0].densities_test).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK(a.runs[0].predictions == b.runs[0].predictions);
        CHECK(a.runs[0].metrics.auc == doctest::Approx(b.runs[0].metrics.auc).epsilon(1e-12));
    }
}

TEST_CASE("shot backend converges to the exact backend at 2^15 shots") {
    const LabeledDataset data = make_anomaly_benchmark(1831, 21, 0.096, 22);

    // single-run F1 is quantized at ~1/n_outliers per threshold flip, so the
    // convergence contract is on the reported means over repeats
    ExperimentConfig cfg = base_config();
    cfg.repeats = 10;
    cfg.backend = Backend::simulator_exact;
    const ExperimentResult exact = run_experiment(data, cfg);

    ExperimentConfig shots = cfg;
    shots.backend = Backend::simulator_shots;
    shots.shots = 1 << 15;
    shots.shot_seed = 77;
    const ExperimentResult sampled = run_experiment(data, shots);

    CHECK(std::abs(exact.mean.accuracy - sampled.mean.accuracy) <= 0.01);
    CHECK(std::abs(exact.mean.auc - sampled.mean.auc) <= 0.01);
    CHECK(std::abs(exact.mean.f1_outlier - sampled.mean.f1_outlier) <= 0.01);
    REQUIRE(sampled.runs[0].densities_test_exact.has_value());
    CHECK((*sampled.runs[0].densities_test_exact - exact.runs[0].densities_test).cwiseAbs().maxCoeff() <=
          1e-9);
}

TEST_CASE("run_experiment is deterministic and repeats vary the embedding") {
    const LabeledDataset data = make_anomaly_benchmark(300, 5, 0.15, 8);

    ExperimentConfig cfg = base_config();
    cfg.repeats = 3;
    const ExperimentResult a = run_experiment(data, cfg);
    const ExperimentResult b = run_experiment(data, cfg);
    REQUIRE(a.runs.size() == 3);
    CHECK(a.mean.auc == b.mean.auc);
    CHECK(a.stddev.auc == b.stddev.auc);
    // different RFF draws give different densities across repeats
    CHECK((a.runs[0].densities_test - a.runs[1].densities_test).norm() > 0.0);

    // threads must not affect results
    ExperimentConfig serial = cfg;
    serial.threads = 1;
    const ExperimentResult c = run_experiment(data, serial);
    for (int r = 0; r < 3; ++r)
        CHECK((a.runs[static_cast<std::size_t>(r)].densities_test -
               c.runs[static_cast<std::size_t>(r)].densities_test)
                  .norm() == 0.0);
}

TEST_CASE("run_experiment with AFF embedding runs end to end") {
    const LabeledDataset data = make_anomaly_benchmark(300, 5, 0.15, 9);

    ExperimentConfig cfg = base_config();
    cfg.embedding = EmbeddingKind::aff;
    cfg.gamma = 1.0 / 128.0;
    cfg.gamma_s = 1.0 / 64.0;
    cfg.aff_epochs = 10;
    const ExperimentResult r = run_experiment(data, cfg);
    REQUIRE(r.runs.size() == 1);
    CHECK(r.runs[0].metrics.auc >= 0.0);
    CHECK(r.runs[0].metrics.auc <= 1.0);
    CHECK(r.runs[0].densities_test.size() == static_cast<Eigen::Index>(r.runs[0].predictions.size()));
}

TEST_CASE("pipeline errors carry the stage name") {
    ExperimentConfig cfg = base_config();
    cfg.data_path = "/definitely/not/here.csv";
    try {
        run_experiment(cfg);
        FAIL("expected PipelineError");
    } catch (const PipelineError& e) {
        CHECK(std::string(e.what()).find("load") != std::string::npos);
    }

    const LabeledDataset data = make_anomaly_benchmark(300, 5, 0.15, 10);
    ExperimentConfig bad = base_config();
    bad.dim_features = 0;
    try {
        run_experiment(data, bad);
        FAIL("expected PipelineError");
    } catch (const PipelineError& e) {
        CHECK(std::string(e.what()).find("embed") != std::string::npos);
    }
}

TEST_CASE("density estimation experiment produces normalized curves") {
    DensityEstimateConfig cfg;
    cfg.n_train = 400;
    cfg.n_grid = 120;
    cfg.dim_features = 16;
    cfg.gamma = 1.0;
    cfg.data_seed = 3;
    cfg.embedding_seed = 4;

    const DensityCurves curves = run_density_estimation(cfg);
    REQUIRE(curves.grid.size() == 120);
    REQUIRE(curves.pure.size() == 120);
    REQUIRE(curves.mixed.size() == 120);

    // both estimator curves integrate to ~1 after grid normalization
    auto trapz = [&](const Eigen::VectorXd& f) {
        double acc = 0.0;
        for (Eigen::Index i = 1; i < f.size(); ++i)
            acc += 0.5 * (f[i] + f[i - 1]) * (curves.grid[i] - curves.grid[i - 1]);
        return acc;
    };
    CHECK(trapz(curves.pure) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(trapz(curves.mixed) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(curves.l1_pure == doctest::Approx(l1_distance(curves.grid, curves.pure, curves.true_pdf)));
    CHECK(curves.l1_mixed > 0.0);
    CHECK(curves.l1_mixed < 2.0);  // L1 between pdfs is bounded by 2
}

TEST_CASE("density estimation backends agree") {
    DensityEstimateConfig cfg;
    cfg.n_train = 200;
    cfg.n_grid = 60;
    cfg.dim_features = 8;
    cfg.gamma = 1.0;
    cfg.data_seed = 5;
    cfg.embedding_seed = 6;
    const DensityCurves classical = run_density_estimation(cfg);

    cfg.backend = Backend::simulator_exact;
    const DensityCurves simulated = run_density_estimation(cfg);
    CHECK((classical.pure - simulated.pure).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((classical.mixed - simulated.mixed).cwiseAbs().maxCoeff() <= 1e-9);

    cfg.backend = Backend::simulator_shots;
    cfg.shots = 1 << 14;
    cfg.shot_seed = 9;
    const DensityCurves shot = run_density_estimation(cfg);
    CHECK(l1_distance(shot.grid, shot.mixed, classical.mixed) <= 0.1);
}

TEST_CASE("metric aggregation over repeats") {
    std::vector<DetectionReport> runs(3);
    runs[0].metrics = {0.9, 0.5, 0.8};
    runs[1].metrics = {0.8, 0.6, 0.9};
    runs[2].metrics = {1.0, 0.7, 1.0};
    const MetricSet mean = metrics_mean(runs);
    const MetricSet sd = metrics_stddev(runs);
    CHECK(mean.accuracy == doctest::Approx(0.9));
    CHECK(mean.f1_outlier == doctest::Approx(0.6));
    CHECK(mean.auc == doctest::Approx(0.9));
    CHECK(sd.accuracy == doctest::Approx(0.1));
    CHECK(sd.f1_outlier == doctest::Approx(0.1));
    CHECK(sd.auc == doctest::Approx(0.1));
}

TEST_SUITE_END();
