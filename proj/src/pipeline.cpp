#include "dmkde/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <mutex>
#include <numeric>
#include <thread>

#include "dmkde/qsim.hpp"
#include "seed_util.hpp"

namespace dmkde {

namespace {

/// Static-chunk parallel map; each index writes only its own slot, so results
/// do not depend on the thread count. The first worker exception is rethrown
/// on the calling thread after the join.
void parallel_for(Eigen::Index count, int threads, const std::function<void(Eigen::Index)>& body) {
    int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
    workers = static_cast<int>(std::min<Eigen::Index>(workers, std::max<Eigen::Index>(1, count)));
    if (workers == 1 || count < 32) {
        for (Eigen::Index i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    std::mutex error_mutex;
    std::exception_ptr first_error;
    const Eigen::Index chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const Eigen::Index lo = w * chunk;
        const Eigen::Index hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body, &error_mutex, &first_error] {
            try {
                for (Eigen::Index i = lo; i < hi; ++i) body(i);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

template <typename F>
auto at_stage(const char* stage, F&& f) {
    try {
        return f();
    } catch (const PipelineError&) {
        throw;
    } catch (const std::exception& e) {
        throw PipelineError(std::string("stage ") + stage + ": " + e.what());
    }
}

struct DensityModel {
    StateKind kind;
    PureModel pure;
    MixedModel mixed;
};

DensityModel build_model(StateKind kind, const std::vector<QuantumFeature>& features) {
    DensityModel model;
    model.kind = kind;
    if (kind == StateKind::pure)
        model.pure = train_pure(features);
    else
        model.mixed = train_mixed(features);
    return model;
}

struct DensityBatch {
    Eigen::VectorXd values;
    Eigen::VectorXd exact;  // filled for the shot backend
};

/// Densities for one partition. The pure estimator is |<phi|psi>|, i.e. the
/// square root of the pure circuit's P(|0>), so every backend reports the
/// same quantity.
DensityBatch estimate_densities(const DensityModel& model,
                                const std::vector<QuantumFeature>& features, Backend backend,
                                std::int64_t shots, std::uint64_t shot_seed, int threads,
                                std::uint64_t partition_tag) {
    const auto n = static_cast<Eigen::Index>(features.size());
    DensityBatch batch;
    batch.values.resize(n);
    if (backend == Backend::simulator_shots) batch.exact.resize(n);

    parallel_for(n, threads, [&](Eigen::Index i) {
        const QuantumFeature& psi = features[static_cast<std::size_t>(i)];
        switch (backend) {
            case Backend::classical:
                batch.values[i] = model.kind == StateKind::pure
                                      ? estimate_pure(model.pure, psi)
                                      : estimate_mixed(model.mixed, psi);
                break;
            case Backend::simulator_exact: {
                const CircuitOutcome out = model.kind == StateKind::pure
                                               ? run_pure_circuit(model.pure, psi, 0, 0)
                                               : run_mixed_circuit(model.mixed, psi, 0, 0);
                batch.values[i] = model.kind == StateKind::pure ? std::sqrt(out.exact_prob)
                                                                : out.exact_prob;
                break;
            }
            case Backend::simulator_shots: {
                const std::uint64_t seed =
                    detail::mix_seed(shot_seed, partition_tag * 0x100000 + static_cast<std::uint64_t>(i));
                const CircuitOutcome out = model.kind == StateKind::pure
                                               ? run_pure_circuit(model.pure, psi, shots, seed)
                                               : run_mixed_circuit(model.mixed, psi, shots, seed);
                const double estimate = *out.shot_estimate;
                batch.values[i] =
                    model.kind == StateKind::pure ? std::sqrt(estimate) : estimate;
                batch.exact[i] = model.kind == StateKind::pure ? std::sqrt(out.exact_prob)
                                                               : out.exact_prob;
                break;
            }
        }
    });
    return batch;
}

FourierParams fit_embedding(const ExperimentConfig& config,
                            const std::vector<Eigen::VectorXd>& train_samples,
                            std::uint64_t seed) {
    if (!config.embedding_params_path.empty())
        return load_fourier_params(config.embedding_params_path);
    if (config.embedding == EmbeddingKind::rff) {
        const Eigen::Index dim = train_samples.front().size();
        return sample_rff(dim, config.dim_features, config.gamma, seed);
    }
    AffTrainConfig aff;
    aff.dim_features = config.dim_features;
    aff.gamma = config.gamma;
    aff.gamma_s = config.gamma_s;
    aff.epochs = config.aff_epochs;
    aff.learning_rate = config.aff_learning_rate;
    aff.batch_size = config.aff_batch_size;
    aff.seed = seed;
    return train_aff(train_samples, aff).params;
}

}  // namespace

std::string to_string(EmbeddingKind k) { return k == EmbeddingKind::rff ? "rff" : "aff"; }
std::string to_string(StateKind k) { return k == StateKind::pure ? "pure" : "mixed"; }
std::string to_string(Backend k) {
    switch (k) {
        case Backend::classical: return "classical";
        case Backend::simulator_exact: return "simulator-exact";
        default: return "simulator-shots";
    }
}

EmbeddingKind embedding_from_string(const std::string& s) {
    if (s == "rff") return EmbeddingKind::rff;
    if (s == "aff") return EmbeddingKind::aff;
    throw ParameterError("unknown embedding '" + s + "' (want rff|aff)");
}

StateKind state_from_string(const std::string& s) {
    if (s == "pure") return StateKind::pure;
    if (s == "mixed") return StateKind::mixed;
    throw ParameterError("unknown state '" + s + "' (want pure|mixed)");
}

Backend backend_from_string(const std::string& s) {
    if (s == "classical") return Backend::classical;
    if (s == "simulator-exact") return Backend::simulator_exact;
    if (s == "simulator-shots") return Backend::simulator_shots;
    throw ParameterError("unknown backend '" + s +
                         "' (want classical|simulator-exact|simulator-shots)");
}

double select_threshold(const Eigen::VectorXd& val_densities, double outlier_rate) {
    if (val_densities.size() == 0) throw ParameterError("select_threshold: empty densities");
    if (!(outlier_rate > 0.0) || !(outlier_rate < 1.0))
        throw ParameterError("select_threshold: rate must lie in (0,1)");

    std::vector<double> sorted(val_densities.data(), val_densities.data() + val_densities.size());
    std::sort(sorted.begin(), sorted.end());
    const auto n = sorted.size();
    if (n == 1) return sorted[0];

    // linear interpolation between order statistics (type-7 quantile)
    const double h = outlier_rate * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double frac = h - std::floor(h);
    if (lo + 1 >= n) return sorted[n - 1];
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

std::vector<Label> classify(const Eigen::VectorXd& densities, double threshold) {
    std::vector<Label> labels(static_cast<std::size_t>(densities.size()));
    for (Eigen::Index i = 0; i < densities.size(); ++i)
        labels[static_cast<std::size_t>(i)] =
            densities[i] < threshold ? Label::outlier : Label::normal;
    return labels;
}

MetricSet compute_metrics(const std::vector<Label>& predictions, const std::vector<Label>& truth,
                          const Eigen::VectorXd& densities) {
    const std::size_t n = truth.size();
    if (predictions.size() != n || static_cast<std::size_t>(densities.size()) != n)
        throw ParameterError("compute_metrics: length mismatch");
    const auto outliers =
        static_cast<std::size_t>(std::count(truth.begin(), truth.end(), Label::outlier));
    if (outliers == 0 || outliers == n)
        throw ParameterError("compute_metrics: AUC/F1 undefined, truth has a single class");

    MetricSet ms;
    std::size_t correct = 0, tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
        correct += predictions[i] == truth[i];
        const bool pred_out = predictions[i] == Label::outlier;
        const bool true_out = truth[i] == Label::outlier;
        tp += pred_out && true_out;
        fp += pred_out && !true_out;
        fn += !pred_out && true_out;
    }
    ms.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    ms.f1_outlier =
        precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);

    // rank-based AUC with average ranks for ties: P(outlier density < normal
    // density) + 1/2 P(ties)
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return densities[static_cast<Eigen::Index>(a)] < densities[static_cast<Eigen::Index>(b)];
    });
    double outlier_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && densities[static_cast<Eigen::Index>(order[j + 1])] ==
                                densities[static_cast<Eigen::Index>(order[i])])
            ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);  // 1-based
        for (std::size_t k = i; k <= j; ++k)
            if (truth[order[k]] == Label::outlier) outlier_rank_sum += avg_rank;
        i = j + 1;
    }
    const double n_out = static_cast<double>(outliers);
    const double n_norm = static_cast<double>(n - outliers);
    const double u_greater = outlier_rank_sum - n_out * (n_out + 1.0) / 2.0;
    ms.auc = (n_out * n_norm - u_greater) / (n_out * n_norm);
    return ms;
}

MetricSet metrics_mean(const std::vector<DetectionReport>& runs) {
    MetricSet mean;
    for (const auto& r : runs) {
        mean.accuracy += r.metrics.accuracy;
        mean.f1_outlier += r.metrics.f1_outlier;
        mean.auc += r.metrics.auc;
    }
    const double n = static_cast<double>(runs.size());
    mean.accuracy /= n;
    mean.f1_outlier /= n;
    mean.auc /= n;
    return mean;
}

MetricSet metrics_stddev(const std::vector<DetectionReport>& runs) {
    MetricSet sd;
    if (runs.size() < 2) return sd;
    const MetricSet mean = metrics_mean(runs);
    for (const auto& r : runs) {
        sd.accuracy += std::pow(r.metrics.accuracy - mean.accuracy, 2);
        sd.f1_outlier += std::pow(r.metrics.f1_outlier - mean.f1_outlier, 2);
        sd.auc += std::pow(r.metrics.auc - mean.auc, 2);
    }
    const double n = static_cast<double>(runs.size()) - 1.0;
    sd.accuracy = std::sqrt(sd.accuracy / n);
    sd.f1_outlier = std::sqrt(sd.f1_outlier / n);
    sd.auc = std::sqrt(sd.auc / n);
    return sd;
}

ExperimentResult run_experiment(const LabeledDataset& data, const ExperimentConfig& config) {
    if (config.repeats < 1) throw PipelineError("stage config: repeats must be >= 1");
    if (config.backend == Backend::simulator_shots && config.shots < 1)
        throw PipelineError("stage config: shot backend needs shots >= 1");

    const SplitResult parts = at_stage("split", [&] { return split(data, config.split); });

    LabeledDataset train = parts.train, val = parts.val, test = parts.test;
    if (config.standardize) {
        at_stage("standardize", [&] {
            const ScalerParams scaler = fit_scaler(parts.train.samples);
            train = apply_scaler(scaler, parts.train);
            val = apply_scaler(scaler, parts.val);
            test = apply_scaler(scaler, parts.test);
            return 0;
        });
    }

    ExperimentResult result;
    for (int repeat = 0; repeat < config.repeats; ++repeat) {
        const std::uint64_t seed = config.embedding_seed + static_cast<std::uint64_t>(repeat);

        const FourierParams params =
            at_stage("embedding", [&] { return fit_embedding(config, train.samples, seed); });
        const auto feats_train =
            at_stage("embedding", [&] { return embed_all(params, train.samples); });
        const auto feats_val = at_stage("embedding", [&] { return embed_all(params, val.samples); });
        const auto feats_test =
            at_stage("embedding", [&] { return embed_all(params, test.samples); });

        const DensityModel model =
            at_stage("training", [&] { return build_model(config.state, feats_train); });

        const std::uint64_t shot_base =
            detail::mix_seed(config.shot_seed, static_cast<std::uint64_t>(repeat));
        const DensityBatch dens_val = at_stage("estimation", [&] {
            return estimate_densities(model, feats_val, config.backend, config.shots, shot_base,
                                      config.threads, 1);
        });
        const DensityBatch dens_test = at_stage("estimation", [&] {
            return estimate_densities(model, feats_test, config.backend, config.shots, shot_base,
                                      config.threads, 2);
        });

        DetectionReport report;
        report.densities_val = dens_val.values;
        report.densities_test = dens_test.values;
        if (config.backend == Backend::simulator_shots)
            report.densities_test_exact = dens_test.exact;
        report.threshold = at_stage("threshold", [&] {
            return select_threshold(report.densities_val, config.outlier_rate);
        });
        report.predictions = classify(report.densities_test, report.threshold);
        report.truth = test.labels;
        report.metrics = at_stage("metrics", [&] {
            return compute_metrics(report.predictions, test.labels, report.densities_test);
        });
        result.runs.push_back(std::move(report));
    }
    result.mean = metrics_mean(result.runs);
    result.stddev = metrics_stddev(result.runs);
    return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    const LabeledDataset data = at_stage("load", [&] {
        return load_csv(config.data_path, config.label_column, config.outlier_label,
                        config.normal_label);
    });
    return run_experiment(data, config);
}

double l1_distance(const Eigen::VectorXd& grid, const Eigen::VectorXd& f,
                   const Eigen::VectorXd& g) {
    if (grid.size() != f.size() || grid.size() != g.size())
        throw ParameterError("l1_distance: length mismatch");
    double acc = 0.0;
    for (Eigen::Index i = 1; i < grid.size(); ++i) {
        const double a = std::abs(f[i - 1] - g[i - 1]);
        const double b = std::abs(f[i] - g[i]);
        acc += 0.5 * (a + b) * (grid[i] - grid[i - 1]);
    }
    return acc;
}

DensityCurves run_density_estimation(const DensityEstimateConfig& config) {
    if (config.n_grid < 2) throw PipelineError("stage config: grid needs >= 2 points");

    const auto xs = at_stage("data", [&] {
        return sample_mixture_1d(config.mixture, config.n_train, config.data_seed);
    });

    FourierParams params = at_stage("embedding", [&] {
        if (config.embedding == EmbeddingKind::rff)
            return sample_rff(1, config.dim_features, config.gamma, config.embedding_seed);
        AffTrainConfig aff;
        aff.dim_features = config.dim_features;
        aff.gamma = config.gamma;
        aff.gamma_s = config.gamma_s;
        aff.epochs = config.aff_epochs;
        aff.learning_rate = config.aff_learning_rate;
        aff.batch_size = config.aff_batch_size;
        aff.seed = config.embedding_seed;
        return train_aff(xs, aff).params;
    });

    const auto features = at_stage("embedding", [&] { return embed_all(params, xs); });
    const PureModel pure = at_stage("training", [&] { return train_pure(features); });
    const MixedModel mixed = at_stage("training", [&] { return train_mixed(features); });

    const auto [default_lo, default_hi] = mixture_support(config.mixture);
    const double lo = config.grid_range ? config.grid_range->first : default_lo;
    const double hi = config.grid_range ? config.grid_range->second : default_hi;
    if (!(hi > lo)) throw PipelineError("stage config: empty grid range");

    DensityCurves curves;
    curves.grid.resize(config.n_grid);
    curves.pure.resize(config.n_grid);
    curves.mixed.resize(config.n_grid);
    curves.true_pdf.resize(config.n_grid);
    const double step = (hi - lo) / static_cast<double>(config.n_grid - 1);
    for (int i = 0; i < config.n_grid; ++i)
        curves.grid[i] = lo + step * static_cast<double>(i);

    at_stage("estimation", [&] {
        parallel_for(config.n_grid, config.threads, [&](Eigen::Index i) {
            Eigen::VectorXd x(1);
            x << curves.grid[i];
            const QuantumFeature psi = embed(params, x);
            switch (config.backend) {
                case Backend::classical:
                    curves.pure[i] = estimate_pure(pure, psi);
                    curves.mixed[i] = estimate_mixed(mixed, psi);
                    break;
                case Backend::simulator_exact:
                    curves.pure[i] = std::sqrt(run_pure_circuit(pure, psi, 0, 0).exact_prob);
                    curves.mixed[i] = run_mixed_circuit(mixed, psi, 0, 0).exact_prob;
                    break;
                case Backend::simulator_shots: {
                    const std::uint64_t seed =
                        detail::mix_seed(config.shot_seed, static_cast<std::uint64_t>(i));
                    curves.pure[i] = std::sqrt(
                        *run_pure_circuit(pure, psi, config.shots, seed).shot_estimate);
                    curves.mixed[i] =
                        *run_mixed_circuit(mixed, psi, config.shots, detail::mix_seed(seed, 1))
                             .shot_estimate;
                    break;
                }
            }
            curves.true_pdf[i] = mixture_pdf(config.mixture, curves.grid[i]);
        });
        return 0;
    });

    // numeric grid normalization of both estimator curves
    auto normalize = [&](Eigen::VectorXd& f) {
        double integral = 0.0;
        for (Eigen::Index i = 1; i < f.size(); ++i)
            integral += 0.5 * (f[i] + f[i - 1]) * step;
        if (!(integral > 0.0))
            throw DegenerateModelError("density estimation: estimator integrates to zero");
        f /= integral;
    };
    normalize(curves.pure);
    normalize(curves.mixed);

    curves.l1_pure = l1_distance(curves.grid, curves.pure, curves.true_pdf);
    curves.l1_mixed = l1_distance(curves.grid, curves.mixed, curves.true_pdf);
    return curves;
}

}  // namespace dmkde
