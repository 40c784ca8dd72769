#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dmkde/dataset.hpp"
#include "dmkde/density.hpp"
#include "dmkde/fourier.hpp"

namespace dmkde {

enum class EmbeddingKind { rff, aff };
enum class StateKind { pure, mixed };
enum class Backend { classical, simulator_exact, simulator_shots };

std::string to_string(EmbeddingKind k);
std::string to_string(StateKind k);
std::string to_string(Backend k);
EmbeddingKind embedding_from_string(const std::string& s);
StateKind state_from_string(const std::string& s);
Backend backend_from_string(const std::string& s);

/// Empirical quantile of the validation densities at level `outlier_rate`,
/// linearly interpolated between order statistics.
double select_threshold(const Eigen::VectorXd& val_densities, double outlier_rate);

/// outlier iff density < threshold (strict).
std::vector<Label> classify(const Eigen::VectorXd& densities, double threshold);

struct MetricSet {
    double accuracy = 0.0;
    double f1_outlier = 0.0;
    double auc = 0.0;
};

/// Accuracy, F1 of the outlier class, and rank-based AUC (probability that a
/// random outlier has lower density than a random normal, ties counted 1/2).
MetricSet compute_metrics(const std::vector<Label>& predictions, const std::vector<Label>& truth,
                          const Eigen::VectorXd& densities);

struct DetectionReport {
    double threshold = 0.0;
    Eigen::VectorXd densities_val;
    Eigen::VectorXd densities_test;
    std::vector<Label> predictions;
    std::vector<Label> truth;  // test-partition labels
    MetricSet metrics;
    // Present for the shot backend: exact densities next to the shot estimates.
    std::optional<Eigen::VectorXd> densities_test_exact;
};

struct ExperimentConfig {
    // data
    std::string data_path;
    std::string label_column = "class";
    std::string outlier_label = "outlier";
    std::string normal_label;  // empty: any non-outlier value is normal
    bool standardize = true;
    SplitSpec split;

    // embedding
    EmbeddingKind embedding = EmbeddingKind::rff;
    Eigen::Index dim_features = 4;
    double gamma = 1.0;
    double gamma_s = 1.0;      // AFF synthetic-pair kernel
    int aff_epochs = 50;
    double aff_learning_rate = 1e-3;
    int aff_batch_size = 64;
    std::uint64_t embedding_seed = 0;  // repeat r uses embedding_seed + r
    std::string embedding_params_path;  // when set, load a fixed map instead of fitting

    // estimation
    StateKind state = StateKind::mixed;
    Backend backend = Backend::classical;
    std::int64_t shots = 8192;
    std::uint64_t shot_seed = 0;

    double outlier_rate = 0.096;
    int repeats = 1;
    int threads = 0;  // 0: hardware concurrency
};

struct ExperimentResult {
    std::vector<DetectionReport> runs;
    MetricSet mean;
    MetricSet stddev;
};

/// Steps (i)-(iv): embed, train the density model, estimate val/test densities
/// with the configured backend, select the percentile threshold on validation,
/// classify the test partition, and compute metrics. Repeats re-randomize the
/// embedding seed while the split stays fixed.
ExperimentResult run_experiment(const LabeledDataset& data, const ExperimentConfig& config);

/// Same, loading the dataset from config.data_path first.
ExperimentResult run_experiment(const ExperimentConfig& config);

struct DensityEstimateConfig {
    GaussianMixture1D mixture;
    int n_train = 1000;
    int n_grid = 250;
    std::optional<std::pair<double, double>> grid_range;  // default: mixture_support
    EmbeddingKind embedding = EmbeddingKind::rff;
    Eigen::Index dim_features = 16;
    double gamma = 1.0;
    double gamma_s = 1.0;
    int aff_epochs = 50;
    double aff_learning_rate = 1e-3;
    int aff_batch_size = 64;
    std::uint64_t data_seed = 0;
    std::uint64_t embedding_seed = 0;
    Backend backend = Backend::classical;
    std::int64_t shots = 8192;
    std::uint64_t shot_seed = 0;
    int threads = 0;
};

struct DensityCurves {
    Eigen::VectorXd grid;
    Eigen::VectorXd pure;      // grid-normalized pure-state estimates
    Eigen::VectorXd mixed;     // grid-normalized mixed-state estimates
    Eigen::VectorXd true_pdf;
    double l1_pure = 0.0;      // trapezoidal integral of |pure - true_pdf|
    double l1_mixed = 0.0;
};

/// 1D density-estimation experiment: sample the mixture, embed, build both
/// density models, evaluate both estimators on the grid with numeric
/// normalization, and report L1 distances to the true pdf.
DensityCurves run_density_estimation(const DensityEstimateConfig& config);

/// Trapezoidal integral of |f - g| on an equidistant grid.
double l1_distance(const Eigen::VectorXd& grid, const Eigen::VectorXd& f,
                   const Eigen::VectorXd& g);

MetricSet metrics_mean(const std::vector<DetectionReport>& runs);
MetricSet metrics_stddev(const std::vector<DetectionReport>& runs);

}  // namespace dmkde
