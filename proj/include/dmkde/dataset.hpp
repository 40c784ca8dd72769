#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dmkde/errors.hpp"

namespace dmkde {

enum class Label : std::uint8_t { normal = 0, outlier = 1 };

struct LabeledDataset {
    std::vector<Eigen::VectorXd> samples;
    std::vector<Label> labels;
    std::vector<std::string> feature_names;

    std::size_t size() const { return samples.size(); }
    Eigen::Index dim() const { return samples.empty() ? 0 : samples.front().size(); }
    std::size_t outlier_count() const;
    double outlier_fraction() const;
};

/// Load a delimited numeric file with a header row. `label_column` names the
/// class column; rows whose label equals `outlier_label` are outliers and rows
/// equal to `normal_label` are normal. When `normal_label` is empty, any
/// non-outlier value counts as normal; otherwise an unknown label is an error.
/// Parse errors report 1-based row and the offending column.
LabeledDataset load_csv(const std::string& path, const std::string& label_column,
                        const std::string& outlier_label, const std::string& normal_label = "",
                        char delimiter = ',');

void save_csv(const LabeledDataset& data, const std::string& path,
              const std::string& label_column = "class",
              const std::string& outlier_label = "outlier",
              const std::string& normal_label = "normal", char delimiter = ',');

/// Per-feature z-score parameters. Zero-variance features keep scale 1 and are
/// only centered.
struct ScalerParams {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;
};

ScalerParams fit_scaler(const std::vector<Eigen::VectorXd>& samples);
Eigen::VectorXd apply_scaler(const ScalerParams& scaler, const Eigen::VectorXd& x);
LabeledDataset apply_scaler(const ScalerParams& scaler, const LabeledDataset& data);

struct SplitSpec {
    double train_frac = 0.6;
    double val_frac = 0.2;
    double test_frac = 0.2;
    bool stratified = true;
    std::uint64_t seed = 0;
};

struct SplitResult {
    LabeledDataset train;
    LabeledDataset val;
    LabeledDataset test;
};

/// Disjoint, exhaustive partitions. Stratified mode shuffles and cuts each
/// class separately so every partition preserves the outlier fraction within
/// rounding; it is an error if some partition would receive no sample of a
/// present class.
SplitResult split(const LabeledDataset& data, const SplitSpec& spec);

/// 1D Gaussian mixture sum_k weight_k * N(mean_k, sigma_k^2).
struct GaussianMixture1D {
    std::vector<double> means{-2.0, 2.0};
    std::vector<double> sigmas{1.0, 1.0};
    std::vector<double> weights{0.5, 0.5};
};

double mixture_pdf(const GaussianMixture1D& mix, double x);
std::vector<Eigen::VectorXd> sample_mixture_1d(const GaussianMixture1D& mix, int n,
                                               std::uint64_t seed);

/// Default evaluation window [min(means) - 3*max(sigmas), max(means) + 3*max(sigmas)].
std::pair<double, double> mixture_support(const GaussianMixture1D& mix);

/// Deterministic synthetic anomaly benchmark: clustered correlated inliers,
/// outliers pushed into low-density regions, and per-feature affine distortion
/// so raw columns have wildly different scales. Stands in for clinical
/// tabular data in tests and demos.
LabeledDataset make_anomaly_benchmark(int n_samples, int n_features, double outlier_fraction,
                                      std::uint64_t seed);

}  // namespace dmkde
