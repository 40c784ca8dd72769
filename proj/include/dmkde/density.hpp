#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "dmkde/errors.hpp"
#include "dmkde/fourier.hpp"

namespace dmkde {

/// Pure training state: phi = (sum_i psi_i) / ||sum_i psi_i||.
struct PureModel {
    Eigen::VectorXd phi;
};

/// Mixed training state rho = (1/N) sum_i psi_i psi_i^T with its spectral
/// decomposition. Eigenvalues are descending, clamped non-negative and
/// renormalized to sum 1; eigenvector columns have their first nonzero
/// component non-negative.
struct MixedModel {
    Eigen::MatrixXd rho;
    Eigen::MatrixXd eigenvectors;  // columns, same order as eigenvalues
    Eigen::VectorXd eigenvalues;
};

/// 1D evaluation grid [lo, hi] with `points` equidistant nodes.
struct GridSpec {
    double lo = -1.0;
    double hi = 1.0;
    int points = 0;
};

/// How estimator normalization constants are resolved. `none` leaves C = 1
/// (anomaly thresholding is invariant under positive scaling); `numeric_grid`
/// computes C so the estimator integrates to 1 over the grid (1D only).
struct EstimatorConfig {
    enum class Normalization { none, numeric_grid };
    Normalization normalization = Normalization::none;
    GridSpec grid;
};

PureModel train_pure(const std::vector<QuantumFeature>& features);
MixedModel train_mixed(const std::vector<QuantumFeature>& features);

/// Pure-state density estimate C * |<phi|psi>|.
double estimate_pure(const PureModel& model, const QuantumFeature& psi, double normalizer = 1.0);

/// Mixed-state density estimate C * <psi|rho|psi>, evaluated in the spectral
/// form sum_i lambda_i * |<v_i|psi>|^2.
double estimate_mixed(const MixedModel& model, const QuantumFeature& psi, double normalizer = 1.0);

/// Reciprocal of the trapezoidal integral of the unnormalized estimator over a
/// 1D grid; multiplying by it makes the estimator integrate to ~1 on [lo, hi].
double normalize_numeric_1d(const PureModel& model, const FourierParams& params,
                            const GridSpec& grid);
double normalize_numeric_1d(const MixedModel& model, const FourierParams& params,
                            const GridSpec& grid);

double resolve_normalizer(const PureModel& model, const FourierParams& params,
                          const EstimatorConfig& cfg);
double resolve_normalizer(const MixedModel& model, const FourierParams& params,
                          const EstimatorConfig& cfg);

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Converges when the off-diagonal Frobenius norm drops below 1e-12 (relative
/// to the matrix scale), capped at 100 sweeps. Results are unsorted.
struct SymmetricEigen {
    Eigen::MatrixXd vectors;  // columns
    Eigen::VectorXd values;
};
SymmetricEigen jacobi_eigendecompose(const Eigen::MatrixXd& symmetric);

/// Plain-text model files, 17 significant digits, matrices row-major.
void save_pure_model(const PureModel& model, const std::string& path);
PureModel load_pure_model(const std::string& path);
void save_mixed_model(const MixedModel& model, const std::string& path);
MixedModel load_mixed_model(const std::string& path);

}  // namespace dmkde
