#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "dmkde/errors.hpp"

namespace dmkde {

/// Unit-norm real vector of dimension d: a data sample's quantum state.
/// The constructor normalizes exactly, so the unit-norm invariant holds by
/// construction; a zero or non-finite input is rejected.
class QuantumFeature {
public:
    explicit QuantumFeature(Eigen::VectorXd amplitudes);

    const Eigen::VectorXd& vec() const { return amplitudes_; }
    Eigen::Index dim() const { return amplitudes_.size(); }

private:
    Eigen::VectorXd amplitudes_;
};

/// Fourier feature map parameters. `weights` is d x D and already carries the
/// sqrt(2*gamma) initialization scale, so the map applies it directly:
///   z(x) = sqrt(2/d) * cos(weights * x + bias),  |psi> = z / ||z||.
struct FourierParams {
    Eigen::MatrixXd weights;  // d x D
    Eigen::VectorXd bias;     // length d, radians
    double gamma = 1.0;       // inverse length-scale squared of the target kernel

    Eigen::Index dim_input() const { return weights.cols(); }
    Eigen::Index dim_features() const { return weights.rows(); }
};

/// Draw random Fourier features for the Gaussian kernel exp(-gamma*||x-y||^2):
/// weights = sqrt(2*gamma) * G with G i.i.d. standard normal, bias i.i.d.
/// uniform on [0, 2*pi). Identical seed gives identical params.
FourierParams sample_rff(Eigen::Index dim_input, Eigen::Index dim_features, double gamma,
                         std::uint64_t seed);

/// Unnormalized feature vector z(x) = sqrt(2/d) * cos(W*x + b).
/// z(x) . z(y) approximates exp(-gamma*||x-y||^2).
Eigen::VectorXd raw_features(const FourierParams& params, const Eigen::VectorXd& x);

/// Normalized quantum feature |psi> = z(x)/||z(x)||.
QuantumFeature embed(const FourierParams& params, const Eigen::VectorXd& x);

std::vector<QuantumFeature> embed_all(const FourierParams& params,
                                      const std::vector<Eigen::VectorXd>& xs);

/// Synthetic training pairs: two independent shuffles of X with Gaussian-kernel
/// labels y_i = exp(-gamma_s * ||left_i - right_i||^2).
struct PairDataset {
    std::vector<Eigen::VectorXd> left;
    std::vector<Eigen::VectorXd> right;
    Eigen::VectorXd labels;
    double gamma_s = 1.0;

    std::size_t size() const { return left.size(); }
};

PairDataset build_synthetic_pairs(const std::vector<Eigen::VectorXd>& X, double gamma_s,
                                  std::uint64_t seed);

/// MSE between kernel labels and squared feature overlaps:
///   (1/N) * sum_i (y_i - |<psi_left_i|psi_right_i>|^2)^2
double aff_loss(const FourierParams& params, const PairDataset& pairs);

struct FourierGrad {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
};

/// Exact analytic gradient of aff_loss with respect to weights and bias.
FourierGrad aff_grad(const FourierParams& params, const PairDataset& pairs);

struct AffTrainConfig {
    Eigen::Index dim_features = 16;
    double gamma = 1.0;
    double gamma_s = 1.0;
    int epochs = 50;
    double learning_rate = 1e-3;
    int batch_size = 64;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
};

struct AffTrainResult {
    FourierParams params;            // snapshot with the lowest full-dataset loss
    std::vector<double> epoch_loss;  // epoch_loss[0] is the loss at initialization
    std::vector<double> best_loss_so_far;
    int best_epoch = 0;              // 0 = initialization
    double initial_loss = 0.0;
    double best_loss = 0.0;
};

/// Train adaptive Fourier features: initialize with sample_rff, build synthetic
/// pairs, run mini-batch adaptive-moment gradient descent on aff_loss, and keep
/// the parameters with the lowest recorded full-dataset loss.
AffTrainResult train_aff(const std::vector<Eigen::VectorXd>& X, const AffTrainConfig& config);

/// Plain-text serialization (dim_input, dim_features, gamma, weights row-major,
/// bias). Values are written with 17 significant digits so a load/save cycle is
/// bit-exact.
void save_fourier_params(const FourierParams& params, const std::string& path);
FourierParams load_fourier_params(const std::string& path);

}  // namespace dmkde
