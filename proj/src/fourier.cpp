#include "dmkde/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "seed_util.hpp"

namespace dmkde {

namespace {

constexpr double kDegenerateNorm = 1e-14;

/// Cosine feature vector cos(W*x + b) without the sqrt(2/d) scale (which
/// cancels under normalization).
Eigen::VectorXd cosine_features(const FourierParams& params, const Eigen::VectorXd& x) {
    if (x.size() != params.dim_input())
        throw ParameterError("embed: input has dimension " + std::to_string(x.size()) +
                             ", expected " + std::to_string(params.dim_input()));
    const Eigen::VectorXd u = params.weights * x + params.bias;
    Eigen::VectorXd c = u.array().cos();
    if (!c.allFinite())
        throw DegenerateEmbeddingError("embed: non-finite features (input or weights overflow)");
    return c;
}

struct PairTerms {
    Eigen::VectorXd u_left, u_right;    // pre-activations
    Eigen::VectorXd psi_left, psi_right;  // normalized features
    double norm_left = 0.0, norm_right = 0.0;
    double overlap = 0.0;  // <psi_left|psi_right>
};

PairTerms pair_terms(const FourierParams& params, const Eigen::VectorXd& xl,
                     const Eigen::VectorXd& xr) {
    PairTerms t;
    t.u_left = params.weights * xl + params.bias;
    t.u_right = params.weights * xr + params.bias;
    Eigen::VectorXd cl = t.u_left.array().cos();
    Eigen::VectorXd cr = t.u_right.array().cos();
    if (!cl.allFinite() || !cr.allFinite())
        throw DegenerateEmbeddingError("aff: non-finite features");
    t.norm_left = cl.norm();
    t.norm_right = cr.norm();
    if (t.norm_left < kDegenerateNorm || t.norm_right < kDegenerateNorm)
        throw DegenerateEmbeddingError("aff: all-zero cosine vector");
    t.psi_left = cl / t.norm_left;
    t.psi_right = cr / t.norm_right;
    t.overlap = t.psi_left.dot(t.psi_right);
    return t;
}

void check_pairs(const PairDataset& pairs) {
    if (pairs.size() == 0) throw ParameterError("aff: empty pair dataset");
    if (pairs.right.size() != pairs.left.size() ||
        pairs.labels.size() != static_cast<Eigen::Index>(pairs.left.size()))
        throw ParameterError("aff: left/right/labels lengths differ");
}

/// Loss and gradient over a subset of pairs. `grad` may be null (loss only).
double loss_and_grad(const FourierParams& params, const PairDataset& pairs,
                     const std::vector<int>& idx, FourierGrad* grad) {
    const double inv_n = 1.0 / static_cast<double>(idx.size());
    if (grad) {
        grad->weights = Eigen::MatrixXd::Zero(params.dim_features(), params.dim_input());
        grad->bias = Eigen::VectorXd::Zero(params.dim_features());
    }
    double loss = 0.0;
    for (const int i : idx) {
        const auto ui = static_cast<std::size_t>(i);
        const PairTerms t = pair_terms(params, pairs.left[ui], pairs.right[ui]);
        const double residual = pairs.labels[i] - t.overlap * t.overlap;
        loss += residual * residual * inv_n;
        if (!grad) continue;

        // d loss / d u through cos, normalization, inner product and square
        const double coef = 4.0 * residual * t.overlap * inv_n;
        const Eigen::VectorXd gl =
            coef * t.u_left.array().sin() *
            ((t.psi_right - t.overlap * t.psi_left) / t.norm_left).array();
        const Eigen::VectorXd gr =
            coef * t.u_right.array().sin() *
            ((t.psi_left - t.overlap * t.psi_right) / t.norm_right).array();
        grad->weights.noalias() += gl * pairs.left[ui].transpose();
        grad->weights.noalias() += gr * pairs.right[ui].transpose();
        grad->bias += gl + gr;
    }
    return loss;
}

std::vector<int> all_indices(std::size_t n) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

}  // namespace

QuantumFeature::QuantumFeature(Eigen::VectorXd amplitudes) : amplitudes_(std::move(amplitudes)) {
    if (amplitudes_.size() == 0) throw ParameterError("QuantumFeature: empty vector");
    if (!amplitudes_.allFinite()) throw ParameterError("QuantumFeature: non-finite amplitudes");
    const double norm = amplitudes_.norm();
    if (norm < 1e-12) throw ParameterError("QuantumFeature: zero norm");
    amplitudes_ /= norm;
}

FourierParams sample_rff(Eigen::Index dim_input, Eigen::Index dim_features, double gamma,
                         std::uint64_t seed) {
    if (dim_input < 1) throw ParameterError("sample_rff: dim_input must be >= 1");
    if (dim_features < 1) throw ParameterError("sample_rff: dim_features must be >= 1");
    if (!(gamma > 0.0)) throw ParameterError("sample_rff: gamma must be positive");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 2.0 * std::numbers::pi);

    FourierParams params;
    params.gamma = gamma;
    params.weights.resize(dim_features, dim_input);
    params.bias.resize(dim_features);
    const double scale = std::sqrt(2.0 * gamma);
    for (Eigen::Index i = 0; i < dim_features; ++i)
        for (Eigen::Index j = 0; j < dim_input; ++j) params.weights(i, j) = scale * normal(rng);
    for (Eigen::Index i = 0; i < dim_features; ++i) params.bias[i] = uniform(rng);
    return params;
}

Eigen::VectorXd raw_features(const FourierParams& params, const Eigen::VectorXd& x) {
    const Eigen::VectorXd c = cosine_features(params, x);
    return std::sqrt(2.0 / static_cast<double>(params.dim_features())) * c;
}

QuantumFeature embed(const FourierParams& params, const Eigen::VectorXd& x) {
    const Eigen::VectorXd c = cosine_features(params, x);
    const double norm = c.norm();
    if (norm < kDegenerateNorm)
        throw DegenerateEmbeddingError("embed: all cosine features are zero");
    return QuantumFeature(c / norm);
}

std::vector<QuantumFeature> embed_all(const FourierParams& params,
                                      const std::vector<Eigen::VectorXd>& xs) {
    std::vector<QuantumFeature> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back(embed(params, x));
    return out;
}

PairDataset build_synthetic_pairs(const std::vector<Eigen::VectorXd>& X, double gamma_s,
                                  std::uint64_t seed) {
    if (X.size() < 2) throw ParameterError("build_synthetic_pairs: need at least 2 samples");
    if (!(gamma_s > 0.0)) throw ParameterError("build_synthetic_pairs: gamma_s must be positive");

    const std::size_t n = X.size();
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order_left(n), order_right(n);
    std::iota(order_left.begin(), order_left.end(), 0);
    std::iota(order_right.begin(), order_right.end(), 0);
    std::shuffle(order_left.begin(), order_left.end(), rng);
    std::shuffle(order_right.begin(), order_right.end(), rng);

    PairDataset pairs;
    pairs.gamma_s = gamma_s;
    pairs.left.reserve(n);
    pairs.right.reserve(n);
    pairs.labels.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        pairs.left.push_back(X[order_left[i]]);
        pairs.right.push_back(X[order_right[i]]);
        const double d2 = (pairs.left[i] - pairs.right[i]).squaredNorm();
        pairs.labels[static_cast<Eigen::Index>(i)] = std::exp(-gamma_s * d2);
    }
    return pairs;
}

double aff_loss(const FourierParams& params, const PairDataset& pairs) {
    check_pairs(pairs);
    return loss_and_grad(params, pairs, all_indices(pairs.size()), nullptr);
}

FourierGrad aff_grad(const FourierParams& params, const PairDataset& pairs) {
    check_pairs(pairs);
    FourierGrad grad;
    loss_and_grad(params, pairs, all_indices(pairs.size()), &grad);
    return grad;
}

AffTrainResult train_aff(const std::vector<Eigen::VectorXd>& X, const AffTrainConfig& config) {
    if (X.size() < 2) throw ParameterError("train_aff: need at least 2 samples");
    if (config.epochs < 1) throw ParameterError("train_aff: epochs must be positive");
    if (config.batch_size < 1) throw ParameterError("train_aff: batch_size must be positive");
    if (!(config.learning_rate > 0.0))
        throw ParameterError("train_aff: learning_rate must be positive");

    const Eigen::Index dim_input = X.front().size();
    FourierParams params = sample_rff(dim_input, config.dim_features, config.gamma, config.seed);
    const PairDataset pairs =
        build_synthetic_pairs(X, config.gamma_s, detail::mix_seed(config.seed, 1));

    const std::vector<int> full = all_indices(pairs.size());
    AffTrainResult result;
    result.initial_loss = loss_and_grad(params, pairs, full, nullptr);
    result.best_loss = result.initial_loss;
    result.best_epoch = 0;
    result.params = params;
    result.epoch_loss.push_back(result.initial_loss);
    result.best_loss_so_far.push_back(result.initial_loss);

    Eigen::MatrixXd mw = Eigen::MatrixXd::Zero(params.weights.rows(), params.weights.cols());
    Eigen::MatrixXd vw = mw;
    Eigen::VectorXd mb = Eigen::VectorXd::Zero(params.bias.size());
    Eigen::VectorXd vb = mb;
    long step = 0;

    std::mt19937_64 shuffle_rng(detail::mix_seed(config.seed, 2));
    std::vector<int> order = full;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const std::vector<int> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
            FourierGrad grad;
            try {
                loss_and_grad(params, pairs, batch, &grad);
            } catch (const DegenerateEmbeddingError&) {
                throw TrainingDivergedError("train_aff: features overflowed at epoch " +
                                                std::to_string(epoch),
                                            epoch);
            }

            ++step;
            const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            mw = config.beta1 * mw + (1.0 - config.beta1) * grad.weights;
            vw = config.beta2 * vw +
                 (1.0 - config.beta2) * grad.weights.cwiseProduct(grad.weights);
            mb = config.beta1 * mb + (1.0 - config.beta1) * grad.bias;
            vb = config.beta2 * vb + (1.0 - config.beta2) * grad.bias.cwiseProduct(grad.bias);
            params.weights -=
                (config.learning_rate * (mw / c1).array() /
                 ((vw / c2).array().sqrt() + config.epsilon))
                    .matrix();
            params.bias -= (config.learning_rate * (mb / c1).array() /
                            ((vb / c2).array().sqrt() + config.epsilon))
                               .matrix();
        }

        double loss;
        if (!params.weights.allFinite() || !params.bias.allFinite()) {
            loss = std::numeric_limits<double>::quiet_NaN();
        } else {
            try {
                loss = loss_and_grad(params, pairs, full, nullptr);
            } catch (const DegenerateEmbeddingError&) {
                loss = std::numeric_limits<double>::quiet_NaN();
            }
        }
        if (!std::isfinite(loss))
            throw TrainingDivergedError(
                "train_aff: loss became non-finite at epoch " + std::to_string(epoch), epoch);

        result.epoch_loss.push_back(loss);
        if (loss < result.best_loss) {
            result.best_loss = loss;
            result.best_epoch = epoch;
            result.params = params;
        }
        result.best_loss_so_far.push_back(result.best_loss);
    }
    return result;
}

void save_fourier_params(const FourierParams& params, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot open for writing: " + path);
    out << std::setprecision(17);
    out << "fourier_params v1\n";
    out << "dim_input " << params.dim_input() << "\n";
    out << "dim_features " << params.dim_features() << "\n";
    out << "gamma " << params.gamma << "\n";
    out << "weights\n";
    for (Eigen::Index i = 0; i < params.dim_features(); ++i) {
        for (Eigen::Index j = 0; j < params.dim_input(); ++j)
            out << params.weights(i, j) << (j + 1 == params.dim_input() ? "" : " ");
        out << "\n";
    }
    out << "bias\n";
    for (Eigen::Index i = 0; i < params.dim_features(); ++i)
        out << params.bias[i] << (i + 1 == params.dim_features() ? "" : " ");
    out << "\n";
    if (!out) throw IngestionError("write failed: " + path);
}

FourierParams load_fourier_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open: " + path);
    auto expect = [&](const std::string& keyword) {
        std::string tok;
        if (!(in >> tok) || tok != keyword)
            throw IngestionError(path + ": expected '" + keyword + "', got '" + tok + "'");
    };
    expect("fourier_params");
    expect("v1");
    Eigen::Index dim_input = 0, dim_features = 0;
    double gamma = 0.0;
    expect("dim_input");
    in >> dim_input;
    expect("dim_features");
    in >> dim_features;
    expect("gamma");
    in >> gamma;
    if (!in || dim_input < 1 || dim_features < 1 || !(gamma > 0.0))
        throw IngestionError(path + ": bad header fields");

    FourierParams params;
    params.gamma = gamma;
    params.weights.resize(dim_features, dim_input);
    params.bias.resize(dim_features);
    expect("weights");
    for (Eigen::Index i = 0; i < dim_features; ++i)
        for (Eigen::Index j = 0; j < dim_input; ++j)
            if (!(in >> params.weights(i, j)))
                throw IngestionError(path + ": truncated weights block");
    expect("bias");
    for (Eigen::Index i = 0; i < dim_features; ++i)
        if (!(in >> params.bias[i])) throw IngestionError(path + ": truncated bias block");
    return params;
}

}  // namespace dmkde
