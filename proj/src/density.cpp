#include "dmkde/density.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace dmkde {

namespace {

void check_feature_dims(const std::vector<QuantumFeature>& features) {
    if (features.empty()) throw ParameterError("density: empty feature list");
    const Eigen::Index d = features.front().dim();
    for (const auto& f : features)
        if (f.dim() != d) throw ParameterError("density: features have mixed dimensions");
}

// Rotations with |a_pq| below this contribute less than 1e-12 to the
// off-diagonal Frobenius norm even at d = 1024.
constexpr double kRotationSkip = 1e-15;
constexpr double kOffDiagTol = 1e-12;
constexpr int kMaxSweeps = 100;

double offdiag_norm(const Eigen::MatrixXd& m) {
    // summed directly: ||M||_F^2 - ||diag||^2 cancels catastrophically once
    // the off-diagonal part is small
    const Eigen::Index d = m.rows();
    double acc = 0.0;
    for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = 0; i < d; ++i)
            if (i != j) acc += m(i, j) * m(i, j);
    return std::sqrt(acc);
}

template <typename Evaluate>
double trapezoid_normalizer(const GridSpec& grid, Evaluate&& evaluate) {
    if (grid.points < 2) throw ParameterError("normalize_numeric_1d: grid needs >= 2 points");
    if (!(grid.hi > grid.lo)) throw ParameterError("normalize_numeric_1d: empty interval");
    const double step = (grid.hi - grid.lo) / static_cast<double>(grid.points - 1);
    double integral = 0.0;
    double prev = 0.0;
    for (int i = 0; i < grid.points; ++i) {
        const double value = evaluate(grid.lo + step * static_cast<double>(i));
        if (i > 0) integral += 0.5 * (prev + value) * step;
        prev = value;
    }
    if (!(integral > 0.0))
        throw DegenerateModelError("normalize_numeric_1d: estimator integrates to zero");
    return 1.0 / integral;
}

void check_grid_params(const FourierParams& params) {
    if (params.dim_input() != 1)
        throw ParameterError("normalize_numeric_1d: only 1D feature maps are supported");
}

}  // namespace

SymmetricEigen jacobi_eigendecompose(const Eigen::MatrixXd& symmetric) {
    const Eigen::Index d = symmetric.rows();
    if (symmetric.cols() != d) throw ParameterError("jacobi: matrix not square");
    if ((symmetric - symmetric.transpose()).norm() > 1e-8 * std::max(1.0, symmetric.norm()))
        throw ParameterError("jacobi: matrix not symmetric");

    Eigen::MatrixXd m = symmetric;
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(d, d);

    bool converged = offdiag_norm(m) < kOffDiagTol;
    for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
        for (Eigen::Index p = 0; p + 1 < d; ++p) {
            for (Eigen::Index q = p + 1; q < d; ++q) {
                const double apq = m(p, q);
                if (std::abs(apq) < kRotationSkip) continue;

                const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                // M <- J^T M J with J the (p,q) rotation; columns first
                for (Eigen::Index k = 0; k < d; ++k) {
                    const double mkp = m(k, p), mkq = m(k, q);
                    m(k, p) = c * mkp - s * mkq;
                    m(k, q) = s * mkp + c * mkq;
                }
                for (Eigen::Index k = 0; k < d; ++k) {
                    const double mpk = m(p, k), mqk = m(q, k);
                    m(p, k) = c * mpk - s * mqk;
                    m(q, k) = s * mpk + c * mqk;
                }
                for (Eigen::Index k = 0; k < d; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
        converged = offdiag_norm(m) < kOffDiagTol;
    }
    if (!converged) throw NumericError("jacobi: no convergence within 100 sweeps");

    return SymmetricEigen{std::move(v), m.diagonal()};
}

PureModel train_pure(const std::vector<QuantumFeature>& features) {
    check_feature_dims(features);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(features.front().dim());
    for (const auto& f : features) sum += f.vec();
    const double norm = sum.norm();
    if (norm < 1e-9)
        throw DegenerateModelError("train_pure: training states cancel to zero norm");
    return PureModel{sum / norm};
}

MixedModel train_mixed(const std::vector<QuantumFeature>& features) {
    check_feature_dims(features);
    const Eigen::Index d = features.front().dim();
    const double inv_n = 1.0 / static_cast<double>(features.size());

    MixedModel model;
    model.rho = Eigen::MatrixXd::Zero(d, d);
    for (const auto& f : features)
        model.rho.selfadjointView<Eigen::Lower>().rankUpdate(f.vec(), inv_n);
    model.rho.triangularView<Eigen::StrictlyUpper>() =
        model.rho.triangularView<Eigen::StrictlyLower>().transpose();

    SymmetricEigen eig = jacobi_eigendecompose(model.rho);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return eig.values[a] > eig.values[b]; });

    model.eigenvalues.resize(d);
    model.eigenvectors.resize(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        model.eigenvalues[j] = eig.values[order[static_cast<std::size_t>(j)]];
        model.eigenvectors.col(j) = eig.vectors.col(order[static_cast<std::size_t>(j)]);
    }

    // clamp numerical negatives, renormalize to a trace-1 spectrum
    for (Eigen::Index j = 0; j < d; ++j)
        if (model.eigenvalues[j] < 1e-12) model.eigenvalues[j] = 0.0;
    const double total = model.eigenvalues.sum();
    if (!(total > 0.0)) throw NumericError("train_mixed: spectrum collapsed to zero");
    model.eigenvalues /= total;

    // deterministic sign: first component above noise made non-negative
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index i = 0; i < d; ++i) {
            const double entry = model.eigenvectors(i, j);
            if (std::abs(entry) > 1e-9) {
                if (entry < 0.0) model.eigenvectors.col(j) = -model.eigenvectors.col(j);
                break;
            }
        }
    }
    return model;
}

double estimate_pure(const PureModel& model, const QuantumFeature& psi, double normalizer) {
    if (psi.dim() != model.phi.size())
        throw ParameterError("estimate_pure: dimension mismatch");
    return normalizer * std::abs(model.phi.dot(psi.vec()));
}

double estimate_mixed(const MixedModel& model, const QuantumFeature& psi, double normalizer) {
    if (psi.dim() != model.rho.rows())
        throw ParameterError("estimate_mixed: dimension mismatch");
    const Eigen::VectorXd overlaps = model.eigenvectors.transpose() * psi.vec();
    return normalizer * model.eigenvalues.dot(overlaps.cwiseAbs2());
}

double normalize_numeric_1d(const PureModel& model, const FourierParams& params,
                            const GridSpec& grid) {
    check_grid_params(params);
    return trapezoid_normalizer(grid, [&](double x) {
        Eigen::VectorXd point(1);
        point << x;
        return estimate_pure(model, embed(params, point));
    });
}

double normalize_numeric_1d(const MixedModel& model, const FourierParams& params,
                            const GridSpec& grid) {
    check_grid_params(params);
    return trapezoid_normalizer(grid, [&](double x) {
        Eigen::VectorXd point(1);
        point << x;
        return estimate_mixed(model, embed(params, point));
    });
}

double resolve_normalizer(const PureModel& model, const FourierParams& params,
                          const EstimatorConfig& cfg) {
    if (cfg.normalization == EstimatorConfig::Normalization::none) return 1.0;
    return normalize_numeric_1d(model, params, cfg.grid);
}

double resolve_normalizer(const MixedModel& model, const FourierParams& params,
                          const EstimatorConfig& cfg) {
    if (cfg.normalization == EstimatorConfig::Normalization::none) return 1.0;
    return normalize_numeric_1d(model, params, cfg.grid);
}

namespace {

void write_matrix_rows(std::ofstream& out, const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << m(i, j) << (j + 1 == m.cols() ? "" : " ");
        out << "\n";
    }
}

void read_matrix_rows(std::ifstream& in, Eigen::MatrixXd& m, const std::string& path,
                      const std::string& what) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            if (!(in >> m(i, j))) throw IngestionError(path + ": truncated " + what);
}

void expect_token(std::ifstream& in, const std::string& keyword, const std::string& path) {
    std::string tok;
    if (!(in >> tok) || tok != keyword)
        throw IngestionError(path + ": expected '" + keyword + "', got '" + tok + "'");
}

}  // namespace

void save_pure_model(const PureModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot open for writing: " + path);
    out << std::setprecision(17);
    out << "pure_model v1\n";
    out << "dim " << model.phi.size() << "\n";
    out << "phi\n";
    for (Eigen::Index i = 0; i < model.phi.size(); ++i)
        out << model.phi[i] << (i + 1 == model.phi.size() ? "" : " ");
    out << "\n";
    if (!out) throw IngestionError("write failed: " + path);
}

PureModel load_pure_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open: " + path);
    expect_token(in, "pure_model", path);
    expect_token(in, "v1", path);
    expect_token(in, "dim", path);
    Eigen::Index d = 0;
    in >> d;
    if (!in || d < 1) throw IngestionError(path + ": bad dim");
    expect_token(in, "phi", path);
    PureModel model;
    model.phi.resize(d);
    for (Eigen::Index i = 0; i < d; ++i)
        if (!(in >> model.phi[i])) throw IngestionError(path + ": truncated phi");
    return model;
}

void save_mixed_model(const MixedModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot open for writing: " + path);
    const Eigen::Index d = model.rho.rows();
    out << std::setprecision(17);
    out << "mixed_model v1\n";
    out << "dim " << d << "\n";
    out << "rho\n";  // row-major, d rows of d entries
    write_matrix_rows(out, model.rho);
    out << "eigenvalues\n";
    for (Eigen::Index i = 0; i < d; ++i) out << model.eigenvalues[i] << (i + 1 == d ? "" : " ");
    out << "\n";
    out << "eigenvectors\n";  // row-major; columns are the eigenvectors
    write_matrix_rows(out, model.eigenvectors);
    if (!out) throw IngestionError("write failed: " + path);
}

MixedModel load_mixed_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open: " + path);
    expect_token(in, "mixed_model", path);
    expect_token(in, "v1", path);
    expect_token(in, "dim", path);
    Eigen::Index d = 0;
    in >> d;
    if (!in || d < 1) throw IngestionError(path + ": bad dim");

    MixedModel model;
    model.rho.resize(d, d);
    model.eigenvalues.resize(d);
    model.eigenvectors.resize(d, d);
    expect_token(in, "rho", path);
    read_matrix_rows(in, model.rho, path, "rho");
    expect_token(in, "eigenvalues", path);
    for (Eigen::Index i = 0; i < d; ++i)
        if (!(in >> model.eigenvalues[i])) throw IngestionError(path + ": truncated eigenvalues");
    expect_token(in, "eigenvectors", path);
    read_matrix_rows(in, model.eigenvectors, path, "eigenvectors");
    return model;
}

}  // namespace dmkde
