#include "dmkde/qsim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace dmkde {

namespace {

Eigen::Index dim_of(int num_qubits) { return Eigen::Index{1} << num_qubits; }

void check_even(const CircuitState& state, const char* who) {
    if (state.num_qubits % 2 != 0)
        throw ParameterError(std::string(who) + ": needs an even qubit count, got " +
                             std::to_string(state.num_qubits));
}

/// Multiply every contiguous low-bit slice of the register by `u` (u acts on
/// the low `block_qubits` index bits).
Eigen::VectorXcd apply_low_block(const Eigen::VectorXcd& amplitudes, const Eigen::MatrixXcd& u,
                                 int block_qubits, int total_qubits) {
    const Eigen::Index block = dim_of(block_qubits);
    const Eigen::Index slices = dim_of(total_qubits - block_qubits);
    Eigen::VectorXcd out(amplitudes.size());
    for (Eigen::Index j = 0; j < slices; ++j)
        out.segment(j * block, block).noalias() = u * amplitudes.segment(j * block, block);
    return out;
}

}  // namespace

double ShotResult::frequency(std::uint64_t index) const {
    if (shots == 0) return 0.0;
    const auto it = counts.find(index);
    return it == counts.end() ? 0.0
                              : static_cast<double>(it->second) / static_cast<double>(shots);
}

int qubits_for_dim(Eigen::Index d) {
    if (d < 1) throw ParameterError("qubits_for_dim: dimension must be >= 1");
    int n = 0;
    while (dim_of(n) < d) ++n;
    return n;
}

CircuitState amplitude_encode(const Eigen::VectorXcd& v, int num_qubits) {
    if (num_qubits < 0) throw ParameterError("amplitude_encode: negative qubit count");
    const Eigen::Index dim = dim_of(num_qubits);
    if (v.size() > dim)
        throw ParameterError("amplitude_encode: vector of length " + std::to_string(v.size()) +
                             " does not fit in " + std::to_string(num_qubits) + " qubits");
    const double norm = v.norm();
    if (norm == 0.0) throw ParameterError("amplitude_encode: zero vector");
    if (std::abs(norm - 1.0) > 1e-6)
        throw ParameterError("amplitude_encode: vector norm deviates from 1 by more than 1e-6");

    CircuitState state;
    state.num_qubits = num_qubits;
    state.amplitudes = Eigen::VectorXcd::Zero(dim);
    state.amplitudes.head(v.size()) = v / norm;
    return state;
}

CircuitState amplitude_encode(const Eigen::VectorXd& v, int num_qubits) {
    return amplitude_encode(Eigen::VectorXcd(v.cast<std::complex<double>>()), num_qubits);
}

UnitaryBlock complete_unitary(const Eigen::VectorXd& phi) {
    const double norm = phi.norm();
    if (norm == 0.0) throw ParameterError("complete_unitary: zero vector");
    if (std::abs(norm - 1.0) > 1e-6)
        throw ParameterError("complete_unitary: vector is not unit norm");

    const int n = qubits_for_dim(phi.size());
    const Eigen::Index dim = dim_of(n);
    Eigen::VectorXd target = Eigen::VectorXd::Zero(dim);
    target.head(phi.size()) = phi / norm;

    UnitaryBlock u;
    u.num_qubits = n;
    // Householder reflection sending e0 to target (identity when they match)
    Eigen::VectorXd w = target;
    w[0] -= 1.0;
    const double ww = w.squaredNorm();
    Eigen::MatrixXd real = Eigen::MatrixXd::Identity(dim, dim);
    if (ww > 1e-24) real -= (2.0 / ww) * (w * w.transpose());
    u.matrix = real.cast<std::complex<double>>();
    return u;
}

UnitaryBlock embed_block_unitary(const Eigen::MatrixXcd& vdag, int num_qubits) {
    const Eigen::Index d = vdag.rows();
    if (vdag.cols() != d) throw ParameterError("embed_block_unitary: matrix not square");
    const Eigen::Index dim = dim_of(num_qubits);
    if (d > dim || (num_qubits > 0 && d <= dim / 2))
        throw ParameterError("embed_block_unitary: need 2^(n-1) < d <= 2^n, got d=" +
                             std::to_string(d) + " n=" + std::to_string(num_qubits));
    const double residual =
        (vdag.adjoint() * vdag - Eigen::MatrixXcd::Identity(d, d)).norm();
    if (residual > 1e-8 * std::sqrt(static_cast<double>(d)))
        throw ParameterError("embed_block_unitary: matrix is not unitary");

    UnitaryBlock u;
    u.num_qubits = num_qubits;
    u.matrix = Eigen::MatrixXcd::Identity(dim, dim);
    u.matrix.topLeftCorner(d, d) = vdag;
    return u;
}

CircuitState apply_unitary_first_half(const CircuitState& state, const UnitaryBlock& u) {
    if (state.num_qubits != 2 * u.num_qubits)
        throw ParameterError("apply_unitary_first_half: state must have exactly 2n qubits");
    CircuitState out;
    out.num_qubits = state.num_qubits;
    out.amplitudes = apply_low_block(state.amplitudes, u.matrix, u.num_qubits, state.num_qubits);
    return out;
}

CircuitState cnot_cascade(const CircuitState& state) {
    check_even(state, "cnot_cascade");
    const int n = state.num_qubits / 2;
    const Eigen::Index block = dim_of(n);

    CircuitState out;
    out.num_qubits = state.num_qubits;
    out.amplitudes.resize(state.amplitudes.size());
    for (Eigen::Index j = 0; j < block; ++j)
        for (Eigen::Index i = 0; i < block; ++i)
            out.amplitudes[(i ^ j) + j * block] = state.amplitudes[i + j * block];
    return out;
}

double prob_zero_first_half(const CircuitState& state) {
    check_even(state, "prob_zero_first_half");
    const Eigen::Index block = dim_of(state.num_qubits / 2);
    double p = 0.0;
    for (Eigen::Index j = 0; j < block; ++j) p += std::norm(state.amplitudes[j * block]);
    return p;
}

Eigen::VectorXd marginal_first_half(const CircuitState& state) {
    check_even(state, "marginal_first_half");
    const Eigen::Index block = dim_of(state.num_qubits / 2);
    Eigen::VectorXd marginal = Eigen::VectorXd::Zero(block);
    for (Eigen::Index j = 0; j < block; ++j)
        for (Eigen::Index i = 0; i < block; ++i)
            marginal[i] += std::norm(state.amplitudes[i + j * block]);
    return marginal;
}

ShotResult sample_shots(const Eigen::VectorXd& probabilities, std::int64_t shots,
                        std::uint64_t seed) {
    if (shots < 0) throw ParameterError("sample_shots: negative shot count");
    if (probabilities.size() == 0) throw ParameterError("sample_shots: empty distribution");
    if (probabilities.minCoeff() < -1e-9)
        throw ParameterError("sample_shots: negative probability");
    const double total = probabilities.sum();
    if (std::abs(total - 1.0) > 1e-6)
        throw ParameterError("sample_shots: probabilities do not sum to 1");

    Eigen::VectorXd cdf(probabilities.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
        acc += std::max(0.0, probabilities[i]) / total;
        cdf[i] = acc;
    }
    cdf[probabilities.size() - 1] = 1.0;

    ShotResult result;
    result.shots = shots;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (std::int64_t s = 0; s < shots; ++s) {
        const double u = uniform(rng);
        const auto it = std::upper_bound(cdf.data(), cdf.data() + cdf.size(), u);
        const auto idx = static_cast<std::uint64_t>(
            std::min<std::ptrdiff_t>(it - cdf.data(), cdf.size() - 1));
        ++result.counts[idx];
    }
    return result;
}

CircuitOutcome run_pure_circuit(const PureModel& model, const QuantumFeature& psi,
                                std::int64_t shots, std::uint64_t seed, std::ostream* trace) {
    if (model.phi.size() != psi.dim())
        throw ParameterError("run_pure_circuit: model/state dimension mismatch");

    const int n = qubits_for_dim(psi.dim());
    CircuitState state = amplitude_encode(psi.vec(), n);
    if (trace) *trace << "encode |psi>_" << n << " qubits 0-" << n - 1 << "\n";

    const UnitaryBlock u = complete_unitary(model.phi);
    state.amplitudes = apply_low_block(state.amplitudes, u.matrix.adjoint(), n, n);
    if (trace) *trace << "apply Udag_" << n << " qubits 0-" << n - 1 << "\n";

    CircuitOutcome outcome;
    outcome.exact_prob = std::norm(state.amplitudes[0]);
    if (shots > 0) {
        const ShotResult sr = sample_shots(state.amplitudes.cwiseAbs2(), shots, seed);
        outcome.shot_estimate = sr.frequency(0);
        if (trace) *trace << "measure qubits 0-" << n - 1 << " shots " << shots << "\n";
    } else if (trace) {
        *trace << "measure qubits 0-" << n - 1 << " exact\n";
    }
    return outcome;
}

CircuitOutcome run_mixed_circuit(const MixedModel& model, const QuantumFeature& psi,
                                 std::int64_t shots, std::uint64_t seed, std::ostream* trace) {
    const Eigen::Index d = psi.dim();
    if (model.rho.rows() != d || model.eigenvectors.rows() != d ||
        model.eigenvalues.size() != d)
        throw ParameterError("run_mixed_circuit: model/state dimension mismatch");
    if (model.eigenvalues.minCoeff() < -1e-9 || std::abs(model.eigenvalues.sum() - 1.0) > 1e-6)
        throw ParameterError("run_mixed_circuit: eigenvalues are not a distribution");

    const int n = qubits_for_dim(d);
    const Eigen::Index block = Eigen::Index{1} << n;

    const CircuitState psi_reg = amplitude_encode(psi.vec(), n);
    const CircuitState lambda_reg =
        amplitude_encode(Eigen::VectorXd(model.eigenvalues.cwiseMax(0.0).cwiseSqrt()), n);
    if (trace) {
        *trace << "encode |psi>_" << n << " qubits 0-" << n - 1 << "\n";
        *trace << "encode |lambda>_" << n << " qubits " << n << "-" << 2 * n - 1 << "\n";
    }

    // |psi>_n (x) |lambda>_n with the first register in the low bits
    CircuitState state;
    state.num_qubits = 2 * n;
    state.amplitudes.resize(block * block);
    for (Eigen::Index j = 0; j < block; ++j)
        state.amplitudes.segment(j * block, block) = lambda_reg.amplitudes[j] * psi_reg.amplitudes;

    const UnitaryBlock vdag = embed_block_unitary(
        model.eigenvectors.transpose().cast<std::complex<double>>(), n);
    state = apply_unitary_first_half(state, vdag);
    if (trace) *trace << "apply Vdag_" << n << " qubits 0-" << n - 1 << "\n";

    state = cnot_cascade(state);
    if (trace)
        for (int i = 0; i < n; ++i)
            *trace << "cnot control " << i + n << " target " << i << "\n";

    CircuitOutcome outcome;
    outcome.exact_prob = prob_zero_first_half(state);
    if (shots > 0) {
        const ShotResult sr = sample_shots(marginal_first_half(state), shots, seed);
        outcome.shot_estimate = sr.frequency(0);
        if (trace) *trace << "measure qubits 0-" << n - 1 << " shots " << shots << "\n";
    } else if (trace) {
        *trace << "measure qubits 0-" << n - 1 << " exact\n";
    }
    return outcome;
}

}  // namespace dmkde
