#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>

#include "dmkde/density.hpp"
#include "dmkde/errors.hpp"
#include "dmkde/fourier.hpp"

namespace dmkde {

// Bit/index convention, used everywhere in this module: basis index
// i = sum_k b_k * 2^k, i.e. qubit k carries weight 2^k and the circuit's top
// wire is qubit 0. The 4-qubit state |1010> (b0=1, b1=0, b2=1, b3=0) is
// |5>_4. "First n qubits" of a 2n-qubit register are the low n index bits,
// so the slice amplitudes[j*2^n .. (j+1)*2^n) holds first-half index i for
// fixed second-half index j.

/// Complex amplitude vector over the 2^m basis states of an m-qubit register.
struct CircuitState {
    Eigen::VectorXcd amplitudes;
    int num_qubits = 0;
};

/// Dense unitary acting on an n-qubit register.
struct UnitaryBlock {
    Eigen::MatrixXcd matrix;  // 2^n x 2^n
    int num_qubits = 0;
};

/// Measurement statistics: basis index -> occurrence count.
struct ShotResult {
    std::map<std::uint64_t, std::int64_t> counts;
    std::int64_t shots = 0;

    double frequency(std::uint64_t index) const;
};

/// Minimal n with 2^(n-1) < d <= 2^n.
int qubits_for_dim(Eigen::Index d);

/// State with amplitudes equal to v zero-padded to length 2^n. ||v|| must be
/// 1 within 1e-6; the internal renormalization is exact.
CircuitState amplitude_encode(const Eigen::VectorXcd& v, int num_qubits);
CircuitState amplitude_encode(const Eigen::VectorXd& v, int num_qubits);

/// Unitary U_n (n minimal for len(phi)) whose first column is phi padded to
/// 2^n, completed by the Householder reflection mapping e0 -> phi.
UnitaryBlock complete_unitary(const Eigen::VectorXd& phi);

/// 2^n x 2^n block unitary with vdag in the top-left d x d quadrant and the
/// identity I_{2^n - d} in the bottom-right. Requires 2^(n-1) < d <= 2^n.
UnitaryBlock embed_block_unitary(const Eigen::MatrixXcd& vdag, int num_qubits);

/// Apply U (on n qubits) to the first half of a 2n-qubit state, i.e. to the
/// low n index bits.
CircuitState apply_unitary_first_half(const CircuitState& state, const UnitaryBlock& u);

/// Cascade of n CNOTs on a 2n-qubit state: control qubit i+n, target qubit i,
/// i = 0..n-1. Maps basis index (i_low, j_high) to (i_low XOR j_high, j_high).
CircuitState cnot_cascade(const CircuitState& state);

/// Probability that measuring the first n qubits of a 2n-qubit state yields
/// |0>_n: sum_j |amplitude(0, j)|^2.
double prob_zero_first_half(const CircuitState& state);

/// Marginal distribution of the first n qubits of a 2n-qubit state.
Eigen::VectorXd marginal_first_half(const CircuitState& state);

/// Multinomial sampling by inverse CDF from an explicit distribution.
ShotResult sample_shots(const Eigen::VectorXd& probabilities, std::int64_t shots,
                        std::uint64_t seed);

struct CircuitOutcome {
    double exact_prob = 0.0;
    std::optional<double> shot_estimate;  // present iff shots > 0
};

/// Pure-state overlap circuit: encode |psi>_n, apply complete_unitary(phi)^dag,
/// measure. exact_prob = P(|0>_n) = |<phi|psi>|^2.
///
/// `trace` (optional) receives one line per circuit operation with qubit
/// indices; the format is for debugging and not stability-guaranteed.
CircuitOutcome run_pure_circuit(const PureModel& model, const QuantumFeature& psi,
                                std::int64_t shots, std::uint64_t seed,
                                std::ostream* trace = nullptr);

/// Mixed-state spectral circuit: encode |psi>_n (x) |lambda>_n with
/// |lambda>_n = sum_i sqrt(lambda_i)|i>_n, apply the block-embedded V^dag to
/// the first half, apply the CNOT cascade, measure the first half.
/// exact_prob = P(|0>_n) = sum_i lambda_i |<v_i|psi>|^2 = <psi|rho|psi>.
CircuitOutcome run_mixed_circuit(const MixedModel& model, const QuantumFeature& psi,
                                 std::int64_t shots, std::uint64_t seed,
                                 std::ostream* trace = nullptr);

}  // namespace dmkde
