#include "doctest.h"

#include <cmath>
#include <complex>
#include <random>
#include <sstream>

#include "dmkde/qsim.hpp"
#include "test_support.hpp"

using namespace dmkde;
using cplx = std::complex<double>;

namespace {

CircuitState random_state(std::mt19937_64& rng, int qubits) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::VectorXcd v(Eigen::Index{1} << qubits);
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = cplx(nd(rng), nd(rng));
    v /= v.norm();
    return amplitude_encode(v, qubits);
}

}  // namespace

TEST_SUITE_BEGIN("qsim");

TEST_CASE("qubits_for_dim picks the minimal register") {
    CHECK(qubits_for_dim(2) == 1);
    CHECK(qubits_for_dim(3) == 2);
    CHECK(qubits_for_dim(4) == 2);
    CHECK(qubits_for_dim(5) == 3);
    CHECK(qubits_for_dim(16) == 4);
    CHECK(qubits_for_dim(17) == 5);
    CHECK_THROWS_AS(qubits_for_dim(0), ParameterError);
}

TEST_CASE("amplitude_encode basis states and the |5>_4 notation example") {
    Eigen::VectorXd e0 = Eigen::VectorXd::Zero(16);
    e0[0] = 1.0;
    const CircuitState zero = amplitude_encode(e0, 4);
    CHECK(zero.num_qubits == 4);
    CHECK(zero.amplitudes[0] == cplx(1.0, 0.0));
    CHECK(zero.amplitudes.tail(15).norm() == 0.0);

    // |1010> with qubit k carrying weight 2^k is index 1 + 4 = 5
    Eigen::VectorXd e5 = Eigen::VectorXd::Zero(16);
    e5[5] = 1.0;
    const CircuitState five = amplitude_encode(e5, 4);
    for (Eigen::Index i = 0; i < 16; ++i)
        CHECK(std::abs(five.amplitudes[i]) == (i == 5 ? 1.0 : 0.0));
}

TEST_CASE("amplitude_encode pads with zeros and validates input") {
    Eigen::VectorXd v(3);
    v << 0.6, 0.8, 0.0;
    const CircuitState s = amplitude_encode(v, 2);
    CHECK(s.amplitudes.size() == 4);
    CHECK(s.amplitudes[3] == cplx(0.0, 0.0));
    CHECK(std::abs(s.amplitudes.norm() - 1.0) <= 1e-12);

    const Eigen::VectorXd long5 = Eigen::VectorXd::Ones(5).normalized();
    CHECK_THROWS_AS(amplitude_encode(long5, 2), ParameterError);
    const Eigen::VectorXd zero4 = Eigen::VectorXd::Zero(4);
    CHECK_THROWS_AS(amplitude_encode(zero4, 2), ParameterError);
    Eigen::VectorXd off = v * 1.01;  // norm off by 1%
    CHECK_THROWS_AS(amplitude_encode(off, 2), ParameterError);

    // near-unit input is renormalized to machine precision
    Eigen::VectorXd near_unit = v * (1.0 + 5e-7);
    const CircuitState r = amplitude_encode(near_unit, 2);
    CHECK(std::abs(r.amplitudes.norm() - 1.0) <= 1e-12);
}

TEST_CASE("complete_unitary aligns e0 with phi and is unitary") {
    std::mt19937_64 rng(21);

    Eigen::VectorXd e0 = Eigen::VectorXd::Zero(8);
    e0[0] = 1.0;
    const UnitaryBlock id = complete_unitary(e0);
    CHECK((id.matrix - Eigen::MatrixXcd::Identity(8, 8)).norm() == 0.0);

    for (Eigen::Index d : {5, 8}) {
        const Eigen::VectorXd phi = testutil::random_unit(rng, d);
        const UnitaryBlock u = complete_unitary(phi);
        CHECK(u.num_qubits == 3);
        REQUIRE(u.matrix.rows() == 8);
        Eigen::VectorXcd padded = Eigen::VectorXcd::Zero(8);
        padded.head(d) = phi.cast<cplx>();
        CHECK((u.matrix.col(0) - padded).norm() <= 1e-10);
        CHECK((u.matrix.adjoint() * u.matrix - Eigen::MatrixXcd::Identity(8, 8)).norm() <= 1e-10);
    }
}

TEST_CASE("embed_block_unitary layout and unitarity") {
    std::mt19937_64 rng(22);

    const Eigen::MatrixXcd v4 = testutil::random_unitary(rng, 4);
    const UnitaryBlock full = embed_block_unitary(v4, 2);
    CHECK((full.matrix - v4).norm() == 0.0);

    const UnitaryBlock id3 = embed_block_unitary(Eigen::MatrixXcd::Identity(3, 3), 2);
    CHECK((id3.matrix - Eigen::MatrixXcd::Identity(4, 4)).norm() == 0.0);

    const Eigen::MatrixXcd v3 = testutil::random_unitary(rng, 3);
    const UnitaryBlock b = embed_block_unitary(v3, 2);
    CHECK((b.matrix.topLeftCorner(3, 3) - v3).norm() == 0.0);
    CHECK(b.matrix(3, 3) == cplx(1.0, 0.0));
    CHECK((b.matrix.adjoint() * b.matrix - Eigen::MatrixXcd::Identity(4, 4)).norm() <= 1e-10);

    CHECK_THROWS_AS(embed_block_unitary(v3, 3), ParameterError);   // 3 <= 2^2, not minimal for n=3
    CHECK_THROWS_AS(embed_block_unitary(testutil::random_unitary(rng, 5), 2), ParameterError);
    Eigen::MatrixXcd notu = v3;
    notu(0, 0) += 0.1;
    CHECK_THROWS_AS(embed_block_unitary(notu, 2), ParameterError);
}

TEST_CASE("apply_unitary_first_half agrees with the dense Kronecker oracle") {
    std::mt19937_64 rng(23);
    const int n = 2;
    const UnitaryBlock u{testutil::random_unitary(rng, 4), n};
    const CircuitState state = random_state(rng, 2 * n);

    const CircuitState got = apply_unitary_first_half(state, u);
    CHECK(std::abs(got.amplitudes.norm() - 1.0) <= 1e-9);

    // oracle: full 16x16 matrix M[(i,j),(i',j')] = U[i][i'] delta_{j j'},
    // with index x = i + 4*j (first half = low bits)
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(16, 16);
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i)
            for (int ip = 0; ip < 4; ++ip) m(i + 4 * j, ip + 4 * j) = u.matrix(i, ip);
    const Eigen::VectorXcd expect = m * state.amplitudes;
    CHECK((got.amplitudes - expect).norm() <= 1e-12);

    // identity leaves the state alone; U then U^dag restores it
    const UnitaryBlock eye{Eigen::MatrixXcd::Identity(4, 4), n};
    CHECK((apply_unitary_first_half(state, eye).amplitudes - state.amplitudes).norm() == 0.0);
    const UnitaryBlock udag{u.matrix.adjoint(), n};
    const CircuitState back = apply_unitary_first_half(got, udag);
    CHECK((back.amplitudes - state.amplitudes).norm() <= 1e-9);

    CHECK_THROWS_AS(apply_unitary_first_half(random_state(rng, 3), u), ParameterError);
}

TEST_CASE("cnot_cascade maps |i>|i> to |0>|i> and |i>|j> away from |0>") {
    const int n = 3;
    for (int i = 0; i < 8; ++i) {
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(64);
        v[i + 8 * i] = 1.0;
        const CircuitState out = cnot_cascade(amplitude_encode(v, 2 * n));
        CHECK(std::abs(out.amplitudes[0 + 8 * i]) == 1.0);
    }
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            if (i == j) continue;
            Eigen::VectorXcd v = Eigen::VectorXcd::Zero(64);
            v[i + 8 * j] = 1.0;
            const CircuitState out = cnot_cascade(amplitude_encode(v, 2 * n));
            CHECK(std::abs(out.amplitudes[(i ^ j) + 8 * j]) == 1.0);
            CHECK((i ^ j) != 0);
        }
}

TEST_CASE("cnot_cascade is an involution and a basis permutation") {
    std::mt19937_64 rng(24);
    const CircuitState state = random_state(rng, 6);
    const CircuitState once = cnot_cascade(state);
    const CircuitState twice = cnot_cascade(once);
    CHECK((twice.amplitudes - state.amplitudes).norm() == 0.0);

    Eigen::VectorXd a = state.amplitudes.cwiseAbs();
    Eigen::VectorXd b = once.amplitudes.cwiseAbs();
    std::sort(a.data(), a.data() + a.size());
    std::sort(b.data(), b.data() + b.size());
    CHECK((a - b).norm() == 0.0);

    CHECK_THROWS_AS(cnot_cascade(random_state(rng, 5)), ParameterError);
}

TEST_CASE("prob_zero_first_half matches full enumeration") {
    std::mt19937_64 rng(25);
    const int n = 3;

    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(64);
    v[8 * 5] = 1.0;  // |0>_3 (x) |5>_3
    CHECK(prob_zero_first_half(amplitude_encode(v, 6)) == doctest::Approx(1.0));
    v.setZero();
    v[1 + 8 * 5] = 1.0;  // |1>_3 (x) |5>_3
    CHECK(prob_zero_first_half(amplitude_encode(v, 6)) == doctest::Approx(0.0));

    const CircuitState state = random_state(rng, 2 * n);
    double expect = 0.0;
    for (Eigen::Index idx = 0; idx < state.amplitudes.size(); ++idx) {
        bool low_zero = true;  // decode the low n bits explicitly
        for (int k = 0; k < n; ++k)
            if ((idx >> k) & 1) low_zero = false;
        if (low_zero) expect += std::norm(state.amplitudes[idx]);
    }
    CHECK(prob_zero_first_half(state) == doctest::Approx(expect).epsilon(1e-12));

    const Eigen::VectorXd marg = marginal_first_half(state);
    CHECK(marg.size() == 8);
    CHECK(marg.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(marg[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("sample_shots is seeded, consistent and converges like 1/sqrt(shots)") {
    Eigen::VectorXd probs(4);
    probs << 0.1, 0.2, 0.3, 0.4;

    const ShotResult a = sample_shots(probs, 8192, 7);
    const ShotResult b = sample_shots(probs, 8192, 7);
    CHECK(a.counts == b.counts);
    std::int64_t total = 0;
    for (const auto& [idx, c] : a.counts) {
        CHECK(idx < 4);
        total += c;
    }
    CHECK(total == 8192);
    CHECK(a.frequency(3) == doctest::Approx(0.4).epsilon(0.05));

    // empirical std of the |0> frequency over 60 resamples, per shot count
    auto spread = [&](std::int64_t shots) {
        double mean = 0.0, m2 = 0.0;
        const int trials = 60;
        for (int t = 0; t < trials; ++t) {
            const double f = sample_shots(probs, shots, 1000 + static_cast<std::uint64_t>(t))
                                 .frequency(0);
            const double delta = f - mean;
            mean += delta / (t + 1);
            m2 += delta * (f - mean);
        }
        return std::sqrt(m2 / (trials - 1));
    };
    const double s256 = spread(256), s1024 = spread(1024), s8192 = spread(8192);
    CHECK(s1024 < s256);
    CHECK(s8192 < s1024);

    CHECK_THROWS_AS(sample_shots(probs, -1, 0), ParameterError);
    CHECK(sample_shots(probs, 0, 0).shots == 0);
}

TEST_CASE("run_pure_circuit equals the classical overlap") {
    std::mt19937_64 rng(26);

    const QuantumFeature psi = testutil::random_feature(rng, 16);
    const PureModel self{psi.vec()};
    CHECK(run_pure_circuit(self, psi, 0, 0).exact_prob == doctest::Approx(1.0).epsilon(1e-12));

    for (int trial = 0; trial < 25; ++trial) {
        const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng() % 15);
        const PureModel model{testutil::random_unit(rng, d)};
        const QuantumFeature probe = testutil::random_feature(rng, d);
        const double expect = std::pow(model.phi.dot(probe.vec()), 2);
        const CircuitOutcome out = run_pure_circuit(model, probe, 0, 0);
        CHECK_FALSE(out.shot_estimate.has_value());
        CHECK(std::abs(out.exact_prob - expect) <= 1e-9);
    }
}

TEST_CASE("run_pure_circuit shot estimates stay inside the binomial envelope") {
    std::mt19937_64 rng(27);
    const Eigen::Index d = 8;
    const PureModel model{testutil::random_unit(rng, d)};
    const QuantumFeature probe = testutil::random_feature(rng, d);
    const double p = run_pure_circuit(model, probe, 0, 0).exact_prob;
    const double sigma = std::sqrt(p * (1.0 - p) / 8192.0);

    int inside = 0;
    for (int t = 0; t < 100; ++t) {
        const CircuitOutcome out =
            run_pure_circuit(model, probe, 8192, 555 + static_cast<std::uint64_t>(t));
        REQUIRE(out.shot_estimate.has_value());
        if (std::abs(*out.shot_estimate - p) <= 3.0 * sigma) ++inside;
    }
    CHECK(inside >= 99);
}

TEST_CASE("run_mixed_circuit reproduces the spectral expectation") {
    std::mt19937_64 rng(28);

    // rank-1 self-overlap
    const QuantumFeature psi = testutil::random_feature(rng, 8);
    const MixedModel rank1 = train_mixed({psi});
    CHECK(run_mixed_circuit(rank1, psi, 0, 0).exact_prob == doctest::Approx(1.0).epsilon(1e-9));

    // eigenvector probe picks out its eigenvalue
    const auto features = testutil::random_features(rng, 25, 8);
    const MixedModel m = train_mixed(features);
    for (Eigen::Index j : {0, 2, 5}) {
        const QuantumFeature vj{m.eigenvectors.col(j)};
        CHECK(std::abs(run_mixed_circuit(m, vj, 0, 0).exact_prob - m.eigenvalues[j]) <= 1e-9);
    }

    // random models at power-of-two and padded dimensions
    for (Eigen::Index d : {3, 4, 5, 8, 16}) {
        for (int trial = 0; trial < 10; ++trial) {
            const auto feats = testutil::random_features(rng, 12, d);
            const MixedModel model = train_mixed(feats);
            const QuantumFeature probe = testutil::random_feature(rng, d);
            const double expect = probe.vec().dot(model.rho * probe.vec());
            CHECK(std::abs(run_mixed_circuit(model, probe, 0, 0).exact_prob - expect) <= 1e-9);
        }
    }
}

TEST_CASE("run_mixed_circuit shot path and trace output") {
    std::mt19937_64 rng(29);
    const auto features = testutil::random_features(rng, 10, 4);
    const MixedModel m = train_mixed(features);
    const QuantumFeature probe = testutil::random_feature(rng, 4);

    std::ostringstream trace;
    const CircuitOutcome out = run_mixed_circuit(m, probe, 8192, 11, &trace);
    REQUIRE(out.shot_estimate.has_value());
    const double sigma = std::sqrt(out.exact_prob * (1.0 - out.exact_prob) / 8192.0);
    CHECK(std::abs(*out.shot_estimate - out.exact_prob) <= 4.0 * sigma + 1e-12);
    CHECK(trace.str().find("cnot") != std::string::npos);
    CHECK(trace.str().find("|lambda>_2") != std::string::npos);

    std::ostringstream pure_trace;
    run_pure_circuit(PureModel{probe.vec()}, probe, 0, 0, &pure_trace);
    CHECK(pure_trace.str().find("Udag") != std::string::npos);
}

TEST_CASE("gate applications preserve the norm") {
    std::mt19937_64 rng(30);
    for (int trial = 0; trial < 10; ++trial) {
        CircuitState s = random_state(rng, 4);
        const UnitaryBlock u{testutil::random_unitary(rng, 4), 2};
        s = apply_unitary_first_half(s, u);
        CHECK(std::abs(s.amplitudes.norm() - 1.0) <= 1e-9);
        s = cnot_cascade(s);
        CHECK(std::abs(s.amplitudes.norm() - 1.0) <= 1e-9);
    }
}

TEST_SUITE_END();
