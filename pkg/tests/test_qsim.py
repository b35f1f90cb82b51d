"""Simulator tests: gate matrices, dense oracles, sampling, adjoint gradients."""

import numpy as np
import pytest

from fqt import qsim
from fqt.qsim import AnsatzSpec, Statevector

from oracles import (
    dense_ansatz_state,
    dense_u3,
    embed_1q,
    embed_ctrl,
    finite_difference,
    relative_error,
)

SQRT2_INV = 1 / np.sqrt(2)


def random_state(n, rng):
    amps = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
    return Statevector(amps / np.linalg.norm(amps))


# ---------------------------------------------------------------------------
# u3_matrix


def test_u3_identity():
    assert np.allclose(qsim.u3_matrix(0, 0, 0), np.eye(2), atol=1e-15)


def test_u3_pauli_x():
    assert np.allclose(qsim.u3_matrix(np.pi, 0, np.pi), np.array([[0, 1], [1, 0]]), atol=1e-15)


def test_u3_hadamard():
    want = SQRT2_INV * np.array([[1, 1], [1, -1]])
    assert np.allclose(qsim.u3_matrix(np.pi / 2, 0, np.pi), want, atol=1e-15)


def test_u3_unitarity_random():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        mu, varphi, lam = rng.uniform(-2 * np.pi, 2 * np.pi, 3)
        u = qsim.u3_matrix(mu, varphi, lam)
        assert np.max(np.abs(u @ u.conj().T - np.eye(2))) < 1e-12


def test_u3_rejects_non_finite():
    with pytest.raises(ValueError):
        qsim.u3_matrix(np.nan, 0, 0)
    with pytest.raises(ValueError):
        qsim.u3_matrix(0, np.inf, 0)


# ---------------------------------------------------------------------------
# gate application vs dense Kronecker oracle


def test_apply_u3_identity_on_zero():
    s = Statevector.zero(1)
    qsim.apply_u3(s, 0, (0, 0, 0))
    assert np.allclose(s.amplitudes, [1, 0], atol=1e-15)


def test_apply_u3_flips_qubit():
    s = Statevector.zero(1)
    qsim.apply_u3(s, 0, (np.pi, 0, np.pi))
    assert abs(qsim.probabilities(s)[1] - 1.0) < 1e-15


def test_apply_u3_matches_dense_oracle():
    rng = np.random.default_rng(11)
    for _ in range(20):
        s = random_state(3, rng)
        params = rng.uniform(-np.pi, np.pi, 3)
        qubit = int(rng.integers(0, 3))
        want = embed_1q(dense_u3(*params), qubit, 3) @ s.amplitudes
        qsim.apply_u3(s, qubit, params)
        assert np.max(np.abs(s.amplitudes - want)) < 1e-12
        assert abs(s.norm() - 1.0) < 1e-12


def test_apply_u3_qubit_out_of_range():
    s = Statevector.zero(2)
    with pytest.raises(IndexError):
        qsim.apply_u3(s, 2, (0, 0, 0))


def test_apply_cu3_control_zero_is_identity():
    s = Statevector.zero(2)
    qsim.apply_cu3(s, 0, 1, (1.2, 0.3, -0.7))
    assert np.allclose(s.amplitudes, [1, 0, 0, 0], atol=1e-15)


def test_apply_cu3_controlled_x():
    # |q1=0, q0=1> --CU3(control 0, target 1, X params)--> |q1=1, q0=1>
    s = Statevector(np.array([0, 1, 0, 0], dtype=complex))
    qsim.apply_cu3(s, 0, 1, (np.pi, 0, np.pi))
    assert abs(qsim.probabilities(s)[3] - 1.0) < 1e-15


def test_apply_cu3_matches_dense_oracle():
    rng = np.random.default_rng(13)
    for _ in range(20):
        s = random_state(3, rng)
        params = rng.uniform(-np.pi, np.pi, 3)
        control, target = rng.permutation(3)[:2]
        want = embed_ctrl(dense_u3(*params), control, target, 3) @ s.amplitudes
        qsim.apply_cu3(s, int(control), int(target), params)
        assert np.max(np.abs(s.amplitudes - want)) < 1e-12


def test_apply_cu3_rejects_same_qubit():
    s = Statevector.zero(2)
    with pytest.raises(ValueError):
        qsim.apply_cu3(s, 1, 1, (0, 0, 0))


def test_random_circuits_match_dense_oracle():
    # mixed U3/CU3 sequences on N <= 3, compared gate by gate
    rng = np.random.default_rng(17)
    for n in (2, 3):
        s = random_state(n, rng)
        dense = s.amplitudes.copy()
        for _ in range(30):
            params = rng.uniform(-np.pi, np.pi, 3)
            if rng.random() < 0.5:
                q = int(rng.integers(0, n))
                qsim.apply_u3(s, q, params)
                dense = embed_1q(dense_u3(*params), q, n) @ dense
            else:
                c, t = rng.permutation(n)[:2]
                qsim.apply_cu3(s, int(c), int(t), params)
                dense = embed_ctrl(dense_u3(*params), int(c), int(t), n) @ dense
        assert np.max(np.abs(s.amplitudes - dense)) < 1e-10


# ---------------------------------------------------------------------------
# run_ansatz


def test_run_ansatz_all_zero_theta_is_identity():
    spec = AnsatzSpec(2, 1)
    out = qsim.run_ansatz(spec, np.zeros(spec.n_params))
    assert np.allclose(out.amplitudes, [1, 0, 0, 0], atol=1e-15)


def test_run_ansatz_single_hadamard():
    out = qsim.run_ansatz(AnsatzSpec(1, 1), np.array([np.pi / 2, 0, np.pi]))
    assert np.allclose(out.amplitudes, [SQRT2_INV, SQRT2_INV], atol=1e-15)


def test_run_ansatz_matches_dense_oracle():
    rng = np.random.default_rng(19)
    spec = AnsatzSpec(3, 2)
    for _ in range(10):
        theta = rng.uniform(-np.pi, np.pi, spec.n_params)
        got = qsim.run_ansatz(spec, theta).amplitudes
        want = dense_ansatz_state(3, 2, theta)
        assert np.max(np.abs(got - want)) < 1e-10


def test_run_ansatz_rejects_wrong_length():
    with pytest.raises(ValueError):
        qsim.run_ansatz(AnsatzSpec(2, 1), np.zeros(5))


def test_param_count_formula():
    assert AnsatzSpec(1, 1).n_params == 3
    assert AnsatzSpec(2, 1).n_params == 9
    assert AnsatzSpec(10, 5).n_params == 285


# ---------------------------------------------------------------------------
# probabilities


def test_probabilities_fresh_state():
    assert np.allclose(qsim.probabilities(Statevector.zero(2)), [1, 0, 0, 0])


def test_probabilities_hadamard_state():
    out = qsim.run_ansatz(AnsatzSpec(1, 1), np.array([np.pi / 2, 0, np.pi]))
    assert np.max(np.abs(qsim.probabilities(out) - 0.5)) < 1e-12


def test_probabilities_sum_to_one_random_circuits():
    rng = np.random.default_rng(23)
    for _ in range(100):
        spec = AnsatzSpec(4, int(rng.integers(1, 4)))
        p = qsim.probabilities(qsim.run_ansatz(spec, rng.uniform(-np.pi, np.pi, spec.n_params)))
        assert abs(p.sum() - 1.0) < 1e-10
        assert (p >= 0).all()


def test_norm_drift_over_thousand_gates():
    rng = np.random.default_rng(29)
    s = random_state(4, rng)
    for _ in range(1000):
        if rng.random() < 0.5:
            qsim.apply_u3(s, int(rng.integers(0, 4)), rng.uniform(-np.pi, np.pi, 3))
        else:
            c, t = rng.permutation(4)[:2]
            qsim.apply_cu3(s, int(c), int(t), rng.uniform(-np.pi, np.pi, 3))
    assert abs(s.norm() - 1.0) < 1e-10


# ---------------------------------------------------------------------------
# sample_probabilities


def test_sampling_basis_state_is_indicator():
    s = Statevector.zero(3)
    freqs = qsim.sample_probabilities(s, 1234, seed=0)
    assert freqs[0] == 1.0 and freqs[1:].sum() == 0.0


def test_sampling_hadamard_million_shots():
    out = qsim.run_ansatz(AnsatzSpec(1, 1), np.array([np.pi / 2, 0, np.pi]))
    freqs = qsim.sample_probabilities(out, 10**6, seed=42)
    assert np.max(np.abs(freqs - 0.5)) < 0.002


def test_sampling_deterministic():
    rng = np.random.default_rng(31)
    spec = AnsatzSpec(3, 2)
    out = qsim.run_ansatz(spec, rng.uniform(-np.pi, np.pi, spec.n_params))
    a = qsim.sample_probabilities(out, 5000, seed=9)
    b = qsim.sample_probabilities(out, 5000, seed=9)
    assert np.array_equal(a, b)


def test_sampling_sum_exactly_one():
    rng = np.random.default_rng(37)
    for n in (2, 4, 6):
        spec = AnsatzSpec(n, 2)
        out = qsim.run_ansatz(spec, rng.uniform(-np.pi, np.pi, spec.n_params))
        for shots in (7, 999, 10**5):
            freqs = qsim.sample_probabilities(out, shots, seed=n * shots)
            assert freqs.sum() == 1.0
            assert np.float64(np.sum(freqs[::-1])) == 1.0  # order independent


def test_sampling_rejects_bad_shots():
    with pytest.raises(ValueError):
        qsim.sample_probabilities(Statevector.zero(1), 0, seed=0)


def test_sampling_converges_with_shots():
    # sup-norm error shrinks like 1/sqrt(shots); checked against a 3-sigma
    # binomial bound with a union-bound factor sqrt(ln 2^N)
    rng = np.random.default_rng(41)
    spec = AnsatzSpec(5, 3)
    out = qsim.run_ansatz(spec, rng.uniform(-np.pi, np.pi, spec.n_params))
    exact = qsim.probabilities(out)
    for shots in (10**3, 10**5):
        bound = 3 * np.sqrt(0.25 / shots) * np.sqrt(np.log(2**5))
        for seed in range(5):
            freqs = qsim.sample_probabilities(out, shots, seed=seed)
            assert np.max(np.abs(freqs - exact)) < bound


# ---------------------------------------------------------------------------
# grad_ansatz


def loss_fn(spec, coeffs):
    def f(theta):
        return float(coeffs @ qsim.probabilities(qsim.run_ansatz(spec, theta)))

    return f


def test_grad_zero_coefficients():
    spec = AnsatzSpec(3, 2)
    rng = np.random.default_rng(43)
    theta = rng.uniform(-np.pi, np.pi, spec.n_params)
    assert np.array_equal(qsim.grad_ansatz(spec, theta, np.zeros(8)), np.zeros(spec.n_params))


def test_grad_matches_finite_differences_small():
    rng = np.random.default_rng(47)
    spec = AnsatzSpec(2, 1)
    theta = rng.uniform(-np.pi, np.pi, spec.n_params)
    coeffs = rng.standard_normal(4)
    got = qsim.grad_ansatz(spec, theta, coeffs)
    want = finite_difference(loss_fn(spec, coeffs), theta)
    assert relative_error(got, want) < 1e-6


@pytest.mark.parametrize("seed", range(20))
def test_grad_matches_finite_differences_sweep(seed):
    rng = np.random.default_rng(1000 + seed)
    spec = AnsatzSpec(int(rng.integers(2, 5)), int(rng.integers(1, 4)))
    theta = rng.uniform(-np.pi, np.pi, spec.n_params)
    coeffs = rng.standard_normal(1 << spec.n_qubits)
    got = qsim.grad_ansatz(spec, theta, coeffs)
    want = finite_difference(loss_fn(spec, coeffs), theta)
    assert relative_error(got, want) < 1e-5


def test_grad_rejects_bad_shapes():
    spec = AnsatzSpec(2, 1)
    with pytest.raises(ValueError):
        qsim.grad_ansatz(spec, np.zeros(spec.n_params), np.zeros(3))
    with pytest.raises(ValueError):
        qsim.grad_ansatz(spec, np.zeros(4), np.zeros(4))


# ---------------------------------------------------------------------------
# Statevector basics


def test_statevector_rejects_bad_lengths():
    with pytest.raises(ValueError):
        Statevector(np.zeros(3, dtype=complex))
    with pytest.raises(ValueError):
        Statevector(np.zeros(0, dtype=complex))


def test_statevector_copy_is_independent():
    a = Statevector.zero(2)
    b = a.copy()
    qsim.apply_u3(a, 0, (np.pi, 0, np.pi))
    assert np.allclose(b.amplitudes, [1, 0, 0, 0])
