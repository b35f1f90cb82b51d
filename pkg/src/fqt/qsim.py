"""Exact statevector simulation of the layered U3/CU3 ansatz.

Conventions:
- Basis index: qubit 0 is the least-significant bit of the amplitude index,
  so ``amplitudes[5]`` of a 3-qubit state is |q2=1, q1=0, q0=1>.
- Circuit layer: U3 on every qubit (0..N-1) first, then CU3 on neighboring
  pairs with control i and target i+1, for i = 0..N-2 (open chain, no wrap).
- Parameter layout: layer-major; within a layer, N U3 triples followed by
  N-1 CU3 triples, each triple ordered (mu, varphi, lam).

Everything is complex128 / float64. Gradients are reverse-mode adjoint:
one forward pass, then gate-by-gate un-application with analytic
per-parameter derivative matrices, which is exact (no shift rules).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AnsatzSpec",
    "Statevector",
    "u3_matrix",
    "apply_u3",
    "apply_cu3",
    "run_ansatz",
    "probabilities",
    "sample_probabilities",
    "grad_ansatz",
]

# Empirical frequencies are snapped to this dyadic grid so that their
# floating-point sum is exactly 1.0 in any summation order.
_FREQ_GRID = 1 << 52


@dataclass(frozen=True)
class AnsatzSpec:
    """Shape of the circuit: qubit count N and layer repetitions L."""

    n_qubits: int
    n_layers: int

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be >= 1, got {self.n_qubits}")
        if self.n_layers < 1:
            raise ValueError(f"n_layers must be >= 1, got {self.n_layers}")

    @property
    def params_per_layer(self) -> int:
        # 3N for the U3 column plus 3(N-1) for the CU3 chain
        return 6 * self.n_qubits - 3

    @property
    def n_params(self) -> int:
        return self.n_layers * self.params_per_layer


class Statevector:
    """Complex amplitude vector of an N-qubit pure state (length 2^N)."""

    __slots__ = ("n_qubits", "amplitudes")

    def __init__(self, amplitudes: np.ndarray):
        amps = np.asarray(amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.size == 0 or (amps.size & (amps.size - 1)) != 0:
            raise ValueError(f"amplitude vector length must be a power of two, got shape {amps.shape}")
        self.n_qubits = amps.size.bit_length() - 1
        if self.n_qubits < 1:
            raise ValueError("need at least one qubit")
        self.amplitudes = amps

    @classmethod
    def zero(cls, n_qubits: int) -> "Statevector":
        """|0>^(x)N."""
        if n_qubits < 1:
            raise ValueError(f"n_qubits must be >= 1, got {n_qubits}")
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(amps)

    def copy(self) -> "Statevector":
        return Statevector(self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def u3_matrix(mu: float, varphi: float, lam: float) -> np.ndarray:
    """General single-qubit rotation as a 2x2 unitary."""
    if not (math.isfinite(mu) and math.isfinite(varphi) and math.isfinite(lam)):
        raise ValueError(f"gate angles must be finite, got ({mu}, {varphi}, {lam})")
    c, s = math.cos(mu / 2), math.sin(mu / 2)
    return np.array(
        [
            [c, -np.exp(1j * lam) * s],
            [np.exp(1j * varphi) * s, np.exp(1j * (varphi + lam)) * c],
        ]
    )


def _u3_derivatives(mu: float, varphi: float, lam: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Entrywise derivatives of u3_matrix with respect to each angle."""
    c, s = math.cos(mu / 2), math.sin(mu / 2)
    e_l, e_p, e_pl = np.exp(1j * lam), np.exp(1j * varphi), np.exp(1j * (varphi + lam))
    d_mu = 0.5 * np.array([[-s, -e_l * c], [e_p * c, -e_pl * s]])
    d_varphi = np.array([[0.0, 0.0], [1j * e_p * s, 1j * e_pl * c]])
    d_lam = np.array([[0.0, -1j * e_l * s], [0.0, 1j * e_pl * c]])
    return d_mu, d_varphi, d_lam


def _apply_1q(amps: np.ndarray, qubit: int, mat: np.ndarray) -> None:
    """In-place 2x2 matrix action on one qubit (index = bit position)."""
    view = amps.reshape(-1, 2, 1 << qubit)
    a0 = view[:, 0, :].copy()
    a1 = view[:, 1, :]
    view[:, 0, :] = mat[0, 0] * a0 + mat[0, 1] * a1
    view[:, 1, :] = mat[1, 0] * a0 + mat[1, 1] * a1


def _control_slices(n: int, control: int, target: int):
    """Target-qubit axis pair of the control=1 subspace, as writable views."""
    c_ax, t_ax = n - 1 - control, n - 1 - target
    idx = [slice(None)] * n
    idx[c_ax] = 1
    sub = np.s_[tuple(idx)]
    t_sub = t_ax - 1 if t_ax > c_ax else t_ax
    return sub, t_sub


def _apply_ctrl_1q(amps: np.ndarray, n: int, control: int, target: int, mat: np.ndarray) -> None:
    """In-place controlled 2x2 action: identity on the control=0 subspace."""
    sub, t_sub = _control_slices(n, control, target)
    swept = np.moveaxis(amps.reshape((2,) * n)[sub], t_sub, 0)
    a0 = swept[0].copy()
    a1 = swept[1]
    swept[0] = mat[0, 0] * a0 + mat[0, 1] * a1
    swept[1] = mat[1, 0] * a0 + mat[1, 1] * a1


def _deriv_apply_1q(amps: np.ndarray, qubit: int, dmat: np.ndarray) -> np.ndarray:
    """Derivative-matrix action of a U3 gate, into a fresh vector."""
    out = np.empty_like(amps)
    src = amps.reshape(-1, 2, 1 << qubit)
    dst = out.reshape(-1, 2, 1 << qubit)
    dst[:, 0, :] = dmat[0, 0] * src[:, 0, :] + dmat[0, 1] * src[:, 1, :]
    dst[:, 1, :] = dmat[1, 0] * src[:, 0, :] + dmat[1, 1] * src[:, 1, :]
    return out


def _ctrl_deriv_apply(amps: np.ndarray, n: int, control: int, target: int, dmat: np.ndarray) -> np.ndarray:
    """Derivative-matrix action of a CU3 gate: zero on the control=0 subspace."""
    out = np.zeros_like(amps)
    sub, t_sub = _control_slices(n, control, target)
    src = np.moveaxis(amps.reshape((2,) * n)[sub], t_sub, 0)
    dst = np.moveaxis(out.reshape((2,) * n)[sub], t_sub, 0)
    dst[0] = dmat[0, 0] * src[0] + dmat[0, 1] * src[1]
    dst[1] = dmat[1, 0] * src[0] + dmat[1, 1] * src[1]
    return out


def _check_qubit(state: Statevector, qubit: int) -> None:
    if not 0 <= qubit < state.n_qubits:
        raise IndexError(f"qubit {qubit} out of range for {state.n_qubits}-qubit state")


def apply_u3(state: Statevector, qubit: int, params) -> Statevector:
    """Apply U3(mu, varphi, lam) to one qubit, in place."""
    _check_qubit(state, qubit)
    mu, varphi, lam = params
    _apply_1q(state.amplitudes, qubit, u3_matrix(mu, varphi, lam))
    return state


def apply_cu3(state: Statevector, control: int, target: int, params) -> Statevector:
    """Apply CU3 (U3 on target where the control bit is 1), in place."""
    if control == target:
        raise ValueError(f"control and target must differ, both are {control}")
    _check_qubit(state, control)
    _check_qubit(state, target)
    mu, varphi, lam = params
    _apply_ctrl_1q(state.amplitudes, state.n_qubits, control, target, u3_matrix(mu, varphi, lam))
    return state


def _gate_sequence(spec: AnsatzSpec):
    """Gates in application order as (kind, qubits, theta_offset) triples."""
    n = spec.n_qubits
    seq = []
    off = 0
    for _ in range(spec.n_layers):
        for q in range(n):
            seq.append(("u3", (q,), off))
            off += 3
        for q in range(n - 1):
            seq.append(("cu3", (q, q + 1), off))
            off += 3
    return seq


def _check_theta(spec: AnsatzSpec, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.n_params,):
        raise ValueError(f"theta must have shape ({spec.n_params},), got {theta.shape}")
    return theta


def run_ansatz(spec: AnsatzSpec, theta: np.ndarray) -> Statevector:
    """Run the layered circuit on |0...0> and return the final state."""
    theta = _check_theta(spec, theta)
    state = Statevector.zero(spec.n_qubits)
    for kind, qubits, off in _gate_sequence(spec):
        p = theta[off : off + 3]
        if kind == "u3":
            apply_u3(state, qubits[0], p)
        else:
            apply_cu3(state, qubits[0], qubits[1], p)
    return state


def probabilities(state: Statevector) -> np.ndarray:
    """Basis measurement probabilities |<phi_i|psi>|^2."""
    amps = state.amplitudes
    return (amps.real * amps.real + amps.imag * amps.imag).astype(float)


def sample_probabilities(state: Statevector, shots: int, seed: int) -> np.ndarray:
    """Empirical basis frequencies from multinomial sampling.

    Deterministic for a fixed seed. Entries are quantized to a 2^-52 grid
    with largest-remainder rounding so the returned vector sums to exactly
    1.0; the quantization moves each entry by at most 2^N * 2^-52, far
    below shot noise.
    """
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    p = probabilities(state)
    counts = np.random.default_rng(seed).multinomial(shots, p / p.sum())
    scaled = [divmod(int(c) * _FREQ_GRID, shots) for c in counts]
    units = np.array([q for q, _ in scaled], dtype=np.int64)
    deficit = _FREQ_GRID - int(units.sum())
    if deficit:
        by_remainder = sorted(range(len(scaled)), key=lambda i: (-scaled[i][1], i))
        for i in by_remainder[:deficit]:
            units[i] += 1
    return units / float(_FREQ_GRID)


def grad_ansatz(spec: AnsatzSpec, theta: np.ndarray, dL_dp: np.ndarray) -> np.ndarray:
    """Gradient of L = sum_i dL_dp[i] * p_i(theta) with dL_dp held constant.

    Adjoint sweep: after the forward pass, each gate is un-applied from both
    the state and the adjoint vector; per parameter, the derivative matrix
    is applied to the pre-gate state and contracted with the adjoint.
    """
    theta = _check_theta(spec, theta)
    dL_dp = np.asarray(dL_dp, dtype=float)
    dim = 1 << spec.n_qubits
    if dL_dp.shape != (dim,):
        raise ValueError(f"dL_dp must have shape ({dim},), got {dL_dp.shape}")

    n = spec.n_qubits
    psi = run_ansatz(spec, theta).amplitudes
    # L = sum c_i psi_i psi_i*  =>  dL/dtheta = 2 Re <adj | dU ... |psi_pre>
    adj = dL_dp * psi
    grad = np.zeros(spec.n_params)
    for kind, qubits, off in reversed(_gate_sequence(spec)):
        mu, varphi, lam = theta[off : off + 3]
        inv = u3_matrix(mu, varphi, lam).conj().T
        derivs = _u3_derivatives(mu, varphi, lam)
        if kind == "u3":
            _apply_1q(psi, qubits[0], inv)
            for k, dmat in enumerate(derivs):
                xi = _deriv_apply_1q(psi, qubits[0], dmat)
                grad[off + k] = 2.0 * np.vdot(adj, xi).real
            _apply_1q(adj, qubits[0], inv)
        else:
            c, t = qubits
            _apply_ctrl_1q(psi, n, c, t, inv)
            for k, dmat in enumerate(derivs):
                xi = _ctrl_deriv_apply(psi, n, c, t, dmat)
                grad[off + k] = 2.0 * np.vdot(adj, xi).real
            _apply_ctrl_1q(adj, n, c, t, inv)
    return grad
