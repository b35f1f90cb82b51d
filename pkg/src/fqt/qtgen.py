"""Batched parameter generation: circuit probabilities -> target weights.

The m weights of the target model are split into n_ch = ceil(m / n_mlp)
chunks. Chunk i is produced by a small dense mapping network from the
feature vector (bits of i, LSB first, followed by the i-th basis
probability scaled by 2^N). The scaling keeps the probability feature
O(1); raw probabilities average 2^-N and would starve the first layer.

The reverse pass mirrors the forward exactly: mapping-network backprop
accumulates dL/dbeta and yields dL/dprob per chunk, which (rescaled by
2^N, zero on unused basis indices) feeds the adjoint circuit gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn, qsim

__all__ = [
    "ChunkPlan",
    "MappingModel",
    "GenerationTape",
    "plan_chunks",
    "basis_bits",
    "basis_features",
    "generate_params",
    "backprop_generation",
]


@dataclass(frozen=True)
class ChunkPlan:
    """Arithmetic tying target size m to chunk count and qubit count."""

    m: int
    n_mlp: int
    n_ch: int
    n_qubits: int

    def __post_init__(self):
        if self.m < 1 or self.n_mlp < 1:
            raise ValueError(f"m and n_mlp must be >= 1, got m={self.m}, n_mlp={self.n_mlp}")
        if self.n_ch != -(-self.m // self.n_mlp):
            raise ValueError(f"n_ch must be ceil(m / n_mlp) = {-(-self.m // self.n_mlp)}, got {self.n_ch}")
        if self.n_qubits != max(1, (self.n_ch - 1).bit_length()):
            raise ValueError(f"n_qubits must be max(1, ceil(log2 n_ch)), got {self.n_qubits}")


def plan_chunks(m: int, n_mlp: int) -> ChunkPlan:
    """Chunk count and qubit count for a target of m parameters.

    n_ch = ceil(m / n_mlp); n_qubits = max(1, ceil(log2 n_ch)). With
    n_mlp = 1 this reduces to one weight per basis probability.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if n_mlp < 1:
        raise ValueError(f"n_mlp must be >= 1, got {n_mlp}")
    n_ch = -(-m // n_mlp)
    n_qubits = max(1, (n_ch - 1).bit_length())
    return ChunkPlan(m=m, n_mlp=n_mlp, n_ch=n_ch, n_qubits=n_qubits)


def basis_bits(i: int, n_qubits: int) -> np.ndarray:
    """Binary expansion of a basis index, least-significant bit first."""
    return ((i >> np.arange(n_qubits)) & 1).astype(float)


def basis_features(i: int, plan: ChunkPlan, probs: np.ndarray) -> np.ndarray:
    """Mapping-network input for chunk i: [bits of i, probs[i] * 2^N]."""
    if not 0 <= i < plan.n_ch:
        raise IndexError(f"chunk index {i} out of range for n_ch={plan.n_ch}")
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (1 << plan.n_qubits,):
        raise ValueError(f"probs must have shape ({1 << plan.n_qubits},), got {probs.shape}")
    return np.append(basis_bits(i, plan.n_qubits), probs[i] * float(2**plan.n_qubits))


@dataclass(frozen=True)
class MappingModel:
    """Dense mapping network shape: (N+1) -> hidden (tanh) -> n_mlp (linear)."""

    n_qubits: int
    n_mlp: int
    hidden_dims: tuple[int, ...] = (32, 32)

    def __post_init__(self):
        if self.n_qubits < 1 or self.n_mlp < 1:
            raise ValueError("n_qubits and n_mlp must be >= 1")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError(f"hidden dims must be >= 1, got {self.hidden_dims}")

    def model_spec(self) -> nn.ModelSpec:
        layers: list = []
        prev = self.n_qubits + 1
        for h in self.hidden_dims:
            layers += [nn.Dense(prev, h), nn.Tanh()]
            prev = h
        layers.append(nn.Dense(prev, self.n_mlp))
        return nn.ModelSpec(input_shape=(self.n_qubits + 1,), layers=tuple(layers))

    @property
    def n_params(self) -> int:
        return nn.param_count(self.model_spec())


def init_mapping_params(mapping: MappingModel, rng: np.random.Generator) -> np.ndarray:
    return nn.init_params(mapping.model_spec(), rng)


@dataclass
class GenerationTape:
    """Reverse-mode cache for one generation pass.

    Holds frozen copies of (theta, beta) plus references to the caller's
    arrays; a mismatch between the two marks the tape as stale.
    """

    ansatz: qsim.AnsatzSpec
    mapping: MappingModel
    plan: ChunkPlan
    theta_ref: np.ndarray
    beta_ref: np.ndarray
    theta: np.ndarray
    beta: np.ndarray
    probs: np.ndarray
    features: np.ndarray
    nn_tape: tuple = field(repr=False, default=None)

    def is_fresh(self) -> bool:
        return (
            self.theta_ref.shape == self.theta.shape
            and self.beta_ref.shape == self.beta.shape
            and np.array_equal(self.theta_ref, self.theta)
            and np.array_equal(self.beta_ref, self.beta)
        )


def _check_dims(theta, beta, ansatz, mapping, plan):
    if ansatz.n_qubits != plan.n_qubits:
        raise ValueError(f"ansatz has {ansatz.n_qubits} qubits but the plan needs {plan.n_qubits}")
    if mapping.n_qubits != plan.n_qubits or mapping.n_mlp != plan.n_mlp:
        raise ValueError(
            f"mapping ({mapping.n_qubits} qubits, {mapping.n_mlp} outputs) does not match "
            f"plan ({plan.n_qubits} qubits, {plan.n_mlp} outputs)"
        )
    if theta.shape != (ansatz.n_params,):
        raise ValueError(f"theta must have shape ({ansatz.n_params},), got {theta.shape}")
    if beta.shape != (mapping.n_params,):
        raise ValueError(f"beta must have shape ({mapping.n_params},), got {beta.shape}")


def generate_params(
    theta: np.ndarray,
    beta: np.ndarray,
    ansatz: qsim.AnsatzSpec,
    mapping: MappingModel,
    plan: ChunkPlan,
):
    """Generate the target weight vector omega from (theta, beta).

    One circuit run, one batched mapping-network pass over the n_ch chunk
    features, concatenation, truncation to the first m values. Returns
    (omega, tape). Deterministic: identical inputs give identical omega.
    """
    theta = np.asarray(theta, dtype=float)
    beta = np.asarray(beta, dtype=float)
    _check_dims(theta, beta, ansatz, mapping, plan)

    probs = qsim.probabilities(qsim.run_ansatz(ansatz, theta))
    n, n_ch = plan.n_qubits, plan.n_ch
    feats = np.empty((n_ch, n + 1))
    feats[:, :n] = (np.arange(n_ch)[:, None] >> np.arange(n)[None, :]) & 1
    feats[:, n] = probs[:n_ch] * float(2**n)

    outputs, nn_tape = nn.forward_tape(mapping.model_spec(), beta, feats)
    omega = outputs.reshape(-1)[: plan.m].copy()
    tape = GenerationTape(
        ansatz=ansatz,
        mapping=mapping,
        plan=plan,
        theta_ref=theta,
        beta_ref=beta,
        theta=theta.copy(),
        beta=beta.copy(),
        probs=probs,
        features=feats,
        nn_tape=nn_tape,
    )
    return omega, tape


def backprop_generation(dL_domega: np.ndarray, tape: GenerationTape):
    """Pull a gradient on omega back to (dL_dtheta, dL_dbeta).

    The surplus outputs of the last chunk and the basis indices >= n_ch
    contribute nothing, by construction of the forward pass.
    """
    if not tape.is_fresh():
        raise RuntimeError("generation tape is stale: theta or beta changed since generate_params")
    plan = tape.plan
    dL_domega = np.asarray(dL_domega, dtype=float)
    if dL_domega.shape != (plan.m,):
        raise ValueError(f"dL_domega must have shape ({plan.m},), got {dL_domega.shape}")

    d_out = np.zeros(plan.n_ch * plan.n_mlp)
    d_out[: plan.m] = dL_domega
    dL_dbeta, d_feats = nn.backward_tape(tape.nn_tape, d_out.reshape(plan.n_ch, plan.n_mlp))

    dL_dp = np.zeros(1 << plan.n_qubits)
    dL_dp[: plan.n_ch] = d_feats[:, plan.n_qubits] * float(2**plan.n_qubits)
    dL_dtheta = qsim.grad_ansatz(tape.ansatz, tape.theta, dL_dp)
    return dL_dtheta, dL_dbeta
