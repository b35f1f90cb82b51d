"""Federated orchestration: shard, train locally, average, iterate.

Every round broadcasts the global (theta, beta), runs each client's local
training on its own shard, and replaces the globals with the weighted
elementwise mean of the client results. Only parameters travel; optimizer
state is client-local and is re-created at each broadcast.

Determinism contract: all randomness is drawn from named streams derived
from the run seed (parameter init, dataset partition, one shuffling stream
per client id), clients are processed in id order, and aggregation sums in
id order, so a config + seed pins the entire metrics stream. The global
model is evaluated on weights round-tripped through float32, i.e. exactly
the weights a classical-only consumer of the exported file would run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import data, nn, qsim, qtgen

__all__ = [
    "FederatedConfig",
    "TrainSetup",
    "ClientState",
    "RoundMetrics",
    "FederatedResult",
    "build_setup",
    "init_global_params",
    "partition_dataset",
    "local_train",
    "aggregate",
    "run_federated",
    "run_centralized",
    "evaluate_global",
]

_AGGREGATIONS = ("uniform", "size_weighted")

# stream ids for np.random.default_rng([seed, stream, ...])
_STREAM_INIT = 0
_STREAM_PARTITION = 1
_STREAM_CLIENT = 2


@dataclass(frozen=True)
class FederatedConfig:
    n_clients: int
    n_rounds: int
    local_epochs: int = 1
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    aggregation: str = "uniform"

    def __post_init__(self):
        for name in ("n_clients", "n_rounds", "local_epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.aggregation not in _AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {_AGGREGATIONS}, got {self.aggregation!r}")


@dataclass(frozen=True)
class TrainSetup:
    """Everything that defines the generator and the target it feeds."""

    target: nn.ModelSpec
    plan: qtgen.ChunkPlan
    ansatz: qsim.AnsatzSpec
    mapping: qtgen.MappingModel

    @property
    def n_trainable(self) -> int:
        return self.ansatz.n_params + self.mapping.n_params


def build_setup(
    target: nn.ModelSpec,
    n_mlp: int,
    n_layers: int,
    mapping_hidden: tuple[int, ...] = (32, 32),
) -> TrainSetup:
    """Derive the chunk plan and circuit shape from the target model."""
    m = nn.param_count(target)
    plan = qtgen.plan_chunks(m, n_mlp)
    return TrainSetup(
        target=target,
        plan=plan,
        ansatz=qsim.AnsatzSpec(plan.n_qubits, n_layers),
        mapping=qtgen.MappingModel(plan.n_qubits, n_mlp, tuple(mapping_hidden)),
    )


@dataclass
class ClientState:
    """One participant: its shard and its private shuffling stream."""

    client_id: int
    shard: data.Dataset
    rng: np.random.Generator


@dataclass
class RoundMetrics:
    round_index: int
    client_losses: tuple[float, ...]
    train_loss: float
    train_acc: float
    test_acc: float
    wall_clock: float


@dataclass
class FederatedResult:
    metrics: list[RoundMetrics]
    theta: np.ndarray
    beta: np.ndarray


def init_global_params(setup: TrainSetup, seed: int):
    """Initial (theta, beta): angles uniform in [-pi, pi], fan-in net init."""
    rng = np.random.default_rng([seed, _STREAM_INIT])
    theta = rng.uniform(-np.pi, np.pi, setup.ansatz.n_params)
    beta = qtgen.init_mapping_params(setup.mapping, rng)
    return theta, beta


def partition_dataset(dataset: data.Dataset, n_clients: int, seed: int) -> list[data.Dataset]:
    """IID split into near-equal disjoint shards (sizes differ by <= 1)."""
    if n_clients < 1:
        raise ValueError(f"n_clients must be >= 1, got {n_clients}")
    if n_clients > dataset.n:
        raise ValueError(f"cannot split {dataset.n} samples across {n_clients} clients")
    order = np.random.default_rng([seed, _STREAM_PARTITION]).permutation(dataset.n)
    return [dataset.subset(chunk) for chunk in np.array_split(order, n_clients)]


def _train_pass(theta, beta, adam, shard, cfg, setup, rng):
    """One shuffled epoch of minibatch steps; returns per-batch losses."""
    order = rng.permutation(shard.n)
    losses = []
    for lo in range(0, shard.n, cfg.batch_size):
        idx = order[lo : lo + cfg.batch_size]
        omega, tape = qtgen.generate_params(theta, beta, setup.ansatz, setup.mapping, setup.plan)
        loss, d_omega = nn.loss_and_grad(setup.target, omega, shard.inputs[idx], shard.labels[idx])
        d_theta, d_beta = qtgen.backprop_generation(d_omega, tape)
        packed = nn.optimizer_step(adam, np.concatenate([theta, beta]), np.concatenate([d_theta, d_beta]))
        theta, beta = packed[: theta.size], packed[theta.size :]
        losses.append(loss)
    return theta, beta, losses


def local_train(client: ClientState, global_theta, global_beta, cfg: FederatedConfig, setup: TrainSetup):
    """Copy the globals, run local_epochs shuffled passes over the shard.

    Returns (theta, beta, per-batch loss trace). A shard too small to form
    any batch returns the globals unchanged.
    """
    theta = np.asarray(global_theta, dtype=float).copy()
    beta = np.asarray(global_beta, dtype=float).copy()
    adam = nn.adam_init(setup.n_trainable, lr=cfg.learning_rate)
    trace = []
    for _ in range(cfg.local_epochs):
        theta, beta, losses = _train_pass(theta, beta, adam, client.shard, cfg, setup, client.rng)
        trace.extend(losses)
    return theta, beta, trace


def aggregate(params: list[tuple[np.ndarray, np.ndarray]], weights) -> tuple[np.ndarray, np.ndarray]:
    """Weighted elementwise mean of (theta, beta) pairs, weights normalized."""
    if not params:
        raise ValueError("nothing to aggregate")
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(params),):
        raise ValueError(f"need one weight per client, got {w.shape} for {len(params)} clients")
    if (w < 0).any() or w.sum() <= 0:
        raise ValueError("weights must be nonnegative with a positive sum")
    w = w / w.sum()
    theta_shape, beta_shape = params[0][0].shape, params[0][1].shape
    for th, be in params:
        if th.shape != theta_shape or be.shape != beta_shape:
            raise ValueError("client parameter shapes disagree")
    theta_g = np.zeros(theta_shape)
    beta_g = np.zeros(beta_shape)
    for wi, (th, be) in zip(w, params):
        theta_g += wi * th
        beta_g += wi * be
    return theta_g, beta_g


def deployed_weights(setup: TrainSetup, theta, beta) -> np.ndarray:
    """Generated weights as a classical consumer sees them (float32 round trip)."""
    omega, _ = qtgen.generate_params(theta, beta, setup.ansatz, setup.mapping, setup.plan)
    return omega.astype(np.float32).astype(np.float64)


def evaluate_global(setup: TrainSetup, theta, beta, train: data.Dataset, test: data.Dataset):
    omega = deployed_weights(setup, theta, beta)
    train_loss = nn.mean_loss(setup.target, omega, train.inputs, train.labels)
    train_acc = nn.accuracy(setup.target, omega, train.inputs, train.labels)
    test_acc = nn.accuracy(setup.target, omega, test.inputs, test.labels)
    return train_loss, train_acc, test_acc


def _mean(values):
    return float(np.mean(values)) if values else float("nan")


def run_federated(
    cfg: FederatedConfig,
    setup: TrainSetup,
    train: data.Dataset,
    test: data.Dataset,
    on_round=None,
) -> FederatedResult:
    """Full federated run; deterministic for a fixed (cfg, setup, data)."""
    theta_g, beta_g = init_global_params(setup, cfg.seed)
    shards = partition_dataset(train, cfg.n_clients, cfg.seed)
    clients = [
        ClientState(cid, shard, np.random.default_rng([cfg.seed, _STREAM_CLIENT, cid]))
        for cid, shard in enumerate(shards)
    ]
    metrics: list[RoundMetrics] = []
    for r in range(cfg.n_rounds):
        t0 = time.perf_counter()
        results = [local_train(c, theta_g, beta_g, cfg, setup) for c in clients]
        if cfg.aggregation == "size_weighted":
            weights = [c.shard.n for c in clients]
        else:
            weights = [1.0] * len(clients)
        theta_g, beta_g = aggregate([(th, be) for th, be, _ in results], weights)
        train_loss, train_acc, test_acc = evaluate_global(setup, theta_g, beta_g, train, test)
        record = RoundMetrics(
            round_index=r,
            client_losses=tuple(_mean(trace) for _, _, trace in results),
            train_loss=train_loss,
            train_acc=train_acc,
            test_acc=test_acc,
            wall_clock=time.perf_counter() - t0,
        )
        metrics.append(record)
        if on_round is not None:
            on_round(r, theta_g, beta_g, record)
    return FederatedResult(metrics, theta_g, beta_g)


def run_centralized(
    cfg: FederatedConfig,
    setup: TrainSetup,
    train: data.Dataset,
    test: data.Dataset,
    on_round=None,
) -> FederatedResult:
    """Plain single-node loop with the same stream derivations.

    One epoch corresponds to one federated round: the optimizer is
    re-created per epoch exactly as a broadcast re-creates it per round,
    so a 1-client federation must reproduce this trajectory bitwise.
    """
    theta, beta = init_global_params(setup, cfg.seed)
    shard = partition_dataset(train, 1, cfg.seed)[0]
    rng = np.random.default_rng([cfg.seed, _STREAM_CLIENT, 0])
    metrics: list[RoundMetrics] = []
    for r in range(cfg.n_rounds):
        t0 = time.perf_counter()
        adam = nn.adam_init(setup.n_trainable, lr=cfg.learning_rate)
        trace = []
        for _ in range(cfg.local_epochs):
            theta, beta, losses = _train_pass(theta, beta, adam, shard, cfg, setup, rng)
            trace.extend(losses)
        train_loss, train_acc, test_acc = evaluate_global(setup, theta, beta, train, test)
        record = RoundMetrics(
            round_index=r,
            client_losses=(_mean(trace),),
            train_loss=train_loss,
            train_acc=train_acc,
            test_acc=test_acc,
            wall_clock=time.perf_counter() - t0,
        )
        metrics.append(record)
        if on_round is not None:
            on_round(r, theta, beta, record)
    return FederatedResult(metrics, theta, beta)
