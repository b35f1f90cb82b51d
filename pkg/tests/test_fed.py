"""Federation tests: sharding, averaging, client loop vs centralized oracle."""

import numpy as np
import pytest

from fqt import data, fed, nn, qtgen
from fqt.fed import FederatedConfig


def desk_setup(hidden=(8,), n_mlp=8, layers=2, mapping_hidden=(6,), input_dim=6, n_classes=3):
    target = nn.mlp_tiny(input_dim, n_classes, hidden)
    return fed.build_setup(target, n_mlp=n_mlp, n_layers=layers, mapping_hidden=mapping_hidden)


def desk_data(seed=11, n_per_class=40, input_dim=6, n_classes=3, separation=4.0):
    return data.synthetic_blobs(n_classes, n_per_class, input_dim, separation, seed)


# ---------------------------------------------------------------------------
# partition_dataset


def test_partition_equal_split():
    ds = data.Dataset(np.zeros((100, 2)), np.zeros(100, dtype=int), 1, "train")
    shards = fed.partition_dataset(ds, 4, seed=0)
    assert [s.n for s in shards] == [25, 25, 25, 25]


def test_partition_near_equal_split():
    ds = data.Dataset(np.zeros((10, 2)), np.zeros(10, dtype=int), 1, "train")
    shards = fed.partition_dataset(ds, 3, seed=0)
    assert sorted(s.n for s in shards) == [3, 3, 4]


def test_partition_single_client_is_permutation():
    rng = np.random.default_rng(1)
    ds = data.Dataset(rng.standard_normal((30, 3)), rng.integers(0, 2, 30), 2, "train")
    (shard,) = fed.partition_dataset(ds, 1, seed=5)
    assert shard.n == 30
    assert sorted(map(tuple, shard.inputs)) == sorted(map(tuple, ds.inputs))
    assert not np.array_equal(shard.inputs, ds.inputs)  # actually permuted


def test_partition_disjoint_union():
    rng = np.random.default_rng(2)
    ds = data.Dataset(np.arange(23)[:, None] * 1.0, rng.integers(0, 2, 23), 2, "train")
    shards = fed.partition_dataset(ds, 4, seed=9)
    seen = np.concatenate([s.inputs[:, 0] for s in shards])
    assert sorted(seen) == list(range(23))


def test_partition_deterministic():
    ds = data.Dataset(np.arange(12)[:, None] * 1.0, np.zeros(12, dtype=int), 1, "train")
    a = fed.partition_dataset(ds, 3, seed=4)
    b = fed.partition_dataset(ds, 3, seed=4)
    for x, y in zip(a, b):
        assert np.array_equal(x.inputs, y.inputs)


def test_partition_rejects_too_many_clients():
    ds = data.Dataset(np.zeros((3, 1)), np.zeros(3, dtype=int), 1, "train")
    with pytest.raises(ValueError):
        fed.partition_dataset(ds, 4, seed=0)


def test_empty_shards_unrepresentable():
    # the guard against zero-batch local training is structural: datasets
    # cannot be empty and partitions never produce empty shards
    with pytest.raises(ValueError):
        data.Dataset(np.zeros((0, 2)), np.zeros(0, dtype=int), 1, "train")


# ---------------------------------------------------------------------------
# aggregate


def test_aggregate_identical_clients_unchanged():
    rng = np.random.default_rng(3)
    th, be = rng.standard_normal(7), rng.standard_normal(5)
    out_th, out_be = fed.aggregate([(th, be), (th.copy(), be.copy())], [1.0, 1.0])
    assert np.max(np.abs(out_th - th)) < 1e-15
    assert np.max(np.abs(out_be - be)) < 1e-15


def test_aggregate_opposite_vectors_cancel():
    v = np.arange(1.0, 6.0)
    b = np.ones(3)
    th, be = fed.aggregate([(v, b), (-v, b)], [1.0, 1.0])
    assert np.array_equal(th, np.zeros(5))
    assert np.array_equal(be, b)


def test_aggregate_size_weights_hand_computed():
    ths = [np.array([1.0, 0.0]), np.array([0.0, 2.0]), np.array([4.0, 4.0])]
    bes = [np.array([1.0]), np.array([3.0]), np.array([5.0])]
    th, be = fed.aggregate(list(zip(ths, bes)), [2.0, 1.0, 1.0])
    # hand computation: weights (0.5, 0.25, 0.25)
    assert np.max(np.abs(th - np.array([0.5 + 1.0, 0.5 + 1.0]))) < 1e-15
    assert abs(be[0] - (0.5 + 0.75 + 1.25)) < 1e-15


def test_aggregate_permutation_invariant():
    rng = np.random.default_rng(5)
    params = [(rng.standard_normal(9), rng.standard_normal(4)) for _ in range(5)]
    a = fed.aggregate(params, [1.0] * 5)
    b = fed.aggregate(params[::-1], [1.0] * 5)
    assert np.max(np.abs(a[0] - b[0])) < 1e-12
    assert np.max(np.abs(a[1] - b[1])) < 1e-12


def test_aggregate_rejects_bad_input():
    v = (np.ones(2), np.ones(2))
    with pytest.raises(ValueError):
        fed.aggregate([], [])
    with pytest.raises(ValueError):
        fed.aggregate([v, v], [1.0])
    with pytest.raises(ValueError):
        fed.aggregate([v, v], [0.0, 0.0])
    with pytest.raises(ValueError):
        fed.aggregate([v, (np.ones(3), np.ones(2))], [1.0, 1.0])


# ---------------------------------------------------------------------------
# local_train


def test_local_train_single_batch_equals_one_optimizer_step():
    setup = desk_setup()
    train, _ = desk_data()
    cfg = FederatedConfig(n_clients=1, n_rounds=1, local_epochs=1, batch_size=train.n, learning_rate=0.05, seed=7)
    theta0, beta0 = fed.init_global_params(setup, cfg.seed)
    (shard,) = fed.partition_dataset(train, 1, cfg.seed)
    client = fed.ClientState(0, shard, np.random.default_rng([cfg.seed, 2, 0]))
    theta1, beta1, trace = fed.local_train(client, theta0, beta0, cfg, setup)
    assert len(trace) == 1

    # oracle: one explicit step over the same (whole-shard) batch
    order = np.random.default_rng([cfg.seed, 2, 0]).permutation(shard.n)
    omega, tape = qtgen.generate_params(theta0, beta0, setup.ansatz, setup.mapping, setup.plan)
    loss, d_omega = nn.loss_and_grad(setup.target, omega, shard.inputs[order], shard.labels[order])
    d_theta, d_beta = qtgen.backprop_generation(d_omega, tape)
    adam = nn.adam_init(setup.n_trainable, lr=cfg.learning_rate)
    packed = nn.optimizer_step(adam, np.concatenate([theta0, beta0]), np.concatenate([d_theta, d_beta]))
    assert np.array_equal(theta1, packed[: theta0.size])
    assert np.array_equal(beta1, packed[theta0.size :])
    assert trace[0] == loss


def test_local_train_does_not_mutate_globals():
    setup = desk_setup()
    train, _ = desk_data()
    cfg = FederatedConfig(n_clients=1, n_rounds=1, batch_size=16, learning_rate=0.05, seed=3)
    theta0, beta0 = fed.init_global_params(setup, cfg.seed)
    snap_t, snap_b = theta0.copy(), beta0.copy()
    (shard,) = fed.partition_dataset(train, 1, cfg.seed)
    client = fed.ClientState(0, shard, np.random.default_rng([cfg.seed, 2, 0]))
    fed.local_train(client, theta0, beta0, cfg, setup)
    assert np.array_equal(theta0, snap_t)
    assert np.array_equal(beta0, snap_b)


def test_local_train_loss_decreases_across_seeds():
    # a learnable shard: the end of the trace should not exceed the start
    # in at least 90% of seeded runs
    setup = desk_setup()
    wins = 0
    for seed in range(20):
        train, _ = desk_data(seed=100 + seed)
        cfg = FederatedConfig(n_clients=1, n_rounds=1, local_epochs=5, batch_size=16, learning_rate=0.02, seed=seed)
        theta0, beta0 = fed.init_global_params(setup, cfg.seed)
        (shard,) = fed.partition_dataset(train, 1, cfg.seed)
        client = fed.ClientState(0, shard, np.random.default_rng([cfg.seed, 2, 0]))
        _, _, trace = fed.local_train(client, theta0, beta0, cfg, setup)
        assert np.isfinite(trace).all()
        if trace[-1] <= trace[0]:
            wins += 1
    assert wins >= 18


# ---------------------------------------------------------------------------
# run_federated vs run_centralized


def capture_rounds(runner, cfg, setup, train, test):
    snaps = []
    runner(cfg, setup, train, test, on_round=lambda r, th, be, m: snaps.append((th.copy(), be.copy())))
    return snaps


def test_one_client_federation_equals_centralized():
    setup = desk_setup()
    train, test = desk_data()
    cfg = FederatedConfig(n_clients=1, n_rounds=5, local_epochs=1, batch_size=16, learning_rate=0.02, seed=13)
    fed_snaps = capture_rounds(fed.run_federated, cfg, setup, train, test)
    cen_snaps = capture_rounds(fed.run_centralized, cfg, setup, train, test)
    for (ft, fb), (ct, cb) in zip(fed_snaps, cen_snaps):
        assert np.max(np.abs(ft - ct)) <= 1e-12
        assert np.max(np.abs(fb - cb)) <= 1e-12


def test_one_client_metrics_match_centralized():
    setup = desk_setup()
    train, test = desk_data()
    cfg = FederatedConfig(n_clients=1, n_rounds=3, local_epochs=1, batch_size=16, learning_rate=0.02, seed=17)
    a = fed.run_federated(cfg, setup, train, test).metrics
    b = fed.run_centralized(cfg, setup, train, test).metrics
    for ra, rb in zip(a, b):
        assert abs(ra.train_loss - rb.train_loss) <= 1e-12
        assert ra.train_acc == rb.train_acc
        assert ra.test_acc == rb.test_acc


def test_round_count_contract():
    with pytest.raises(ValueError):
        FederatedConfig(n_clients=1, n_rounds=0)
    setup = desk_setup()
    train, test = desk_data(n_per_class=10)
    cfg = FederatedConfig(n_clients=2, n_rounds=1, batch_size=8, learning_rate=0.02, seed=1)
    result = fed.run_federated(cfg, setup, train, test)
    assert len(result.metrics) == 1
    assert len(result.metrics[0].client_losses) == 2


def test_run_federated_reproducible():
    setup = desk_setup()
    train, test = desk_data(n_per_class=15)
    cfg = FederatedConfig(n_clients=3, n_rounds=2, batch_size=8, learning_rate=0.02, seed=23)
    a = fed.run_federated(cfg, setup, train, test)
    b = fed.run_federated(cfg, setup, train, test)
    assert np.array_equal(a.theta, b.theta)
    assert np.array_equal(a.beta, b.beta)
    for ra, rb in zip(a.metrics, b.metrics):
        assert ra.client_losses == rb.client_losses
        assert ra.train_loss == rb.train_loss
        assert ra.train_acc == rb.train_acc
        assert ra.test_acc == rb.test_acc


def test_metrics_fields_sane():
    setup = desk_setup()
    train, test = desk_data(n_per_class=12)
    cfg = FederatedConfig(n_clients=2, n_rounds=2, batch_size=8, learning_rate=0.02, seed=29)
    for record in fed.run_federated(cfg, setup, train, test).metrics:
        assert np.isfinite(record.client_losses).all()
        assert np.isfinite(record.train_loss)
        assert 0.0 <= record.train_acc <= 1.0
        assert 0.0 <= record.test_acc <= 1.0
        assert record.wall_clock >= 0.0


def test_more_local_epochs_lower_loss():
    # soft monotone trend: averaged over 5 seeds, 5 local epochs should end
    # with a lower global train loss than 1 local epoch
    setup = desk_setup()
    finals = {}
    for epochs in (1, 5):
        vals = []
        for seed in range(5):
            train, test = desk_data(seed=40 + seed, n_per_class=25)
            cfg = FederatedConfig(
                n_clients=2, n_rounds=6, local_epochs=epochs, batch_size=16, learning_rate=0.02, seed=seed
            )
            vals.append(fed.run_federated(cfg, setup, train, test).metrics[-1].train_loss)
        finals[epochs] = float(np.mean(vals))
    assert finals[5] < finals[1]


def test_size_weighted_aggregation_runs():
    setup = desk_setup()
    train, test = desk_data(n_per_class=13)
    cfg = FederatedConfig(n_clients=3, n_rounds=1, batch_size=8, learning_rate=0.02, seed=31, aggregation="size_weighted")
    result = fed.run_federated(cfg, setup, train, test)
    assert len(result.metrics) == 1
