"""Command-line front end.

Subcommands:
  plan    chunk/qubit arithmetic and trainable-parameter counts
  train   federated run: metrics.csv, per-round checkpoints, final weights
  gen     regenerate a weight file from a (theta, beta) checkpoint
  infer   score an exported weight file (no simulator code is loaded)
  report  render figures and a summary table from a run directory

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
Subcommand handlers import their machinery lazily so that `infer` never
touches the quantum-simulation modules.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

__all__ = ["main"]

INCOMPLETE_MARKER = "RUN_INCOMPLETE"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fqt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="chunk/qubit arithmetic for a target size")
    p.add_argument("m", type=int, help="target-model parameter count")
    p.add_argument("n_mlp", type=int, help="weights generated per chunk")
    p.add_argument("--layers", type=int, default=5, help="circuit repetitions (default 5)")
    p.add_argument("--mapping-hidden", default="32,32", help="mapping-net hidden dims, e.g. 32,32")
    p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("train", help="run federated training from a config file")
    p.add_argument("--config", "-c", required=True, help="run configuration (INI)")
    p.add_argument("--output-dir", help="override [run] output_dir")

    p = sub.add_parser("gen", help="generate a weight file from a checkpoint")
    p.add_argument("--config", "-c", required=True, help="run configuration (INI)")
    p.add_argument("--theta", required=True, help="theta checkpoint (.npy)")
    p.add_argument("--beta", required=True, help="beta checkpoint (.npy)")
    p.add_argument("--out", "-o", required=True, help="output weight file")

    p = sub.add_parser("infer", help="score an exported weight file")
    p.add_argument("--weights", "-w", required=True, help="FQTW weight file")
    p.add_argument("--config", "-c", required=True, help="run configuration (INI)")
    p.add_argument("--split", choices=("train", "test"), default="test")

    p = sub.add_parser("report", help="render figures + summary from a run directory")
    p.add_argument("--run", "-r", required=True, help="directory containing metrics.csv")
    return parser


# ---------------------------------------------------------------------------
# plan


def _plan_numbers(m, n_mlp, layers, mapping_hidden):
    from . import qtgen

    plan = qtgen.plan_chunks(m, n_mlp)
    mapping = qtgen.MappingModel(plan.n_qubits, n_mlp, mapping_hidden)
    theta_size = layers * (6 * plan.n_qubits - 3)
    return {
        "m": plan.m,
        "n_mlp": plan.n_mlp,
        "n_ch": plan.n_ch,
        "n_qubits": plan.n_qubits,
        "n_layers": layers,
        "theta_size": theta_size,
        "beta_size": mapping.n_params,
        "trainable_total": theta_size + mapping.n_params,
        "compression_ratio": (theta_size + mapping.n_params) / plan.m,
    }


def _cmd_plan(args) -> int:
    if args.layers < 1:
        raise UsageError(f"--layers must be >= 1, got {args.layers}")
    try:
        hidden = tuple(int(h) for h in args.mapping_hidden.split(",") if h)
    except ValueError:
        raise UsageError(f"--mapping-hidden: expected comma-separated integers, got {args.mapping_hidden!r}")
    try:
        numbers = _plan_numbers(args.m, args.n_mlp, args.layers, hidden)
    except ValueError as exc:
        raise UsageError(str(exc))
    if args.json:
        print(json.dumps(numbers))
    else:
        width = max(len(k) for k in numbers)
        for key, value in numbers.items():
            shown = f"{value:.6f}" if isinstance(value, float) else value
            print(f"{key:<{width}}  {shown}")
    return 0


# ---------------------------------------------------------------------------
# train


def _fmt_float(x) -> str:
    return repr(float(x))


def _write_metrics_csv(path, metrics) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["round", "client_id", "train_loss", "train_acc", "test_acc"])
        for record in metrics:
            for cid, loss in enumerate(record.client_losses):
                writer.writerow([record.round_index, cid, _fmt_float(loss), "", ""])
            writer.writerow([
                record.round_index,
                "GLOBAL",
                _fmt_float(record.train_loss),
                _fmt_float(record.train_acc),
                _fmt_float(record.test_acc),
            ])


def _cmd_train(args) -> int:
    import numpy as np

    from . import config as cfgmod
    from . import fed, nn

    try:
        cfg = cfgmod.load_config(args.config)
    except cfgmod.ConfigError as exc:
        raise UsageError(str(exc))
    if args.output_dir:
        cfg.output_dir = args.output_dir
    out_dir = cfg.output_dir
    if out_dir == ".":
        out_dir = os.path.dirname(os.path.abspath(args.config))

    # validate and build everything before touching the output directory
    try:
        train_ds, test_ds = cfgmod.build_datasets(cfg)
        target = cfgmod.target_spec(cfg)
        setup = fed.build_setup(
            target, cfg.generator.n_mlp, cfg.generator.n_layers, cfg.generator.mapping_hidden
        )
        f = cfg.federated
        fed_cfg = fed.FederatedConfig(
            n_clients=f.n_clients,
            n_rounds=f.n_rounds,
            local_epochs=f.local_epochs,
            batch_size=f.batch_size,
            learning_rate=f.learning_rate,
            seed=cfg.seed,
            aggregation=f.aggregation,
        )
        if f.n_clients > train_ds.n:
            raise ValueError(f"{f.n_clients} clients cannot share {train_ds.n} training samples")
    except (cfgmod.ConfigError, ValueError) as exc:
        raise UsageError(str(exc))

    m = nn.param_count(target)
    derived = {
        "m": m,
        "n_ch": setup.plan.n_ch,
        "n_qubits": setup.plan.n_qubits,
        "theta_size": setup.ansatz.n_params,
        "beta_size": setup.mapping.n_params,
        "trainable_total": setup.n_trainable,
        "compression_ratio": repr(setup.n_trainable / m),
    }

    os.makedirs(out_dir, exist_ok=True)
    ckpt_dir = os.path.join(out_dir, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)
    marker = os.path.join(out_dir, INCOMPLETE_MARKER)
    with open(marker, "w") as fh:
        fh.write("training in progress or aborted\n")

    resolved = dataclasses.replace(cfg, output_dir=".")
    with open(os.path.join(out_dir, "config.resolved.ini"), "w") as fh:
        fh.write(cfgmod.dump_config(resolved, derived))

    def on_round(r, theta, beta, record):
        np.save(os.path.join(ckpt_dir, f"round_{r:04d}.theta.npy"), theta)
        np.save(os.path.join(ckpt_dir, f"round_{r:04d}.beta.npy"), beta)

    result = fed.run_federated(fed_cfg, setup, train_ds, test_ds, on_round=on_round)
    _write_metrics_csv(os.path.join(out_dir, "metrics.csv"), result.metrics)

    omega = fed.deployed_weights(setup, result.theta, result.beta)
    nn.save_weights(os.path.join(out_dir, "weights.fqtw"), omega)

    os.remove(marker)
    last = result.metrics[-1]
    print(f"completed {len(result.metrics)} rounds: "
          f"train_loss={last.train_loss:.6f} train_acc={last.train_acc:.4f} test_acc={last.test_acc:.4f}")
    print(f"outputs in {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# gen


def _cmd_gen(args) -> int:
    import numpy as np

    from . import config as cfgmod
    from . import fed, nn, qtgen

    try:
        cfg = cfgmod.load_config(args.config)
        target = cfgmod.target_spec(cfg)
        setup = fed.build_setup(
            target, cfg.generator.n_mlp, cfg.generator.n_layers, cfg.generator.mapping_hidden
        )
        theta = np.load(args.theta)
        beta = np.load(args.beta)
    except cfgmod.ConfigError as exc:
        raise UsageError(str(exc))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read checkpoint: {exc}")
    if theta.shape != (setup.ansatz.n_params,):
        raise UsageError(f"theta checkpoint has shape {theta.shape}, expected ({setup.ansatz.n_params},)")
    if beta.shape != (setup.mapping.n_params,):
        raise UsageError(f"beta checkpoint has shape {beta.shape}, expected ({setup.mapping.n_params},)")
    omega, _ = qtgen.generate_params(theta, beta, setup.ansatz, setup.mapping, setup.plan)
    nn.save_weights(args.out, omega.astype(np.float32))
    print(f"wrote {omega.size} weights to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# infer / report


def _cmd_infer(args) -> int:
    from . import infer
    from .config import ConfigError
    from .nn import WeightFormatError

    try:
        acc = infer.run_inference(args.weights, args.config, args.split)
    except (ConfigError, WeightFormatError, FileNotFoundError) as exc:
        raise UsageError(str(exc))
    print(f"accuracy {acc!r}")
    return 0


def _cmd_report(args) -> int:
    from . import report

    if not os.path.exists(os.path.join(args.run, "metrics.csv")):
        raise UsageError(f"no metrics.csv in {args.run}")
    for path in report.write_report(args.run):
        print(f"wrote {path}")
    return 0


_HANDLERS = {
    "plan": _cmd_plan,
    "train": _cmd_train,
    "gen": _cmd_gen,
    "infer": _cmd_infer,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return _HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
