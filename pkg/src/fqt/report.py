"""Render training-curve figures and a summary table from a run directory.

Reads metrics.csv as written by the train subcommand and produces, next to
it: loss_curve.png (per-client and global train loss per round),
accuracy_curve.png (global train/test accuracy per round), and summary.csv
with the headline numbers of the run.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["read_metrics", "write_report"]


def read_metrics(path):
    """Parse metrics.csv into (client rows by id, global rows)."""
    clients: dict[int, list[tuple[int, float]]] = {}
    global_rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"round", "client_id", "train_loss", "train_acc", "test_acc"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{path}: expected columns {sorted(required)}, got {reader.fieldnames}")
        for row in reader:
            rnd = int(row["round"])
            if row["client_id"] == "GLOBAL":
                global_rows.append(
                    (rnd, float(row["train_loss"]), float(row["train_acc"]), float(row["test_acc"]))
                )
            else:
                cid = int(row["client_id"])
                clients.setdefault(cid, []).append((rnd, float(row["train_loss"])))
    if not global_rows:
        raise ValueError(f"{path}: no GLOBAL rows found")
    return clients, global_rows


def write_report(run_dir) -> list[str]:
    """Render figures and the summary table; returns the files written."""
    metrics_path = os.path.join(run_dir, "metrics.csv")
    clients, global_rows = read_metrics(metrics_path)
    rounds = [r for r, *_ in global_rows]
    g_loss = [row[1] for row in global_rows]
    g_train_acc = [row[2] for row in global_rows]
    g_test_acc = [row[3] for row in global_rows]

    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    for cid in sorted(clients):
        rows = clients[cid]
        ax.plot([r for r, _ in rows], [v for _, v in rows], alpha=0.4, linewidth=1, label=f"client {cid}")
    ax.plot(rounds, g_loss, color="black", linewidth=2, label="global")
    ax.set_xlabel("round")
    ax.set_ylabel("train loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    loss_png = os.path.join(run_dir, "loss_curve.png")
    fig.savefig(loss_png, dpi=120)
    plt.close(fig)
    written.append(loss_png)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(rounds, g_train_acc, label="train accuracy")
    ax.plot(rounds, g_test_acc, label="test accuracy")
    ax.set_xlabel("round")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.legend(fontsize=8)
    fig.tight_layout()
    acc_png = os.path.join(run_dir, "accuracy_curve.png")
    fig.savefig(acc_png, dpi=120)
    plt.close(fig)
    written.append(acc_png)

    summary_path = os.path.join(run_dir, "summary.csv")
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "value"])
        writer.writerow(["rounds", len(rounds)])
        writer.writerow(["clients", len(clients)])
        writer.writerow(["first_train_loss", repr(g_loss[0])])
        writer.writerow(["final_train_loss", repr(g_loss[-1])])
        writer.writerow(["final_train_acc", repr(g_train_acc[-1])])
        writer.writerow(["final_test_acc", repr(g_test_acc[-1])])
    written.append(summary_path)
    return written
