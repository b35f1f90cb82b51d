"""Classical-only inference from an exported weight file.

This module must stay importable without the circuit simulator or the
weight generator: once training has produced an FQTW file, scoring it is
plain feed-forward arithmetic. The CLI's infer subcommand loads only this
module, which pulls in config, data, and nn.
"""

from __future__ import annotations

import numpy as np

from . import config, nn
from .nn import WeightFormatError

__all__ = ["run_inference"]


def run_inference(weights_path, config_path, split: str = "test") -> float:
    """Score an exported weight vector on the configured dataset split."""
    cfg = config.load_config(config_path)
    spec = config.target_spec(cfg)
    expected = nn.param_count(spec)
    omega = nn.load_weights(weights_path)
    if omega.size != expected:
        raise WeightFormatError(
            f"{weights_path}: holds {omega.size} weights but preset "
            f"{cfg.target.preset!r} needs {expected}"
        )
    train, test = config.build_datasets(cfg)
    ds = {"train": train, "test": test}[split]
    return nn.accuracy(spec, omega.astype(np.float64), ds.inputs, ds.labels)
