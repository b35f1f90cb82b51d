"""Shipped preset configs must parse and train fewer parameters than they generate."""

import os

import pytest

from fqt import config, fed, nn

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")
PRESETS = sorted(f for f in os.listdir(CONFIG_DIR) if f.endswith(".ini"))


@pytest.mark.parametrize("name", PRESETS)
def test_preset_parses(name):
    cfg = config.load_config(os.path.join(CONFIG_DIR, name))
    assert cfg.federated.n_rounds >= 1


@pytest.mark.parametrize("name", PRESETS)
def test_preset_compresses(name):
    cfg = config.load_config(os.path.join(CONFIG_DIR, name))
    target = config.target_spec(cfg)
    setup = fed.build_setup(
        target, cfg.generator.n_mlp, cfg.generator.n_layers, cfg.generator.mapping_hidden
    )
    m = nn.param_count(target)
    assert setup.n_trainable < m, f"{name}: {setup.n_trainable} trainable vs m = {m}"


def test_quick_preset_runs_end_to_end(tmp_path):
    from fqt import cli

    cfg_path = os.path.join(CONFIG_DIR, "desk_quick.ini")
    out = tmp_path / "out"
    assert cli.main(["train", "--config", cfg_path, "--output-dir", str(out)]) == 0
    assert (out / "metrics.csv").exists()
    assert (out / "weights.fqtw").exists()
