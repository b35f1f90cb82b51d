"""Run configuration: a flat INI file with one section per subsystem.

Grammar (all keys shown with their defaults; unknown keys are rejected):

    [run]
    seed = 0
    output_dir = runs/out        ; "." means the directory of the file

    [data]
    kind = blobs                 ; blobs | cifar10
    n_classes = 3                ; blobs
    n_per_class = 200            ; blobs
    input_dim = 8                ; blobs
    separation = 4.0             ; blobs
    data_seed = 7                ; blobs + cifar10 subsampling
    path =                       ; cifar10: directory with the binary batches
    subsample_n = 0              ; cifar10: 0 keeps the full training split
    channel_mean =               ; cifar10: "r,g,b"; filled in when resolved
    channel_std =                ; cifar10: "r,g,b"; filled in when resolved

    [target]
    preset = mlp_tiny            ; mlp_tiny | vgg_small
    hidden = 32,16               ; mlp_tiny only

    [generator]
    n_mlp = 16
    n_layers = 5
    mapping_hidden = 32,32

    [federated]
    n_clients = 4
    n_rounds = 30
    local_epochs = 1
    batch_size = 32
    learning_rate = 0.001
    aggregation = uniform        ; uniform | size_weighted

A training run writes ``config.resolved.ini`` next to its outputs: the
same grammar with every default materialized, data constants pinned, and
an informational [derived] section. Re-running from the resolved file
reproduces the outputs byte for byte.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field

from . import data, nn

__all__ = ["ConfigError", "DataConfig", "TargetConfig", "GeneratorConfig", "FederatedSection", "RunConfig",
           "load_config", "dump_config", "build_datasets", "target_spec"]


class ConfigError(ValueError):
    """Raised for unparsable or inconsistent run configuration."""


@dataclass
class DataConfig:
    kind: str = "blobs"
    n_classes: int = 3
    n_per_class: int = 200
    input_dim: int = 8
    separation: float = 4.0
    data_seed: int = 7
    path: str = ""
    subsample_n: int = 0
    channel_mean: tuple[float, ...] | None = None
    channel_std: tuple[float, ...] | None = None


@dataclass
class TargetConfig:
    preset: str = "mlp_tiny"
    hidden: tuple[int, ...] = (32, 16)


@dataclass
class GeneratorConfig:
    n_mlp: int = 16
    n_layers: int = 5
    mapping_hidden: tuple[int, ...] = (32, 32)


@dataclass
class FederatedSection:
    n_clients: int = 4
    n_rounds: int = 30
    local_epochs: int = 1
    batch_size: int = 32
    learning_rate: float = 1e-3
    aggregation: str = "uniform"


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: str = "runs/out"
    data: DataConfig = field(default_factory=DataConfig)
    target: TargetConfig = field(default_factory=TargetConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    federated: FederatedSection = field(default_factory=FederatedSection)


_KNOWN_KEYS = {
    "run": {"seed", "output_dir"},
    "data": {
        "kind", "n_classes", "n_per_class", "input_dim", "separation",
        "data_seed", "path", "subsample_n", "channel_mean", "channel_std",
    },
    "target": {"preset", "hidden"},
    "generator": {"n_mlp", "n_layers", "mapping_hidden"},
    "federated": {"n_clients", "n_rounds", "local_epochs", "batch_size", "learning_rate", "aggregation"},
    "derived": None,  # informational, accepted and ignored on input
}


def _parse_int(section, key, raw, minimum=None):
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected an integer, got {raw!r}") from None
    if minimum is not None and value < minimum:
        raise ConfigError(f"[{section}] {key}: must be >= {minimum}, got {value}")
    return value


def _parse_float(section, key, raw, positive=False):
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected a number, got {raw!r}") from None
    if positive and value <= 0:
        raise ConfigError(f"[{section}] {key}: must be > 0, got {value}")
    return value


def _parse_int_tuple(section, key, raw):
    raw = raw.strip()
    if not raw:
        return ()
    try:
        return tuple(int(part) for part in raw.split(","))
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected comma-separated integers, got {raw!r}") from None


def _parse_float_tuple(section, key, raw):
    raw = raw.strip()
    if not raw:
        return None
    try:
        return tuple(float(part) for part in raw.split(","))
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected comma-separated numbers, got {raw!r}") from None


def _parse_choice(section, key, raw, choices):
    if raw not in choices:
        raise ConfigError(f"[{section}] {key}: expected one of {sorted(choices)}, got {raw!r}")
    return raw


def load_config(path) -> RunConfig:
    """Parse and validate a run configuration file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        known = _KNOWN_KEYS[section]
        if known is not None:
            for key in parser[section]:
                if key not in known:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")

    cfg = RunConfig()
    if parser.has_section("run"):
        sec = parser["run"]
        cfg.seed = _parse_int("run", "seed", sec.get("seed", "0"))
        cfg.output_dir = sec.get("output_dir", cfg.output_dir)
    if parser.has_section("data"):
        sec = parser["data"]
        d = cfg.data
        d.kind = _parse_choice("data", "kind", sec.get("kind", d.kind), {"blobs", "cifar10"})
        d.n_classes = _parse_int("data", "n_classes", sec.get("n_classes", str(d.n_classes)), minimum=2)
        d.n_per_class = _parse_int("data", "n_per_class", sec.get("n_per_class", str(d.n_per_class)), minimum=2)
        d.input_dim = _parse_int("data", "input_dim", sec.get("input_dim", str(d.input_dim)), minimum=1)
        d.separation = _parse_float("data", "separation", sec.get("separation", str(d.separation)))
        d.data_seed = _parse_int("data", "data_seed", sec.get("data_seed", str(d.data_seed)))
        d.path = sec.get("path", d.path)
        d.subsample_n = _parse_int("data", "subsample_n", sec.get("subsample_n", str(d.subsample_n)), minimum=0)
        d.channel_mean = _parse_float_tuple("data", "channel_mean", sec.get("channel_mean", ""))
        d.channel_std = _parse_float_tuple("data", "channel_std", sec.get("channel_std", ""))
        if d.kind == "cifar10" and not d.path:
            raise ConfigError("[data] path is required when kind = cifar10")
        for key, val in (("channel_mean", d.channel_mean), ("channel_std", d.channel_std)):
            if val is not None and len(val) != 3:
                raise ConfigError(f"[data] {key}: expected three values, got {len(val)}")
    if parser.has_section("target"):
        sec = parser["target"]
        cfg.target.preset = _parse_choice("target", "preset", sec.get("preset", cfg.target.preset),
                                          {"mlp_tiny", "vgg_small"})
        cfg.target.hidden = _parse_int_tuple("target", "hidden", sec.get("hidden", "32,16"))
        if any(h < 1 for h in cfg.target.hidden):
            raise ConfigError("[target] hidden: dims must be >= 1")
    if parser.has_section("generator"):
        sec = parser["generator"]
        g = cfg.generator
        g.n_mlp = _parse_int("generator", "n_mlp", sec.get("n_mlp", str(g.n_mlp)), minimum=1)
        g.n_layers = _parse_int("generator", "n_layers", sec.get("n_layers", str(g.n_layers)), minimum=1)
        g.mapping_hidden = _parse_int_tuple("generator", "mapping_hidden", sec.get("mapping_hidden", "32,32"))
        if any(h < 1 for h in g.mapping_hidden):
            raise ConfigError("[generator] mapping_hidden: dims must be >= 1")
    if parser.has_section("federated"):
        sec = parser["federated"]
        f = cfg.federated
        f.n_clients = _parse_int("federated", "n_clients", sec.get("n_clients", str(f.n_clients)), minimum=1)
        f.n_rounds = _parse_int("federated", "n_rounds", sec.get("n_rounds", str(f.n_rounds)), minimum=1)
        f.local_epochs = _parse_int("federated", "local_epochs", sec.get("local_epochs", str(f.local_epochs)), minimum=1)
        f.batch_size = _parse_int("federated", "batch_size", sec.get("batch_size", str(f.batch_size)), minimum=1)
        f.learning_rate = _parse_float("federated", "learning_rate", sec.get("learning_rate", str(f.learning_rate)), positive=True)
        f.aggregation = _parse_choice("federated", "aggregation", sec.get("aggregation", f.aggregation),
                                      {"uniform", "size_weighted"})
    return cfg


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: RunConfig, derived: dict[str, object] | None = None) -> str:
    """Serialize with every default materialized, in a fixed key order."""
    out = io.StringIO()
    d, t, g, f = cfg.data, cfg.target, cfg.generator, cfg.federated
    sections = [
        ("run", [("seed", cfg.seed), ("output_dir", cfg.output_dir)]),
        ("data", [
            ("kind", d.kind), ("n_classes", d.n_classes), ("n_per_class", d.n_per_class),
            ("input_dim", d.input_dim), ("separation", d.separation), ("data_seed", d.data_seed),
            ("path", d.path), ("subsample_n", d.subsample_n),
            ("channel_mean", d.channel_mean if d.channel_mean is not None else ""),
            ("channel_std", d.channel_std if d.channel_std is not None else ""),
        ]),
        ("target", [("preset", t.preset), ("hidden", t.hidden)]),
        ("generator", [("n_mlp", g.n_mlp), ("n_layers", g.n_layers), ("mapping_hidden", g.mapping_hidden)]),
        ("federated", [
            ("n_clients", f.n_clients), ("n_rounds", f.n_rounds), ("local_epochs", f.local_epochs),
            ("batch_size", f.batch_size), ("learning_rate", f.learning_rate), ("aggregation", f.aggregation),
        ]),
    ]
    if derived:
        sections.append(("derived", sorted(derived.items())))
    for name, pairs in sections:
        out.write(f"[{name}]\n")
        for key, value in pairs:
            out.write(f"{key} = {_fmt(value)}\n")
        out.write("\n")
    return out.getvalue()


def build_datasets(cfg: RunConfig):
    """Materialize (train, test) from the [data] section.

    For cifar10, missing channel constants are computed from the training
    split and written back into cfg so they can be persisted.
    """
    d = cfg.data
    if d.kind == "blobs":
        return data.synthetic_blobs(d.n_classes, d.n_per_class, d.input_dim, d.separation, d.data_seed)
    if d.channel_mean is None or d.channel_std is None:
        mean, std = data.cifar10_channel_stats(d.path)
        d.channel_mean, d.channel_std = mean, std
    train, test = data.load_cifar10(d.path, mean=d.channel_mean, std=d.channel_std)
    if d.subsample_n:
        train = data.subsample(train, d.subsample_n, d.data_seed)
    return train, test


def target_spec(cfg: RunConfig) -> nn.ModelSpec:
    """Target model implied by the [target] and [data] sections."""
    d, t = cfg.data, cfg.target
    if t.preset == "mlp_tiny":
        if d.kind != "blobs":
            raise ConfigError("preset mlp_tiny expects kind = blobs (flat inputs)")
        return nn.mlp_tiny(d.input_dim, d.n_classes, t.hidden)
    if d.kind != "cifar10":
        raise ConfigError("preset vgg_small expects kind = cifar10 (3x32x32 inputs)")
    return nn.vgg_small(10)
