"""Experiment configuration: TOML parsing, validation, sweep resolution.

Configs are structured key-value files with sections; unknown keys anywhere
are hard errors so a typo in a sparsity knob cannot silently fall back to a
default.  A config describes one base federated setup plus sweep axes
(sparsity x alpha x sampling seed x algorithm x activation pruning) whose
Cartesian product defines the runs.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):  # pragma: no cover
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .federation import ALGORITHMS, FedConfig

DEFAULT_SAMPLING_SEEDS = [5378, 9421, 2035]


@dataclass
class ModelConfig:
    kind: str = "mlp"                  # "mlp" | "conv"
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    channels: list[int] = field(default_factory=lambda: [6, 6])
    kernel: int = 3
    input_shape: list[int] = field(default_factory=list)  # (C, H, W), conv only

    def validate(self) -> None:
        if self.kind not in ("mlp", "conv"):
            raise ConfigError(f"model.kind must be 'mlp' or 'conv', got {self.kind!r}")
        if self.kind == "mlp" and (not self.hidden or any(h < 1 for h in self.hidden)):
            raise ConfigError("model.hidden must be a nonempty list of positive widths")
        if self.kind == "conv":
            if not self.channels or any(c < 1 for c in self.channels):
                raise ConfigError("model.channels must be a nonempty list of positive counts")
            if len(self.input_shape) != 3:
                raise ConfigError("model.input_shape must be [channels, height, width]")


@dataclass
class DataConfig:
    source: str = "synthetic"          # "synthetic" | "csv"
    classes: int = 10
    dim: int = 32
    per_class: int = 200
    margin: float = 3.0
    csv_path: str = ""
    alpha: float = 1.0                 # partition concentration (sweepable)

    def validate(self) -> None:
        if self.source not in ("synthetic", "csv"):
            raise ConfigError(f"data.source must be 'synthetic' or 'csv', got {self.source!r}")
        if self.source == "csv" and not self.csv_path:
            raise ConfigError("data.csv_path required when data.source = 'csv'")
        if self.source == "synthetic":
            if self.classes < 2:
                raise ConfigError("data.classes must be >= 2")
            if self.per_class < 2:
                raise ConfigError("data.per_class must be >= 2")
            if self.margin <= 0:
                raise ConfigError("data.margin must be positive")
        if self.alpha <= 0:
            raise ConfigError("data.alpha must be positive")


@dataclass
class RunSpec:
    """One fully resolved sweep cell + seed."""

    name: str
    model: ModelConfig
    data: DataConfig
    federation: FedConfig

    def cell_key(self) -> tuple:
        s = self.federation.target_sparsity
        s_key = tuple(s) if isinstance(s, list) else s
        return (self.federation.algorithm, s_key, self.data.alpha,
                self.federation.activation_pruning)


@dataclass
class ExperimentSpec:
    name: str
    output_dir: str
    model: ModelConfig
    data: DataConfig
    base: FedConfig
    sweep_sparsity: list = field(default_factory=list)
    sweep_alpha: list[float] = field(default_factory=list)
    sweep_seeds: list[int] = field(default_factory=list)
    sweep_algorithms: list[str] = field(default_factory=list)
    sweep_act_pruning: list[bool] = field(default_factory=list)

    def validate(self) -> None:
        self.model.validate()
        self.data.validate()
        self.base.validate()
        for axis_name in ("sweep_sparsity", "sweep_alpha", "sweep_seeds",
                          "sweep_algorithms", "sweep_act_pruning"):
            if not getattr(self, axis_name):
                raise ConfigError(f"sweep axis {axis_name} must be nonempty")
        for alg in self.sweep_algorithms:
            if alg not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {alg!r} in sweep")

    def resolve_runs(self) -> list[RunSpec]:
        """Cartesian product of the sweep axes, in canonical order."""
        self.validate()
        runs = []
        for alg in self.sweep_algorithms:
            for sparsity in self.sweep_sparsity:
                for alpha in self.sweep_alpha:
                    for act in self.sweep_act_pruning:
                        for seed in self.sweep_seeds:
                            fed = FedConfig(**{**asdict_fed(self.base),
                                               "algorithm": alg,
                                               "target_sparsity": sparsity,
                                               "activation_pruning": act,
                                               "sampling_seed": seed})
                            data = DataConfig(**{**asdict(self.data), "alpha": alpha})
                            name = _run_name(alg, sparsity, alpha, act, seed)
                            run = RunSpec(name, self.model, data, fed)
                            run.federation.validate()
                            runs.append(run)
        return runs


def asdict_fed(cfg: FedConfig) -> dict:
    d = asdict(cfg)
    if isinstance(d.get("target_sparsity"), tuple):
        d["target_sparsity"] = list(d["target_sparsity"])
    return d


def _fmt_axis(value) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, list):
        return "-".join(_fmt_axis(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _run_name(alg: str, sparsity, alpha: float, act: bool, seed: int) -> str:
    return (f"alg-{alg}_s-{_fmt_axis(sparsity)}_a-{_fmt_axis(alpha)}"
            f"_act-{_fmt_axis(act)}_seed-{seed}")


# --- TOML schema -----------------------------------------------------------

_SCHEMA: dict[str, dict[str, type | tuple[type, ...]]] = {
    "experiment": {"name": str, "output_dir": str},
    "model": {"kind": str, "hidden": list, "channels": list, "kernel": int,
              "input_shape": list},
    "data": {"source": str, "classes": int, "dim": int, "per_class": int,
             "margin": (int, float), "csv_path": str, "alpha": (int, float)},
    "federation": {"rounds": int, "clients_total": int, "clients_per_round": int,
                   "local_epochs": int, "batch_size": int, "algorithm": str,
                   "target_sparsity": (int, float, list), "group_sizes": list,
                   "reparam": str, "beta": (int, float),
                   "activation_pruning": bool, "lr_start": (int, float),
                   "lr_end": (int, float), "aggregator": str,
                   "client_weighting": str, "global_seed": int,
                   "mask_every": int},
    "sweep": {"sparsity": list, "alpha": list, "seeds": list,
              "algorithms": list, "activation_pruning": list},
}

_REQUIRED = {
    "federation": ("rounds", "clients_total", "clients_per_round"),
}


def _check_keys(raw: dict[str, Any]) -> None:
    for section, content in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(content, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in content.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{section}.{key}'")
            expected = _SCHEMA[section][key]
            if isinstance(value, bool) and expected is not bool and (
                    not isinstance(expected, tuple) or bool not in expected):
                raise ConfigError(f"'{section}.{key}' has wrong type bool")
            if not isinstance(value, expected):
                raise ConfigError(
                    f"'{section}.{key}' has wrong type {type(value).__name__}")
    for section, keys in _REQUIRED.items():
        table = raw.get(section, {})
        for key in keys:
            if key not in table:
                raise ConfigError(f"missing required key '{section}.{key}'")


def parse_config(path: str | Path) -> ExperimentSpec:
    """Load and validate an experiment config file."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    _check_keys(raw)

    exp = raw.get("experiment", {})
    model = ModelConfig(**raw.get("model", {}))
    data_table = dict(raw.get("data", {}))
    if "alpha" in data_table:
        data_table["alpha"] = float(data_table["alpha"])
    if "margin" in data_table:
        data_table["margin"] = float(data_table["margin"])
    data = DataConfig(**data_table)

    fed_table = dict(raw.get("federation", {}))
    if fed_table.get("aggregator", None) == "":
        fed_table["aggregator"] = None
    for key in ("beta", "lr_start", "lr_end"):
        if key in fed_table:
            fed_table[key] = float(fed_table[key])
    if "target_sparsity" in fed_table and not isinstance(
            fed_table["target_sparsity"], list):
        fed_table["target_sparsity"] = float(fed_table["target_sparsity"])
    base = FedConfig(**fed_table)

    sweep = raw.get("sweep", {})
    if "sparsity" in sweep and base.group_sizes is not None:
        raise ConfigError("sweep.sparsity cannot be combined with "
                          "federation.group_sizes")
    spec = ExperimentSpec(
        name=exp.get("name", path.stem),
        output_dir=exp.get("output_dir", f"results/{path.stem}"),
        model=model,
        data=data,
        base=base,
        sweep_sparsity=[float(s) if not isinstance(s, list) else s
                        for s in sweep.get("sparsity", [base.target_sparsity])],
        sweep_alpha=[float(a) for a in sweep.get("alpha", [data.alpha])],
        sweep_seeds=[int(s) for s in sweep.get("seeds", DEFAULT_SAMPLING_SEEDS)],
        sweep_algorithms=list(sweep.get("algorithms", [base.algorithm])),
        sweep_act_pruning=list(sweep.get("activation_pruning",
                                         [base.activation_pruning])),
    )
    spec.validate()
    return spec


def spec_as_dict(spec: ExperimentSpec) -> dict:
    return {
        "name": spec.name,
        "output_dir": spec.output_dir,
        "model": asdict(spec.model),
        "data": asdict(spec.data),
        "base": asdict_fed(spec.base),
        "sweep_sparsity": spec.sweep_sparsity,
        "sweep_alpha": spec.sweep_alpha,
        "sweep_seeds": spec.sweep_seeds,
        "sweep_algorithms": spec.sweep_algorithms,
        "sweep_act_pruning": spec.sweep_act_pruning,
    }
