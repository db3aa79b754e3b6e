"""Sweep execution: build data/model per run, train, emit CSV/JSON results.

Runs are independent and deterministic, so they can execute in any order
and across processes without changing a single output byte.  Each run
writes its artifact set (rounds.csv, layer_sparsity.csv, iou_matrix.csv,
summary.json) into a subdirectory named after its sweep-axis values; the
experiment root gets a summary.csv aggregating final accuracy across seeds
per sweep cell, plus a summary.json echoing the resolved spec.
"""

from __future__ import annotations

import concurrent.futures
import traceback
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import (DataConfig, ExperimentSpec, ModelConfig, RunSpec,
                     asdict_fed, spec_as_dict)
from .data import (LabeledDataset, lda_partition, load_csv, make_synthetic,
                   split_dataset)
from .errors import ConfigError
from .federation import FederationResult, run_federation
from .metrics import (write_iou_csv, write_layer_sparsity_csv,
                      write_rounds_csv, write_summary_json)
from .nn import Model, conv_net, mlp


def build_data(data_cfg: DataConfig, clients_total: int,
               global_seed: int) -> tuple[LabeledDataset, LabeledDataset, list[np.ndarray]]:
    if data_cfg.source == "synthetic":
        train, test = make_synthetic(data_cfg.classes, data_cfg.dim,
                                     data_cfg.per_class, data_cfg.margin,
                                     global_seed)
    else:
        inputs, labels = load_csv(data_cfg.csv_path)
        train, test = split_dataset(inputs, labels, global_seed)
    partition = lda_partition(train.labels, clients_total, data_cfg.alpha,
                              global_seed)
    return train, test, partition


def build_model(model_cfg: ModelConfig, input_dim: int, classes: int,
                seed: int) -> Model:
    if model_cfg.kind == "mlp":
        return mlp(input_dim, model_cfg.hidden, classes, seed)
    shape = tuple(model_cfg.input_shape)
    if int(np.prod(shape)) != input_dim:
        raise ConfigError(f"model.input_shape {shape} does not match "
                          f"data dimension {input_dim}")
    return conv_net(shape, model_cfg.channels, model_cfg.kernel, classes, seed)


def execute_run(run: RunSpec, out_root: Path) -> dict:
    """Train one sweep cell and write its artifacts; returns the summary row."""
    fed = run.federation
    train, test, partition = build_data(run.data, fed.clients_total,
                                        fed.global_seed)
    classes = max(train.num_classes, test.num_classes)
    model = build_model(run.model, train.dim, classes, fed.global_seed)
    result: FederationResult = run_federation(fed, model, train, test, partition)

    run_dir = out_root / run.name
    run_dir.mkdir(parents=True, exist_ok=True)
    write_rounds_csv(result.reports, run_dir / "rounds.csv")
    write_layer_sparsity_csv(result.reports, run_dir / "layer_sparsity.csv")
    write_iou_csv(result.reports, run_dir / "iou_matrix.csv")
    summary = {
        "config": {
            "name": run.name,
            "model": asdict(run.model),
            "data": asdict(run.data),
            "federation": asdict_fed(fed),
        },
        "seeds": {
            "global_seed": fed.global_seed,
            "sampling_seed": fed.sampling_seed,
            "lda_seed": fed.global_seed,
        },
        "final": {
            "rounds": len(result.reports),
            "accuracy": result.final_accuracy,
            "global_sparsity": result.final_sparsity,
            "cumulative_comm_nnz": (result.reports[-1].cumulative_comm_nnz
                                    if result.reports else 0.0),
        },
    }
    write_summary_json(summary, run_dir / "summary.json")
    return {
        "name": run.name,
        "cell": run.cell_key(),
        "seed": fed.sampling_seed,
        "final_accuracy": result.final_accuracy,
        "final_sparsity": result.final_sparsity,
    }


def _execute_run_entry(args: tuple[RunSpec, str]) -> dict:
    run, out_root = args
    return execute_run(run, Path(out_root))


def _summary_rows(runs: Sequence[RunSpec], results: dict[str, dict]) -> list[str]:
    """Aggregate final accuracy mean +/- std across seeds per sweep cell."""
    cells: dict[tuple, list[dict]] = {}
    order: list[tuple] = []
    for run in runs:
        key = run.cell_key()
        if key not in cells:
            cells[key] = []
            order.append(key)
        if run.name in results:
            cells[key].append(results[run.name])
    lines = ["algorithm,target_sparsity,alpha,activation_pruning,num_seeds,"
             "accuracy_mean,accuracy_std"]
    for key in order:
        alg, sparsity, alpha, act = key
        rows = cells[key]
        accs = [r["final_accuracy"] for r in rows]
        mean = float(np.mean(accs)) if accs else float("nan")
        std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
        s_txt = ("|".join(repr(v) for v in sparsity)
                 if isinstance(sparsity, tuple) else repr(sparsity))
        lines.append(f"{alg},{s_txt},{alpha!r},{str(act).lower()},"
                     f"{len(rows)},{mean!r},{std!r}")
    return lines


def run_experiment(spec: ExperimentSpec, out_root: Path, jobs: int = 1,
                   dry_run: bool = False) -> int:
    """Execute the sweep; returns 0 if every run succeeded, 1 otherwise."""
    runs = spec.resolve_runs()
    if dry_run:
        print(f"experiment {spec.name}: {len(runs)} run(s)")
        for run in runs:
            print(f"  {run.name}")
        return 0

    out_root.mkdir(parents=True, exist_ok=True)
    results: dict[str, dict] = {}
    failures: dict[str, str] = {}
    if jobs <= 1:
        for run in runs:
            try:
                row = execute_run(run, out_root)
                results[row["name"]] = row
            except Exception:
                failures[run.name] = traceback.format_exc()
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_execute_run_entry, (run, str(out_root))): run
                       for run in runs}
            for future in concurrent.futures.as_completed(futures):
                run = futures[future]
                try:
                    row = future.result()
                    results[row["name"]] = row
                except Exception:
                    failures[run.name] = traceback.format_exc()

    (out_root / "summary.csv").write_text("\n".join(_summary_rows(runs, results)) + "\n")
    write_summary_json({
        "experiment": spec_as_dict(spec),
        "runs": sorted(results),
        "failures": {name: failures[name].strip().splitlines()[-1]
                     for name in sorted(failures)},
    }, out_root / "summary.json")
    for name in sorted(failures):
        print(f"run {name} failed:\n{failures[name]}")
    return 1 if failures else 0
