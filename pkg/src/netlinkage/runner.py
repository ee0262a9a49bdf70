"""Batch experiment driver.

Expands a :class:`RunConfig` into a grid of sampler cells (one per mode,
latent dimension and anchor fraction), runs each cell with its own
deterministically derived seed, and aggregates per-cell metrics and
information criteria under one output directory.  Cell directories are
written to a temporary name and renamed only when complete, so an
interrupted run never leaves a half-written cell that looks finished.
"""

from __future__ import annotations

import csv
import json
import os
import shutil
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .config import RunConfig
from .data import (DataError, Dataset, PairSet, load_dataset, load_pairs,
                   write_pairs)
from .estimators import (binder_point_estimate, match_probabilities,
                         mpmms_point_estimate, population_size_posterior)
from .evaluation import confusion, precision_recall_f1
from .model import HyperParams
from .sampler import SamplerConfig, run_chain

METRIC_COLUMNS = [
    "cell", "mode", "dim", "anchor_fraction", "seed", "n_anchors",
    "n_samples", "estimate_pairs", "tp", "fp", "fn", "tn",
    "recall", "precision", "f1", "anchored_recall",
    "anchored_in_all_samples", "n_mean", "n_sd",
    "accept_linkage", "accept_u", "accept_beta",
    "ess_sigma2", "ess_n_latent",
]

CRITERIA_COLUMNS = [
    "cell", "mode", "dim", "anchor_fraction", "scope",
    "waic", "lppd", "p_waic", "dic", "d_bar", "d_hat", "p_d",
]


@dataclass
class CellSpec:
    name: str
    mode: str
    dim: int
    anchor_fraction: float
    seed: int


def derive_seed(base: int, index: int) -> int:
    """Stable per-cell seed from the run seed and the cell index."""
    return int(np.random.SeedSequence([int(base), int(index)])
               .generate_state(1)[0])


def anchor_subset(truth: PairSet, fraction: float, anchor_seed: int) -> PairSet:
    """Deterministic known-match subset; subsets nest across fractions.

    One permutation of the truth pairs is drawn from ``anchor_seed`` and
    every fraction takes a prefix of it, so a smaller fraction's anchors
    are always contained in a larger fraction's.
    """
    pairs = list(truth)
    rng = np.random.default_rng(anchor_seed)
    order = rng.permutation(len(pairs))
    count = int(round(fraction * len(pairs)))
    return PairSet(pairs[i] for i in order[:count])


def _global_index(sizes, ref) -> int:
    return sum(sizes[:ref.file - 1]) + ref.index - 1


def _anchors_in_every_sample(samples, anchors: PairSet) -> bool:
    labels = samples.linkage_labels
    for a, b in anchors:
        ga = _global_index(samples.sizes, a)
        gb = _global_index(samples.sizes, b)
        if not np.all(labels[:, ga] == labels[:, gb]):
            return False
    return True


def expand_cells(config: RunConfig) -> list:
    cells = []
    k = 0
    for mode in config.modes:
        for dim in config.dims:
            for frac in config.anchor_fractions:
                name = "cell%02d_%s_K%d_a%03d" % (
                    k, mode, dim, int(round(frac * 100)))
                cells.append(CellSpec(name, mode, dim, frac,
                                      derive_seed(config.seed, k)))
                k += 1
    return cells


def _run_cell(payload: dict) -> dict:
    cell: CellSpec = payload["cell"]
    out = {"cell": cell.name, "mode": cell.mode, "dim": cell.dim,
           "anchor_fraction": cell.anchor_fraction, "seed": cell.seed,
           "status": "ok", "error": None, "metrics": None, "criteria": []}
    try:
        out.update(_run_cell_inner(payload, cell))
    except Exception as exc:
        out["status"] = "failed"
        out["error"] = "%s: %s" % (type(exc).__name__, exc)
        out["trace"] = traceback.format_exc()
    return out


def _run_cell_inner(payload: dict, cell: CellSpec) -> dict:
    dataset: Dataset = payload["dataset"]
    config: RunConfig = payload["config"]
    anchors: PairSet = payload["anchors"]
    truth: PairSet = payload["truth"]
    cell_dir = os.path.join(payload["out_dir"], cell.name)
    tmp_dir = os.path.join(payload["out_dir"], ".tmp-" + cell.name)
    if os.path.isdir(tmp_dir):
        shutil.rmtree(tmp_dir)
    os.makedirs(tmp_dir)

    hyper = HyperParams.from_mapping(dataset, config.hyper_mapping(cell.dim))
    sampler_config = SamplerConfig(
        iterations=config.iterations, burn_in=config.burn_in,
        thin=config.thin, linkage_repeats=config.linkage_repeats,
        mode=cell.mode, step_u=config.step_u, step_beta=config.step_beta,
        adapt=config.adapt, adapt_window=config.adapt_window,
        exact_linkage_ratio=config.exact_linkage_ratio,
        store_pointwise=config.store_pointwise, seed=cell.seed)
    samples, diags = run_chain(dataset, hyper, sampler_config, anchors=anchors)

    samples.save(os.path.join(tmp_dir, "samples"))
    table = match_probabilities(samples)
    table.to_csv(os.path.join(tmp_dir, "probabilities.csv"))
    if config.estimator == "binder":
        estimate = binder_point_estimate(table, loss_ratio=config.loss_ratio)
    else:
        estimate = mpmms_point_estimate(samples)
    write_pairs(estimate.pairs, os.path.join(tmp_dir, "estimate.csv"))
    pop = population_size_posterior(samples)
    with open(os.path.join(tmp_dir, "population.json"), "w",
              encoding="utf-8") as fh:
        json.dump({"mean": pop.mean, "sd": pop.sd,
                   "histogram": {str(k): v for k, v in pop.histogram.items()}},
                  fh, indent=2)
    with open(os.path.join(tmp_dir, "diagnostics.json"), "w",
              encoding="utf-8") as fh:
        json.dump(asdict(diags), fh, indent=2)
    with open(os.path.join(tmp_dir, "estimate.json"), "w",
              encoding="utf-8") as fh:
        json.dump({"method": estimate.method, "threshold": estimate.threshold,
                   "exact": estimate.exact, "n_pairs": len(estimate.pairs)},
                  fh, indent=2)
    if anchors is not None:
        write_pairs(anchors, os.path.join(tmp_dir, "anchors.csv"))

    metrics = {
        "cell": cell.name, "mode": cell.mode, "dim": cell.dim,
        "anchor_fraction": cell.anchor_fraction, "seed": cell.seed,
        "n_anchors": len(anchors) if anchors is not None else 0,
        "n_samples": samples.n_samples,
        "estimate_pairs": len(estimate.pairs),
        "n_mean": pop.mean, "n_sd": pop.sd,
        "accept_linkage": samples.acceptance.get("linkage"),
        "accept_u": samples.acceptance.get("u"),
        "accept_beta": samples.acceptance.get("beta"),
        "ess_sigma2": diags.ess.get("sigma2"),
        "ess_n_latent": diags.ess.get("n_latent"),
    }
    if truth is not None:
        counts = confusion(estimate.pairs, truth, dataset)
        scores = precision_recall_f1(counts)
        metrics.update({"tp": counts.tp, "fp": counts.fp, "fn": counts.fn,
                        "tn": counts.tn, "recall": scores.recall,
                        "precision": scores.precision, "f1": scores.f1})
    if anchors is not None and len(anchors):
        hit = sum(1 for pair in anchors if pair in estimate.pairs)
        metrics["anchored_recall"] = hit / len(anchors)
        metrics["anchored_in_all_samples"] = \
            _anchors_in_every_sample(samples, anchors)

    criteria_rows = []
    for scope in ("all", "network", "profile"):
        if samples.criteria and scope in samples.criteria:
            row = {"cell": cell.name, "mode": cell.mode, "dim": cell.dim,
                   "anchor_fraction": cell.anchor_fraction, "scope": scope}
            row.update(samples.criteria[scope])
            criteria_rows.append(row)

    os.replace(tmp_dir, cell_dir)
    return {"metrics": metrics, "criteria": criteria_rows}


def _write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row.get(k) is None else row.get(k))
                        for k in columns})


def run(config: RunConfig, quiet: bool = False) -> str:
    """Execute the configured cell grid; returns the output directory."""
    report = config.validate()
    if report["issues"]:
        raise DataError("invalid configuration: " + "; ".join(report["issues"]))
    out_dir = config.resolve(config.output)
    if os.path.isdir(out_dir) and os.listdir(out_dir):
        raise DataError(f"output directory {out_dir} exists and is not empty")
    os.makedirs(out_dir, exist_ok=True)

    dataset, truth, fixed_anchors = load_inputs(config)
    cells = expand_cells(config)

    payloads = []
    for cell in cells:
        if fixed_anchors is not None:
            anchors = fixed_anchors if cell.anchor_fraction > 0 else None
        elif truth is not None and cell.anchor_fraction > 0:
            anchors = anchor_subset(truth, cell.anchor_fraction,
                                    config.anchor_seed)
        else:
            anchors = None
        payloads.append({"cell": cell, "dataset": dataset, "config": config,
                         "anchors": anchors, "truth": truth,
                         "out_dir": out_dir})

    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_cell, payloads))
    else:
        results = [_run_cell(p) for p in payloads]

    metrics_rows = [r["metrics"] for r in results if r["metrics"]]
    criteria_rows = [row for r in results for row in r["criteria"]]
    _write_csv(os.path.join(out_dir, "metrics.csv"), METRIC_COLUMNS,
               metrics_rows)
    _write_csv(os.path.join(out_dir, "criteria.csv"), CRITERIA_COLUMNS,
               criteria_rows)

    config_echo = {}
    for f in fields(config):
        if f.name == "base_dir":
            continue
        config_echo[f.name] = getattr(config, f.name)
    manifest = {
        "package": "netlinkage",
        "dataset_digest": dataset.digest(),
        "input_digests": report["files"],
        "config": config_echo,
        "cells": [{"name": r["cell"], "mode": r["mode"], "dim": r["dim"],
                   "anchor_fraction": r["anchor_fraction"], "seed": r["seed"],
                   "status": r["status"], "error": r["error"]}
                  for r in results],
    }
    with open(os.path.join(out_dir, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    with open(os.path.join(out_dir, "resolved_config.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(config.to_text())

    if not quiet:
        for r in results:
            line = "%s: %s" % (r["cell"], r["status"])
            if r["metrics"] and r["metrics"].get("f1") is not None:
                line += "  f1=%.4f" % r["metrics"]["f1"]
            if r["status"] == "failed":
                line += "  (%s)" % r["error"]
            print(line)
    failures = [r for r in results if r["status"] == "failed"]
    if failures and not quiet:
        print("%d of %d cells failed" % (len(failures), len(results)))
    return out_dir


def load_inputs(config: RunConfig):
    """Load the dataset, optional truth pairs and optional fixed anchors."""
    profile_paths = [config.resolve(p) for p in config.profiles] or None
    network_paths = [config.resolve(p) for p in config.networks] or None
    dataset = load_dataset(profile_paths=profile_paths,
                           network_paths=network_paths,
                           field_kinds=config.fields or None,
                           sizes=config.sizes)
    truth = None
    if config.truth:
        truth = load_pairs(config.resolve(config.truth))
        truth.validate_against(dataset)
    fixed = None
    if config.anchors:
        fixed = load_pairs(config.resolve(config.anchors))
        fixed.validate_against(dataset)
    return dataset, truth, fixed
