"""Ablation and sweep experiments: dataset-ratio, non-smoke ratio, domain
loss weight. Each point is an independent training run; seeds average out
desk-scale training noise."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .metrics import evaluate
from .nets import Variant
from .synth import DatasetSpec, augment_target, build_dataset, read_manifest
from .training import TrainConfig, train

ABLATION_ARCHS = (
    "BASELINE",
    "GRL_ONLY",
    "GRL_ADAPT_D",
    "GRL_ADAPT_SD",
    "GRL_ADAPT_CORAL",
)


def ensure_dataset(spec: DatasetSpec, cache_root: str, augment_factor: int = 1):
    """Build (or reuse) the corpus for `spec`; returns (root, manifest rows).

    The directory name keys on the spec plus augmentation, so identical specs
    share bytes and different specs never collide.
    """
    key = json.dumps({**spec.to_dict(), "augment": augment_factor}, sort_keys=True)
    digest = hashlib.sha1(key.encode()).hexdigest()[:16]
    root = os.path.join(cache_root, f"ds_{digest}")
    manifest = os.path.join(root, "manifest.jsonl")
    if os.path.exists(manifest):
        return root, read_manifest(manifest)
    rows = build_dataset(spec, root)
    if augment_factor > 1:
        rng = np.random.default_rng(np.random.PCG64(spec.master_seed + 0xA06))
        rows = augment_target(rows, augment_factor, rng, root)
        from .synth import write_manifest

        write_manifest(rows, manifest)
    return root, rows


def split_rows(rows):
    source = [r for r in rows if r["split"] == "source"]
    target = [r for r in rows if r["split"] == "target"]
    test = [r for r in rows if r["split"] == "test"]
    return source, target, test


def train_and_eval(spec_dict: dict, cfg_dict: dict, cache_root: str,
                   augment_factor: int = 1):
    """One training run against its spec'd corpus; returns (cd, ed, md)."""
    spec = DatasetSpec.from_dict(spec_dict)
    cfg = TrainConfig.from_dict(cfg_dict)
    root, rows = ensure_dataset(spec, cache_root, augment_factor)
    source, target, test = split_rows(rows)
    model, _ = train(cfg, source, target, root)
    rep = evaluate(model, test, root)
    return rep.cd, rep.ed, rep.md


def _run_tasks(tasks, jobs: int):
    """tasks: list of (key, spec_dict, cfg_dict, cache_root, augment)."""
    if jobs <= 1:
        return [(t[0],) + train_and_eval(*t[1:]) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [(t[0], pool.submit(train_and_eval, *t[1:])) for t in tasks]
        return [(key,) + fut.result() for key, fut in futures]


def _with_seed(cfg: TrainConfig, seed: int, **variant_overrides) -> dict:
    d = cfg.to_dict()
    d["seed"] = seed
    d["variant"] = {**d["variant"], **variant_overrides}
    return d


def run_ablation(spec: DatasetSpec, cfg: TrainConfig, seeds, cache_root: str,
                 jobs: int = 1):
    """Baseline plus all four adaptation variants, per seed.

    Returns rows (arch, seed, cd, ed, md). The corpus is built once up front
    so parallel workers only train.
    """
    ensure_dataset(spec, cache_root)
    tasks = []
    for seed in seeds:
        for arch in ABLATION_ARCHS:
            gamma = cfg.weights.gamma_coral if arch == "GRL_ADAPT_CORAL" else 0.0
            cfg_d = _with_seed(cfg, seed, variant=arch)
            cfg_d["weights"] = {**cfg_d["weights"], "gamma_coral": gamma}
            tasks.append(((arch, seed), spec.to_dict(), cfg_d, cache_root, 1))
    results = _run_tasks(tasks, jobs)
    return [(arch, seed, cd, ed, md) for (arch, seed), cd, ed, md in results]


def sweep_source_target_ratio(spec: DatasetSpec, cfg: TrainConfig, ratios,
                              seeds, cache_root: str, augment_factor: int = 2,
                              jobs: int = 1):
    """Source scale set to ratio times the augmented target scale."""
    n_target_eff = spec.n_target_smoke * augment_factor
    tasks = []
    for r in ratios:
        if r < 1:
            raise ValueError(f"source:target ratio must be >= 1, got {r}")
        point = dataclasses.replace(spec, n_source_smoke=int(round(r * n_target_eff)))
        ensure_dataset(point, cache_root, augment_factor)
        for seed in seeds:
            tasks.append(((r, seed), point.to_dict(), _with_seed(cfg, seed),
                          cache_root, augment_factor))
    results = _run_tasks(tasks, jobs)
    return [(r, seed, cd, ed, md) for (r, seed), cd, ed, md in results]


def sweep_nonsmoke_ratio(spec: DatasetSpec, cfg: TrainConfig, ratios, seeds,
                         cache_root: str, jobs: int = 1):
    tasks = []
    for r in ratios:
        point = dataclasses.replace(spec, nonsmoke_to_smoke_ratio=float(r))
        ensure_dataset(point, cache_root)
        for seed in seeds:
            tasks.append(((r, seed), point.to_dict(), _with_seed(cfg, seed),
                          cache_root, 1))
    results = _run_tasks(tasks, jobs)
    return [(r, seed, cd, ed, md) for (r, seed), cd, ed, md in results]


def sweep_beta(spec: DatasetSpec, cfg: TrainConfig, betas, seeds,
               cache_root: str, with_coral: bool = True, jobs: int = 1):
    """Domain weight sweep under alpha + beta = 1; optional second curve
    with correlation alignment at gamma = 0.2."""
    ensure_dataset(spec, cache_root)
    curves = [("coral", 0.2), ("no_coral", 0.0)] if with_coral else [("no_coral", 0.0)]
    tasks = []
    for beta in betas:
        if not 0.0 < beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {beta}")
        for curve, gamma in curves:
            arch = Variant.GRL_ADAPT_CORAL.value if gamma > 0 else Variant.GRL_ADAPT_SD.value
            for seed in seeds:
                cfg_d = _with_seed(cfg, seed, variant=arch)
                cfg_d["weights"] = {
                    **cfg_d["weights"],
                    "alpha_label": 1.0 - beta,
                    "beta_domain": beta,
                    "gamma_coral": gamma,
                }
                tasks.append(((beta, curve, seed), spec.to_dict(), cfg_d,
                              cache_root, 1))
    results = _run_tasks(tasks, jobs)
    return [(beta, curve, seed, cd, ed, md)
            for (beta, curve, seed), cd, ed, md in results]


def write_rows_csv(rows, path: str, header: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(
                f"{v:.6f}" if isinstance(v, float) else str(v) for v in row
            ) + "\n")
    os.replace(tmp, path)


def mean_by(rows, key_idx, value_idx):
    """Group rows by rows[key_idx], average rows[value_idx]."""
    groups = {}
    for row in rows:
        groups.setdefault(row[key_idx], []).append(row[value_idx])
    return {k: float(np.mean(v)) for k, v in groups.items()}
