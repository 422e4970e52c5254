"""smokeda command line: synth, train, ablation, sweep, tsne."""

from __future__ import annotations

import os
import sys

import click
import numpy as np

from . import config as cfgmod
from . import figures, sweeps
from .autodiff import Tensor
from .metrics import evaluate
from .synth import build_dataset, load_image, read_manifest
from .training import checkpoint_load, checkpoint_save, train
from .tsne import tsne_embed


def _common(config, seed, out):
    cfg = cfgmod.load_config(config)
    cfg = cfgmod.resolve(cfg, seed=seed, out=out)
    os.makedirs(cfg.outputs, exist_ok=True)
    cfgmod.write_resolved(cfg, cfg.outputs)
    return cfg


common_options = [
    click.option("--config", type=click.Path(exists=True), default=None,
                 help="YAML experiment config."),
    click.option("--seed", type=int, default=None,
                 help="Override config seed (env SMOKEDA_SEED is the fallback)."),
    click.option("--out", type=click.Path(), default=None,
                 help="Output directory (overrides config outputs)."),
]


def with_common(f):
    for opt in reversed(common_options):
        f = opt(f)
    return f


@click.group()
def main():
    """Domain-adaptation smoke classifier experiments."""


@main.command()
@with_common
def synth(config, seed, out):
    """Generate the two-domain corpus and its manifest."""
    cfg = _common(config, seed, out)
    ds_dir = os.path.join(cfg.outputs, "dataset")
    try:
        rows = build_dataset(cfg.dataset, ds_dir)
    except OSError as exc:
        raise click.ClickException(f"dataset generation failed: {exc}")
    counts = {}
    for r in rows:
        key = (r["split"], r["y_d"], r["y_s"])
        counts[key] = counts.get(key, 0) + 1
    click.echo(f"wrote {len(rows)} images under {ds_dir}")
    for (split, y_d, y_s), n in sorted(counts.items()):
        domain = "synthetic" if y_d == 0 else "real"
        label = "smoke" if y_s == 1 else "non-smoke"
        click.echo(f"  {split:>6} {domain:>9} {label:>9}: {n}")


@main.command(name="train")
@with_common
def train_cmd(config, seed, out):
    """Train the configured variant; writes checkpoint, losses and metrics."""
    cfg = _common(config, seed, out)
    ds_dir = os.path.join(cfg.outputs, "dataset")
    manifest = os.path.join(ds_dir, "manifest.jsonl")
    if not os.path.exists(manifest):
        raise click.ClickException(
            f"no dataset manifest at {manifest}; run `smokeda synth` first"
        )
    rows = read_manifest(manifest)
    source, target, test = sweeps.split_rows(rows)
    ckpt = os.path.join(cfg.outputs, "checkpoint.bin")
    model, record = train(cfg.train, source, target, ds_dir,
                          test_rows=test, checkpoint_path=ckpt)
    checkpoint_save(model, ckpt)
    record.write_losses_csv(os.path.join(cfg.outputs, "losses.csv"))
    record.write_metrics_csv(os.path.join(cfg.outputs, "metrics.csv"))
    rep = evaluate(model, test, ds_dir)
    click.echo(f"final CD={rep.cd:.4f} ED={rep.ed:.4f} MD={rep.md:.4f}")


@main.command()
@with_common
@click.option("--jobs", type=int, default=1, help="Parallel training runs.")
def ablation(config, seed, out, jobs):
    """Baseline vs the four adaptation variants, averaged over seeds."""
    cfg = _common(config, seed, out)
    n_seeds = int(cfg.ablation.get("seeds", 5))
    base_seed = cfg.seed or 0
    seeds = [base_seed + k for k in range(n_seeds)]
    cache = os.path.join(cfg.outputs, "datasets")
    rows = sweeps.run_ablation(cfg.dataset, cfg.train, seeds, cache, jobs=jobs)
    path = os.path.join(cfg.outputs, "ablation.csv")
    sweeps.write_rows_csv(rows, path, "arch,seed,CD,ED,MD")
    means = sweeps.mean_by(rows, 0, 2)
    figures.emit_bar_plot(
        list(means.keys()), list(means.values()),
        os.path.join(cfg.outputs, "ablation.svg"), "mean CD",
    )
    click.echo(f"wrote {path}")
    for arch in sweeps.ABLATION_ARCHS:
        click.echo(f"  {arch:>16}: mean CD {means[arch]:.4f}")


@main.command()
@with_common
@click.option("--which", type=click.Choice(["ratio_st", "ratio_ns", "beta"]),
              required=True)
@click.option("--jobs", type=int, default=1, help="Parallel training runs.")
def sweep(config, seed, out, which, jobs):
    """Scale-proportion and loss-weight sweeps; CSV plus an SVG curve."""
    cfg = _common(config, seed, out)
    sw = cfg.sweep
    base_seed = cfg.seed or 0
    seeds = [base_seed + k for k in range(int(sw.get("seeds", 3)))]
    cache = os.path.join(cfg.outputs, "datasets")
    csv_path = os.path.join(cfg.outputs, f"sweep_{which}.csv")
    svg_path = os.path.join(cfg.outputs, f"sweep_{which}.svg")

    if which == "ratio_st":
        rows = sweeps.sweep_source_target_ratio(
            cfg.dataset, cfg.train, sw["ratios_st"], seeds, cache,
            augment_factor=int(sw.get("augment_factor", 2)), jobs=jobs)
        sweeps.write_rows_csv(rows, csv_path, "param,seed,CD,ED,MD")
        means = sweeps.mean_by(rows, 0, 2)
        xs = sorted(means)
        figures.emit_line_plot(xs, {"CD": [means[x] for x in xs]}, svg_path,
                               "source : target scale", "mean CD")
    elif which == "ratio_ns":
        rows = sweeps.sweep_nonsmoke_ratio(
            cfg.dataset, cfg.train, sw["ratios_ns"], seeds, cache, jobs=jobs)
        sweeps.write_rows_csv(rows, csv_path, "param,seed,CD,ED,MD")
        means_ed = sweeps.mean_by(rows, 0, 3)
        means_md = sweeps.mean_by(rows, 0, 4)
        xs = sorted(means_ed)
        figures.emit_line_plot(
            xs, {"ED": [means_ed[x] for x in xs], "MD": [means_md[x] for x in xs]},
            svg_path, "non-smoke : smoke scale", "mean rate")
    else:
        rows = sweeps.sweep_beta(
            cfg.dataset, cfg.train, sw["betas"], seeds, cache,
            with_coral=bool(sw.get("with_coral", True)), jobs=jobs)
        sweeps.write_rows_csv(rows, csv_path, "param,curve,seed,CD,ED,MD")
        series = {}
        for curve in sorted({r[1] for r in rows}):
            sub = [r for r in rows if r[1] == curve]
            means = sweeps.mean_by(sub, 0, 3)
            xs = sorted(means)
            series[curve] = [means[x] for x in xs]
        figures.emit_line_plot(sorted({r[0] for r in rows}), series, svg_path,
                               "domain loss weight", "mean CD")
    click.echo(f"wrote {csv_path} and {svg_path}")


@main.command()
@with_common
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True),
              required=True)
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True),
              required=True, help="Directory holding manifest.jsonl.")
def tsne(config, seed, out, checkpoint_path, dataset_dir):
    """Embed trained features of the three sample groups into 2-D."""
    cfg = _common(config, seed, out)
    model = checkpoint_load(checkpoint_path)
    rows = read_manifest(os.path.join(dataset_dir, "manifest.jsonl"))
    n_per = int(cfg.tsne.get("n_per_group", 200))
    tseed = int(cfg.tsne.get("seed", cfg.seed or 0))
    rng = np.random.default_rng(np.random.PCG64(tseed))

    groups = {
        "synthetic_smoke": [r for r in rows if r["y_s"] == 1 and r["y_d"] == 0],
        "real_smoke": [r for r in rows if r["y_s"] == 1 and r["y_d"] == 1
                       and r["split"] != "test"],
        "nonsmoke": [r for r in rows if r["y_s"] == 0 and r["split"] != "test"],
    }
    picked = []
    for pool in groups.values():
        idx = rng.permutation(len(pool))[:n_per]
        picked.extend(pool[i] for i in idx)
    if not picked:
        raise click.ClickException("no samples available for embedding")

    feats = []
    for k in range(0, len(picked), 256):
        chunk = picked[k : k + 256]
        images = Tensor(np.stack([
            load_image(os.path.join(dataset_dir, r["path"])) for r in chunk
        ]))
        outd = model.forward(images)
        f = outd["features_for_coral"]
        if f is None:
            f = outd["f_represent"]
        feats.append(f.data)
    feats = np.concatenate(feats)
    emb, kl = tsne_embed(
        feats,
        perplexity=float(cfg.tsne.get("perplexity", 30.0)),
        iters=int(cfg.tsne.get("iters", 400)),
        seed=tseed,
    )
    y_s = [r["y_s"] for r in picked]
    y_d = [r["y_d"] for r in picked]
    csv_path = os.path.join(cfg.outputs, "embedding.csv")
    with open(csv_path, "w") as fh:
        fh.write("x,y,y_s,y_d\n")
        for (x, y), s, d in zip(emb, y_s, y_d):
            fh.write(f"{x:.6f},{y:.6f},{s},{d}\n")
    figures.emit_feature_plot(emb, y_s, y_d,
                              os.path.join(cfg.outputs, "tsne.svg"))
    click.echo(f"embedded {len(picked)} samples, final KL {kl:.4f}")


if __name__ == "__main__":
    sys.exit(main())
