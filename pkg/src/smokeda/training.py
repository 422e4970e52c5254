"""Mini-batch training of the joint objective, with checkpointing.

Batches are half source, half target (the no-adaptation baseline pools both).
The correlation loss, when active, is computed between the smoke rows of the
source half and the smoke rows of the target half: non-smoke rows are shared
real images on both sides, so aligning them carries no signal.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import losses as lo
from .autodiff import Tensor, gather_rows
from .losses import LossWeights
from .nets import Model, ModelVariantConfig, Variant
from .synth import load_image

CHECKPOINT_MAGIC = b"SMKDCKPT"
CHECKPOINT_VERSION = 1


class BatchCompositionError(RuntimeError):
    pass


class TrainingAbort(RuntimeError):
    pass


class CheckpointError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 10
    lr: float = 0.01
    momentum: float = 0.9
    lr_decay: float = 0.97
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    variant: ModelVariantConfig = field(default_factory=ModelVariantConfig)
    coral_all_rows: bool = False  # align all rows instead of smoke-only
    phi_ramp: bool = False  # linear ramp of phi over training, off by default

    def __post_init__(self):
        if self.batch_size % 2:
            raise ValueError(f"batch_size must be even, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if isinstance(self.variant, dict):
            self.variant = ModelVariantConfig.from_dict(self.variant)

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "lr": self.lr,
            "momentum": self.momentum,
            "lr_decay": self.lr_decay,
            "weights": dict(self.weights.__dict__),
            "seed": self.seed,
            "variant": self.variant.to_dict(),
            "coral_all_rows": self.coral_all_rows,
            "phi_ramp": self.phi_ramp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class RunRecord:
    config: dict
    seed: int
    steps: list = field(default_factory=list)  # (step, L_s, L_d, L_coral, L)
    epoch_metrics: list = field(default_factory=list)  # (epoch, cd, ed, md)

    def write_losses_csv(self, path: str):
        with open(path, "w") as fh:
            fh.write("step,L_s,L_d,L_coral,L_joint\n")
            for row in self.steps:
                fh.write("%d,%.17g,%.17g,%.17g,%.17g\n" % row)

    def write_metrics_csv(self, path: str):
        with open(path, "w") as fh:
            fh.write("epoch,CD,ED,MD\n")
            for row in self.epoch_metrics:
                fh.write("%d,%.6f,%.6f,%.6f\n" % row)


def _smoke_count(rows, idx):
    return sum(rows[i]["y_s"] for i in idx)


def iterate_epoch(source_rows, target_rows, batch_size, rng, coral_active=False):
    """Yield (rows, half) batches, half from each manifest, without replacement.

    With coral_active, each half must carry at least 2 smoke rows; the
    remaining epoch pool is reshuffled up to 10 times to satisfy this.
    """
    if not source_rows or not target_rows:
        raise BatchCompositionError("both manifests must be nonempty")
    half = batch_size // 2
    sperm = rng.permutation(len(source_rows))
    tperm = rng.permutation(len(target_rows))
    steps = min(len(sperm), len(tperm)) // half
    for k in range(steps):
        lo_, hi = k * half, (k + 1) * half
        for attempt in range(11):
            sidx = sperm[lo_:hi]
            tidx = tperm[lo_:hi]
            if not coral_active:
                break
            if (_smoke_count(source_rows, sidx) >= 2
                    and _smoke_count(target_rows, tidx) >= 2):
                break
            if attempt == 10:
                raise BatchCompositionError(
                    "could not compose a batch with >=2 smoke samples per half"
                )
            sperm[lo_:] = rng.permutation(sperm[lo_:])
            tperm[lo_:] = rng.permutation(tperm[lo_:])
        batch = [source_rows[i] for i in sidx] + [target_rows[i] for i in tidx]
        yield batch, half


def sample_batch(source_rows, target_rows, batch_size, rng, coral_active=False):
    """One balanced batch; the first half is source, the second target."""
    return next(iterate_epoch(source_rows, target_rows, batch_size, rng,
                              coral_active))


def sgd_step(params: dict, lr: float, momentum: float, velocity: dict):
    """v <- momentum * v - lr * g; theta <- theta + v. Velocity persists."""
    for name, t in params.items():
        g = t.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise TrainingAbort(f"non-finite gradient in parameter {name!r}")
        v = velocity.get(name)
        v = momentum * v - lr * g if v is not None else -lr * g
        velocity[name] = v
        t.data = t.data + v


class ImageCache:
    def __init__(self, root):
        self.root = root
        self._cache = {}

    def get(self, row):
        path = row["path"]
        if path not in self._cache:
            self._cache[path] = load_image(os.path.join(self.root, path))
        return self._cache[path]

    def batch(self, rows):
        return np.stack([self.get(r) for r in rows])


def train(cfg: TrainConfig, source_rows, target_rows, root: str,
          test_rows=None, checkpoint_path: str | None = None):
    """Full optimization run; returns (model, RunRecord). Deterministic in cfg."""
    from .metrics import evaluate  # deferred: metrics imports nothing from here

    model = Model(cfg.variant, cfg.seed)
    rng = np.random.default_rng(np.random.PCG64(cfg.seed + 0x5EED))
    cache = ImageCache(root)
    record = RunRecord(config=cfg.to_dict(), seed=cfg.seed)
    velocity = {}
    lr = cfg.lr
    w = cfg.weights
    coral_active = cfg.variant.variant is Variant.GRL_ADAPT_CORAL
    baseline = cfg.variant.variant is Variant.BASELINE

    total_steps = _count_steps(cfg, source_rows, target_rows)
    step = 0
    for epoch in range(cfg.epochs):
        for batch, half in _epoch_batches(cfg, source_rows, target_rows, rng,
                                          coral_active, baseline):
            phi = cfg.variant.grl.phi
            if cfg.phi_ramp and total_steps > 1:
                phi = phi * (step + 1) / total_steps
            images = Tensor(cache.batch(batch))
            out = model.forward(images) if not cfg.phi_ramp else \
                model.forward(images, phi_override=phi)
            y_s = [r["y_s"] for r in batch]
            L_s = lo.softmax_cross_entropy(out["probs_s"], y_s)

            L_d = None
            if out["probs_d"] is not None:
                y_d = [r["y_d"] for r in batch]
                L_d = lo.hinge_domain_loss(out["probs_d"], y_d, w.p)

            L_coral = None
            if coral_active:
                feats = out["features_for_coral"]
                if cfg.coral_all_rows:
                    src_idx = np.arange(half)
                    tgt_idx = np.arange(half, len(batch))
                else:
                    ys = np.array(y_s)
                    src_idx = np.flatnonzero(ys[:half] == 1)
                    tgt_idx = half + np.flatnonzero(ys[half:] == 1)
                L_coral = lo.coral_loss(gather_rows(feats, src_idx),
                                        gather_rows(feats, tgt_idx))

            if L_d is None:
                total = lo.scale(L_s, w.alpha_label)
                if L_coral is not None:
                    total = total + lo.scale(L_coral, w.gamma_coral)
            else:
                total = lo.joint_loss(L_s, L_d, L_coral, w)

            model.zero_grad()
            total.backward()
            try:
                sgd_step(model.params, lr, cfg.momentum, velocity)
            except TrainingAbort:
                if checkpoint_path:
                    checkpoint_save(model, checkpoint_path)
                raise
            record.steps.append((
                step,
                float(L_s.data),
                float(L_d.data) if L_d is not None else 0.0,
                float(L_coral.data) if L_coral is not None else 0.0,
                float(total.data),
            ))
            step += 1
        lr *= cfg.lr_decay
        if test_rows:
            rep = evaluate(model, test_rows, root)
            record.epoch_metrics.append((epoch, rep.cd, rep.ed, rep.md))
        if checkpoint_path:
            checkpoint_save(model, checkpoint_path)
    return model, record


def _count_steps(cfg, source_rows, target_rows):
    half = cfg.batch_size // 2
    if cfg.variant.variant is Variant.BASELINE:
        return (len(source_rows) + len(target_rows)) // cfg.batch_size * cfg.epochs
    return min(len(source_rows), len(target_rows)) // half * cfg.epochs


def _epoch_batches(cfg, source_rows, target_rows, rng, coral_active, baseline):
    if baseline:
        pool = list(source_rows) + list(target_rows)
        perm = rng.permutation(len(pool))
        b = cfg.batch_size
        for k in range(len(pool) // b):
            yield [pool[i] for i in perm[k * b : (k + 1) * b]], b // 2
    else:
        yield from iterate_epoch(source_rows, target_rows, cfg.batch_size, rng,
                                 coral_active)


# ---------------------------------------------------------------------------
# checkpoint format: magic, u32 version, u32 header length, JSON header,
# little-endian float64 payloads in header order


def checkpoint_save(model: Model, path: str):
    header = {
        "format_version": CHECKPOINT_VERSION,
        "variant": model.cfg.to_dict(),
        "init_seed": model.init_seed,
        "params": [
            {"name": n, "shape": list(t.data.shape)} for n, t in model.params.items()
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    tmp = path + ".tmp"
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for entry in header["params"]:
            arr = model.params[entry["name"]].data
            fh.write(arr.astype("<f8").tobytes())
    os.replace(tmp, path)


def checkpoint_load(path: str) -> Model:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(
                f"bad checkpoint magic {magic!r}, expected {CHECKPOINT_MAGIC!r}"
            )
        raw = fh.read(8)
        if len(raw) < 8:
            raise CheckpointError("truncated checkpoint header")
        version, hlen = struct.unpack("<II", raw)
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )
        blob = fh.read(hlen)
        if len(blob) < hlen:
            raise CheckpointError("truncated checkpoint header")
        header = json.loads(blob.decode())
        cfg = ModelVariantConfig.from_dict(header["variant"])
        model = Model(cfg, seed=header["init_seed"])
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape))
            payload = fh.read(n * 8)
            if len(payload) < n * 8:
                raise CheckpointError(
                    f"truncated payload for parameter {entry['name']!r}"
                )
            model.params[entry["name"]].data = np.frombuffer(
                payload, dtype="<f8"
            ).reshape(shape).copy()
    return model
