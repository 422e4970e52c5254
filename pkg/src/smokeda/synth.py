"""Two-domain procedural smoke corpus: plume rendering, region extraction,
manifest construction.

The first domain ("synthetic") renders crisp plumes over tiled procedural
backgrounds. The second ("real" proxy) reuses the same plume skeleton but
shifts the rendering statistics: smoother noise spectrum, blur, sensor grain,
reduced contrast and a photographic-style background family. gap_strength
interpolates between the two; at 0 both generators are identical.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image

from .noise import fbm, gaussian_blur

MASK_THRESHOLD = 0.05
COVERAGE_MIN = 0.05
COVERAGE_MAX = 0.60
MAX_ATTEMPTS = 10


class GenerationError(RuntimeError):
    def __init__(self, params, message="mask coverage unattainable"):
        super().__init__(f"{message} after {MAX_ATTEMPTS} attempts: {params}")
        self.params = params


class EmptyRegionError(ValueError):
    pass


@dataclass(frozen=True)
class PlumeParams:
    seed: int
    source_width: float = 0.15
    buoyancy: float = 0.8
    wind: float = 0.0
    density: float = 0.9
    lighting_gain: float = 1.0
    octaves: int = 4
    background_id: int = 0


@dataclass
class DatasetSpec:
    n_source_smoke: int = 1000
    n_target_smoke: int = 500
    nonsmoke_to_smoke_ratio: float = 1.0
    n_nonsmoke_per_dataset: int | None = None  # overrides the ratio if set
    image_size: int = 32
    master_seed: int = 0
    gap_strength: float = 1.0
    n_test_smoke: int = 500
    n_test_nonsmoke: int = 500
    hard_negative_frac_train: float = 0.3
    hard_negative_frac_test: float = 0.5
    gen_size: int = 48

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        return cls(**d)


def sample_plume_params(seed: int) -> PlumeParams:
    rng = np.random.default_rng(np.random.PCG64(seed))
    return PlumeParams(
        seed=seed,
        source_width=rng.uniform(0.10, 0.24),
        buoyancy=rng.uniform(0.4, 1.0),
        wind=rng.uniform(-0.5, 0.5),
        density=rng.uniform(0.6, 1.0),
        lighting_gain=rng.uniform(0.85, 1.15),
        octaves=int(rng.integers(3, 6)),
        background_id=int(rng.integers(0, 1_000_000)),
    )


def _streams(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _tiled_background(size: int, rng, background_id: int) -> np.ndarray:
    """Procedural tile patterns: the synthetic rendering's background family."""
    kind = background_id % 3
    tile = (4, 6, 8)[(background_id // 3) % 3]
    c1 = rng.uniform(0.15, 0.85, size=3)
    c2 = rng.uniform(0.15, 0.85, size=3)
    yy, xx = np.mgrid[0:size, 0:size]
    if kind == 0:
        sel = ((yy // tile) + (xx // tile)) % 2
    elif kind == 1:
        sel = (xx // tile) % 2
    else:
        sel = ((yy + xx) // tile) % 2
    img = np.where(sel[..., None] == 0, c1, c2)
    return img


def _photo_background(size: int, rng, background_id: int) -> np.ndarray:
    """Smooth gradient-plus-texture scenes: the real-capture background family."""
    horizon = 0.35 + 0.3 * ((background_id % 97) / 96.0)
    v = np.linspace(0.0, 1.0, size)[:, None, None]
    sky = rng.uniform(0.55, 0.8, size=3)
    ground = sky - rng.uniform(0.05, 0.15)
    t = np.clip((v - horizon) / 0.45, 0.0, 1.0)
    img = sky * (1 - t) + ground * t
    tex = fbm(size, size, 3, rng, base_scale=size / 2.5, persistence=0.6)
    img = img + 0.08 * (tex[..., None] - 0.5)
    return img


def _render_plume_alpha(params: PlumeParams, size: int, persistence: float, rng):
    """Plume opacity field: noisy Gaussian column rising from the bottom edge."""
    row = np.arange(size)[:, None]
    col = np.arange(size)[None, :]
    v = (size - 1 - row) / (size - 1)  # 0 at the bottom, 1 at the top
    u = col / (size - 1)
    center = 0.5 + params.wind * 0.4 * v
    width = params.source_width * (0.30 + 0.9 * v)
    reach = np.clip(0.45 + 0.5 * params.buoyancy, 0.3, 1.0)
    fade = np.clip((reach - v) / 0.25 + 1.0, 0.0, 1.0)
    envelope = np.exp(-((u - center) / width) ** 2) * fade
    tex = fbm(size, size, params.octaves, rng, base_scale=size / 3.0,
              persistence=persistence)
    alpha = params.density * envelope * (0.35 + 0.85 * tex)
    return np.clip(alpha, 0.0, 1.0), tex


def render_smoke(params: PlumeParams, size: int, gap_strength: float):
    """One smoke image plus mask; gap_strength selects the rendering domain."""
    g = float(gap_strength)
    rng_noise, rng_tile, rng_photo, rng_grain = _streams(params.seed, 4)
    persistence = 0.5 + 0.25 * g
    alpha, tex = _render_plume_alpha(params, size, persistence, rng_noise)
    mask = alpha > MASK_THRESHOLD

    bg_tiled = _tiled_background(size, rng_tile, params.background_id)
    bg_photo = _photo_background(size, rng_photo, params.background_id)
    bg = (1 - g) * bg_tiled + g * bg_photo

    smoke_gray = 0.55 + 0.4 * tex
    # the real domain renders the same plume fainter, blurrier and noisier;
    # the degradation is strong but nearly constant across images, so it is a
    # consistent appearance shift rather than per-image corruption
    fade = g * (0.60 + rng_grain.uniform(-0.05, 0.05))
    sigma = g * (2.2 + rng_grain.uniform(-0.2, 0.2))
    contrast = g * (0.50 + rng_grain.uniform(-0.05, 0.05))
    grain = g * (0.06 + rng_grain.uniform(-0.01, 0.01))
    alpha_render = alpha * (1.0 - fade)
    img = bg * (1 - alpha_render[..., None]) + smoke_gray[..., None] * alpha_render[..., None]

    if g > 0:
        img = np.stack([gaussian_blur(img[..., c], sigma) for c in range(3)], axis=-1)
        img = 0.5 + (img - 0.5) * (1.0 - contrast)
        img = img + rng_grain.normal(0.0, grain, size=img.shape)

    img = np.clip(img * params.lighting_gain, 0.0, 1.0)
    return img, mask


def _generate_with_coverage(params: PlumeParams, size: int, gap_strength: float):
    p = params
    for attempt in range(MAX_ATTEMPTS):
        img, mask = render_smoke(p, size, gap_strength)
        coverage = mask.mean()
        if COVERAGE_MIN <= coverage <= COVERAGE_MAX:
            return img, mask
        resampled = sample_plume_params(p.seed + 7919 * (attempt + 1))
        p = replace(resampled, seed=p.seed + 7919 * (attempt + 1))
    raise GenerationError(params)


def gen_smoke_synthetic(params: PlumeParams, size: int):
    return _generate_with_coverage(params, size, 0.0)


def gen_smoke_realproxy(params: PlumeParams, size: int, gap_strength: float):
    return _generate_with_coverage(params, size, gap_strength)


def gen_nonsmoke(seed: int, size: int, hard_negative: bool = False) -> np.ndarray:
    """Background-only scene; hard negatives add smoke-like diffuse fog."""
    rng_photo, rng_fog, rng_grain = _streams(seed, 3)
    bid = seed % 1_000_000
    img = _photo_background(size, rng_photo, bid)
    if hard_negative:
        fog = fbm(size, size, 2, rng_fog, base_scale=size / 1.2, persistence=0.85)
        fog_alpha = np.clip(fog ** 1.2, 0.0, 1.0)
        fog_gray = 0.35 + 0.6 * fog
        img = img * (1 - fog_alpha[..., None]) + fog_gray[..., None] * fog_alpha[..., None]
        sigma = rng_grain.uniform(0.7, 1.6)
        img = np.stack([gaussian_blur(img[..., c], sigma) for c in range(3)], axis=-1)
    img = img + rng_grain.normal(0.0, 0.03, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def extract_region(image: np.ndarray, mask: np.ndarray, margin: int = 0,
                   out_size: int | None = None):
    """Tight mask bounding box grown by margin and clamped; optional rescale.

    Returns (crop, (row0, col0, row1, col1)) with inclusive coordinates.
    """
    if not mask.any():
        raise EmptyRegionError("cannot extract a region from an empty mask")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    h, w = mask.shape
    r0 = max(0, rows[0] - margin)
    r1 = min(h - 1, rows[-1] + margin)
    c0 = max(0, cols[0] - margin)
    c1 = min(w - 1, cols[-1] + margin)
    crop = image[r0 : r1 + 1, c0 : c1 + 1]
    if out_size is not None:
        crop = resize_image(crop, out_size)
    return crop, (int(r0), int(c0), int(r1), int(c1))


def resize_image(img: np.ndarray, size: int) -> np.ndarray:
    pil = Image.fromarray(to_uint8(img))
    return np.asarray(pil.resize((size, size), Image.BILINEAR), dtype=np.float64) / 255.0


def to_uint8(img: np.ndarray) -> np.ndarray:
    return (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_png(img: np.ndarray, path: str):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    Image.fromarray(to_uint8(img)).save(path, format="PNG")


def load_image(path: str) -> np.ndarray:
    """PNG to float64 [C, H, W] in [0, 1]."""
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)


# stream ids keep train and test sample seeds disjoint by construction
_STREAM_SOURCE_SMOKE = 1
_STREAM_TARGET_SMOKE = 2
_STREAM_SOURCE_NONSMOKE = 3
_STREAM_TARGET_NONSMOKE = 4
_STREAM_TEST_SMOKE = 5
_STREAM_TEST_NONSMOKE = 6


def sample_seed(master_seed: int, stream: int, i: int) -> int:
    return (master_seed * 1_000_003 + stream * 100_000_019 + i) % (2 ** 62)


def build_dataset(spec: DatasetSpec, out_dir: str):
    """Write the three-way corpus (source / target / test) plus manifest.

    Source rows are synthetic smoke (y_s=1, y_d=0) and real non-smoke
    (y_s=0, y_d=1); target rows are real-proxy smoke and real non-smoke;
    the test split holds real-proxy smoke and non-smoke with hard negatives.
    """
    rows = []

    def smoke_row(split, domain_name, seed, gap):
        params = sample_plume_params(seed)
        img, mask = _generate_with_coverage(params, spec.gen_size, gap)
        crop, bbox = extract_region(img, mask, margin=2, out_size=spec.image_size)
        rel = f"{split}/{domain_name}/smoke/{seed}.png"
        save_png(crop, os.path.join(out_dir, rel))
        return {
            "path": rel,
            "y_s": 1,
            "y_d": 0 if domain_name == "synthetic" else 1,
            "split": split,
            "bbox": list(bbox),
        }

    def nonsmoke_row(split, seed, hard):
        img = gen_nonsmoke(seed, spec.image_size, hard_negative=hard)
        rel = f"{split}/real/nonsmoke/{seed}.png"
        save_png(img, os.path.join(out_dir, rel))
        return {"path": rel, "y_s": 0, "y_d": 1, "split": split, "bbox": None}

    def n_nonsmoke(n_smoke):
        if spec.n_nonsmoke_per_dataset is not None:
            return spec.n_nonsmoke_per_dataset
        return int(round(spec.nonsmoke_to_smoke_ratio * n_smoke))

    for i in range(spec.n_source_smoke):
        seed = sample_seed(spec.master_seed, _STREAM_SOURCE_SMOKE, i)
        rows.append(smoke_row("source", "synthetic", seed, 0.0))
    for i in range(spec.n_target_smoke):
        seed = sample_seed(spec.master_seed, _STREAM_TARGET_SMOKE, i)
        rows.append(smoke_row("target", "real", seed, spec.gap_strength))

    for split, stream, count in (
        ("source", _STREAM_SOURCE_NONSMOKE, n_nonsmoke(spec.n_source_smoke)),
        ("target", _STREAM_TARGET_NONSMOKE, n_nonsmoke(spec.n_target_smoke)),
    ):
        n_hard = int(round(spec.hard_negative_frac_train * count))
        for i in range(count):
            seed = sample_seed(spec.master_seed, stream, i)
            rows.append(nonsmoke_row(split, seed, hard=i < n_hard))

    for i in range(spec.n_test_smoke):
        seed = sample_seed(spec.master_seed, _STREAM_TEST_SMOKE, i)
        rows.append(smoke_row("test", "real", seed, spec.gap_strength))
    n_hard = int(round(spec.hard_negative_frac_test * spec.n_test_nonsmoke))
    for i in range(spec.n_test_nonsmoke):
        seed = sample_seed(spec.master_seed, _STREAM_TEST_NONSMOKE, i)
        rows.append(nonsmoke_row("test", seed, hard=i < n_hard))

    write_manifest(rows, os.path.join(out_dir, "manifest.jsonl"))
    return rows


def augment_target(rows, factor: int, rng, root: str):
    """Enlarge target smoke by flips, small crops and brightness jitter."""
    if factor < 1:
        raise ValueError(f"augment factor must be >= 1, got {factor}")
    if factor == 1:
        return list(rows)
    out = list(rows)
    for row in rows:
        if row["split"] != "target" or row["y_s"] != 1:
            continue
        img = load_image(os.path.join(root, row["path"])).transpose(1, 2, 0)
        size = img.shape[0]
        for k in range(factor - 1):
            aug = img
            if rng.random() < 0.5:
                aug = aug[:, ::-1]
            max_off = max(1, size // 10)
            r0 = int(rng.integers(0, max_off))
            c0 = int(rng.integers(0, max_off))
            r1 = size - int(rng.integers(0, max_off))
            c1 = size - int(rng.integers(0, max_off))
            aug = resize_image(aug[r0:r1, c0:c1], size)
            aug = np.clip(aug * rng.uniform(0.9, 1.1), 0.0, 1.0)
            rel = row["path"].replace(".png", f"_aug{k}.png")
            save_png(aug, os.path.join(root, rel))
            out.append({**row, "path": rel, "bbox": None})
    return out


def write_manifest(rows, path: str):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(
                {"path": row["path"], "y_s": row["y_s"], "y_d": row["y_d"],
                 "split": row["split"], "bbox": row["bbox"]}) + "\n")


def read_manifest(path: str):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows
