"""Model variants: shared CNN extractor, adaptation layer, label/domain heads.

Variant wiring:
  GRL_ONLY        classifier(f_repr), domain head(GRL(f_repr))
  GRL_ADAPT_D     classifier(f_repr), domain head(GRL(adapt(f_repr)))
  GRL_ADAPT_SD    one shared adaptation layer feeding both heads
  GRL_ADAPT_CORAL as GRL_ADAPT_SD, adapted features also exposed for the
                  correlation-alignment loss
  BASELINE        classifier only, no domain path (the no-adaptation control)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class Variant(str, Enum):
    GRL_ONLY = "GRL_ONLY"
    GRL_ADAPT_D = "GRL_ADAPT_D"
    GRL_ADAPT_SD = "GRL_ADAPT_SD"
    GRL_ADAPT_CORAL = "GRL_ADAPT_CORAL"
    BASELINE = "BASELINE"


class ConfigError(ValueError):
    pass


@dataclass
class GrlConfig:
    phi: float = -1.0


@dataclass
class ModelVariantConfig:
    variant: Variant = Variant.GRL_ADAPT_CORAL
    image_size: int = 32
    channels: int = 3
    feature_dim: int = 64
    adapt_dim: int = 32
    grl: GrlConfig = field(default_factory=GrlConfig)

    def __post_init__(self):
        if isinstance(self.variant, str):
            try:
                self.variant = Variant(self.variant)
            except ValueError:
                raise ConfigError(f"unknown variant {self.variant!r}") from None
        if isinstance(self.grl, dict):
            self.grl = GrlConfig(**self.grl)
        if self.image_size % 4 != 0:
            raise ConfigError(f"image_size must be divisible by 4, got {self.image_size}")
        if not self.adapt_dim < self.feature_dim:
            raise ConfigError(
                f"adapt_dim ({self.adapt_dim}) must be below feature_dim "
                f"({self.feature_dim})"
            )

    @property
    def has_adaptation(self) -> bool:
        return self.variant in (
            Variant.GRL_ADAPT_D, Variant.GRL_ADAPT_SD, Variant.GRL_ADAPT_CORAL
        )

    @property
    def has_domain_head(self) -> bool:
        return self.variant is not Variant.BASELINE

    @property
    def exposes_coral_features(self) -> bool:
        return self.variant is Variant.GRL_ADAPT_CORAL

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "image_size": self.image_size,
            "channels": self.channels,
            "feature_dim": self.feature_dim,
            "adapt_dim": self.adapt_dim,
            "grl": {"phi": self.grl.phi},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelVariantConfig":
        return cls(**d)


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Model:
    """Parameters plus a define-by-run forward for one architecture variant."""

    def __init__(self, cfg: ModelVariantConfig, seed: int = 0):
        self.cfg = cfg
        self.init_seed = seed
        rng = np.random.default_rng(np.random.PCG64(seed))
        c = cfg.channels
        flat = 16 * (cfg.image_size // 4) ** 2
        p = {
            "conv1.k": _uniform(rng, (8, c, 3, 3), c * 9),
            "conv2.k": _uniform(rng, (16, 8, 3, 3), 8 * 9),
            "fc.W": _uniform(rng, (flat, cfg.feature_dim), flat),
            "fc.b": _uniform(rng, (cfg.feature_dim,), flat),
        }
        head_in = cfg.feature_dim
        if cfg.has_adaptation:
            p["adapt.A"] = _uniform(rng, (cfg.feature_dim, cfg.adapt_dim), cfg.feature_dim)
            p["adapt.b"] = _uniform(rng, (cfg.adapt_dim,), cfg.feature_dim)
        label_in = cfg.adapt_dim if cfg.variant in (
            Variant.GRL_ADAPT_SD, Variant.GRL_ADAPT_CORAL
        ) else cfg.feature_dim
        domain_in = cfg.adapt_dim if cfg.has_adaptation else cfg.feature_dim
        p["label.W"] = _uniform(rng, (label_in, 2), label_in)
        p["label.b"] = _uniform(rng, (2,), label_in)
        if cfg.has_domain_head:
            p["domain.W"] = _uniform(rng, (domain_in, 2), domain_in)
            p["domain.b"] = _uniform(rng, (2,), domain_in)
        self.params = p

    def feature_extractor(self, images: Tensor) -> Tensor:
        """Two conv+relu+pool stages, flatten, affine+relu to feature_dim."""
        centered = images + Tensor(np.array(-0.5))  # pixel values live in [0, 1]
        h = ad.op_relu(ad.op_conv2d(centered, self.params["conv1.k"], stride=1, pad=1))
        h = ad.op_maxpool2(h)
        h = ad.op_relu(ad.op_conv2d(h, self.params["conv2.k"], stride=1, pad=1))
        h = ad.op_maxpool2(h)
        h = ad.reshape(h, (h.shape[0], -1))
        return ad.op_relu(ad.op_affine(h, self.params["fc.W"], self.params["fc.b"]))

    def adaptation(self, f_repr: Tensor) -> Tensor:
        return ad.op_affine(f_repr, self.params["adapt.A"], self.params["adapt.b"])

    def forward(self, images: Tensor, phi_override: float | None = None) -> dict:
        """Returns probs_s always; probs_d and features_for_coral per variant."""
        cfg = self.cfg
        f_repr = self.feature_extractor(images)
        f_adapt = self.adaptation(f_repr) if cfg.has_adaptation else None

        label_feat = f_adapt if cfg.variant in (
            Variant.GRL_ADAPT_SD, Variant.GRL_ADAPT_CORAL
        ) else f_repr
        probs_s = ad.op_softmax(
            ad.op_affine(label_feat, self.params["label.W"], self.params["label.b"])
        )

        probs_d = None
        if cfg.has_domain_head:
            domain_feat = f_adapt if cfg.has_adaptation else f_repr
            phi = cfg.grl.phi if phi_override is None else phi_override
            rev = ad.op_grl(domain_feat, phi)
            probs_d = ad.op_softmax(
                ad.op_affine(rev, self.params["domain.W"], self.params["domain.b"])
            )

        feats = f_adapt if cfg.exposes_coral_features else None
        return {
            "probs_s": probs_s,
            "probs_d": probs_d,
            "features_for_coral": feats,
            "f_represent": f_repr,
        }

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None


def assemble_variant(cfg: ModelVariantConfig, seed: int = 0) -> Model:
    return Model(cfg, seed)
