"""Detection metrics: correct / error / missed detection rates."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .autodiff import ContractError, Tensor


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsReport:
    cd: float
    ed: float
    md: float
    counts: ConfusionCounts
    n_smoke: int
    n_nonsmoke: int


def predict_labels(probs_s: np.ndarray):
    """Argmax per row; an exact 0.5/0.5 tie predicts non-smoke."""
    p = probs_s.data if isinstance(probs_s, Tensor) else np.asarray(probs_s)
    return (p[:, 1] > p[:, 0]).astype(int)


def metrics_cd_ed_md(counts: ConfusionCounts, n_smoke: int,
                     n_nonsmoke: int) -> MetricsReport:
    """CD = (tp+tn)/total, ED = fp/(tp+fp) (0 with no positive predictions),
    MD = fn/n_smoke."""
    if counts.tp + counts.fn != n_smoke or counts.fp + counts.tn != n_nonsmoke:
        raise ContractError(
            f"confusion counts {counts} inconsistent with "
            f"{n_smoke} smoke / {n_nonsmoke} non-smoke samples"
        )
    total = n_smoke + n_nonsmoke
    predicted_smoke = counts.tp + counts.fp
    return MetricsReport(
        cd=(counts.tp + counts.tn) / total,
        ed=counts.fp / predicted_smoke if predicted_smoke > 0 else 0.0,
        md=counts.fn / n_smoke,
        counts=counts,
        n_smoke=n_smoke,
        n_nonsmoke=n_nonsmoke,
    )


def confusion_from_predictions(pred, truth) -> ConfusionCounts:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    return ConfusionCounts(
        tp=int(((pred == 1) & (truth == 1)).sum()),
        fp=int(((pred == 1) & (truth == 0)).sum()),
        tn=int(((pred == 0) & (truth == 0)).sum()),
        fn=int(((pred == 0) & (truth == 1)).sum()),
    )


def evaluate(model, test_rows, root: str, batch: int = 256) -> MetricsReport:
    """Forward over the whole test manifest and score smoke predictions."""
    if not test_rows:
        raise ContractError("cannot evaluate on an empty test set")
    from .synth import load_image

    preds = []
    truth = []
    for k in range(0, len(test_rows), batch):
        chunk = test_rows[k : k + batch]
        images = Tensor(np.stack([
            load_image(os.path.join(root, r["path"])) for r in chunk
        ]))
        out = model.forward(images)
        preds.append(predict_labels(out["probs_s"]))
        truth.extend(r["y_s"] for r in chunk)
    pred = np.concatenate(preds)
    truth = np.asarray(truth)
    counts = confusion_from_predictions(pred, truth)
    return metrics_cd_ed_md(counts, int((truth == 1).sum()), int((truth == 0).sum()))
