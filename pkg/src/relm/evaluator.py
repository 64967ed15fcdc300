"""Classification metrics, population stability index and drift verdicts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .policy import Topology, forward

EPS_PROP = 1e-4
NONE, WARN, RECALIBRATE = "none", "warn", "recalibrate"

class MetricError(ValueError):
    pass

def _pair(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.ndim != 1 or a.shape != b.shape:
        raise MetricError(f"inputs must be equal-length vectors, got {a.shape} and {b.shape}")
    if len(a) == 0:
        raise MetricError("inputs are empty")
    return a, b

def accuracy(predictions, truths) -> float:
    p, t = _pair(predictions, truths)
    return float(np.mean(p == t))

def f1(predictions, truths) -> float:
    """F1 of the positive class; 0 when precision + recall is 0."""
    p, t = _pair(predictions, truths)
    tp = int(np.sum((p == 1) & (t == 1)))
    fp = int(np.sum((p == 1) & (t == 0)))
    fn = int(np.sum((p == 0) & (t == 1)))
    # 2PR/(P+R) reduces to 2TP/(2TP+FP+FN)
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if tp else 0.0

def log_loss(probabilities, truths, eps: float = 1e-15) -> float:
    p, t = _pair(probabilities, truths)
    p = np.clip(p.astype(float), eps, 1 - eps)
    # scalar libm logs and an exact sum make the value platform independent
    terms = [math.log(q) if y == 1 else math.log(1.0 - q) for q, y in zip(p.tolist(), t.tolist())]
    return -math.fsum(terms) / len(terms)

def quantile_edges(reference, bin_count: int) -> np.ndarray:
    """Interior cut points splitting ``reference`` into equal-count bins."""
    if bin_count < 2:
        raise MetricError("bin_count must be at least 2")
    ref = np.asarray(reference, dtype=float)
    if ref.size == 0:
        raise MetricError("reference sample is empty")
    return np.quantile(ref, np.arange(1, bin_count) / bin_count)

def bin_proportions(sample, edges: np.ndarray, eps_prop: float = EPS_PROP) -> np.ndarray:
    """Share of ``sample`` per bin (bins are (e[i-1], e[i]]), floored at eps_prop."""
    x = np.asarray(sample, dtype=float)
    if x.size == 0:
        raise MetricError("sample is empty")
    counts = np.bincount(np.searchsorted(edges, x, side="left"), minlength=len(edges) + 1)
    return np.maximum(counts / x.size, eps_prop)

def psi_from_proportions(expected, actual) -> float:
    e, a = np.asarray(expected, dtype=float), np.asarray(actual, dtype=float)
    # log differences keep the value exactly symmetric under swapping a and e
    return float(np.sum((a - e) * (np.log(a) - np.log(e))))

def psi(reference_sample, actual_sample, bin_count: int = 10, *,
        edges: np.ndarray | None = None, eps_prop: float = EPS_PROP) -> float:
    """Population stability index of ``actual_sample`` against ``reference_sample``.

    Bins are reference quantiles unless ``edges`` (interior cut points) are
    given.
    """
    if edges is None:
        edges = quantile_edges(reference_sample, bin_count)
    return psi_from_proportions(bin_proportions(reference_sample, edges, eps_prop),
                                bin_proportions(actual_sample, edges, eps_prop))

@dataclass(frozen=True)
class DriftThresholds:
    psi_warn: float = 0.1
    psi_recalibrate: float = 0.25
    accuracy_drop: float = 0.10
    f1_drop: float = 0.10

    def __post_init__(self):
        if not 0 <= self.psi_warn <= self.psi_recalibrate:
            raise MetricError("need 0 <= psi_warn <= psi_recalibrate")
        if not (0 < self.accuracy_drop <= 1 and 0 < self.f1_drop <= 1):
            raise MetricError("accuracy_drop and f1_drop must lie in (0, 1]")

@dataclass
class DriftReport:
    per_feature_psi: np.ndarray
    accuracy: float
    f1: float
    log_loss: float
    baseline_accuracy: float
    baseline_f1: float
    verdict: str
    reasons: list[str] = field(default_factory=list)

    @property
    def max_psi(self) -> float:
        return float(np.max(self.per_feature_psi)) if len(self.per_feature_psi) else 0.0

    def to_text(self) -> str:
        lines = ["key,value"]
        for j, v in enumerate(self.per_feature_psi):
            lines.append(f"psi_{j},{float(v)!r}")
        for key in ("max_psi", "accuracy", "f1", "log_loss", "baseline_accuracy", "baseline_f1"):
            lines.append(f"{key},{float(getattr(self, key))!r}")
        lines.append(f"verdict,{self.verdict}")
        lines.append(f"reasons,{';'.join(self.reasons)}")
        return "\n".join(lines) + "\n"

def drift_report(probabilities, truths, reference_states, actual_states,
                 baselines: tuple[float, float], thresholds: DriftThresholds = DriftThresholds(),
                 bin_count: int = 10, threshold: float = 0.5, eps: float = 1e-15) -> DriftReport:
    ref = np.atleast_2d(np.asarray(reference_states, dtype=float))
    act = np.atleast_2d(np.asarray(actual_states, dtype=float))
    if ref.shape[1] != act.shape[1]:
        raise MetricError(f"state dimensions differ: {ref.shape[1]} vs {act.shape[1]}")
    if len(act) == 0 or len(ref) == 0:
        raise MetricError("empty batch")
    probs = np.asarray(probabilities, dtype=float)
    preds = (probs >= threshold).astype(np.int64)
    per_psi = np.array([psi(ref[:, j], act[:, j], bin_count) for j in range(ref.shape[1])])
    acc, f = accuracy(preds, truths), f1(preds, truths)
    base_acc, base_f1 = baselines
    report = DriftReport(per_psi, acc, f, log_loss(probs, truths, eps),
                         float(base_acc), float(base_f1), NONE)
    reasons = []
    if report.max_psi >= thresholds.psi_recalibrate:
        reasons.append(f"psi {report.max_psi:.4f} >= {thresholds.psi_recalibrate}")
    if acc <= base_acc - thresholds.accuracy_drop:
        reasons.append(f"accuracy {acc:.4f} <= baseline {base_acc:.4f} - {thresholds.accuracy_drop}")
    if f <= base_f1 - thresholds.f1_drop:
        reasons.append(f"f1 {f:.4f} <= baseline {base_f1:.4f} - {thresholds.f1_drop}")
    if reasons:
        report.verdict = RECALIBRATE
    elif report.max_psi >= thresholds.psi_warn:
        report.verdict = WARN
        reasons.append(f"psi {report.max_psi:.4f} >= {thresholds.psi_warn}")
    report.reasons = reasons
    return report

def fitness(genome, t: Topology, states, labels, threshold: float = 0.5,
            w_acc: float = 0.5, w_f1: float = 0.5) -> float:
    """Negated weighted blend of accuracy and F1 (lower is better)."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise MetricError("fitness batch is empty")
    preds = (forward(genome, t, np.atleast_2d(states)) >= threshold).astype(np.int64)
    return -(w_acc * accuracy(preds, labels) + w_f1 * f1(preds, labels))
