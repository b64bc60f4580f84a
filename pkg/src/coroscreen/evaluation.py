"""Confusion-matrix metrics with confidence intervals, ROC, and reports.

Point values are exact rationals rendered at two decimals.  Sensitivity,
specificity, and accuracy carry Clopper-Pearson exact intervals; PPV and
NPV carry prevalence-adjusted logit intervals.  Metrics with a zero
denominator are reported as undefined, never coerced to a number.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import stats

CI_LEVEL = 0.95
CI_METHODS = {
    "sensitivity": "clopper-pearson",
    "specificity": "clopper-pearson",
    "accuracy": "clopper-pearson",
    "ppv": "prevalence-adjusted logit",
    "npv": "prevalence-adjusted logit",
    "prevalence": "none",
}


class EvaluationError(Exception):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise EvaluationError(f"{name} must be a non-negative count, got {v!r}")
        if self.total < 1:
            raise EvaluationError("confusion matrix must count at least one item")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class Metric:
    """Point value as an exact fraction, optional 95% interval as floats."""

    value: Fraction | None
    ci: tuple[float, float] | None = None

    def percent(self) -> str:
        if self.value is None:
            return "undefined"
        return f"{float(round(100 * self.value, 2)):.2f}%"

    def ci_percent(self) -> str:
        if self.ci is None:
            return "-"
        return f"{100 * self.ci[0]:.2f}% to {100 * self.ci[1]:.2f}%"


@dataclass(frozen=True)
class MetricSet:
    sensitivity: Metric
    specificity: Metric
    prevalence: Metric
    ppv: Metric
    npv: Metric
    accuracy: Metric

    def as_dict(self) -> dict[str, Metric]:
        return {"sensitivity": self.sensitivity, "specificity": self.specificity,
                "prevalence": self.prevalence, "ppv": self.ppv, "npv": self.npv,
                "accuracy": self.accuracy}


def confusion(pred, truth) -> ConfusionMatrix:
    """Tally binary predictions against binary truth."""
    if len(pred) != len(truth):
        raise EvaluationError(f"length mismatch: {len(pred)} predictions, {len(truth)} truths")
    if len(pred) == 0:
        raise EvaluationError("nothing to tally")
    tp = fp = fn = tn = 0
    for p, t in zip(pred, truth):
        if p not in (0, 1, False, True) or t not in (0, 1, False, True):
            raise EvaluationError(f"non-binary entry: pred {p!r} truth {t!r}")
        if t:
            tp, fn = tp + bool(p), fn + (not p)
        else:
            fp, tn = fp + bool(p), tn + (not p)
    return ConfusionMatrix(tp, fp, fn, tn)


def clopper_pearson(k: int, n: int, level: float = CI_LEVEL) -> tuple[float, float]:
    """Exact binomial interval for k successes out of n."""
    if not 0 <= k <= n or n < 1:
        raise EvaluationError(f"invalid binomial counts k={k} n={n}")
    alpha = 1.0 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


def _adjusted_logit_ci(cm: ConfusionMatrix, which: str,
                       level: float = CI_LEVEL) -> tuple[float, float] | None:
    """Predictive-value interval on the logit scale via prevalence,
    sensitivity, and specificity; undefined at degenerate counts."""
    n_pos, n_neg = cm.tp + cm.fn, cm.fp + cm.tn
    if n_pos == 0 or n_neg == 0:
        return None
    z = float(stats.norm.ppf(0.5 + level / 2))
    prev = n_pos / cm.total
    sens = cm.tp / n_pos
    spec = cm.tn / n_neg
    if which == "ppv":
        if cm.tp == 0 or cm.fp == 0:
            return None
        center = math.log(prev * sens) - math.log((1 - prev) * (1 - spec))
        var = (1 - sens) / sens / n_pos + spec / (1 - spec) / n_neg
    else:
        if cm.tn == 0 or cm.fn == 0:
            return None
        center = math.log((1 - prev) * spec) - math.log(prev * (1 - sens))
        var = sens / (1 - sens) / n_pos + (1 - spec) / spec / n_neg
    half = z * math.sqrt(var)
    expit = lambda x: 1.0 / (1.0 + math.exp(-x))
    return expit(center - half), expit(center + half)


def _binomial_metric(k: int, n: int) -> Metric:
    if n == 0:
        return Metric(None, None)
    return Metric(Fraction(k, n), clopper_pearson(k, n))


def metrics(cm: ConfusionMatrix) -> MetricSet:
    prev = Metric(Fraction(cm.tp + cm.fn, cm.total), None)
    ppv = (Metric(None, None) if cm.tp + cm.fp == 0
           else Metric(Fraction(cm.tp, cm.tp + cm.fp), _adjusted_logit_ci(cm, "ppv")))
    npv = (Metric(None, None) if cm.fn + cm.tn == 0
           else Metric(Fraction(cm.tn, cm.fn + cm.tn), _adjusted_logit_ci(cm, "npv")))
    return MetricSet(
        sensitivity=_binomial_metric(cm.tp, cm.tp + cm.fn),
        specificity=_binomial_metric(cm.tn, cm.fp + cm.tn),
        prevalence=prev,
        ppv=ppv,
        npv=npv,
        accuracy=_binomial_metric(cm.tp + cm.tn, cm.total),
    )


# ---------------------------------------------------------------------------
# ROC
# ---------------------------------------------------------------------------

def roc_auc(scores, labels) -> tuple[float, list[tuple[float, float, float]]]:
    """Rank-statistic AUC (ties count half) plus the threshold curve."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise EvaluationError("scores and labels must be equal-length vectors")
    if not np.all(np.isin(labels, (0, 1))):
        raise EvaluationError("labels must be binary")
    n_pos = int(np.count_nonzero(labels == 1))
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("both classes required for a ROC curve")
    ranks = stats.rankdata(scores)
    auc = (ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    points = []
    for t in np.concatenate([[np.inf], np.unique(scores)[::-1]]):
        called = scores >= t
        tpr = np.count_nonzero(called & (labels == 1)) / n_pos
        fpr = np.count_nonzero(called & (labels == 0)) / n_neg
        points.append((float(t), float(fpr), float(tpr)))
    return float(auc), points


def roc_curve_csv(points) -> str:
    lines = ["threshold,fpr,tpr"]
    lines += [f"{t},{fpr},{tpr}" for t, fpr, tpr in points]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

_ROWS = (
    ("Sensitivity", "sensitivity", "TP / (TP + FN)",
     lambda c: f"{c.tp} / ({c.tp}+{c.fn})"),
    ("Specificity", "specificity", "TN / (FP + TN)",
     lambda c: f"{c.tn} / ({c.fp}+{c.tn})"),
    ("Disease Prevalence", "prevalence", "(TP + FN) / (TP + FP + FN + TN)",
     lambda c: f"({c.tp}+{c.fn}) / ({c.tp}+{c.fp}+{c.fn}+{c.tn})"),
    ("PPV", "ppv", "TP / (TP + FP)",
     lambda c: f"{c.tp} / ({c.tp}+{c.fp})"),
    ("NPV", "npv", "TN / (FN + TN)",
     lambda c: f"{c.tn} / ({c.fn}+{c.tn})"),
    ("Accuracy", "accuracy", "(TP + TN) / (TP + FP + FN + TN)",
     lambda c: f"({c.tp}+{c.tn}) / ({c.tp}+{c.fp}+{c.fn}+{c.tn})"),
)


def report(name: str, cm: ConfusionMatrix, mset: MetricSet,
           auc: float | None = None) -> tuple[str, dict]:
    """Render one metrics table as aligned text plus a JSON object."""
    by_name = mset.as_dict()
    header = ("Metric", "Formula", "Confusion Matrix Values", "Calculated Value", "95% CI")
    rows = [header]
    payload_metrics = {}
    for title, key, formula, counts_of in _ROWS:
        m = by_name[key]
        counts = counts_of(cm)
        rows.append((title, formula, counts, m.percent(), m.ci_percent()))
        payload_metrics[key] = {
            "formula": formula,
            "counts": counts,
            "value_pct": None if m.value is None else f"{float(round(100 * m.value, 2)):.2f}",
            "ci_pct": None if m.ci is None else [f"{100 * v:.2f}" for v in m.ci],
            "ci_method": CI_METHODS[key],
        }
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = [name]
    for r in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    if auc is not None:
        lines.append(f"AUC-ROC: {auc:.2f}")
    payload = {
        "name": name,
        "confusion": {"tp": cm.tp, "fp": cm.fp, "fn": cm.fn, "tn": cm.tn},
        "metrics": payload_metrics,
        "auc": auc,
    }
    return "\n".join(lines) + "\n", payload


def report_json(name: str, cm: ConfusionMatrix, mset: MetricSet,
                auc: float | None = None) -> str:
    return json.dumps(report(name, cm, mset, auc)[1], indent=1, sort_keys=True)
