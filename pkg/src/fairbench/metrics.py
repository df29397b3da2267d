"""Group statistics, fairness violations and performance measures.

Every supported statistic is a ratio of two weighted sums whose per-sample
terms are affine in the prediction ``h`` (hard 0/1 or a soft score)::

    gamma(q) = sum_i S_iq w_i num_i(h_i, y_i) / sum_i S_iq w_i den_i(h_i, y_i)

The mean statistic uses the same sums with ``S_iq = 1`` for all samples, and
the violation of a notion is ``max_q |gamma(q) / gamma_mean - 1|``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyDataError,
    FairbenchError,
    UndefinedAurocError,
    UndefinedStatisticError,
    UndefinedViolationError,
)

logger = logging.getLogger(__name__)

NOTIONS = ("dem_par", "eq_opp", "forp", "pred_par", "acc_eq", "f1_score_eq", "pred_eq")
OUTPUT_TYPES = ("hard", "soft")
DENOM_EPS = 1e-12
THRESHOLD = 0.5

# notion -> (num(h, y), den(h, y)); each affine in h for fixed y
_TERMS = {
    "dem_par": (lambda h, y: h, lambda h, y: np.ones_like(h)),
    "eq_opp": (lambda h, y: h * y, lambda h, y: y + 0.0 * h),
    "pred_eq": (lambda h, y: h * (1 - y), lambda h, y: (1 - y) + 0.0 * h),
    "pred_par": (lambda h, y: h * y, lambda h, y: h),
    "forp": (lambda h, y: y * (1 - h), lambda h, y: 1 - h),
    "acc_eq": (lambda h, y: 1 - y + (2 * y - 1) * h, lambda h, y: np.ones_like(h)),
    "f1_score_eq": (lambda h, y: 2 * h * y, lambda h, y: y + h),
}

# d num / dh and d den / dh per sample
_SLOPES = {
    "dem_par": (lambda y: np.ones_like(y), lambda y: np.zeros_like(y)),
    "eq_opp": (lambda y: y, lambda y: np.zeros_like(y)),
    "pred_eq": (lambda y: 1 - y, lambda y: np.zeros_like(y)),
    "pred_par": (lambda y: y, lambda y: np.ones_like(y)),
    "forp": (lambda y: -y, lambda y: -np.ones_like(y)),
    "acc_eq": (lambda y: 2 * y - 1, lambda y: np.zeros_like(y)),
    "f1_score_eq": (lambda y: 2 * y, lambda y: np.ones_like(y)),
}


def check_notion(notion: str) -> str:
    if notion not in NOTIONS:
        raise ValueError(f"unknown notion {notion!r}; expected one of {list(NOTIONS)}")
    return notion


def per_sample_terms(notion, predictions, labels):
    num, den = _TERMS[check_notion(notion)]
    h = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    return num(h, y), den(h, y)


def per_sample_slopes(notion, labels):
    dnum, dden = _SLOPES[check_notion(notion)]
    y = np.asarray(labels, dtype=np.float64)
    return dnum(y), dden(y)


@dataclass
class GroupStatistics:
    notion: str
    gamma: np.ndarray
    gamma_mean: float
    defined: np.ndarray
    group_names: tuple[str, ...]

    @property
    def n_undefined(self) -> int:
        return int(np.count_nonzero(~self.defined))

    def to_dict(self) -> dict:
        return {
            "notion": self.notion,
            "gamma": {g: (float(v) if ok else None) for g, v, ok in zip(self.group_names, self.gamma, self.defined)},
            "gamma_mean": float(self.gamma_mean),
        }


def group_sums(notion, predictions, labels, indicators, weights=None):
    """Per-group numerators and denominators plus the global ones."""
    num, den = per_sample_terms(notion, predictions, labels)
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        num, den = num * w, den * w
    S = np.asarray(indicators, dtype=np.float64)
    return S.T @ num, S.T @ den, float(num.sum()), float(den.sum())


def statistic(notion, predictions, labels, encoding, weights=None) -> GroupStatistics:
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels)
    indicators = getattr(encoding, "indicators", encoding)
    if not (predictions.shape == labels.shape and predictions.shape[0] == indicators.shape[0]):
        raise ValueError("predictions, labels and encoding must have the same number of rows")
    N, D, N_all, D_all = group_sums(notion, predictions, labels, indicators, weights)
    if D_all <= DENOM_EPS:
        raise UndefinedStatisticError(f"{notion}: global denominator vanishes")
    defined = D > DENOM_EPS
    gamma = np.divide(N, D, out=np.full_like(N, np.nan), where=defined)
    names = tuple(getattr(encoding, "group_names", ())) or tuple(str(q) for q in range(indicators.shape[1]))
    return GroupStatistics(notion, gamma, N_all / D_all, defined, names)


def violation(stats: GroupStatistics, axes=None) -> float:
    """Largest relative deviation of a defined group statistic from the mean.

    ``axes`` is accepted for parallel encodings but needs no special handling:
    the mean statistic is global, so one maximum over all columns equals the
    maximum over per-axis maxima.
    """
    if abs(stats.gamma_mean) <= DENOM_EPS:
        raise UndefinedViolationError(f"{stats.notion}: mean statistic is zero")
    if not stats.defined.any():
        raise UndefinedViolationError(f"{stats.notion}: no group has a defined statistic")
    if stats.n_undefined:
        logger.debug("%s: %d undefined groups skipped", stats.notion, stats.n_undefined)
    return float(np.max(np.abs(stats.gamma[stats.defined] / stats.gamma_mean - 1.0)))


def harden(scores) -> np.ndarray:
    return (np.asarray(scores, dtype=np.float64) >= THRESHOLD).astype(np.int64)


def accuracy(hard, labels, weights=None) -> float:
    hard = np.asarray(hard)
    labels = np.asarray(labels)
    if hard.size == 0:
        raise EmptyDataError("accuracy of an empty prediction vector")
    w = np.ones(hard.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    return float(np.sum(w * (hard == labels)) / np.sum(w))


def auroc(scores, labels, weights=None) -> float:
    """Weighted Mann-Whitney AUROC; tied positive/negative pairs count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    w = np.ones(scores.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    pos, neg = labels == 1, labels == 0
    w_pos, w_neg = w[pos].sum(), w[neg].sum()
    if w_pos == 0 or w_neg == 0:
        raise UndefinedAurocError("AUROC needs both positive and negative labels")
    uniq, inv = np.unique(scores, return_inverse=True)
    pos_at = np.bincount(inv, weights=w * pos, minlength=uniq.size)
    neg_at = np.bincount(inv, weights=w * neg, minlength=uniq.size)
    neg_below = np.cumsum(neg_at) - neg_at
    wins = np.sum(pos_at * (neg_below + 0.5 * neg_at))
    return float(wins / (w_pos * w_neg))


# ---------------------------------------------------------------------------
# Full evaluation


@dataclass
class ViolationCell:
    target: str
    format: str
    notion: str
    output_type: str
    violation: float | None
    stats: GroupStatistics | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        doc = {
            "target": self.target,
            "format": self.format,
            "notion": self.notion,
            "output_type": self.output_type,
            "violation": self.violation,
        }
        if self.stats is not None:
            doc["gamma"] = self.stats.to_dict()["gamma"]
            doc["gamma_mean"] = float(self.stats.gamma_mean)
            doc["undefined_groups"] = self.stats.n_undefined
        if self.error is not None:
            doc["error"] = self.error
        return doc


@dataclass
class EvaluationReport:
    cells: list[ViolationCell] = field(default_factory=list)
    # target -> output_type -> value (None when undefined)
    performance: dict[str, dict[str, float | None]] = field(default_factory=dict)

    @property
    def targets(self) -> list[str]:
        return list(self.performance)

    def violation(self, format, notion, output_type, target="biased"):
        for c in self.cells:
            if (c.target, c.format, c.notion, c.output_type) == (target, format, notion, output_type):
                return c.violation
        raise KeyError((target, format, notion, output_type))

    def to_dict(self) -> dict:
        return {
            "performance": {t: dict(p) for t, p in self.performance.items()},
            "cells": [c.to_dict() for c in self.cells],
        }


def evaluate(scores, dataset, encodings, notions=NOTIONS, weights=None) -> EvaluationReport:
    """Violations for every (target, format, notion, output type) plus performance.

    ``encodings`` is a list of :class:`~fairbench.data.SensitiveEncoding`
    aligned with ``dataset``. Performance is accuracy for hard predictions and
    AUROC for soft scores. When the dataset carries unbiased labels, a second
    target section ``"unbiased"`` is produced.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (dataset.n,):
        raise ValueError(f"expected {dataset.n} scores, got shape {scores.shape}")
    if not encodings:
        raise ValueError("at least one encoding is required")
    w = dataset.weights if weights is None else weights
    outputs = {"hard": harden(scores).astype(np.float64), "soft": scores}
    targets = {"biased": dataset.labels}
    if dataset.unbiased_labels is not None:
        targets["unbiased"] = dataset.unbiased_labels

    report = EvaluationReport()
    for target, y in targets.items():
        perf = {}
        perf["hard"] = accuracy(outputs["hard"], y, w)
        try:
            perf["soft"] = auroc(scores, y, w)
        except UndefinedAurocError:
            perf["soft"] = None
        report.performance[target] = perf
        for enc in encodings:
            for notion in notions:
                for output_type in OUTPUT_TYPES:
                    try:
                        st = statistic(notion, outputs[output_type], y, enc, w)
                        v = violation(st, enc.axes)
                        cell = ViolationCell(target, enc.format, notion, output_type, v, st)
                    except FairbenchError as exc:
                        cell = ViolationCell(target, enc.format, notion, output_type, None, error=str(exc))
                    report.cells.append(cell)
    return report
