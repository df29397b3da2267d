"""Postprocessing: group-specific decision thresholds (error parity).

For demographic parity, equal opportunity and predictive equality the group
statistic of a thresholded classifier is a rate over a fixed subset of the
group (all samples, positives, negatives), and the mean statistic is a fixed
convex combination of the group rates. Each group therefore contributes a
short list of (rate, best accuracy at that rate) options, and the fit chooses
one option per group.

Small problems are solved by exhaustive enumeration of all option
combinations. Larger ones fall back to a target-rate sweep: for every
candidate rate each group picks the option closest to it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SensitiveEncoding
from .errors import ApplicationError, FitError, FormatError
from .metrics import DENOM_EPS

POSTMETHODS = ("error_parity",)
EP_NOTIONS = ("dem_par", "eq_opp", "pred_eq")
EXACT_LIMIT = 250_000
GRID_POINTS = 51


@dataclass
class ThresholdPolicy:
    group_names: tuple[str, ...]
    thresholds: np.ndarray
    notion: str
    tolerance: float
    achieved_violation: float
    fit_accuracy: float
    infeasible: bool = False

    def to_dict(self) -> dict:
        return {
            "notion": self.notion,
            "tolerance": self.tolerance,
            "thresholds": dict(zip(self.group_names, map(float, self.thresholds))),
            "achieved_violation": self.achieved_violation,
            "fit_accuracy": self.fit_accuracy,
            "infeasible": self.infeasible,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ThresholdPolicy":
        names = tuple(doc["thresholds"])
        return cls(names, np.array([doc["thresholds"][g] for g in names]), doc["notion"],
                   doc["tolerance"], doc["achieved_violation"], doc["fit_accuracy"], doc["infeasible"])


@dataclass
class _GroupOptions:
    thresholds: np.ndarray
    rates: np.ndarray
    correct: np.ndarray  # weighted count of correct predictions in the group


def _subset(notion, labels):
    if notion == "dem_par":
        return np.ones(labels.shape, dtype=bool)
    if notion == "eq_opp":
        return labels == 1
    return labels == 0


def _group_options(scores, labels, weights, notion) -> _GroupOptions:
    uniq = np.unique(scores)
    thresholds = np.append(uniq, np.nextafter(uniq[-1], np.inf))
    sub = _subset(notion, labels)
    # positive-side masses for each threshold: samples with score >= t
    order = np.argsort(scores, kind="stable")
    s_sorted = scores[order]
    start = np.searchsorted(s_sorted, thresholds, side="left")

    def tail(mass):
        c = np.concatenate([np.cumsum(mass[order][::-1])[::-1], [0.0]])
        return c[start]

    sub_w = weights * sub
    rates = tail(sub_w) / sub_w.sum()
    pos_correct = tail(weights * (labels == 1))
    neg_correct = np.sum(weights * (labels == 0)) - tail(weights * (labels == 0))
    correct = pos_correct + neg_correct

    # keep the most accurate threshold per distinct rate (first on ties)
    keep = {}
    for k, r in enumerate(rates):
        if r not in keep or correct[k] > correct[keep[r]]:
            keep[r] = k
    idx = np.array(sorted(keep.values()))
    return _GroupOptions(thresholds[idx], rates[idx], correct[idx])


def _violations(rates, coef):
    """Violation for each row of a (combos x groups) rate matrix."""
    mean = rates @ coef
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.max(np.abs(rates / mean[:, None] - 1.0), axis=1)
    return np.where(mean > DENOM_EPS, v, np.inf)


def _choose(rates, correct, coef, tolerance):
    viol = _violations(rates, coef)
    feasible = viol <= tolerance
    if feasible.any():
        # max accuracy, then min violation, then first
        keys = np.lexsort((np.arange(len(viol)), viol, -correct))
        best = next(k for k in keys if feasible[k])
        return best, viol[best], False
    best = int(np.lexsort((np.arange(len(viol)), -correct, viol))[0])
    return best, viol[best], True


def fit_error_parity(scores, labels, encoding: SensitiveEncoding, notion: str = "dem_par",
                     tolerance: float = 0.0, weights=None) -> ThresholdPolicy:
    """Per-group thresholds maximizing fit-set accuracy with violation <= tolerance.

    If no candidate satisfies the tolerance the least-violating candidate is
    returned with ``infeasible=True``.
    """
    if notion not in EP_NOTIONS:
        raise FitError(f"error parity supports {list(EP_NOTIONS)}, not {notion!r}")
    if encoding.format == "parallel":
        raise FormatError("error parity does not support the parallel format")
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    w = np.ones(scores.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    groups = encoding.group_index()

    options, coef, present = [], [], []
    for q in range(encoding.n_groups):
        members = groups == q
        if not members.any():
            continue
        sub = _subset(notion, labels[members])
        if not sub.any():
            kind = "positive" if notion == "eq_opp" else "negative"
            raise FitError(f"group {encoding.group_names[q]!r} has no {kind} samples")
        options.append(_group_options(scores[members], labels[members], w[members], notion))
        coef.append(np.sum(w[members] * sub))
        present.append(q)
    if not present:
        raise FitError("no group has any sample")
    coef = np.asarray(coef) / np.sum(coef)
    total = w.sum()

    sizes = [len(o.rates) for o in options]
    if np.prod(sizes, dtype=np.float64) <= EXACT_LIMIT:
        grids = np.meshgrid(*[np.arange(k) for k in sizes], indexing="ij")
        choice = np.column_stack([g.ravel() for g in grids])
    else:
        choice = _sweep_candidates(options)
    rates = np.column_stack([o.rates[choice[:, j]] for j, o in enumerate(options)])
    correct = sum(o.correct[choice[:, j]] for j, o in enumerate(options))
    best, viol, infeasible = _choose(rates, correct, coef, tolerance)

    thresholds = np.full(encoding.n_groups, 0.5)
    for j, q in enumerate(present):
        thresholds[q] = options[j].thresholds[choice[best, j]]
    return ThresholdPolicy(
        group_names=tuple(encoding.group_names),
        thresholds=thresholds,
        notion=notion,
        tolerance=float(tolerance),
        achieved_violation=float(viol),
        fit_accuracy=float(correct[best] / total),
        infeasible=bool(infeasible),
    )


def _sweep_candidates(options) -> np.ndarray:
    """Option indices for each target rate, plus the unconstrained optimum."""
    grid = np.unique(np.concatenate([np.linspace(0, 1, GRID_POINTS)] + [o.rates for o in options]))
    rows = []
    for o in options:
        # closest rate; argmin over accuracy-sorted columns breaks ties upward
        order = np.argsort(-o.correct, kind="stable")
        dist = np.abs(o.rates[order][None, :] - grid[:, None])
        rows.append(order[np.argmin(dist, axis=1)])
    sweep = np.column_stack(rows)
    unconstrained = np.array([[int(np.argmax(o.correct)) for o in options]])
    return np.vstack([sweep, unconstrained])


def apply_thresholds(scores, encoding: SensitiveEncoding, policy: ThresholdPolicy) -> np.ndarray:
    """Hard predictions: 1 iff the score reaches its group's threshold."""
    if encoding.format == "parallel":
        raise FormatError("group thresholds need a binary or intersectional encoding")
    lookup = dict(zip(policy.group_names, policy.thresholds))
    scores = np.asarray(scores, dtype=np.float64)
    groups = encoding.group_index()
    per_column = np.empty(encoding.n_groups)
    used = np.unique(groups)
    for q, name in enumerate(encoding.group_names):
        if name in lookup:
            per_column[q] = lookup[name]
        elif q in used:
            raise ApplicationError(f"group {name!r} has no fitted threshold")
        else:
            per_column[q] = np.nan
    return (scores >= per_column[groups]).astype(np.int64)
