"""Preprocessing methods: transform the training set before the model is fit.

All three methods accept a strength in ``[0, inf)``; values above one are
clamped to full strength. They need one group per sample, so only binary and
intersectional encodings are accepted.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np
from scipy.stats import rankdata

from .data import SensitiveEncoding, TabularDataset
from .errors import FormatError, InfeasibleSamplingError
from .model import TrainConfig, forward, init_scorer, train

logger = logging.getLogger(__name__)

PREMETHODS = ("data_repairer", "label_flipping", "prevalence_sampling")


def _clamp(strength: float, method: str) -> float:
    if strength < 0:
        raise ValueError(f"{method}: strength must be nonnegative")
    if strength > 1:
        warnings.warn(f"{method}: strength {strength} clamped to 1", stacklevel=3)
        return 1.0
    return float(strength)


def _groups(encoding: SensitiveEncoding, method: str) -> np.ndarray:
    if encoding.format == "parallel":
        raise FormatError(f"{method} does not support the parallel format")
    return encoding.group_index()


def apportion(total: int, shares) -> np.ndarray:
    """Integer counts summing to ``total`` closest to ``shares`` (largest remainder).

    Each count differs from its share by less than one.
    """
    shares = np.asarray(shares, dtype=np.float64)
    base = np.floor(shares).astype(np.int64)
    rest = int(total - base.sum())
    if rest > 0:
        # stable sort keeps lower group indices first on equal remainders
        order = np.argsort(-(shares - base), kind="stable")
        base[order[:rest]] += 1
    return base


def equalized_positive_counts(labels, groups, n_groups) -> tuple[np.ndarray, np.ndarray]:
    """Current and prevalence-equalized positive counts per group."""
    sizes = np.bincount(groups, minlength=n_groups)
    positives = np.bincount(groups, weights=labels, minlength=n_groups).astype(np.int64)
    rate = positives.sum() / sizes.sum()
    return positives, apportion(int(positives.sum()), rate * sizes)


def data_repairer(dataset: TabularDataset, encoding: SensitiveEncoding, strength: float) -> TabularDataset:
    """Align each group's numeric feature distribution with the pooled one.

    A value at within-group quantile ``u`` (average rank for ties) moves
    ``t`` of the way towards the pooled empirical quantile at ``u``.
    """
    t = _clamp(strength, "data_repairer")
    groups = _groups(encoding, "data_repairer")
    if t == 0:
        return dataset
    X = dataset.features.copy()
    for j in np.flatnonzero(dataset.numeric):
        column = dataset.features[:, j]
        for q in np.unique(groups):
            members = np.flatnonzero(groups == q)
            values = column[members]
            if members.size == 1:
                u = np.array([0.5])
            else:
                u = (rankdata(values, method="average") - 1.0) / (members.size - 1)
            repaired = np.quantile(column, u, method="linear")
            X[members, j] = (1.0 - t) * values + t * repaired
    return dataset.replace(features=X)


def _naive_scores(dataset: TabularDataset, seed: int) -> np.ndarray:
    config = TrainConfig(learning_rate=0.05, epochs=20, batch_size=64, optimizer="adam", seed=seed)
    scorer = train(init_scorer(dataset.d, [], seed), dataset, config)
    return forward(scorer, dataset.features)


def label_flipping(dataset: TabularDataset, encoding: SensitiveEncoding, strength: float, seed: int = 0) -> TabularDataset:
    """Flip labels to move every group's base rate towards the global rate.

    At full strength each group's positive count becomes its share of the
    global positives (largest-remainder rounding, so the global rate is kept).
    Samples of the over-represented label whose naive score lies closest to
    0.5 are flipped first; ties go to the lower row index.
    """
    t = _clamp(strength, "label_flipping")
    groups = _groups(encoding, "label_flipping")
    if t == 0:
        return dataset
    y = dataset.labels
    current, target = equalized_positive_counts(y, groups, encoding.n_groups)
    needed = target - current
    n_flips = np.rint(t * np.abs(needed)).astype(np.int64)
    if not n_flips.any():
        return dataset

    margin = np.abs(_naive_scores(dataset, seed) - 0.5)
    new = y.copy()
    for q in np.flatnonzero(n_flips):
        source = 1 if needed[q] < 0 else 0
        candidates = np.flatnonzero((groups == q) & (y == source))
        order = np.lexsort((candidates, margin[candidates]))
        new[candidates[order[:n_flips[q]]]] = 1 - source
    return dataset.replace(labels=new)


def prevalence_sampling(dataset: TabularDataset, encoding: SensitiveEncoding, strength: float, seed: int = 0) -> TabularDataset:
    """Resample (group, label) cells so group prevalences approach the global one.

    Group sizes are held fixed. The positive count of each group moves ``t``
    of the way to its equalized count; cells shrink by uniform subsampling and
    grow by uniform duplication.
    """
    t = _clamp(strength, "prevalence_sampling")
    groups = _groups(encoding, "prevalence_sampling")
    if t == 0:
        return dataset
    y = dataset.labels
    sizes = np.bincount(groups, minlength=encoding.n_groups)
    current, target = equalized_positive_counts(y, groups, encoding.n_groups)
    new_pos = np.rint((1 - t) * current + t * target).astype(np.int64)

    rng = np.random.default_rng(seed)
    keep = []
    for q in np.flatnonzero(sizes):
        for label, want in ((1, new_pos[q]), (0, sizes[q] - new_pos[q])):
            cell = np.flatnonzero((groups == q) & (y == label))
            if want > cell.size and cell.size == 0:
                raise InfeasibleSamplingError(
                    f"cell (group {encoding.group_names[q]!r}, label {label}) is empty but must be oversampled"
                )
            if want <= cell.size:
                keep.append(np.sort(rng.choice(cell, size=want, replace=False)))
            else:
                extra = want - cell.size
                keep.append(cell)
                keep.append(np.sort(rng.choice(cell, size=extra, replace=extra > cell.size)))
    index = np.sort(np.concatenate(keep))
    return dataset.subset(index)
