"""Inprocessing methods: fairness penalties for the trainer and the
exponentiated-gradient reduction.

Both penalties return ``(value, gradient)`` where the gradient is taken with
respect to the batch scores; the trainer chains it through the logistic
output. The reduction replaces the training loop altogether: it repeatedly
fits a plain weighted classifier on cost-adjusted labels and averages the
resulting hard classifiers.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .data import SensitiveEncoding, TabularDataset
from .errors import FormatError, UndefinedStatisticError
from .metrics import DENOM_EPS, check_notion, harden, per_sample_slopes, per_sample_terms
from .model import Scorer, TrainConfig, forward, init_scorer, train

logger = logging.getLogger(__name__)

INMETHODS = ("fairret_norm", "prejudice_remover", "exponentiated_gradient")
EG_NOTIONS = ("dem_par", "eq_opp", "pred_eq", "acc_eq")


def fairret_norm_penalty(scores, labels, indicators, notion, weights=None):
    """L1 norm of relative statistic gaps, ``sum_q |gamma(q)/gamma_mean - 1|``.

    Groups whose denominator vanishes on the batch are skipped. If the mean
    statistic itself is degenerate the penalty is ``(0, 0)``; callers that care
    detect this with :func:`fairret_norm_is_degenerate`.
    """
    h = np.asarray(scores, dtype=np.float64)
    S = np.asarray(indicators, dtype=np.float64)
    w = np.ones_like(h) if weights is None else np.asarray(weights, dtype=np.float64)
    num, den = per_sample_terms(notion, h, labels)
    dnum, dden = per_sample_slopes(notion, labels)
    num, den, dnum, dden = w * num, w * den, w * dnum, w * dden

    N_all, D_all = num.sum(), den.sum()
    if D_all <= DENOM_EPS or abs(N_all) <= DENOM_EPS:
        return 0.0, np.zeros_like(h)
    mean = N_all / D_all
    N, D = S.T @ num, S.T @ den
    defined = D > DENOM_EPS
    if not defined.any():
        return 0.0, np.zeros_like(h)
    N, D, S = N[defined], D[defined], S[:, defined]
    gamma = N / D
    ratio = gamma / mean
    value = float(np.abs(ratio - 1.0).sum())
    sign = np.sign(ratio - 1.0)

    # d gamma_q / d h_i = S_iq (dnum_i D_q - N_q dden_i) / D_q^2
    d_mean = (dnum * D_all - N_all * dden) / D_all**2
    d_gamma_part1 = (S * dnum[:, None]) @ (sign / D)
    d_gamma_part2 = (S * dden[:, None]) @ (sign * N / D**2)
    grad = (d_gamma_part1 - d_gamma_part2) / mean - d_mean * np.sum(sign * gamma) / mean**2
    return value, grad


def fairret_norm_is_degenerate(scores, labels, notion, weights=None) -> bool:
    num, den = per_sample_terms(notion, scores, labels)
    if weights is not None:
        num, den = num * weights, den * weights
    return den.sum() <= DENOM_EPS or abs(num.sum()) <= DENOM_EPS


def prejudice_remover_penalty(scores, indicators, weights=None):
    """Plug-in mutual information between the soft prediction and the group.

    With ``p_q`` the mean score of group ``q``, ``w_q`` its weight share and
    ``p = sum_q w_q p_q``, the value is
    ``sum_q w_q [p_q log(p_q/p) + (1-p_q) log((1-p_q)/(1-p))]``.
    Groups absent from the batch are ignored.
    """
    h = np.asarray(scores, dtype=np.float64)
    if h.size == 0:
        raise ValueError("prejudice remover penalty of an empty batch")
    S = np.asarray(indicators, dtype=np.float64)
    w = np.ones_like(h) if weights is None else np.asarray(weights, dtype=np.float64)
    W_q = S.T @ w
    present = W_q > 0
    S, W_q = S[:, present], W_q[present]
    p_q = (S.T @ (w * h)) / W_q
    share = W_q / W_q.sum()
    p = float(share @ p_q)

    value = share @ (xlogy(p_q, p_q) - xlogy(p_q, p) + xlogy(1 - p_q, 1 - p_q) - xlogy(1 - p_q, 1 - p))

    # 0 log 0 convention: clip only inside the derivative's logarithms
    tiny = 1e-300
    pc = np.clip(p_q, tiny, 1 - 1e-16)
    pbar = min(max(p, tiny), 1 - 1e-16)
    df_dp = np.log(pc / pbar) - np.log((1 - pc) / (1 - pbar))
    df_dpbar = -p_q / pbar + (1 - p_q) / (1 - pbar)
    dV_dp = share * df_dp + share * (share @ df_dpbar)
    grad = w * (S @ (dV_dp / W_q))
    return float(value), grad


@dataclass
class PenaltySpec:
    kind: str
    encoding: SensitiveEncoding
    notion: str = "dem_par"

    def __post_init__(self):
        if self.kind not in ("fairret_norm", "prejudice_remover"):
            raise ValueError(f"unknown penalty {self.kind!r}")
        check_notion(self.notion)
        if self.kind == "prejudice_remover" and self.encoding.format == "parallel":
            raise FormatError("prejudice_remover does not support the parallel format")


class BatchPenalty:
    """Trainer callback evaluating a penalty on the rows of each minibatch."""

    def __init__(self, spec: PenaltySpec, dataset: TabularDataset):
        self.spec = spec
        self.labels = dataset.labels
        self.weights = dataset.weights
        self.indicators = spec.encoding.indicators
        self.skipped = 0

    def __call__(self, scores, index):
        S = self.indicators[index]
        w = self.weights[index]
        if self.spec.kind == "prejudice_remover":
            return prejudice_remover_penalty(scores, S, w)
        y = self.labels[index]
        if fairret_norm_is_degenerate(scores, y, self.spec.notion, w):
            self.skipped += 1
            return 0.0, np.zeros_like(scores)
        return fairret_norm_penalty(scores, y, S, self.spec.notion, w)


# ---------------------------------------------------------------------------
# Exponentiated gradient reduction


@dataclass(frozen=True)
class EGConfig:
    notion: str = "dem_par"
    slack: float = 0.02
    iterations: int = 20
    multiplier_bound: float = 100.0
    eg_rate: float = 2.0
    initial_multiplier: float = 0.3
    inner: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=0.01, epochs=20))
    layer_sizes: tuple[int, ...] = ()

    def __post_init__(self):
        if self.notion not in EG_NOTIONS:
            raise ValueError(f"exponentiated gradient supports {list(EG_NOTIONS)}, not {self.notion!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.slack < 0 or self.multiplier_bound <= 0 or self.eg_rate <= 0:
            raise ValueError("slack must be >= 0; multiplier_bound and eg_rate must be > 0")


@dataclass
class EnsembleScorer:
    """Uniform mixture of hard classifiers."""

    members: list[Scorer]

    def soft(self, features) -> np.ndarray:
        votes = np.zeros(np.asarray(features).shape[0])
        for m in self.members:
            votes += harden(forward(m, features))
        return votes / len(self.members)

    def hard(self, features) -> np.ndarray:
        return harden(self.soft(features))


@dataclass
class EGResult:
    ensemble: EnsembleScorer
    multipliers: list[np.ndarray]
    gaps: list[np.ndarray]
    converged: bool
    metadata: dict


def absolute_gaps(notion, predictions, labels, indicators, weights):
    """Signed ``gamma(q) - gamma_mean`` per group."""
    num, den = per_sample_terms(notion, predictions, labels)
    num, den = weights * num, weights * den
    S = np.asarray(indicators, dtype=np.float64)
    return (S.T @ num) / (S.T @ den) - num.sum() / den.sum()


def exponentiated_gradient(dataset: TabularDataset, encoding: SensitiveEncoding, config: EGConfig) -> EGResult:
    """Fair classification as a sequence of cost-sensitive problems.

    Multipliers ``lam`` weigh the constraints ``gamma(q) - gamma_mean <= slack``
    and ``gamma_mean - gamma(q) <= slack``. For the supported notions both
    sides are linear in the hard prediction with fixed denominators, so the
    Lagrangian reduces to a per-sample cost of predicting 1 rather than 0:

        cost_i = (1 - 2 y_i) w_i / W + w_i b_i (mu_{q(i)} / D_q(i) - sum_q mu_q / D)

    with ``mu_q = lam_q+ - lam_q-`` and ``b_i`` the slope of the notion's
    numerator. The best response is realized by training a fresh scorer on
    labels ``cost_i < 0`` with weights ``|cost_i|``.
    """
    if encoding.format == "parallel":
        raise FormatError("exponentiated_gradient does not support the parallel format")
    notion = config.notion
    X = dataset.features
    y = dataset.labels.astype(np.float64)
    w = dataset.weights
    S = encoding.indicators
    G = S.shape[1]
    _, den = per_sample_terms(notion, np.zeros_like(y), y)
    slope, _ = per_sample_slopes(notion, y)
    D_q = S.T @ (w * den)
    D = float(np.sum(w * den))
    if np.any(D_q <= DENOM_EPS):
        empty = [encoding.group_names[q] for q in np.flatnonzero(D_q <= DENOM_EPS)]
        raise UndefinedStatisticError(f"{notion} undefined on training data for groups {empty}")

    lam = np.full(2 * G, config.initial_multiplier)
    W = w.sum()
    members, lams, gaps_hist = [], [], []
    init = init_scorer(dataset.d, config.layer_sizes, config.inner.seed)
    for _ in range(config.iterations):
        mu = lam[:G] - lam[G:]
        cost = (1 - 2 * y) * w / W + w * slope * (S @ (mu / D_q) - mu.sum() / D)
        target = (cost < 0).astype(np.int64)
        sample_w = np.abs(cost)
        total = sample_w.sum()
        sample_w = sample_w * (len(y) / total) if total > 0 else np.ones_like(sample_w)
        scorer = train(init, dataset, config.inner, labels=target, weights=sample_w)
        members.append(scorer)

        hard = harden(forward(scorer, X)).astype(np.float64)
        diff = absolute_gaps(notion, hard, y, S, w)
        gaps = np.concatenate([diff - config.slack, -diff - config.slack])
        lam = lam * np.exp(config.eg_rate * gaps)
        if lam.sum() > config.multiplier_bound:
            lam *= config.multiplier_bound / lam.sum()
        lams.append(lam.copy())
        gaps_hist.append(gaps)

    ensemble = EnsembleScorer(members)
    final = absolute_gaps(notion, ensemble.soft(X), y, S, w)
    converged = bool(np.max(np.abs(final)) <= config.slack)
    metadata = dataclasses.asdict(config)
    metadata["inner"] = dataclasses.asdict(config.inner)
    metadata["train_gap"] = float(np.max(np.abs(final)))
    metadata["converged"] = converged
    return EGResult(ensemble, lams, gaps_hist, converged, metadata)


def slack_from_strength(strength: float, naive_gap: float) -> float:
    """Map a strength in [0, 1] to an absolute slack; 1 is the tightest."""
    return max((1.0 - min(strength, 1.0)) * naive_gap, 1e-4)
