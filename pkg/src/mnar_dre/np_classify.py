"""Neyman-Pearson classification with high-probability Type I error control.

Two threshold selection rules over a class-0 calibration sample:

* ``threshold_missing`` -- the weighted order-statistic rule for calibration
  data with missing points: missing points score -inf with weight 0, observed
  points weigh 1/(1 - phi0), and the chosen cut makes the weighted tail mass
  at most alpha - Delta where Delta = sqrt(16 log(1/delta) / m_eff0).
* ``threshold_binomial`` -- the classical fully-observed rule: the i*-th
  ascending order statistic where i* is the smallest index whose exact
  Binomial(n0, 1-alpha) upper tail is at most delta.

Classification is strict: label 1 iff score(z) > threshold, so ties go to the
error-controlled class.  Both rules are invariant to strictly increasing
transforms of the score, which is why fitting the ratio up to a multiplicative
constant suffices (scores default to the log ratio).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.special import gammaln

from .model import Dataset, DataError, LogLinearRatioModel, MissingnessFunction
from .naive_bayes import NaiveBayesRatioModel
from .weighting import point_importance_weights

PAPER_MARGIN_CONSTANT = 16.0

RatioModel = Union[LogLinearRatioModel, NaiveBayesRatioModel]


@dataclass(frozen=True, eq=False)
class ThresholdResult:
    """A selected threshold with its provenance."""

    value: float
    order_index: int | None  # 1-based position in the sorted calibration scores
    degenerate: bool
    all_missing: bool
    margin: float | None  # Delta for the weighted rule, None for binomial
    calibration_size: int
    method: str


def delta_margin(
    m_eff0: float, delta: float, margin_constant: float = PAPER_MARGIN_CONSTANT
) -> float:
    """Conservative slack sqrt(C log(1/delta) / m_eff0) with C = 16 by default."""
    if not m_eff0 > 0.0:
        raise ValueError("effective class-0 sample size must be positive")
    if not 0.0 < delta <= 0.5:
        raise ValueError("delta must lie in (0, 1/2]")
    if not margin_constant >= 0.0:
        raise ValueError("margin constant must be non-negative")
    return math.sqrt(margin_constant * math.log(1.0 / delta) / m_eff0)


def threshold_missing(
    scores: np.ndarray,
    weights: np.ndarray,
    alpha: float,
    delta: float,
    m_eff0: float,
    margin_constant: float = PAPER_MARGIN_CONSTANT,
) -> ThresholdResult:
    """Weighted threshold rule on calibration scores that may contain -inf.

    Sorts ascending (stable) and returns the smallest order statistic whose
    inclusive weighted tail (1/n0) sum_{j >= i} w_(j) is at most
    alpha - Delta.  Tied scores are treated as one block (the tail is
    evaluated per distinct value), which makes the returned value invariant
    to permutations of the calibration sample and never less conservative
    than evaluating the tail at an arbitrary position inside a tie run.

    Degenerate outcomes are flagged, not raised: +inf when no index
    qualifies (always-0 classifier), -inf with ``all_missing`` when every
    calibration point was missing.
    """
    scores = np.asarray(scores, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if scores.shape != weights.shape or scores.ndim != 1:
        raise ValueError("scores and weights must be 1-D of equal length")
    if scores.shape[0] == 0:
        raise DataError("empty calibration sample")
    if np.any(weights < 0.0):
        raise ValueError("weights must be non-negative")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    n0 = scores.shape[0]
    margin = delta_margin(m_eff0, delta, margin_constant)
    cutoff = alpha - margin
    all_missing = bool(np.all(weights == 0.0))
    if all_missing:
        warnings.warn(
            "every calibration point is missing; the weighted threshold rule "
            "degenerates to an always-1 classifier",
            RuntimeWarning,
            stacklevel=2,
        )

    order = np.argsort(scores, kind="stable")
    s_sorted = scores[order]
    w_sorted = weights[order]
    # Inclusive suffix weight starting at each position.
    suffix = np.cumsum(w_sorted[::-1])[::-1] / n0
    # First position of each tied block, so tails are per distinct value.
    block_start = np.ones(n0, dtype=bool)
    block_start[1:] = s_sorted[1:] != s_sorted[:-1]
    first_of_block = np.maximum.accumulate(np.where(block_start, np.arange(n0), 0))
    ok = suffix[first_of_block] <= cutoff
    idx = int(np.argmax(ok)) if ok.any() else None
    if idx is None:
        return ThresholdResult(
            value=math.inf,
            order_index=None,
            degenerate=True,
            all_missing=all_missing,
            margin=margin,
            calibration_size=n0,
            method="missing-weighted",
        )
    return ThresholdResult(
        value=float(s_sorted[idx]),
        order_index=idx + 1,
        degenerate=False,
        all_missing=all_missing,
        margin=margin,
        calibration_size=n0,
        method="missing-weighted",
    )


def binomial_upper_tail_log(n: int, q: float) -> np.ndarray:
    """log P(W >= i) for i = 0..n with W ~ Binomial(n, q), by exact summation.

    The PMF is evaluated in log space and accumulated from the top down, so
    tiny tails keep full relative precision (no normal approximation).
    """
    k = np.arange(n + 1)
    if q <= 0.0:
        log_pmf = np.full(n + 1, -np.inf)
        log_pmf[0] = 0.0
    elif q >= 1.0:
        log_pmf = np.full(n + 1, -np.inf)
        log_pmf[n] = 0.0
    else:
        log_pmf = (
            gammaln(n + 1)
            - gammaln(k + 1)
            - gammaln(n - k + 1)
            + k * math.log(q)
            + (n - k) * math.log1p(-q)
        )
    # suffix logsumexp via reverse accumulate
    rev = log_pmf[::-1]
    tail = np.logaddexp.accumulate(rev)[::-1]
    return np.minimum(tail, 0.0)


def threshold_binomial(
    scores: np.ndarray, alpha: float, delta: float
) -> ThresholdResult:
    """Fully observed order-statistic rule with exact binomial tails.

    i* is the smallest i in [1, n0] with P(W >= i) <= delta where
    W ~ Binomial(n0, 1 - alpha); the threshold is the i*-th ascending score.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1 or scores.shape[0] == 0:
        raise DataError("empty calibration sample")
    if not np.all(np.isfinite(scores)):
        raise DataError("binomial rule requires fully observed calibration scores")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    n0 = scores.shape[0]
    log_tail = binomial_upper_tail_log(n0, 1.0 - alpha)
    ok = log_tail[1:] <= math.log(delta)  # positions i = 1..n0
    if not ok.any():
        return ThresholdResult(
            value=math.inf,
            order_index=None,
            degenerate=True,
            all_missing=False,
            margin=None,
            calibration_size=n0,
            method="binomial",
        )
    i_star = int(np.argmax(ok)) + 1
    s_sorted = np.sort(scores, kind="stable")
    return ThresholdResult(
        value=float(s_sorted[i_star - 1]),
        order_index=i_star,
        degenerate=False,
        all_missing=False,
        margin=None,
        calibration_size=n0,
        method="binomial",
    )


@dataclass(frozen=True, eq=False)
class NpClassifier:
    """A score function, a threshold, and the (alpha, delta) provenance."""

    score_fn: Callable[[np.ndarray], np.ndarray]
    threshold: float
    alpha: float
    delta: float
    method: str
    provenance: ThresholdResult
    transform: str = "log"
    margin_constant: float = PAPER_MARGIN_CONSTANT
    model: RatioModel | None = None

    @property
    def non_paper(self) -> bool:
        """True when the margin constant was overridden from its source value."""
        return (
            self.method == "missing-weighted"
            and self.margin_constant != PAPER_MARGIN_CONSTANT
        )


def calibration_scores(
    score_fn: Callable[[np.ndarray], np.ndarray],
    calibration: Dataset,
    phi0: MissingnessFunction | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Scores and weights of a class-0 calibration sample.

    Missing calibration points (any missing coordinate) take score -inf and
    weight 0; observed points are scored and weighted by 1/(1 - phi0).
    """
    observed = calibration.observed_rows()
    scores = np.full(calibration.n, -np.inf)
    if observed.any():
        scores[observed] = score_fn(calibration.values[observed])
    if phi0 is None or phi0.is_zero():
        weights = observed.astype(float)
    else:
        weights = point_importance_weights(calibration.values, phi0)
    return scores, weights


def _resolve_score_fn(model_or_fn) -> tuple[Callable, RatioModel | None]:
    if isinstance(model_or_fn, (LogLinearRatioModel, NaiveBayesRatioModel)):
        return model_or_fn.log_ratio, model_or_fn
    if callable(model_or_fn):
        return model_or_fn, None
    raise TypeError("expected a ratio model or a score callable")


def build_np_classifier(
    model_or_score_fn,
    calibration: Dataset,
    alpha: float,
    delta: float,
    phi0: MissingnessFunction | None = None,
    rule: str = "auto",
    margin_constant: float = PAPER_MARGIN_CONSTANT,
) -> NpClassifier:
    """Calibrate a threshold on a fresh class-0 sample and wrap the score.

    ``rule``:
      * "auto"     -- binomial when the calibration sample is fully observed
                      and class 0 carries no missingness, else the weighted
                      rule (the guarantee that matches the data);
      * "binomial" -- force the fully observed rule;
      * "missing"  -- force the weighted rule.

    The calibration sample must be disjoint from the training data; reusing
    training points voids the Type I guarantee.
    """
    if calibration.label != 0:
        raise DataError("calibration data must come from class 0")
    score_fn, model = _resolve_score_fn(model_or_score_fn)
    no_phi0 = phi0 is None or phi0.is_zero()
    if rule == "auto":
        rule = "binomial" if (calibration.fully_observed and no_phi0) else "missing"
    if rule == "binomial":
        if not calibration.fully_observed:
            raise DataError("binomial rule requires a fully observed calibration set")
        scores, _ = calibration_scores(score_fn, calibration, None)
        result = threshold_binomial(scores, alpha, delta)
    elif rule == "missing":
        scores, weights = calibration_scores(score_fn, calibration, phi0)
        phi_sup = 0.0 if no_phi0 else phi0.sup_prob()
        m_eff0 = calibration.n * (1.0 - phi_sup)
        result = threshold_missing(
            scores, weights, alpha, delta, m_eff0, margin_constant
        )
    else:
        raise ValueError("rule must be 'auto', 'binomial' or 'missing'")
    return NpClassifier(
        score_fn=score_fn,
        threshold=result.value,
        alpha=alpha,
        delta=delta,
        method=result.method,
        provenance=result,
        margin_constant=margin_constant,
        model=model,
    )


def classify(clf: NpClassifier, z: np.ndarray) -> np.ndarray:
    """Labels 1 iff score(z) > threshold (strict; ties go to class 0)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if clf.threshold == math.inf:
        return np.zeros(z.shape[0], dtype=int)
    if clf.threshold == -math.inf:
        return np.ones(z.shape[0], dtype=int)
    return (clf.score_fn(z) > clf.threshold).astype(int)


def estimate_errors(
    clf: NpClassifier, test0: Dataset, test1: Dataset
) -> dict[str, float]:
    """Empirical Type I error and power on fully observed test sets."""
    for t in (test0, test1):
        if t.n == 0:
            raise DataError("empty test set")
        if not t.fully_observed:
            raise DataError("error estimation requires fully observed test data")
    return {
        "type1": float(classify(clf, test0.values).mean()),
        "power": float(classify(clf, test1.values).mean()),
    }
