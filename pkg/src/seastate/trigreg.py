"""Trigonometric regression, exhaustive harmonic subset selection, and
the two-step pipeline that regresses out a long-period component before
a state-space decomposition of the residual.

Regression order counts individual cosine/sine terms (cosines lead, per
harmonic_split), matching the trig seasonal block's term semantics.  The
AIC convention is the Gaussian maximum-likelihood form

    AIC = N_obs * log(2 pi sigma2_hat) + N_obs + 2 * (q + 1)

with q the number of regression coefficients including the intercept and
the +1 counting sigma^2.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Sequence, Tuple

import numpy as np

from .components import _trig_columns
from .estimation import FitReport, ModelSpec, fit_mle
from .timeseries import TimeSeries, subtract_series

_SUBSET_GUARD = 20  # 2^20 exhaustive fits at most


@dataclass(frozen=True)
class TrigRegressionFit:
    """An OLS fit of intercept + selected cosine/sine terms.

    ``terms`` lists (harmonic, "cos"|"sin") in column order and
    ``coefficients`` holds the intercept first, then one value per term,
    so fitted_curve(n) = coefficients[0] + sum of coefficient * term(n).
    """

    period: float
    terms: Tuple[Tuple[int, str], ...]
    coefficients: np.ndarray
    sigma2: float
    aic: float
    fitted_curve: np.ndarray
    n_obs: int

    @property
    def order(self) -> int:
        return len(self.terms)

    @property
    def harmonics(self) -> Tuple[int, ...]:
        return tuple(sorted({j for j, _ in self.terms}))

    def evaluate(self, n_first: int, n_last: int,
                 include_intercept: bool = True) -> np.ndarray:
        """The fitted curve over n = n_first .. n_last inclusive; without
        the intercept this is the pure periodic part."""
        n = np.arange(n_first, n_last + 1, dtype=float)
        out = np.full(n.shape, self.coefficients[0] if include_intercept else 0.0)
        for (j, kind), c in zip(self.terms, self.coefficients[1:]):
            ang = 2.0 * math.pi * j / self.period * n
            out += c * (np.cos(ang) if kind == "cos" else np.sin(ang))
        return out


def design_matrix(N: int, period: float, harmonics: Sequence[int],
                  intercept: bool = True) -> np.ndarray:
    """Regression design over n = 1..N: a constant column (if requested)
    then cos/sin pairs per harmonic in the given order, with the
    identically-zero sine at j = period/2 (even integer period) omitted.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    harmonics = [int(j) for j in harmonics]
    if not harmonics and not intercept:
        raise ValueError("empty harmonic set and no intercept requested")
    tol = 1e-9 * max(period, 1.0)
    cols = []
    for j in harmonics:
        if j < 1:
            raise ValueError(f"harmonic indices must be >= 1, got {j}")
        if 2 * j - period > tol:
            raise ValueError(
                f"harmonic {j} exceeds the folding index period/2 = {period / 2}"
            )
        cols.append((j, "cos"))
        if abs(2 * j - period) > tol:
            cols.append((j, "sin"))
    n = np.arange(1, N + 1, dtype=float)
    out = np.empty((N, bool(intercept) + len(cols)))
    if intercept:
        out[:, 0] = 1.0
    out[:, bool(intercept):] = _term_columns(n, period, cols)
    return out


def _term_columns(n: np.ndarray, period: float, terms) -> np.ndarray:
    out = np.empty((n.shape[0], len(terms)))
    for i, (j, kind) in enumerate(terms):
        ang = 2.0 * math.pi * j / period * n
        out[:, i] = np.cos(ang) if kind == "cos" else np.sin(ang)
    return out


def _solve_ols(X_obs: np.ndarray, y_obs: np.ndarray) -> np.ndarray:
    coefs, _, rank, sv = np.linalg.lstsq(X_obs, y_obs, rcond=None)
    if rank < X_obs.shape[1]:
        raise ValueError(
            f"rank-deficient design: rank {rank} of {X_obs.shape[1]} columns, "
            f"offending singular value {sv[min(rank, sv.shape[0] - 1)]:.3e}"
        )
    return coefs


def _regression_aic(n_obs: int, sigma2: float, n_coefficients: int) -> float:
    if sigma2 <= 0:
        return -math.inf
    return n_obs * (math.log(2.0 * math.pi * sigma2) + 1.0) + 2.0 * (n_coefficients + 1)


def fit_ols(ts: TimeSeries, period: float, n_terms: int) -> TrigRegressionFit:
    """Least-squares trigonometric regression of order ``n_terms``.

    Missing points are dropped from the normal equations; the fitted
    curve is still evaluated at every n = 1..N.
    """
    if n_terms < 0:
        raise ValueError(f"n_terms must be >= 0, got {n_terms}")
    terms = tuple(_trig_columns(period, n_terms, frozenset(), False))
    N = len(ts)
    n_all = np.arange(1, N + 1, dtype=float)
    X = np.column_stack([np.ones(N), _term_columns(n_all, period, terms)])
    n_cols = X.shape[1]
    if ts.n_observed <= n_cols:
        raise ValueError(
            f"need more than {n_cols} observed points, have {ts.n_observed}"
        )
    obs = ts.observed
    coefs = _solve_ols(X[obs], ts.values[obs])
    fitted = X @ coefs
    resid = ts.values[obs] - fitted[obs]
    sigma2 = float(resid @ resid) / ts.n_observed
    return TrigRegressionFit(
        period=float(period),
        terms=terms,
        coefficients=coefs,
        sigma2=sigma2,
        aic=_regression_aic(ts.n_observed, sigma2, n_cols),
        fitted_curve=fitted,
        n_obs=ts.n_observed,
    )


@dataclass(frozen=True)
class SubsetSizeSummary:
    """Best subset of one size, with the number of candidates examined."""

    size: int
    n_models: int
    best_terms: Tuple[int, ...]
    sigma2: float
    aic: float


@dataclass(frozen=True)
class SubsetSelectionResult:
    period: float
    max_order: int
    by_size: Tuple[SubsetSizeSummary, ...]
    best: TrigRegressionFit
    best_terms: Tuple[int, ...]


def subset_select(ts: TimeSeries, period: float,
                  max_order: int) -> SubsetSelectionResult:
    """Exhaustive best-subset search over term indices 1..max_order.

    Every subset of the first ``max_order`` cosine/sine terms is fitted
    (with intercept); per size r the minimum-AIC subset and the candidate
    count C(max_order, r) are reported, and the global winner is refitted
    as a full TrigRegressionFit.  Ties keep the lexicographically first
    subset.
    """
    if max_order < 1:
        raise ValueError(f"max_order must be >= 1, got {max_order}")
    if max_order > period - 1:
        raise ValueError(
            f"max_order={max_order} exceeds the maximum period - 1 for "
            f"period {period}"
        )
    if max_order > _SUBSET_GUARD:
        raise ValueError(
            f"max_order={max_order} would enumerate 2^{max_order} subsets "
            f"(guard: 2^{_SUBSET_GUARD})"
        )
    all_terms = tuple(_trig_columns(period, max_order, frozenset(), False))
    N = len(ts)
    n_all = np.arange(1, N + 1, dtype=float)
    X = np.column_stack([np.ones(N), _term_columns(n_all, period, all_terms)])
    obs = ts.observed
    X_obs = X[obs]
    y_obs = ts.values[obs]
    n_obs = y_obs.shape[0]
    if n_obs <= max_order + 1:
        raise ValueError(
            f"need more than {max_order + 1} observed points, have {n_obs}"
        )

    def fit_subset(term_ids):
        cols = [0] + [t for t in term_ids]
        Xs = X_obs[:, cols]
        coefs, _, rank, _ = np.linalg.lstsq(Xs, y_obs, rcond=None)
        resid = y_obs - Xs @ coefs
        sigma2 = float(resid @ resid) / n_obs
        return sigma2, _regression_aic(n_obs, sigma2, len(cols))

    by_size = []
    sigma2_0 = float(np.var(y_obs))
    by_size.append(SubsetSizeSummary(0, 1, (), sigma2_0,
                                     _regression_aic(n_obs, sigma2_0, 1)))
    for r in range(1, max_order + 1):
        best = None
        count = 0
        for term_ids in itertools.combinations(range(1, max_order + 1), r):
            count += 1
            sigma2, aic = fit_subset(term_ids)
            if best is None or aic < best[0]:
                best = (aic, sigma2, term_ids)
        by_size.append(SubsetSizeSummary(r, count, best[2], best[1], best[0]))

    winner = min(by_size, key=lambda s: s.aic)
    best_fit = _refit_terms(ts, period, all_terms, winner.best_terms)
    return SubsetSelectionResult(
        period=float(period),
        max_order=max_order,
        by_size=tuple(by_size),
        best=best_fit,
        best_terms=winner.best_terms,
    )


def _refit_terms(ts, period, all_terms, term_ids) -> TrigRegressionFit:
    terms = tuple(all_terms[t - 1] for t in term_ids)
    N = len(ts)
    n_all = np.arange(1, N + 1, dtype=float)
    X = np.column_stack([np.ones(N), _term_columns(n_all, period, terms)])
    obs = ts.observed
    coefs = _solve_ols(X[obs], ts.values[obs])
    fitted = X @ coefs
    resid = ts.values[obs] - fitted[obs]
    sigma2 = float(resid @ resid) / ts.n_observed
    return TrigRegressionFit(
        period=float(period),
        terms=terms,
        coefficients=coefs,
        sigma2=sigma2,
        aic=_regression_aic(ts.n_observed, sigma2, X.shape[1]),
        fitted_curve=fitted,
        n_obs=ts.n_observed,
    )


def two_step_fit(ts: TimeSeries, period_long: float, k: int,
                 decomp_spec: ModelSpec,
                 **fit_kwargs) -> Tuple[TrigRegressionFit, FitReport]:
    """Two-step fit: regress out the long-period component, then fit the
    decomposition model on the residual.

    ``k`` is the number of harmonic pairs of the first stage (2k terms,
    2k+1 coefficients with the intercept).  The returned report's
    ``aic_prime`` adds 2(2k+1) to the stage-2 AIC, charging the
    first-stage coefficients when comparing against single-stage models
    of the original series.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    stage1 = fit_ols(ts, period_long, 2 * k)
    residual = subtract_series(ts, stage1.fitted_curve)
    stage2 = fit_mle(decomp_spec, residual, **fit_kwargs)
    n_regression = stage1.coefficients.shape[0]
    stage2 = replace(stage2, aic_prime=stage2.aic + 2.0 * n_regression)
    return stage1, stage2
