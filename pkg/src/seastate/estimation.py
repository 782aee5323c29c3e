"""Maximum-likelihood estimation, AIC, order sweeps, and decomposition.

Fitting works in scaled units: the observation variance is concentrated
out analytically (R = 1, system-noise variances expressed as ratios to
sigma^2), leaving a low-dimensional surface over log-variance-ratios and
PARCOR-transformed AR coefficients that Nelder-Mead handles without
derivatives.  Reports carry parameters back in original units.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from .components import (
    Composite,
    ModelSpec,
    build_blocks,
    compose,
    trig_block_dim,
)
from .kalman import FilterResult, StateSpaceModel, kalman_filter, kalman_smooth
from .kalman import predict as state_predict

_LOG_2PI = math.log(2.0 * math.pi)
_PENALTY = 1e12
_VAR_CLIP = 40.0    # |log variance ratio| bound, exp(40) ~ 2.4e17
_AR_CLIP = 9.5      # tanh(9.5) keeps partial correlations ~1e-8 clear of +-1

_COUNT_RULES = ("coefficients", "state_dim")


def indicator(m: int) -> int:
    """Order indicator: 1 if the component is present (m > 0), else 0."""
    if m < 0:
        raise ValueError(f"order must be >= 0, got {m}")
    return 1 if m > 0 else 0


def count_params(spec: ModelSpec, rule: str = "coefficients") -> int:
    """Number of estimated parameters for AIC.

    The default "coefficients" rule counts one variance per present
    component (plus sigma^2), the AR coefficients, and the fixed
    coefficients of constant-dynamics trigonometric blocks; random-walk
    trig coefficients are absorbed by the prior and not counted.  The
    "state_dim" rule replaces the coefficient term with the full state
    dimension; it is provided for comparison only and does not reproduce
    the reference AIC arithmetic.
    """
    if rule not in _COUNT_RULES:
        raise ValueError(f"rule must be one of {_COUNT_RULES}, got {rule!r}")
    n_slots = (
        indicator(spec.trend_order)
        + indicator(spec.seasonal_period)
        + indicator(spec.ar_order)
        + sum(1 for t in spec.active_trig if t.dynamics == "random_walk")
        + (1 if spec.one_factor else 0)
    )
    n = n_slots + 1 + spec.ar_order
    if rule == "coefficients":
        n += sum(
            trig_block_dim(t) for t in spec.active_trig if t.dynamics == "constant"
        )
    else:
        n += _spec_state_dim(spec)
    return n


def _spec_state_dim(spec: ModelSpec) -> int:
    d = spec.trend_order
    if spec.seasonal_period:
        d += spec.seasonal_period - (1 if spec.seasonal_form == "sum" else 0)
    d += spec.ar_order
    d += sum(trig_block_dim(t) for t in spec.active_trig)
    if spec.one_factor:
        d += 1
    return d


def parcor_to_ar(parcors) -> np.ndarray:
    """Levinson recursion from partial autocorrelations to AR coefficients.

    Any input with every entry in (-1, 1) yields a stationary polynomial.
    """
    parcors = np.asarray(parcors, dtype=float).reshape(-1)
    if parcors.size and np.max(np.abs(parcors)) >= 1.0:
        raise ValueError("partial autocorrelations must lie in (-1, 1)")
    a = np.empty(0)
    for pk in parcors:
        a = np.concatenate((a - pk * a[::-1], [pk]))
    return a


def ar_to_parcor(coefficients) -> np.ndarray:
    """Inverse Levinson recursion; exact inverse of parcor_to_ar."""
    a = np.asarray(coefficients, dtype=float).reshape(-1).copy()
    out = []
    for _ in range(a.shape[0]):
        pk = a[-1]
        if abs(pk) >= 1.0:
            raise ValueError("coefficients do not correspond to a stationary model")
        out.append(pk)
        b = a[:-1]
        a = (b + pk * b[::-1]) / (1.0 - pk * pk)
    return np.array(out[::-1])


@dataclass(frozen=True)
class ParamTransform:
    """Bijection between the optimizer vector and model parameters.

    Layout: one log-variance-ratio per slot name, then ``ar_order`` raw
    PARCOR values (partial autocorrelation = tanh(raw), coefficients via
    the Levinson recursion).  Round trips are exact to float precision
    away from the clipping bounds.
    """

    variance_slots: Tuple[str, ...]
    ar_order: int = 0

    @property
    def n_free(self) -> int:
        return len(self.variance_slots) + self.ar_order

    def to_model(self, theta):
        """Raw vector -> ({slot: variance ratio}, AR coefficients or None)."""
        theta = np.asarray(theta, dtype=float).reshape(self.n_free)
        nv = len(self.variance_slots)
        ratios = np.exp(np.clip(theta[:nv], -_VAR_CLIP, _VAR_CLIP))
        variances = dict(zip(self.variance_slots, ratios))
        coefs = None
        if self.ar_order:
            parcors = np.tanh(np.clip(theta[nv:], -_AR_CLIP, _AR_CLIP))
            coefs = parcor_to_ar(parcors)
        return variances, coefs

    def to_raw(self, variances: Mapping[str, float], ar_coefficients=None) -> np.ndarray:
        """Model parameters -> raw vector (inverse of to_model)."""
        parts = [math.log(variances[s]) for s in self.variance_slots]
        if self.ar_order:
            parcors = ar_to_parcor(ar_coefficients)
            if parcors.shape[0] != self.ar_order:
                raise ValueError(
                    f"expected {self.ar_order} AR coefficients, got {parcors.shape[0]}"
                )
            parts.extend(np.arctanh(parcors))
        return np.array(parts)


@dataclass(frozen=True)
class FitReport:
    """Result of one maximum-likelihood fit.

    ``params`` holds named values in original data units: sigma2, one
    tau2_* per component variance, and a_1..a_m for AR coefficients.
    ``aic_prime`` is populated only by the two-step pipeline, where the
    first-stage regression coefficients enter the penalty.  ``runtime``
    (seconds) is the one field that varies between identical runs.
    """

    spec: ModelSpec
    params: dict
    log_likelihood: float
    aic: float
    n_params: int
    n_obs: int
    converged: bool
    iterations: int
    runtime: float
    kappa: float
    count_rule: str = "coefficients"
    aic_prime: Optional[float] = None

    @property
    def sigma2(self) -> float:
        return self.params["sigma2"]

    @property
    def variances(self) -> dict:
        return {k: v for k, v in self.params.items() if k.startswith("tau2_")}

    @property
    def ar_coefficients(self) -> np.ndarray:
        m = self.spec.ar_order
        return np.array([self.params[f"a_{j}"] for j in range(1, m + 1)])


def _initial_scale(ts) -> float:
    var = float(np.var(ts.observed_values()))
    return 1e7 * (var if var > 0 else 1.0)


def _scaled_model(comp: Composite, ratios: Mapping[str, float],
                  ar_coefficients, kappa: float) -> StateSpaceModel:
    qdiag = comp.noise_diagonal(ratios)
    return StateSpaceModel(
        F=comp.transition(ar_coefficients),
        G=comp.G,
        Q=np.diag(qdiag) if qdiag.size else np.zeros((0, 0)),
        R=1.0,
        H=comp.row,
        x0=np.zeros(comp.dim_state),
        V0=kappa * np.diag(comp.v0_multipliers),
    )


def _concentrated_loglik(fr: FilterResult):
    """(log-likelihood, sigma2_hat) from a scaled filter pass (R = 1)."""
    mask = np.isfinite(fr.innovations)
    eps = fr.innovations[mask]
    rv = fr.innovation_variances[mask]
    n = eps.shape[0]
    sigma2 = float(np.sum(eps * eps / rv) / n)
    if not (sigma2 > 0 and math.isfinite(sigma2)):
        return -math.inf, sigma2
    ll = -0.5 * (n * (_LOG_2PI + math.log(sigma2) + 1.0) + float(np.sum(np.log(rv))))
    return ll, sigma2


def fit_mle(spec: ModelSpec, ts, *, one_factor_curve=None,
            count_rule: str = "coefficients", max_evaluations: int = 2000,
            max_restarts: int = 2, xatol: float = 1e-4,
            fatol: float = 1e-8) -> FitReport:
    """Fit a model spec by maximum likelihood.

    Deterministic: fixed start point (all variance ratios 1, all AR
    coefficients 0), Nelder-Mead with at most ``max_evaluations`` function
    evaluations per run and up to ``max_restarts`` restarts from the best
    point; a restart that improves the objective by less than 1e-8 stops
    the sequence.  Non-convergence is reported via ``converged=False``,
    not an exception; a non-finite likelihood at the start point raises.
    """
    t_start = time.perf_counter()
    comp = compose(build_blocks(spec, one_factor_curve))
    N = len(ts)
    if ts.n_observed < comp.dim_state:
        raise ValueError(
            f"need at least dim_state={comp.dim_state} observed points, "
            f"have {ts.n_observed}"
        )
    H_rows = comp.observation_matrix(1, N)
    transform = ParamTransform(comp.slot_names, spec.ar_order)
    kappa = _initial_scale(ts)

    def objective(theta) -> float:
        try:
            ratios, coefs = transform.to_model(theta)
            model = _scaled_model(comp, ratios, coefs, kappa)
            fr = kalman_filter(model, ts, H_rows=H_rows)
        except (RuntimeError, np.linalg.LinAlgError, FloatingPointError):
            return _PENALTY
        ll, _ = _concentrated_loglik(fr)
        return -ll if math.isfinite(ll) else _PENALTY

    theta = np.zeros(transform.n_free)
    if objective(theta) >= _PENALTY:
        raise RuntimeError("log-likelihood is not finite at the start point")

    converged = True
    iterations = 1
    if transform.n_free:
        res = minimize(objective, theta, method="Nelder-Mead",
                       options={"maxfev": max_evaluations,
                                "xatol": xatol, "fatol": fatol})
        best_fun, theta, converged = res.fun, res.x, bool(res.success)
        iterations = res.nfev
        for _ in range(max_restarts):
            res = minimize(objective, theta, method="Nelder-Mead",
                           options={"maxfev": max_evaluations,
                                    "xatol": xatol, "fatol": fatol})
            iterations += res.nfev
            improvement = best_fun - res.fun
            if res.fun < best_fun:
                best_fun, theta, converged = res.fun, res.x, bool(res.success)
            if improvement < 1e-8:
                break

    ratios, coefs = transform.to_model(theta)
    fr = kalman_filter(_scaled_model(comp, ratios, coefs, kappa), ts, H_rows=H_rows)
    ll, sigma2 = _concentrated_loglik(fr)
    if not math.isfinite(ll):
        raise RuntimeError("log-likelihood is not finite at the fitted point")

    params = {"sigma2": sigma2}
    for name in comp.slot_names:
        params[name] = ratios[name] * sigma2
    if coefs is not None:
        for j, a in enumerate(coefs, start=1):
            params[f"a_{j}"] = float(a)

    n_params = count_params(spec, count_rule)
    return FitReport(
        spec=spec,
        params=params,
        log_likelihood=ll,
        aic=-2.0 * ll + 2.0 * n_params,
        n_params=n_params,
        n_obs=fr.n_observed,
        converged=converged,
        iterations=iterations,
        runtime=time.perf_counter() - t_start,
        kappa=kappa,
        count_rule=count_rule,
    )


def _fitted_model(report: FitReport, comp: Composite) -> StateSpaceModel:
    """Original-units model at the fitted parameters."""
    sigma2 = report.sigma2
    coefs = report.ar_coefficients if report.spec.ar_order else None
    return StateSpaceModel(
        F=comp.transition(coefs),
        G=comp.G,
        Q=(np.diag(comp.noise_diagonal(report.variances))
           if comp.G.shape[1] else np.zeros((0, 0))),
        R=sigma2,
        H=comp.row,
        x0=np.zeros(comp.dim_state),
        V0=sigma2 * report.kappa * np.diag(comp.v0_multipliers),
    )


@dataclass(frozen=True)
class DecompositionResult:
    """Smoothed additive decomposition of a series.

    ``components`` maps component labels (trend, seasonal, ar, trig_*,
    one_factor) to series of length N, plus "noise" = y - H x_{n|N} at
    observed points (NaN where missing).  Component values at missing
    points are the smoothed interpolants.
    """

    components: dict
    smoothed_means: np.ndarray
    smoothed_covs: np.ndarray
    used_pseudo_inverse: bool
    report: FitReport


def decompose(ts, report: FitReport, *, one_factor_curve=None) -> DecompositionResult:
    """Smoothed component series at the fitted parameters."""
    comp = compose(build_blocks(report.spec, one_factor_curve))
    H_rows = comp.observation_matrix(1, len(ts))
    model = _fitted_model(report, comp)
    fr = kalman_filter(model, ts, H_rows=H_rows)
    sm = kalman_smooth(model, fr)
    components = {}
    total = np.zeros(len(ts))
    for b in comp.blocks:
        sl = comp.slices[b.label]
        series = np.sum(H_rows[:, sl] * sm.means[:, sl], axis=1)
        total += series
        if b.label != "noise_only":
            components[b.label] = series
    components["noise"] = np.where(ts.observed, ts.values - total, np.nan)
    return DecompositionResult(
        components=components,
        smoothed_means=sm.means,
        smoothed_covs=sm.covs,
        used_pseudo_inverse=sm.used_pseudo_inverse,
        report=report,
    )


def forecast(ts, report: FitReport, horizon: int, *,
             one_factor_curve=None) -> Tuple[np.ndarray, np.ndarray]:
    """Observation-mean and variance forecasts for n = N+1 .. N+horizon."""
    comp = compose(build_blocks(report.spec, one_factor_curve))
    model = _fitted_model(report, comp)
    fr = kalman_filter(model, ts, H_rows=comp.observation_matrix(1, len(ts)))
    return state_predict(model, fr, horizon)


@dataclass(frozen=True)
class SweepRow:
    """One grid point of a sweep: a report on success, else the error."""

    index: int
    spec: Optional[ModelSpec]
    report: Optional[FitReport]
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.report is None


@dataclass(frozen=True)
class SweepResult:
    rows: Tuple[SweepRow, ...]
    best_index: Optional[int]

    @property
    def best(self) -> Optional[SweepRow]:
        return None if self.best_index is None else self.rows[self.best_index]


def spec_order_tuple(spec: ModelSpec):
    """Order tuple (m1, m2, m3, trig term counts, one-factor flag) used
    for deterministic tie-breaking and table rows."""
    return (
        spec.trend_order,
        indicator(spec.seasonal_period),
        spec.ar_order,
        tuple(t.n_terms for t in spec.trig),
        1 if spec.one_factor else 0,
    )


def _thread_count(threads: Optional[int]) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("SEASTATE_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def sweep(spec_grid: Sequence, ts, *, one_factor_curve=None,
          threads: Optional[int] = None, **fit_kwargs) -> SweepResult:
    """Fit every grid entry and mark the AIC minimum.

    Grid entries are ModelSpec instances or zero-argument callables
    producing one (so invalid orders surface as row failures rather than
    aborting the sweep).  Rows keep grid order regardless of the thread
    schedule; ties on AIC break by fewer parameters, then by smaller
    order tuple.
    """
    items = list(spec_grid)
    if not items:
        raise ValueError("spec grid is empty")

    def run(pair) -> SweepRow:
        i, item = pair
        spec = None
        try:
            spec = item() if callable(item) else item
            report = fit_mle(spec, ts, one_factor_curve=one_factor_curve,
                             **fit_kwargs)
            return SweepRow(i, spec, report)
        except Exception as exc:
            return SweepRow(i, spec, None, f"{type(exc).__name__}: {exc}")

    n_threads = _thread_count(threads)
    if n_threads == 1 or len(items) == 1:
        rows = [run(p) for p in enumerate(items)]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            rows = list(pool.map(run, enumerate(items)))

    best_index = None
    best_key = None
    for row in rows:
        if row.report is None:
            continue
        key = (row.report.aic, row.report.n_params, spec_order_tuple(row.spec))
        if best_key is None or key < best_key:
            best_key = key
            best_index = row.index
    return SweepResult(rows=tuple(rows), best_index=best_index)
