"""Linear-Gaussian state-space engine.

Kalman filter with missing-data handling, fixed-interval smoother, exact
Gaussian log-likelihood via the prediction-error decomposition, and
multi-step prediction.  The observation row may vary with the time index,
which is 1-based throughout.

The recursions are compiled with numba when it is available; the plain
Python fallback is identical but slow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Tuple, Union

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a normal dependency
    def njit(**kwargs):
        def wrap(fn):
            return fn
        return wrap

_LOG_2PI = math.log(2.0 * math.pi)

RowProvider = Callable[[int], np.ndarray]


@dataclass(frozen=True)
class StateSpaceModel:
    """State-space model x_n = F x_{n-1} + G v_n,  y_n = H(n) x_n + w_n.

    Parameters
    ----------
    F : ndarray, shape (d, d)
        State transition matrix.
    G : ndarray, shape (d, q)
        System-noise loading matrix; q may be zero.
    Q : ndarray, shape (q, q)
        Diagonal, non-negative system-noise covariance.
    R : float
        Observation-noise variance (>= 0).
    H : callable or ndarray
        Observation-row provider mapping a 1-based time index n to a row
        vector of length d.  A plain array is treated as a constant row.
    x0 : ndarray, shape (d,)
        Initial state mean (state at n = 0).
    V0 : ndarray, shape (d, d)
        Initial state covariance; symmetric within 1e-12 of its largest
        entry.
    """

    F: np.ndarray
    G: np.ndarray
    Q: np.ndarray
    R: float
    H: Union[RowProvider, np.ndarray]
    x0: np.ndarray
    V0: np.ndarray

    def __post_init__(self) -> None:
        F = np.ascontiguousarray(np.asarray(self.F, dtype=float))
        if F.ndim != 2 or F.shape[0] != F.shape[1]:
            raise ValueError(f"F must be square, got shape {F.shape}")
        d = F.shape[0]
        G = np.ascontiguousarray(np.asarray(self.G, dtype=float))
        if G.ndim != 2 or G.shape[0] != d:
            raise ValueError(f"G must be ({d}, q), got shape {G.shape}")
        q = G.shape[1]
        if q > d:
            raise ValueError(f"dim_noise {q} exceeds dim_state {d}")
        Q = np.ascontiguousarray(np.asarray(self.Q, dtype=float).reshape(q, q))
        if np.count_nonzero(Q - np.diag(np.diag(Q))):
            raise ValueError("Q must be diagonal")
        if q and np.diag(Q).min() < 0:
            raise ValueError("Q diagonal must be non-negative")
        R = float(self.R)
        if R < 0:
            raise ValueError("R must be non-negative")
        x0 = np.ascontiguousarray(np.asarray(self.x0, dtype=float).reshape(d))
        V0 = np.ascontiguousarray(np.asarray(self.V0, dtype=float).reshape(d, d))
        scale = max(1.0, float(np.max(np.abs(V0))) if V0.size else 1.0)
        if V0.size and np.max(np.abs(V0 - V0.T)) > 1e-12 * scale:
            raise ValueError("V0 must be symmetric within 1e-12")
        V0 = 0.5 * (V0 + V0.T)
        if V0.size and np.diag(V0).min() < 0:
            raise ValueError("V0 diagonal must be non-negative")

        H = self.H
        if not callable(H):
            row = np.ascontiguousarray(np.asarray(H, dtype=float).reshape(-1))
            if row.shape[0] != d:
                raise ValueError(f"H row has length {row.shape[0]}, expected {d}")
            H = _ConstantRow(row)

        for name, val in (("F", F), ("G", G), ("Q", Q), ("x0", x0), ("V0", V0)):
            if val.size and not np.isfinite(val).all():
                raise ValueError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, val)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "H", H)

    @property
    def dim_state(self) -> int:
        return self.F.shape[0]

    @property
    def dim_noise(self) -> int:
        return self.G.shape[1]

    def observation_row(self, n: int) -> np.ndarray:
        """The observation row H(n) for 1-based time index n."""
        row = np.asarray(self.H(n), dtype=float).reshape(-1)
        if row.shape[0] != self.dim_state:
            raise ValueError(
                f"H({n}) has length {row.shape[0]}, expected {self.dim_state}"
            )
        return row

    def observation_matrix(self, n_first: int, n_last: int) -> np.ndarray:
        """Stacked observation rows for n = n_first .. n_last inclusive."""
        return np.ascontiguousarray(
            [self.observation_row(n) for n in range(n_first, n_last + 1)]
        )

    def system_noise_cov(self) -> np.ndarray:
        """G Q G', the per-step state-noise covariance."""
        if self.dim_noise == 0:
            return np.zeros((self.dim_state, self.dim_state))
        return np.ascontiguousarray(self.G @ self.Q @ self.G.T)


class _ConstantRow:
    def __init__(self, row: np.ndarray):
        self.row = row

    def __call__(self, n: int) -> np.ndarray:
        return self.row


@dataclass(frozen=True)
class FilterResult:
    """Output of one Kalman-filter pass.

    ``innovations`` and ``innovation_variances`` are NaN at missing time
    points, which contribute nothing to the likelihood.  State moments are
    stored for n = 1..N; ``predicted_*`` hold the one-step-ahead moments
    x_{n|n-1}, V_{n|n-1} and ``filtered_*`` hold x_{n|n}, V_{n|n}.
    """

    innovations: np.ndarray
    innovation_variances: np.ndarray
    predicted_means: np.ndarray
    predicted_covs: np.ndarray
    filtered_means: np.ndarray
    filtered_covs: np.ndarray
    log_likelihood: float
    n_observed: int

    def __len__(self) -> int:
        return self.innovations.shape[0]


@dataclass(frozen=True)
class SmootherResult:
    """Fixed-interval smoothed state moments x_{n|N}, V_{n|N} for n = 1..N."""

    means: np.ndarray
    covs: np.ndarray
    used_pseudo_inverse: bool

    def __len__(self) -> int:
        return self.means.shape[0]


def kalman_filter(model: StateSpaceModel, ts,
                  H_rows: np.ndarray = None) -> FilterResult:
    """Run the Kalman filter over a TimeSeries.

    Missing points skip the measurement update (prediction moments are
    carried forward) and contribute no likelihood term, so

        log L = -1/2 * ( N_obs log 2*pi + sum log r_n + sum eps_n^2 / r_n )

    summed over observed n only.

    ``H_rows`` may carry the stacked observation rows for n = 1..N to
    avoid re-materializing them on repeated likelihood evaluations.

    Raises
    ------
    RuntimeError
        If an innovation variance is non-positive or a non-finite quantity
        appears, with the offending time index in the message.
    """
    y = np.where(ts.observed, ts.values, 0.0)
    obs = np.ascontiguousarray(ts.observed)
    N = y.shape[0]
    if H_rows is None:
        H_rows = model.observation_matrix(1, N)
    elif H_rows.shape != (N, model.dim_state):
        raise ValueError(
            f"H_rows must have shape {(N, model.dim_state)}, got {H_rows.shape}"
        )
    status, bad_n, x_pred, V_pred, x_filt, V_filt, eps, rvar, ll = _filter_pass(
        model.F, model.system_noise_cov(), model.R, H_rows,
        np.ascontiguousarray(y), obs, model.x0, model.V0,
    )
    if status == 1:
        raise RuntimeError(f"innovation variance collapsed (r <= 0) at n={bad_n}")
    if status == 2:
        raise RuntimeError(f"non-finite filter quantity at n={bad_n}")
    if not math.isfinite(ll):
        raise RuntimeError("non-finite log-likelihood")
    return FilterResult(
        innovations=eps,
        innovation_variances=rvar,
        predicted_means=x_pred,
        predicted_covs=V_pred,
        filtered_means=x_filt,
        filtered_covs=V_filt,
        log_likelihood=float(ll),
        n_observed=int(obs.sum()),
    )


def kalman_smooth(model: StateSpaceModel, filter_result: FilterResult) -> SmootherResult:
    """Fixed-interval (backward) smoothing of a filter pass.

    The backward gain uses a Moore-Penrose pseudo-inverse of the one-step
    covariance with tolerance 1e-12 times its largest diagonal entry;
    ``used_pseudo_inverse`` flags whether any singular value was clipped.
    x_{N|N} equals the final filtered mean exactly.
    """
    xs, Vs, used_pinv = _smooth_pass(
        model.F,
        filter_result.predicted_means, filter_result.predicted_covs,
        filter_result.filtered_means, filter_result.filtered_covs,
    )
    if not np.isfinite(xs).all():
        raise RuntimeError("non-finite smoothed state")
    return SmootherResult(means=xs, covs=Vs, used_pseudo_inverse=bool(used_pinv))


def predict(model: StateSpaceModel, filter_result: FilterResult,
            horizon: int) -> Tuple[np.ndarray, np.ndarray]:
    """Predict observation means and variances for the next ``horizon`` steps.

    Iterates the prediction step from the final filtered state with no
    further updates; step k corresponds to time index N + k.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    N = len(filter_result)
    x = filter_result.filtered_means[-1].copy()
    V = filter_result.filtered_covs[-1].copy()
    GQG = model.system_noise_cov()
    means = np.empty(horizon)
    variances = np.empty(horizon)
    for k in range(1, horizon + 1):
        x = model.F @ x
        V = model.F @ V @ model.F.T + GQG
        V = 0.5 * (V + V.T)
        h = model.observation_row(N + k)
        means[k - 1] = h @ x
        variances[k - 1] = h @ V @ h + model.R
    return means, variances


@njit(cache=True, nogil=True)
def _filter_pass(F, GQG, R, H_rows, y, obs, x0, V0):
    N = y.shape[0]
    d = x0.shape[0]
    x_pred = np.empty((N, d))
    V_pred = np.empty((N, d, d))
    x_filt = np.empty((N, d))
    V_filt = np.empty((N, d, d))
    eps = np.full(N, np.nan)
    rvar = np.full(N, np.nan)
    ll = 0.0
    x = x0.copy()
    V = V0.copy()
    status = 0
    bad_n = -1
    for i in range(N):
        x = F @ x
        V = F @ V @ F.T + GQG
        V = 0.5 * (V + V.T)
        x_pred[i] = x
        V_pred[i] = V
        if obs[i]:
            h = H_rows[i]
            e = y[i] - h @ x
            hV = V @ h
            r = R + h @ hV
            if not np.isfinite(r) or not np.isfinite(e):
                status = 2
                bad_n = i + 1
                break
            if r <= 0.0:
                status = 1
                bad_n = i + 1
                break
            k = hV / r
            x = x + k * e
            V = V - np.outer(k, hV)
            V = 0.5 * (V + V.T)
            eps[i] = e
            rvar[i] = r
            ll += -0.5 * (_LOG_2PI + np.log(r) + e * e / r)
        x_filt[i] = x
        V_filt[i] = V
    return status, bad_n, x_pred, V_pred, x_filt, V_filt, eps, rvar, ll


@njit(cache=True, nogil=True)
def _smooth_pass(F, x_pred, V_pred, x_filt, V_filt):
    N, d = x_filt.shape
    xs = np.empty((N, d))
    Vs = np.empty((N, d, d))
    xs[N - 1] = x_filt[N - 1]
    Vs[N - 1] = V_filt[N - 1]
    used_pinv = False
    for i in range(N - 2, -1, -1):
        Vp = V_pred[i + 1]
        U, s, Vt = np.linalg.svd(Vp)
        tol = 1e-12 * np.max(np.diag(Vp))
        if tol < 1e-300:
            tol = 1e-300
        sinv = np.zeros(d)
        for j in range(d):
            if s[j] > tol:
                sinv[j] = 1.0 / s[j]
            else:
                used_pinv = True
        Vp_inv = (Vt.T * sinv) @ U.T
        A = V_filt[i] @ F.T @ Vp_inv
        xs[i] = x_filt[i] + A @ (xs[i + 1] - x_pred[i + 1])
        Vnew = V_filt[i] + A @ (Vs[i + 1] - V_pred[i + 1]) @ A.T
        Vs[i] = 0.5 * (Vnew + Vnew.T)
    return xs, Vs, used_pinv
