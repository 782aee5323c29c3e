"""Structural component blocks and their block-diagonal composition.

Each block contributes a square transition matrix, a noise loading, and an
observation row (possibly time-varying) to the composite state-space model:

* trend of order 1 or 2,
* dummy-variable seasonal (sum form of dimension p-1, or lag form of
  dimension p),
* stationary AR in companion form,
* trigonometric seasonal whose state holds cosine/sine coefficients,
* a one-factor component scaling a fixed seasonal curve by a random walk.

Time indices are 1-based.  A trigonometric block of order ``n_terms``
takes cos(w j n) for j = 1..k_c and sin(w j n) for j = 1..k_s, with
(k_c, k_s) = harmonic_split(n_terms), interleaved cosine-first per
harmonic; harmonics in the excluded set are then removed, as is any
identically-zero sine term (j = p/2 for even integer p).  ``n_terms``
therefore counts individual regression-style terms before exclusion,
not pairs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple, Union

import numpy as np

_DYNAMICS = ("constant", "random_walk")


@dataclass(frozen=True)
class TrigBlockSpec:
    """Configuration of one trigonometric seasonal block.

    ``n_terms`` is the harmonic-term count (at most period - 1); the
    excluded harmonics are removed after the cosine/sine split, so they
    reduce the block dimension.  With ``dynamics="constant"`` the
    coefficients are fixed unknowns (no system noise); with
    ``"random_walk"`` they drift with a single shared variance.
    ``include_j0`` prepends a constant column (harmonic j = 0), not
    counted in ``n_terms``.
    """

    period: float
    n_terms: int
    dynamics: str = "random_walk"
    excluded: frozenset = frozenset()
    include_j0: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "period", float(self.period))
        object.__setattr__(self, "excluded", frozenset(int(j) for j in self.excluded))
        if not self.period >= 2.0:
            raise ValueError(f"period must be >= 2, got {self.period}")
        if self.n_terms < 0:
            raise ValueError(f"n_terms must be >= 0, got {self.n_terms}")
        if self.n_terms > self.period - 1:
            raise ValueError(
                f"n_terms={self.n_terms} exceeds the maximum period - 1 "
                f"for period {self.period}"
            )
        if self.dynamics not in _DYNAMICS:
            raise ValueError(f"dynamics must be one of {_DYNAMICS}, got {self.dynamics!r}")
        if any(j < 1 for j in self.excluded):
            raise ValueError("excluded harmonic indices must be >= 1")
        if any(j > math.ceil(self.period / 2) for j in self.excluded):
            raise ValueError(
                f"excluded harmonics must be <= ceil(period/2) = "
                f"{math.ceil(self.period / 2)}"
            )

    @property
    def is_empty(self) -> bool:
        return self.n_terms == 0 and not self.include_j0


@dataclass(frozen=True)
class ModelSpec:
    """Which components enter the decomposition model.

    ``trend_order`` 0 omits the trend; ``seasonal_period`` 0 omits the
    dummy seasonal; ``ar_order`` 0 omits the AR block.  ``trig`` holds the
    trigonometric blocks in the order they should appear.  ``one_factor``
    adds a random-walk coefficient on an externally supplied curve.  A
    spec with no components at all is allowed and denotes the white-noise
    model (observation noise only).
    """

    trend_order: int = 0
    seasonal_period: int = 0
    seasonal_form: str = "sum"
    ar_order: int = 0
    trig: Tuple[TrigBlockSpec, ...] = ()
    one_factor: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "trig", tuple(self.trig))
        if self.trend_order not in (0, 1, 2):
            raise ValueError(f"trend_order must be 0, 1 or 2, got {self.trend_order}")
        if self.seasonal_period != 0 and self.seasonal_period < 2:
            raise ValueError(
                f"seasonal_period must be 0 or >= 2, got {self.seasonal_period}"
            )
        if self.seasonal_form not in ("sum", "lag"):
            raise ValueError(
                f"seasonal_form must be 'sum' or 'lag', got {self.seasonal_form!r}"
            )
        if self.ar_order < 0:
            raise ValueError(f"ar_order must be >= 0, got {self.ar_order}")
        if not all(isinstance(t, TrigBlockSpec) for t in self.trig):
            raise TypeError("trig entries must be TrigBlockSpec")

    @property
    def active_trig(self) -> Tuple[TrigBlockSpec, ...]:
        """Trig blocks that actually contribute at least one state."""
        return tuple(t for t in self.trig if not t.is_empty)

    @property
    def has_components(self) -> bool:
        return bool(
            self.trend_order or self.seasonal_period or self.ar_order
            or self.active_trig or self.one_factor
        )


@dataclass(frozen=True)
class ComponentBlock:
    """One additive component of the composite model.

    ``H`` is either a constant row of length ``dim`` or a callable mapping
    the 1-based time index to such a row.  ``variance_name`` labels the
    single system-noise variance shared by all of the block's noise
    columns; blocks without noise columns have none.  ``n_coefficients``
    is how many fixed coefficients the block contributes to the parameter
    count (nonzero only for constant-dynamics trigonometric blocks).
    """

    label: str
    F: np.ndarray
    G: np.ndarray
    H: Union[np.ndarray, Callable[[int], np.ndarray]]
    variance_name: Optional[str]
    n_coefficients: int = 0
    v0_multipliers: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        F = np.ascontiguousarray(np.asarray(self.F, dtype=float))
        if F.ndim != 2 or F.shape[0] != F.shape[1] or F.shape[0] == 0:
            raise ValueError(f"block {self.label!r}: F must be square and non-empty")
        d = F.shape[0]
        G = np.ascontiguousarray(np.asarray(self.G, dtype=float).reshape(d, -1))
        if G.shape[1] > 0 and self.variance_name is None:
            raise ValueError(f"block {self.label!r}: noise columns need a variance_name")
        if G.shape[1] == 0 and self.variance_name is not None:
            raise ValueError(f"block {self.label!r}: variance_name without noise columns")
        H = self.H
        if not callable(H):
            H = np.ascontiguousarray(np.asarray(H, dtype=float).reshape(d))
        mult = self.v0_multipliers
        mult = np.ones(d) if mult is None else np.asarray(mult, dtype=float).reshape(d)
        if np.any(mult < 0):
            raise ValueError(f"block {self.label!r}: v0 multipliers must be >= 0")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "v0_multipliers", mult)

    @property
    def dim(self) -> int:
        return self.F.shape[0]

    def row(self, n: int) -> np.ndarray:
        """Observation row of this block at 1-based time index n."""
        if callable(self.H):
            return np.asarray(self.H(n), dtype=float).reshape(self.dim)
        return self.H


def build_trend(order: int) -> ComponentBlock:
    """Trend block: order 1 is a random walk on the level, order 2 a
    locally linear trend with transition [[2, -1], [1, 0]]."""
    if order == 1:
        F = np.array([[1.0]])
        G = np.array([[1.0]])
        H = np.array([1.0])
    elif order == 2:
        F = np.array([[2.0, -1.0], [1.0, 0.0]])
        G = np.array([[1.0], [0.0]])
        H = np.array([1.0, 0.0])
    else:
        raise ValueError(f"trend order must be 1 or 2, got {order}")
    return ComponentBlock("trend", F, G, H, "tau2_trend")


def build_dummy_seasonal(period: int, form: str = "sum") -> ComponentBlock:
    """Dummy-variable seasonal block.

    The sum form (dimension p-1) drives S_n = -(S_{n-1} + ... + S_{n-p+1})
    + noise; the lag form (dimension p) drives S_n = S_{n-p} + noise, so
    consecutive seasons are coupled only through the noise.
    """
    period = int(period)
    if period < 2:
        raise ValueError(f"seasonal period must be >= 2, got {period}")
    if form == "sum":
        d = period - 1
        F = np.zeros((d, d))
        F[0, :] = -1.0
        for i in range(1, d):
            F[i, i - 1] = 1.0
    elif form == "lag":
        d = period
        F = np.zeros((d, d))
        F[0, d - 1] = 1.0
        for i in range(1, d):
            F[i, i - 1] = 1.0
    else:
        raise ValueError(f"seasonal form must be 'sum' or 'lag', got {form!r}")
    G = np.zeros((d, 1))
    G[0, 0] = 1.0
    H = np.zeros(d)
    H[0] = 1.0
    return ComponentBlock("seasonal", F, G, H, "tau2_seasonal")


def build_ar(coefficients) -> ComponentBlock:
    """Stationary AR block in companion form.

    Raises ValueError if the characteristic roots do not lie strictly
    inside the unit circle.
    """
    coefs = np.asarray(coefficients, dtype=float).reshape(-1)
    m = coefs.shape[0]
    if m == 0:
        raise ValueError("AR block needs at least one coefficient")
    roots = np.roots(np.concatenate(([1.0], -coefs)))
    if roots.size and np.max(np.abs(roots)) >= 1.0:
        raise ValueError("AR coefficients are not stationary")
    F = np.zeros((m, m))
    F[0, :] = coefs
    for i in range(1, m):
        F[i, i - 1] = 1.0
    G = np.zeros((m, 1))
    G[0, 0] = 1.0
    H = np.zeros(m)
    H[0] = 1.0
    return ComponentBlock("ar", F, G, H, "tau2_ar")


def harmonic_split(n_terms: int) -> Tuple[int, int]:
    """Split a term count into (number of cosines, number of sines).

    Cosines lead: an odd count gives one more cosine than sine.
    """
    if n_terms < 0:
        raise ValueError(f"n_terms must be >= 0, got {n_terms}")
    return (n_terms + 1) // 2, n_terms // 2


def excluded_harmonics(period_short: float, period_long: float) -> frozenset:
    """Harmonics of the long period that coincide with the short period.

    When period_long is an integer multiple k of period_short, harmonics
    j = k, 2k, ... of the long-period block duplicate frequencies already
    carried by the short-period block and should be excluded.  A
    non-integer ratio excludes nothing (with a warning).
    """
    if period_short <= 0 or period_long <= 0:
        raise ValueError("periods must be positive")
    if period_short >= period_long:
        raise ValueError(
            f"short period {period_short} must be smaller than long period "
            f"{period_long}"
        )
    ratio = period_long / period_short
    k = round(ratio)
    if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, abs(ratio)):
        warnings.warn(
            f"period ratio {period_long}/{period_short} is not an integer; "
            "no harmonics excluded",
            stacklevel=2,
        )
        return frozenset()
    limit = math.ceil(period_long / 2)
    return frozenset(range(k, limit + 1, k))


def _is_vanishing_sine(j: int, period: float) -> bool:
    """sin(2 pi j n / period) is identically zero over integer n only at
    j = period/2 with period an even integer."""
    return abs(2 * j - period) <= 1e-9 * max(period, 1.0)


def _trig_columns(period: float, n_terms: int, excluded: frozenset,
                  include_j0: bool):
    """Enumerate (harmonic, kind) column labels for a trig block.

    Splits ``n_terms`` into cosines and sines, then filters the excluded
    harmonics and the vanishing sine; columns are ordered by harmonic,
    cosine before sine.
    """
    cols = []
    if include_j0:
        cols.append((0, "cos"))
    k_c, k_s = harmonic_split(n_terms)
    for j in range(1, k_c + 1):
        if j in excluded:
            continue
        cols.append((j, "cos"))
        if j <= k_s and not _is_vanishing_sine(j, period):
            cols.append((j, "sin"))
    return cols


def trig_block_dim(spec: TrigBlockSpec) -> int:
    """State dimension of a trig block after exclusion and sine drops."""
    if spec.is_empty:
        return 0
    return len(_trig_columns(spec.period, spec.n_terms, spec.excluded,
                             spec.include_j0))


class _TrigRow:
    """Time-varying observation row of a trigonometric block."""

    def __init__(self, period: float, cols):
        self.omegas = np.array([2.0 * math.pi * j / period for j, _ in cols])
        self.is_cos = np.array([kind == "cos" for _, kind in cols])

    def __call__(self, n: int) -> np.ndarray:
        ang = self.omegas * n
        return np.where(self.is_cos, np.cos(ang), np.sin(ang))


def build_trig_seasonal(spec: TrigBlockSpec, label: str = "trig_1") -> ComponentBlock:
    """Trigonometric seasonal block from its spec.

    The state holds the cosine/sine coefficients, so F is the identity;
    the periodic pattern enters through the time-varying observation row
    (cos w_j n, sin w_j n, ...) with w_j = 2 pi j / period.
    """
    if spec.is_empty:
        raise ValueError("trig block has no terms")
    cols = _trig_columns(spec.period, spec.n_terms, spec.excluded, spec.include_j0)
    if not cols:
        raise ValueError("all trigonometric terms are excluded")
    d = len(cols)
    F = np.eye(d)
    if spec.dynamics == "random_walk":
        G = np.eye(d)
        variance_name = f"tau2_{label}"
        n_coefficients = 0
    else:
        G = np.zeros((d, 0))
        variance_name = None
        n_coefficients = d
    return ComponentBlock(label, F, G, _TrigRow(spec.period, cols),
                          variance_name, n_coefficients=n_coefficients)


class _CurveRow:
    """Observation row [curve(n)] of the one-factor block."""

    def __init__(self, curve: np.ndarray):
        self.curve = curve

    def __call__(self, n: int) -> np.ndarray:
        if not 1 <= n <= self.curve.shape[0]:
            raise ValueError(
                f"one-factor curve covers n=1..{self.curve.shape[0]}, got n={n}"
            )
        return self.curve[n - 1:n]


def build_one_factor(curve) -> ComponentBlock:
    """One-factor block: a scalar random-walk coefficient multiplying a
    fixed curve evaluated at each time index."""
    curve = np.ascontiguousarray(np.asarray(curve, dtype=float).reshape(-1))
    if curve.size == 0:
        raise ValueError("one-factor curve is empty")
    if not np.isfinite(curve).all():
        raise ValueError("one-factor curve contains non-finite values")
    return ComponentBlock("one_factor", np.array([[1.0]]), np.array([[1.0]]),
                          _CurveRow(curve), "tau2_factor")


def build_noise_only() -> ComponentBlock:
    """Degenerate block for the white-noise model: a single pinned zero
    state that never enters the observation, so y_n = w_n."""
    return ComponentBlock("noise_only", np.array([[1.0]]), np.zeros((1, 0)),
                          np.array([0.0]), None, v0_multipliers=np.zeros(1))


@dataclass(frozen=True)
class Composite:
    """Block-diagonal composition of component blocks.

    Precomputes the stacked transition template, noise loading, the map
    from noise columns to variance names, per-block state slices, and the
    diffuse-prior multipliers, so that repeated likelihood evaluations
    only have to fill in variance values (and AR coefficients).
    """

    blocks: Tuple[ComponentBlock, ...]
    F_template: np.ndarray = field(init=False, repr=False)
    G: np.ndarray = field(init=False, repr=False)
    column_slots: Tuple[str, ...] = field(init=False, repr=False)
    slot_names: Tuple[str, ...] = field(init=False)
    slices: dict = field(init=False, repr=False)
    v0_multipliers: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        blocks = tuple(self.blocks)
        if not blocks:
            raise ValueError("composite needs at least one block")
        labels = [b.label for b in blocks]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate block labels: {labels}")
        dim = sum(b.dim for b in blocks)
        n_cols = sum(b.G.shape[1] for b in blocks)
        F = np.zeros((dim, dim))
        G = np.zeros((dim, n_cols))
        slices = {}
        column_slots = []
        mult = np.empty(dim)
        r = c = 0
        for b in blocks:
            sl = slice(r, r + b.dim)
            slices[b.label] = sl
            F[sl, sl] = b.F
            nc = b.G.shape[1]
            G[sl, c:c + nc] = b.G
            column_slots.extend([b.variance_name] * nc)
            mult[sl] = b.v0_multipliers
            r += b.dim
            c += nc
        slot_names = []
        for name in column_slots:
            if name not in slot_names:
                slot_names.append(name)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "F_template", F)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "column_slots", tuple(column_slots))
        object.__setattr__(self, "slot_names", tuple(slot_names))
        object.__setattr__(self, "slices", slices)
        object.__setattr__(self, "v0_multipliers", mult)

    @property
    def dim_state(self) -> int:
        return self.F_template.shape[0]

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(b.label for b in self.blocks)

    @property
    def n_coefficients(self) -> int:
        return sum(b.n_coefficients for b in self.blocks)

    def row(self, n: int) -> np.ndarray:
        """Full observation row at 1-based time index n."""
        return np.concatenate([b.row(n) for b in self.blocks])

    def observation_matrix(self, n_first: int, n_last: int) -> np.ndarray:
        """Stacked observation rows for n = n_first .. n_last inclusive."""
        return np.ascontiguousarray(
            [self.row(n) for n in range(n_first, n_last + 1)]
        )

    def transition(self, ar_coefficients=None) -> np.ndarray:
        """Transition matrix, with AR coefficients patched in if present."""
        F = self.F_template.copy()
        if ar_coefficients is not None:
            if "ar" not in self.slices:
                raise ValueError("composite has no AR block")
            sl = self.slices["ar"]
            coefs = np.asarray(ar_coefficients, dtype=float).reshape(-1)
            if coefs.shape[0] != sl.stop - sl.start:
                raise ValueError(
                    f"expected {sl.stop - sl.start} AR coefficients, got {coefs.shape[0]}"
                )
            F[sl.start, sl] = coefs
        return F

    def noise_diagonal(self, variances) -> np.ndarray:
        """Q diagonal, one entry per noise column, from a name->value map."""
        missing = [s for s in self.slot_names if s not in variances]
        if missing:
            raise KeyError(f"missing variances: {missing}")
        return np.array([variances[s] for s in self.column_slots])


def build_blocks(spec: ModelSpec, one_factor_curve=None) -> Tuple[ComponentBlock, ...]:
    """Instantiate the blocks of a model spec in canonical order.

    AR coefficients are left as zeros in the companion template; callers
    patch them via Composite.transition.  A spec with no components yields
    the degenerate noise-only block.
    """
    blocks = []
    if spec.trend_order:
        blocks.append(build_trend(spec.trend_order))
    if spec.seasonal_period:
        blocks.append(build_dummy_seasonal(spec.seasonal_period, spec.seasonal_form))
    if spec.ar_order:
        blocks.append(build_ar(np.zeros(spec.ar_order)))
    for i, tspec in enumerate(spec.active_trig, start=1):
        blocks.append(build_trig_seasonal(tspec, label=f"trig_{i}"))
    if spec.one_factor:
        if one_factor_curve is None:
            raise ValueError("spec has a one-factor component but no curve was given")
        blocks.append(build_one_factor(one_factor_curve))
    if not blocks:
        blocks.append(build_noise_only())
    return tuple(blocks)


def compose(blocks) -> Composite:
    """Compose component blocks into a block-diagonal structure."""
    return Composite(tuple(blocks))
