"""Translated-disc wandering chain, orbit-pair traces and the trichotomy classifier.

Chain index ``n`` lives in the disc centred at ``translation_step * n``.  Step
``n`` is ``T_{n+1} o b_{n+1} o T_n^{-1}`` plus an optional bounded
perturbation.  In the unperturbed model each component is exactly the unit
disc translated to its centre, so the lift of step ``n`` fixing the centre is
``b_{n+1}`` itself and hyperbolic distances are computed exactly
(``mode="exact"``).  With a perturbation the true components are unknown and
distances are bracketed between the discs of radius ``R_n`` and ``r_n``
(``mode="bracketed"``).

Traces are iterated in local coordinates ``z - center(n)``; the translations
are bookkeeping only and are never rounded into the iterates.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import mpmath
import numpy as np

from .blaschke import BlaschkeFactor, CompositionState, FactorSchedule
from .errors import DomainError, PreconditionError
from .hypgeo import R_STAR, UnitDisc, disc_distance, hyperbolic_bloch_radius, winding_number_of_map

__all__ = [
    "RadiiRule",
    "EpsilonRule",
    "Perturbation",
    "ChainModel",
    "OrbitPairTrace",
    "TrichotomyVerdict",
    "UField",
    "LandauReport",
    "model_step",
    "pair_trace",
    "classify",
    "u_field",
    "invariance_check",
    "equicontinuity_gap",
    "landau_check",
    "degree_check",
    "trace_csv",
]

BLOCH_CONSTANT = 0.433
COLLISION_TOL = 1e-13


# ---------------------------------------------------------------------------
# Model data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadiiRule:
    """Radii of the inner and outer discs ``Delta'_n = B(c_n, r_n)``, ``Delta_n = B(c_n, R_n)``.

    ``deficit`` family: ``1 - r_n = R_n - 1 = scale * (1 - a_{n+1})``, which
    keeps the second zero ``-a_{n+1}`` of the step map inside ``Delta'_n``.
    ``geometric`` family: ``1 - r_n = (1 - r0) rate**n``, ``R_n - 1 = (R0 - 1) rate**n``.
    Radii are handled through their gaps to 1, which stay representable
    when the radii themselves round to 1.0.
    """

    family: str = "deficit"
    scale: float = 0.5
    r0: float = 0.9
    R0: float = 1.1
    rate: float = 0.5

    def __post_init__(self):
        if self.family not in ("deficit", "geometric"):
            raise DomainError(f"unknown radii family {self.family!r}")
        if self.family == "deficit" and not 0 < self.scale < 1:
            raise DomainError("deficit radii need 0 < scale < 1")
        if self.family == "geometric" and not (0 < self.r0 < 1 < self.R0 and 0 < self.rate <= 1):
            raise DomainError("geometric radii need 0 < r0 < 1 < R0 and 0 < rate <= 1")

    def gaps(self, schedule: FactorSchedule, n: int, mp: bool = False):
        """Return ``(1 - r_n, R_n - 1)``."""
        if self.family == "deficit":
            d = schedule.deficit(n + 1, mp=mp)
            # rotation factors have zero deficit; keep the discs nondegenerate
            d = max(d, mpmath.mpf("1e-12") if mp else 1e-12)
            g = self.scale * d
            return g, g
        one = mpmath.mpf(1) if mp else 1.0
        rate = mpmath.mpf(self.rate) if mp else self.rate
        return (one - self.r0) * rate**n, (self.R0 - one) * rate**n


@dataclass(frozen=True)
class EpsilonRule:
    """Sup-norm error budgets ``eps_n``.

    ``default``: ``eps_n = 4**-n (R_n - r_n) / 8``; ``zero``; ``geometric``:
    ``eps_n = scale * q**n``.
    """

    family: str = "default"
    scale: float = 1.0
    q: float = 0.25

    def __post_init__(self):
        if self.family not in ("default", "zero", "geometric"):
            raise DomainError(f"unknown epsilon family {self.family!r}")

    def value(self, n: int, width: float) -> float:
        """Budget at index ``n`` given ``width = R_n - r_n``."""
        if self.family == "zero":
            return 0.0
        if self.family == "default":
            return 4.0**-n * width / 8.0
        return self.scale * self.q**n


@lru_cache(maxsize=4096)
def _unit_coefficients(seed: int, degree: int, n: int) -> tuple:
    rng = np.random.default_rng([seed, n])
    c = rng.normal(size=degree) + 1j * rng.normal(size=degree)
    c /= np.sum(np.abs(c))
    return tuple(complex(v) for v in c)


@dataclass(frozen=True)
class Perturbation:
    """Seeded polynomial ``p_n(z) = sum_{k=1..degree} c_k (z / R_n)^k`` with ``sum |c_k| = 0.9 eps``.

    There is no constant term, so the centre orbit ``f^n(0) = c_n`` survives.
    """

    degree: int = 3
    seed: int = 0
    epsilon: EpsilonRule = EpsilonRule()

    def __post_init__(self):
        if self.degree < 1:
            raise DomainError("perturbation degree must be at least 1")


@dataclass(frozen=True)
class ChainModel:
    schedule: FactorSchedule
    translation_step: float = 4.0
    radii: RadiiRule = RadiiRule()
    perturbation: Perturbation | None = None

    def center(self, n: int) -> float:
        return self.translation_step * n

    def gaps(self, n: int, mp: bool = False):
        return self.radii.gaps(self.schedule, n, mp=mp)

    def inner_radius(self, n: int) -> float:
        return 1.0 - self.gaps(n)[0]

    def outer_radius(self, n: int) -> float:
        return 1.0 + self.gaps(n)[1]

    def budget(self, n: int) -> float:
        """Sup bound ``eps_{n+1}`` of the perturbation applied at step ``n``."""
        if self.perturbation is None:
            return 0.0
        gi, go = self.gaps(n + 1)
        eps = self.perturbation.epsilon.value(n + 1, gi + go)
        if not eps < (gi + go) / 4.0:
            raise DomainError(f"budget eps_{n + 1} = {eps} violates eps < (R - r)/4")
        return eps

    def _perturbation_coeffs(self, n: int):
        p = self.perturbation
        scale = 0.9 * self.budget(n)
        R = self.outer_radius(n)
        unit = _unit_coefficients(p.seed, p.degree, n)
        return [scale * c / R ** (k + 1) for k, c in enumerate(unit)]

    def local_step(self, n: int, zeta, mp: bool = False):
        """Step ``n`` in local coordinates: ``b_{n+1}(zeta) + p_n(zeta)``."""
        f = self.schedule.mp_factor(n + 1) if mp else self.schedule.factor(n + 1)
        out = f(zeta)
        if self.perturbation is not None:
            coeffs = self._perturbation_coeffs(n)
            if mp:
                coeffs = [mpmath.mpc(c) for c in coeffs]
            acc = 0
            for c in reversed(coeffs):
                acc = (acc + c) * zeta
            out = out + acc
        return out


def model_step(model: ChainModel, n: int, z):
    """Apply step ``n`` to an absolute point ``z`` of ``Delta_n``."""
    z = np.asarray(z, dtype=complex)
    zeta = z - model.center(n)
    if np.any(np.abs(zeta) >= model.outer_radius(n)):
        raise DomainError(f"point outside Delta_{n}")
    out = model.center(n + 1) + model.local_step(n, zeta)
    return complex(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------


def _mp_disc_distance(z, w):
    num = 2 * abs(z - w) ** 2
    den = (1 - abs(z) ** 2) * (1 - abs(w) ** 2)
    delta = num / den
    return mpmath.log1p(delta + mpmath.sqrt(delta * (delta + 2)))


def _auto_digits(model: ChainModel, N: int) -> int:
    worst = 0.0
    for k in range(1, N + 2):
        d = model.schedule.deficit(k, mp=True)
        if d > 0:
            worst = max(worst, float(-mpmath.log10(d)))
    return max(30, 20 + math.ceil(worst))


@dataclass
class OrbitPairTrace:
    """Distances ``u_n`` between the orbits of ``w`` and ``z0``, ``n = 0..horizon``.

    ``decrements[n] = u_n - u_{n+1}`` of the primary series (exact values, or
    the lower bracket) is computed at the working precision before rounding,
    so decrements far below double precision are still resolved.
    """

    z0: complex
    w: complex
    horizon: int
    mode: str
    values: np.ndarray | None
    lower: np.ndarray | None
    upper: np.ndarray | None
    decrements: np.ndarray
    resolution: float
    digits: int | None = None
    escape_index: int | None = None
    collision_index: int | None = None

    @property
    def primary(self) -> np.ndarray:
        return self.values if self.values is not None else self.lower


def pair_trace(
    model: ChainModel,
    z0,
    w,
    N: int,
    mode: str = "exact",
    precision: int | str | None = None,
) -> OrbitPairTrace:
    """Trace ``u_n = d_{U_n}(f^n(w), f^n(z0))`` for ``n = 0..N``.

    ``precision``: ``None`` for double precision, an integer number of
    decimal digits, or ``"auto"`` to pick enough digits to resolve every
    ``1 - a_n`` up to the horizon.  An orbit leaving its disc truncates the
    trace and sets ``escape_index``.
    """
    if mode not in ("exact", "bracketed"):
        raise PreconditionError(f"unknown metric mode {mode!r}")
    if mode == "exact" and model.perturbation is not None:
        raise PreconditionError("exact mode is only valid for the unperturbed model")
    digits = _auto_digits(model, N) if precision == "auto" else precision
    use_mp = digits is not None
    za, zb = complex(z0) - model.center(0), complex(w) - model.center(0)
    limit0 = 1.0 if mode == "exact" else model.outer_radius(0)
    if abs(za) >= limit0 or abs(zb) >= limit0:
        raise DomainError("both points must lie in Delta_0")

    ex, lo, up = [], [], []
    escape = collision = None
    ctx = mpmath.workdps(digits) if use_mp else _NullContext()
    with ctx:
        if use_mp:
            za, zb = mpmath.mpc(za), mpmath.mpc(zb)
            dist = _mp_disc_distance
        else:
            dist = disc_distance
        for n in range(N + 1):
            gi, go = model.gaps(n, mp=use_mp)
            if mode == "exact":
                ex.append(dist(za, zb))
            else:
                R = 1 + go
                r = 1 - gi
                lo.append(dist(za / R, zb / R))
                if abs(za) < r and abs(zb) < r:
                    up.append(dist(za / r, zb / r))
                else:
                    up.append(None)
            if n == N:
                break
            za, zb = model.local_step(n, za, mp=use_mp), model.local_step(n, zb, mp=use_mp)
            gi, go = model.gaps(n + 1, mp=use_mp)
            bound = 1 if mode == "exact" else 1 + go
            if abs(za) >= bound or abs(zb) >= bound:
                escape = n + 1
                break
            if collision is None and abs(za - zb) < COLLISION_TOL:
                collision = n + 1
            if collision is not None:
                zb = za
        primary = ex if mode == "exact" else lo
        dec = np.array([float(primary[k] - primary[k + 1]) for k in range(len(primary) - 1)])

    def arr(seq):
        return np.array([math.nan if v is None else float(v) for v in seq])

    values = arr(ex) if mode == "exact" else None
    lower = arr(lo) if mode == "bracketed" else None
    upper = arr(up) if mode == "bracketed" else None
    u0 = float(primary[0])
    resolution = (10.0 ** (10 - digits) if use_mp else 1e-13) * max(1.0, u0)
    return OrbitPairTrace(
        complex(z0), complex(w), N, mode, values, lower, upper, dec,
        resolution, digits, escape, collision,
    )


class _NullContext:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def trace_csv(trace: OrbitPairTrace) -> str:
    """CSV with columns ``n, u_lower, u_exact, u_upper`` (blank where undefined)."""

    def fmt(arr, i):
        if arr is None or i >= len(arr) or math.isnan(arr[i]):
            return ""
        return repr(float(arr[i]))

    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["n", "u_lower", "u_exact", "u_upper"])
    for i in range(len(trace.primary)):
        wr.writerow([i, fmt(trace.lower, i), fmt(trace.values, i), fmt(trace.upper, i)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------


@dataclass
class TrichotomyVerdict:
    kind: str
    limit_estimate: float
    isometry_onset: int | None
    horizon: int
    eps_contract: float
    eps_flat: float
    window: int
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "limit_estimate": self.limit_estimate,
            "isometry_onset": self.isometry_onset,
            "horizon": self.horizon,
            "eps_contract": self.eps_contract,
            "eps_flat": self.eps_flat,
            "window": self.window,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _aitken_limit(u_last: float, dec: np.ndarray):
    pos = dec[-6:]
    if len(pos) < 3 or np.any(pos <= 0):
        return u_last, None
    ratios = pos[1:] / pos[:-1]
    if np.any(ratios >= 1) or np.ptp(ratios) > 0.1 * np.mean(ratios):
        return u_last, None
    rho = float(ratios[-1])
    tail = float(pos[-1]) * rho / (1.0 - rho)
    est = u_last - tail
    return (est, rho) if est > 0 else (u_last, None)


def classify(
    trace,
    eps_contract: float = 1e-6,
    eps_flat: float = 1e-12,
    window: int = 50,
) -> TrichotomyVerdict:
    """Sort an orbit-pair trace into contracting / semi-contracting / eventually isometric.

    ``trace`` is an :class:`OrbitPairTrace` or a plain sequence ``u_0..u_N``.
    """
    if isinstance(trace, OrbitPairTrace):
        u = np.asarray(trace.primary, dtype=float)
        dec = np.asarray(trace.decrements, dtype=float)
    else:
        u = np.asarray(trace, dtype=float)
        dec = -np.diff(u)
    N = len(u) - 1
    if window < 1 or N < 2 * window:
        raise PreconditionError(f"horizon {N} is shorter than twice the window {window}")

    # rel[m] = u_m - u_N assembled from decrements to keep sub-ulp resolution
    rel = np.concatenate([np.cumsum(dec[::-1])[::-1], [0.0]])
    u_last = float(u[-1])
    diag = {"u_last": u_last}
    if isinstance(trace, OrbitPairTrace):
        diag["collision_index"] = trace.collision_index
        diag["escape_index"] = trace.escape_index
    common = dict(horizon=N, eps_contract=eps_contract, eps_flat=eps_flat, window=window)

    if u_last < eps_contract:
        return TrichotomyVerdict("contracting", 0.0, None, diagnostics=diag, **common)

    spread = np.maximum.accumulate(rel[::-1])[::-1] - np.minimum.accumulate(rel[::-1])[::-1]
    flat = np.flatnonzero(spread[: N - window + 1] < eps_flat)
    if flat.size:
        onset = int(flat[0])
        diag["spread_at_onset"] = float(spread[onset])
        return TrichotomyVerdict("eventually_isometric", u_last, onset, diagnostics=diag, **common)

    drops = rel[: N - window + 1] - rel[window:]
    diag["min_window_decrease"] = float(drops.min())
    if np.all(drops > eps_flat):
        est, rho = _aitken_limit(u_last, dec)
        diag["aitken_ratio"] = rho
        return TrichotomyVerdict("semi_contracting", est, None, diagnostics=diag, **common)
    return TrichotomyVerdict("undecided", u_last, None, diagnostics=diag, **common)


# ---------------------------------------------------------------------------
# u as a function on the first component
# ---------------------------------------------------------------------------


def _metric(model: ChainModel, n: int, za, zb, which: str):
    if which == "exact":
        return disc_distance(za, zb)
    gi, go = model.gaps(n)
    rad = 1 + go if which == "lower" else 1 - gi
    za, zb = np.asarray(za), np.asarray(zb)
    inside = (np.abs(za) < rad) & (np.abs(zb) < rad)
    safe_a = np.where(inside, za, 0)
    safe_b = np.where(inside, zb, 0)
    return np.where(inside, disc_distance(safe_a / rad, safe_b / rad), np.nan)


def _default_metrics(model: ChainModel):
    return ("exact",) if model.perturbation is None else ("lower", "upper")


def _check_in_delta0(model, pts, exact):
    lim = 1.0 if exact else model.outer_radius(0)
    if np.any(np.abs(pts) >= lim):
        raise DomainError("grid points must lie in Delta_0")


@dataclass
class UField:
    points: np.ndarray
    values: np.ndarray
    gaps: np.ndarray
    horizon: int

    def gap_violations(self, tol: float = 1e-12) -> int:
        """Number of indices where the sup-gap increases by more than ``tol``."""
        return int(np.sum(np.diff(self.gaps) > tol))


def u_field(model: ChainModel, z0, grid, N: int) -> UField:
    """``u_N`` over ``grid`` together with ``sup_grid |u_n - u_N|`` for ``n = 0..N``."""
    which = _default_metrics(model)[0]
    pts = np.atleast_1d(np.asarray(grid, dtype=complex)) - model.center(0)
    base = complex(z0) - model.center(0)
    _check_in_delta0(model, np.append(pts, base), which == "exact")
    zs, zb = pts.copy(), base
    history = []
    for n in range(N + 1):
        history.append(_metric(model, n, zs, zb, which))
        if n < N:
            zs = model.local_step(n, zs)
            zb = model.local_step(n, zb)
    hist = np.array(history)
    uN = hist[-1]
    gaps = np.nanmax(np.abs(hist - uN[None, :]), axis=1)
    return UField(pts + model.center(0), uN, gaps, N)


def equicontinuity_gap(model: ChainModel, z0, grid, N: int) -> float:
    """Largest ``|u_n(z) - u_n(w)| - d(z, w)`` over grid pairs and ``n <= N``.

    Non-positive up to rounding: every ``u_n`` is 1-Lipschitz for the
    hyperbolic metric of the first component.
    """
    if model.perturbation is not None:
        raise PreconditionError("equicontinuity_gap needs the unperturbed model")
    pts = np.atleast_1d(np.asarray(grid, dtype=complex)) - model.center(0)
    base = complex(z0) - model.center(0)
    _check_in_delta0(model, np.append(pts, base), True)
    d0 = disc_distance(pts[:, None], pts[None, :])
    zs, zb = pts.copy(), base
    worst = -math.inf
    for n in range(N + 1):
        u = disc_distance(zs, zb)
        worst = max(worst, float(np.max(np.abs(u[:, None] - u[None, :]) - d0)))
        if n < N:
            zs, zb = model.local_step(n, zs), model.local_step(n, zb)
    return worst


def invariance_check(model: ChainModel, z0, grid, N: int) -> float:
    """Max ``|u(z) - u'(f(z))|`` with both sides truncated at chain index ``N``.

    ``u`` uses base ``z0`` on the first component; ``u'`` uses base
    ``f(z0)`` on the second and is evaluated at the images ``f(z)``, which
    are produced here by :func:`model_step` in absolute coordinates.
    """
    if N < 1:
        raise PreconditionError("invariance_check needs N >= 1")
    metrics = _default_metrics(model)
    pts = np.atleast_1d(np.asarray(grid, dtype=complex))
    base = complex(z0)
    _check_in_delta0(model, np.append(pts, base) - model.center(0), metrics[0] == "exact")

    za, zb = pts - model.center(0), base - model.center(0)
    for n in range(N):
        za, zb = model.local_step(n, za), model.local_step(n, zb)

    fa = model_step(model, 0, pts) - model.center(1)
    fb = model_step(model, 0, base) - model.center(1)
    for n in range(1, N):
        fa, fb = model.local_step(n, fa), model.local_step(n, fb)

    worst = 0.0
    for which in metrics:
        lhs = _metric(model, N, za, zb, which)
        rhs = _metric(model, N, fa, fb, which)
        diff = np.abs(lhs - rhs)
        if np.any(np.isfinite(diff)):
            worst = max(worst, float(np.nanmax(diff)))
    return worst


# ---------------------------------------------------------------------------
# Hyperbolic Landau check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LandauReport:
    derivative_norm: float
    bloch_constant_used: float
    r_star: float
    guaranteed_radius: float
    measured_radius: float
    resolution: float
    grid_resolution: int
    sample_spacing: float

    @property
    def passed(self) -> bool:
        return self.measured_radius + self.resolution >= self.guaranteed_radius

    def to_dict(self) -> dict:
        return {
            "derivative_norm": self.derivative_norm,
            "bloch_constant_used": self.bloch_constant_used,
            "r_star": self.r_star,
            "guaranteed_radius": self.guaranteed_radius,
            "measured_radius": self.measured_radius,
            "resolution": self.resolution,
            "grid_resolution": self.grid_resolution,
            "passed": self.passed,
        }


def _image_of_unit_ball(func, cell: float):
    """Forward samples of ``func`` on ``|z| < tanh(1/2)``, refined until the
    image of every sampling step is shorter than half a cell."""
    h = cell / 2.0
    while True:
        xs = np.arange(-R_STAR, R_STAR + h, h)
        Z = xs[None, :] + 1j * xs[:, None]
        inside = np.abs(Z) < R_STAR
        W = np.where(inside, func(np.where(inside, Z, 0)), np.nan)
        gap = max(
            np.nanmax(np.abs(np.diff(W, axis=0))),
            np.nanmax(np.abs(np.diff(W, axis=1))),
        )
        if gap < 0.45 * cell or h < cell / 64:
            return W[inside], h
        h /= 2.0


def landau_check(f, grid_resolution: int = 1024, bloch_constant: float = BLOCH_CONSTANT) -> LandauReport:
    """Measure the hyperbolic Bloch radius of ``f(B_D(0, 1))`` against ``2 B r* |f'(0)|``.

    ``f`` is a :class:`BlaschkeFactor` or a :class:`CompositionState`.
    """
    if isinstance(f, BlaschkeFactor):
        norm = abs(f.derivative_at_zero)
    elif isinstance(f, CompositionState):
        norm = abs(f.derivative_at_zero)
    else:
        raise TypeError("landau_check takes a BlaschkeFactor or a CompositionState")
    if not 0.0 < norm < 1.0:
        raise PreconditionError(f"need 0 < |f'(0)| < 1, got {norm}")
    guaranteed = 2.0 * bloch_constant * R_STAR * norm
    cell = 2.0 / grid_resolution
    image, spacing = _image_of_unit_ball(f, cell)
    br = hyperbolic_bloch_radius(UnitDisc(), image, grid_resolution)
    return LandauReport(
        norm, bloch_constant, R_STAR, guaranteed, br.value, br.resolution,
        grid_resolution, spacing,
    )


# ---------------------------------------------------------------------------
# Degree of the step maps
# ---------------------------------------------------------------------------


def degree_check(model: ChainModel, n: int, targets: Sequence[complex], radius: float | None = None) -> list[int]:
    """Winding number of ``f_n`` on ``|z - c_n| = radius`` around each target.

    ``radius`` defaults to ``r_n``.  Targets are absolute points near ``c_{n+1}``.
    """
    rad = model.inner_radius(n) if radius is None else radius
    step = lambda zeta: model.local_step(n, zeta)  # noqa: E731
    out = []
    for t in targets:
        local = complex(t) - model.center(n + 1)
        out.append(winding_number_of_map(step, 0j, rad, local))
    return out
