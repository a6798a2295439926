"""Joukowski transplant, interpolation conditions and dilatation certification.

Conventions (all in local coordinates ``zeta = z - center(n)`` of chain disc ``n``):

* ``gamma_n(z) = lam (mu_n z + 1/(mu_n z))`` with ``lam = mu r**2 / (mu**2 r**2 - 1)``,
  optionally inflated by ``1 + eta``;
* the outer boundary map on ``|z| = r'`` is ``b_{n+1}`` plus the chain
  perturbation, whose sup norm is the budget ``eps_{n+1}``;
* ``delta_1`` is the larger of the two log-derivative bounds, ``delta_0`` the
  continuous-branch log of the boundary ratio, and the interpolation constant
  is ``C = 1 - (delta_0 / log(r'/r) + delta_1) / k`` with ``K = 1/C``.

The interpolating quasiregular maps themselves are never built.  The orbit
audit pushes points through annuli with a boundary-matched radial blend; that
surrogate is only used for bookkeeping and never enters a dilatation bound.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .blaschke import BlaschkeFactor, FactorSchedule, _clog1p, detect_annulus
from .errors import DomainError, PoleError, PreconditionError, StructuralError
from .hypgeo import winding_number_of_map
from .wander import ChainModel, EpsilonRule, Perturbation, RadiiRule

__all__ = [
    "SweepResult",
    "theta_sweep",
    "JoukowskiMap",
    "joukowski_eval",
    "cond2_gamma_bound",
    "cond2_gamma_sweep",
    "cond2_blaschke_bound",
    "cond1_bound",
    "cond1_triangle_bound",
    "interpolation_constant",
    "MuRule",
    "SurgerySchedule",
    "InterpolationReport",
    "certify_product",
    "surround_check",
    "AuditReport",
    "audit_no_revisit",
    "omega_samples",
]

THETA_SAMPLES = 4096


# ---------------------------------------------------------------------------
# theta sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepResult:
    value: float
    argext: float
    samples: int
    resolution: float


def _sweep_once(fn: Callable, n: int, sign: float):
    theta = 2 * np.pi * np.arange(n) / n
    vals = sign * np.asarray(fn(theta), dtype=float)
    k = int(np.argmax(vals))
    h = 2 * np.pi / n
    res = minimize_scalar(
        lambda t: -sign * float(fn(np.array([t]))[0]),
        bounds=(theta[k] - h, theta[k] + h),
        method="bounded",
        options={"xatol": 1e-12},
    )
    if -res.fun > vals[k]:
        return sign * -res.fun, float(res.x) % (2 * np.pi)
    return sign * vals[k], float(theta[k])


def theta_sweep(fn: Callable, samples: int = THETA_SAMPLES, mode: str = "max") -> SweepResult:
    """Extremum of a vectorised ``fn(theta)`` over ``[0, 2 pi)``.

    The sample maximum is polished by a bounded scalar search around the best
    sample, then recomputed at twice the sample count; ``resolution`` is the
    change between the two passes.
    """
    if mode not in ("max", "min"):
        raise DomainError("mode must be 'max' or 'min'")
    sign = 1.0 if mode == "max" else -1.0
    v1, _ = _sweep_once(fn, samples, sign)
    v2, t2 = _sweep_once(fn, 2 * samples, sign)
    return SweepResult(v2, t2, 2 * samples, abs(v2 - v1))


# ---------------------------------------------------------------------------
# Joukowski transplant
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JoukowskiMap:
    mu: float
    r: float
    eta: float = 0.0

    def __post_init__(self):
        if self.r <= 0:
            raise PreconditionError("r must be positive")
        if not self.mu * self.r > 1:
            raise PreconditionError(f"need mu*r > 1, got {self.mu * self.r}")
        if self.eta < 0:
            raise PreconditionError("eta must be non-negative")

    @property
    def rho(self) -> float:
        return self.mu * self.r

    @property
    def lam(self) -> float:
        return (1.0 + self.eta) * self.mu * self.r**2 / (self.rho**2 - 1.0)

    @property
    def semi_axes(self) -> tuple[float, float]:
        """(major, minor) semi-axes of the image of ``|z| = r``."""
        return self.lam * (self.rho + 1 / self.rho), self.lam * (self.rho - 1 / self.rho)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        if np.any(z == 0):
            raise PoleError("the Joukowski transplant has a pole at 0")
        out = self.lam * (self.mu * z + 1.0 / (self.mu * z))
        return complex(out) if out.ndim == 0 else out

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        return self.lam * (self.mu - 1.0 / (self.mu * z**2))

    def log_ratio(self, z):
        """Principal ``log(gamma(z) / z)`` without cancellation for large ``mu``."""
        z = np.asarray(z, dtype=complex)
        inv = 1.0 / self.rho**2
        return math.log1p(self.eta) - math.log1p(-inv) + _clog1p(1.0 / (self.mu * z) ** 2)


def joukowski_eval(jmap: JoukowskiMap, z):
    return jmap(z)


def cond2_gamma_bound(jmap: JoukowskiMap) -> float:
    """Closed-form ``max |z (log(gamma(z)/z))'|`` on ``|z| = r``: ``2/(mu**2 r**2 - 1)``."""
    return 2.0 / (jmap.rho**2 - 1.0)


def cond2_gamma_sweep(jmap: JoukowskiMap, samples: int = THETA_SAMPLES) -> SweepResult:
    """Numerical maximum of ``|z gamma'(z)/gamma(z) - 1|`` on ``|z| = r``.

    The expression has period ``pi`` in ``theta``; the reported maximiser is
    folded into ``[0, pi)``.
    """

    def fn(theta):
        # z gamma'/gamma - 1 = -2 / ((mu z)**2 + 1), free of cancellation for large mu r
        return 2.0 / np.abs(jmap.rho**2 * np.exp(2j * theta) + 1.0)

    res = theta_sweep(fn, samples)
    return SweepResult(res.value, res.argext % math.pi, res.samples, res.resolution)


def _as_factor(a) -> BlaschkeFactor:
    if isinstance(a, BlaschkeFactor):
        return a
    a = float(a)
    if not 0 <= a < 1:
        raise PreconditionError("factor parameter must lie in [0, 1)")
    return BlaschkeFactor(a)


def _budget_terms(f: BlaschkeFactor, z, eps: float, r_prime: float):
    """Pointwise ``|b|``, ``|b'|`` and the Cauchy bound on the perturbation derivative."""
    b = np.abs(f(z))
    if eps > 0 and np.min(b) <= eps:
        raise PreconditionError("perturbation budget exceeds |b| on the outer circle")
    # the perturbation is bounded by eps on a disc of radius > 1 around the centre
    return b, np.abs(f.derivative(z)), eps / (1.0 - r_prime)


def cond2_blaschke_bound(a, r_prime: float, epsilon_budget: float = 0.0, samples: int = THETA_SAMPLES) -> float:
    """``max |z b'(z)/b(z) - 1|`` on ``|z| = r'`` plus the perturbation allowance.

    ``a`` is a parameter in ``(0, 1)`` or a :class:`BlaschkeFactor` (which keeps
    ``1 - a`` exact when ``a`` rounds to 1).
    """
    if not 0 < r_prime < 1:
        raise PreconditionError("r_prime must lie in (0, 1)")
    f = _as_factor(a)
    eps = float(epsilon_budget)

    def fn(theta):
        z = r_prime * np.exp(1j * theta)
        val = np.abs(f.log_derivative_excess(z))
        if eps > 0:
            b, db, deps = _budget_terms(f, z, eps, r_prime)
            val = val + r_prime * (b * deps + db * eps) / (b * (b - eps))
        return val

    return theta_sweep(fn, samples).value


def _boundary_log(f: BlaschkeFactor, jmap: JoukowskiMap, r_prime: float, theta: np.ndarray):
    """``log(b(r' e)/(r' e)) - log(gamma(r e)/(r e))`` on a theta grid."""
    return f.log_ratio(r_prime * np.exp(1j * theta)) - jmap.log_ratio(jmap.r * np.exp(1j * theta))


def _check_single_winding(f: BlaschkeFactor, jmap: JoukowskiMap, r_prime: float):
    outer = winding_number_of_map(f, 0j, r_prime, 0j)
    inner = winding_number_of_map(jmap, 0j, jmap.r, 0j)
    if outer != 1 or inner != 1:
        raise StructuralError(
            f"boundary curves must wind once around 0 (outer {outer}, inner {inner})"
        )


def cond1_bound(a, jmap: JoukowskiMap, r_prime: float, epsilon_budget: float = 0.0, samples: int = THETA_SAMPLES) -> float:
    """Max over ``theta`` of ``|log((b(r'e)/(r'e)) (r e / gamma(r e)))|`` on a continuous branch.

    Sample counts are doubled until consecutive samples of the log differ by
    less than ``pi/8`` in argument; a net change of argument around the circle
    raises :class:`StructuralError`, as does either boundary curve failing to
    wind exactly once around 0.
    """
    if not jmap.r < r_prime < 1:
        raise PreconditionError("need r < r_prime < 1")
    f = _as_factor(a)
    _check_single_winding(f, jmap, r_prime)
    eps = float(epsilon_budget)

    n = samples
    while True:
        theta = 2 * np.pi * np.arange(n + 1) / n
        L = _boundary_log(f, jmap, r_prime, theta)
        arg = np.unwrap(L.imag)
        if np.max(np.abs(np.diff(arg))) < math.pi / 8 or n >= 1 << 22:
            break
        n *= 2
    net = arg[-1] - arg[0]
    if abs(net) > math.pi:
        raise StructuralError(f"boundary ratio winds {net / (2 * math.pi):.3f} times around 0")
    # the branch is fixed by continuity from theta = 0
    shift = arg[0] - L.imag[0]
    vals = np.abs(L.real + 1j * arg)
    k = int(np.argmax(vals[:-1]))
    h = 2 * np.pi / n

    def point(t):
        tt = np.array([t])
        Lt = _boundary_log(f, jmap, r_prime, tt)[0]
        im = Lt.imag + shift
        im += 2 * math.pi * round((arg[k] - im) / (2 * math.pi))
        return abs(complex(Lt.real, im))

    res = minimize_scalar(lambda t: -point(t), bounds=(theta[k] - h, theta[k] + h), method="bounded",
                          options={"xatol": 1e-12})
    best = max(vals[k], -res.fun)
    if eps > 0:
        b = np.abs(f(r_prime * np.exp(1j * theta[:-1])))
        if np.min(b) <= eps:
            raise PreconditionError("perturbation budget exceeds |b| on the outer circle")
        best += float(np.max(-np.log1p(-eps / b)))
    return float(best)


def cond1_triangle_bound(a, jmap: JoukowskiMap, r_prime: float, epsilon_budget: float = 0.0, samples: int = THETA_SAMPLES) -> float:
    """Sum of the two separately maximised principal log moduli; dominates :func:`cond1_bound`."""
    f = _as_factor(a)
    eps = float(epsilon_budget)

    def outer(theta):
        z = r_prime * np.exp(1j * theta)
        val = np.abs(f.log_ratio(z))
        if eps > 0:
            val = val - np.log1p(-eps / np.abs(f(z)))
        return val

    def inner(theta):
        return np.abs(jmap.log_ratio(jmap.r * np.exp(1j * theta)))

    return theta_sweep(outer, samples).value + theta_sweep(inner, samples).value


def _excess(delta_0: float, delta_1: float, r: float, r_prime: float, k: int) -> float:
    if not 0 < r < r_prime:
        raise PreconditionError("need 0 < r < r_prime")
    if delta_0 < 0 or delta_1 < 0:
        raise PreconditionError("delta values must be non-negative")
    if k < 1:
        raise PreconditionError("k must be a positive integer")
    return (delta_0 / math.log(r_prime / r) + delta_1) / k


def interpolation_constant(delta_0: float, delta_1: float, r: float, r_prime: float, k: int = 1):
    """Return ``(C, K)``; ``K = 1/C`` when ``C > 0`` and ``None`` otherwise."""
    C = 1.0 - _excess(delta_0, delta_1, r, r_prime, k)
    return C, (1.0 / C if C > 0 else None)


# ---------------------------------------------------------------------------
# Schedules and certification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MuRule:
    """``geometric``: ``mu_n = scale * base**n``; ``constant``: ``mu_n = scale``."""

    family: str = "geometric"
    scale: float = 10.0
    base: float = 2.0

    def __post_init__(self):
        if self.family not in ("geometric", "constant"):
            raise DomainError(f"unknown mu family {self.family!r}")
        if self.scale <= 0 or self.base < 1:
            raise DomainError("mu rule needs scale > 0 and base >= 1")

    def __call__(self, n: int) -> float:
        if self.family == "constant":
            return self.scale
        return self.scale * self.base**n

    def describe(self) -> dict:
        out = {"family": self.family, "scale": self.scale}
        if self.family == "geometric":
            out["base"] = self.base
        return out


@dataclass(frozen=True)
class SurgerySchedule:
    factor_schedule: FactorSchedule
    mu_rule: MuRule = MuRule()
    r: float = 0.1
    r_prime: float = 0.2
    epsilon: EpsilonRule = EpsilonRule()
    start_index: int = 5
    eta: float = 0.0
    radii: RadiiRule = RadiiRule()
    perturbation_degree: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.r < self.r_prime < 1:
            raise PreconditionError("need 0 < r < r_prime < 1")
        if self.start_index < 0:
            raise PreconditionError("start_index must be non-negative")

    @property
    def model(self) -> ChainModel:
        pert = None
        if self.epsilon.family != "zero":
            pert = Perturbation(self.perturbation_degree, self.seed, self.epsilon)
        return ChainModel(self.factor_schedule, radii=self.radii, perturbation=pert)

    def joukowski(self, n: int) -> JoukowskiMap:
        return JoukowskiMap(self.mu_rule(n), self.r, self.eta)


@dataclass
class InterpolationReport:
    records: list[dict]
    K_infinity_partial: float
    tail_bound: float
    certified: bool
    infeasible_index: int | None
    envelope: tuple[float, float] | None
    eta: float
    theta_samples: int
    heuristic: bool = True

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["n", "delta0", "delta1", "C", "K"])
        for rec in self.records:
            K = "" if rec["K"] is None else repr(rec["K"])
            wr.writerow([rec["n"], repr(rec["delta_0"]), repr(rec["delta_1"]), repr(rec["C"]), K])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "K_infinity_partial": self.K_infinity_partial,
            "tail_bound": self.tail_bound,
            "certified": self.certified,
            "certification": "heuristic-extrapolated",
            "infeasible_index": self.infeasible_index,
            "eta": self.eta,
            "theta_samples": self.theta_samples,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2) + "\n"


def _annulus_record(schedule: SurgerySchedule, model: ChainModel, n: int, samples: int) -> dict:
    f = schedule.factor_schedule.factor(n + 1)
    if not isinstance(f, BlaschkeFactor):
        raise PreconditionError(f"factor {n + 1} is a rotation; surgery needs Blaschke factors")
    jmap = schedule.joukowski(n)
    eps = model.budget(n)
    d1 = max(cond2_gamma_bound(jmap), cond2_blaschke_bound(f, schedule.r_prime, eps, samples))
    d0 = cond1_bound(f, jmap, schedule.r_prime, eps, samples)
    x = _excess(d0, d1, schedule.r, schedule.r_prime, 1)
    C = 1.0 - x
    return {
        "n": n,
        "delta_0": d0,
        "delta_1": d1,
        "C": C,
        "K": 1.0 / C if C > 0 else None,
        "log_K": -math.log1p(-x) if C > 0 else math.inf,
    }


def _envelope(ns: np.ndarray, logk: np.ndarray):
    """Geometric ``alpha q**n`` dominating ``logk``; ``None`` if no decay is visible."""
    pos = logk > 0
    if not pos.any():
        return 0.0, 0.0
    if pos.sum() < 2:
        return None
    slope, _ = np.polyfit(ns[pos], np.log(logk[pos]), 1)
    q = math.exp(slope)
    if not q < 1:
        return None
    alpha = float(np.max(logk / q ** ns))
    return alpha, q


def certify_product(
    schedule: SurgerySchedule,
    N_max: int,
    tail_tol: float = 1e-6,
    theta_samples: int = THETA_SAMPLES,
) -> InterpolationReport:
    """Per-annulus bounds for ``n = start_index..N_max`` and a tail-extrapolated product.

    Certification needs every ``C_n > 0``, a geometric envelope
    ``alpha q**n >= log K_n`` with ``q < 1`` fitted over the last
    ``max(10, (N_max - N)//2)`` indices, and ``alpha q**(N_max+1)/(1-q) < tail_tol``.
    This is an extrapolation, flagged as heuristic in the report.
    """
    N = schedule.start_index
    if N_max < N:
        raise PreconditionError("N_max must be at least the start index")
    model = schedule.model
    records = []
    infeasible = None
    for n in range(N, N_max + 1):
        rec = _annulus_record(schedule, model, n, theta_samples)
        records.append(rec)
        if rec["C"] <= 0 and infeasible is None:
            infeasible = n
    if infeasible is not None:
        return InterpolationReport(records, math.inf, math.inf, False, infeasible, None,
                                   schedule.eta, 2 * theta_samples)

    logk = np.array([rec["log_K"] for rec in records])
    ns = np.arange(N, N_max + 1, dtype=float)
    L = min(len(records), max(10, (N_max - N) // 2))
    env = _envelope(ns[-L:], logk[-L:])
    if env is None:
        tail = math.inf
    else:
        alpha, q = env
        tail = alpha * q ** (N_max + 1) / (1 - q) if alpha > 0 else 0.0
    partial = math.exp(math.fsum(logk))
    return InterpolationReport(records, partial, tail, bool(tail < tail_tol), None, env,
                               schedule.eta, 2 * theta_samples)


def surround_check(jmap: JoukowskiMap, target_radius: float, tol: float = 1e-10):
    """Compare ``min |gamma(r e^{i theta})|`` with ``target_radius``."""
    if target_radius <= 0:
        raise PreconditionError("target_radius must be positive")
    res = theta_sweep(lambda t: np.abs(jmap(jmap.r * np.exp(1j * t))), mode="min")
    m = res.value
    if abs(m - target_radius) <= tol * max(1.0, target_radius):
        verdict = "touches"
    elif m > target_radius:
        verdict = "surrounds"
    else:
        verdict = "fails"
    return m, verdict


# ---------------------------------------------------------------------------
# Orbit audit
# ---------------------------------------------------------------------------


@dataclass
class AuditReport:
    """Visit counts of sampled orbits to the closed annuli ``r <= |z - c_m| <= r'``.

    ``visits[i]`` maps annulus index to the number of orbit points of sample
    ``i`` inside it; ``status[i]`` is ``"ok"``, ``"escaped"`` (left every
    chain disc) or ``"pole"`` (landed within ``pole_tol`` of a transplanted
    pole).
    """

    samples: np.ndarray
    visits: list[Counter]
    status: list[str]
    steps: list[int]
    surrogate: str = "radial blend of gamma_n on |z|=r and the chain map on |z|=r'"

    @property
    def max_visits(self) -> np.ndarray:
        return np.array([max(v.values(), default=0) for v in self.visits])

    def entered_any(self) -> np.ndarray:
        return np.array([bool(v) for v in self.visits])

    def summary(self) -> dict:
        return {
            "samples": len(self.samples),
            "max_visit_count": int(self.max_visits.max(initial=0)),
            "orbits_entering_annuli": int(self.entered_any().sum()),
            "escaped": self.status.count("escaped"),
            "pole_captures": self.status.count("pole"),
            "surrogate": self.surrogate,
        }


def _locate(model: ChainModel, z: complex):
    m = int(round(z.real / model.translation_step))
    if m >= 0 and abs(z - model.center(m)) < model.outer_radius(m):
        return m
    return None


def _g0_step(schedule: SurgerySchedule, model: ChainModel, n: int, zeta: complex) -> complex:
    """One step of the modified map from chain disc ``n``; returns local coordinates in disc ``n+1``."""
    s = abs(zeta)
    if n < schedule.start_index or s > schedule.r_prime:
        return model.local_step(n, zeta)
    jmap = schedule.joukowski(n)
    if s < schedule.r:
        return jmap(zeta)
    u = zeta / s
    t = (s - schedule.r) / (schedule.r_prime - schedule.r)
    return (1 - t) * jmap(schedule.r * u) + t * model.local_step(n, schedule.r_prime * u)


def audit_no_revisit(
    schedule: SurgerySchedule,
    samples,
    horizon: int,
    pole_tol: float = 1e-12,
) -> AuditReport:
    """Iterate the modified map on absolute sample points in ``Delta_N`` and count annulus visits."""
    model = schedule.model
    N = schedule.start_index
    pts = np.atleast_1d(np.asarray(samples, dtype=complex))
    if np.any(np.abs(pts - model.center(N)) >= model.outer_radius(N)):
        raise DomainError(f"audit samples must lie in Delta_{N}")
    visits, status, steps = [], [], []
    for z in pts:
        z = complex(z)
        count: Counter = Counter()
        state, k = "ok", 0
        n = N
        for k in range(horizon + 1):
            zeta = z - model.center(n)
            if n >= N and schedule.r <= abs(zeta) <= schedule.r_prime:
                count[n] += 1
            if k == horizon:
                break
            if n >= N and abs(zeta) < pole_tol:
                state = "pole"
                break
            z = model.center(n + 1) + _g0_step(schedule, model, n, zeta)
            m = _locate(model, z)
            if m is None:
                state = "escaped"
                break
            n = m
        visits.append(count)
        status.append(state)
        steps.append(k)
    return AuditReport(pts, visits, status, steps)


def omega_samples(schedule: SurgerySchedule, count: int, horizon: int, rng: np.random.Generator, c: float = 0.25):
    """Absolute points of ``Delta_N`` whose forward factor images stay at modulus ``> c``.

    Uses :func:`detect_annulus` on the schedule shifted to start at ``N``;
    with ``c > r'`` such orbits can never reach an operated annulus.
    Returns ``None`` when no annulus is detected.
    """
    N = schedule.start_index
    region = detect_annulus(schedule.factor_schedule.shifted(N), c, horizon)
    if region is None:
        return None
    return schedule.model.center(N) + region.sample(count, rng)
