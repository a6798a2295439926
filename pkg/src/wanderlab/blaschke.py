"""Non-autonomous Blaschke compositions ``B_n = b_n o ... o b_1``.

A factor ``b(z) = z (z + a) / (1 + a z)`` is stored with its *deficit*
``1 - a`` so that schedules with ``a_n -> 1`` keep their information long
after ``a_n`` itself rounds to 1.0 in double precision.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import mpmath
import numpy as np

from .errors import DomainError, PreconditionError

__all__ = [
    "BlaschkeFactor",
    "Rotation",
    "FactorSchedule",
    "CompositionState",
    "CriterionReport",
    "LimitEstimate",
    "AnnulusRegion",
    "evaluate_factor",
    "factor_derivative_at_zero",
    "compose",
    "criterion_report",
    "estimate_limit_function",
    "detect_annulus",
]

DERIVATIVE_FLOOR = 1e-3


def _clog1p(x):
    """Accurate complex ``log(1 + x)`` for tiny ``|x|`` (numpy drops the real part)."""
    x = np.asarray(x, dtype=complex)
    re = 0.5 * np.log1p(2.0 * x.real + (x.real**2 + x.imag**2))
    im = np.arctan2(x.imag, 1.0 + x.real)
    return re + 1j * im


@dataclass(frozen=True)
class BlaschkeFactor:
    a: float
    deficit: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.deficit is None:
            object.__setattr__(self, "deficit", 1.0 - self.a)
        if not (0.0 <= self.a <= 1.0 and 0.0 < self.deficit <= 1.0):
            raise DomainError(f"Blaschke parameter must satisfy 0 <= a < 1 (a={self.a})")

    @classmethod
    def from_deficit(cls, deficit: float) -> "BlaschkeFactor":
        return cls(1.0 - deficit, deficit)

    @property
    def derivative_at_zero(self) -> float:
        return self.a

    def __call__(self, z):
        a = self.a
        return z * (z + a) / (1 + a * z)

    def derivative(self, z):
        a = self.a
        return (a * z * z + 2 * z + a) / (1 + a * z) ** 2

    def log_ratio(self, z):
        """Principal ``log(b(z) / z)``, accurate when ``a`` is close to 1."""
        return _clog1p(-self.deficit * (1 - z) / (1 + self.a * z))

    def log_derivative_excess(self, z):
        """``z b'(z) / b(z) - 1``, written so tiny deficits are not cancelled."""
        d = self.deficit
        return z * d * (2.0 - d) / ((z + self.a) * (1 + self.a * z))


@dataclass(frozen=True)
class Rotation:
    """Isometric factor ``z -> exp(i angle) z`` (used for synthetic schedules)."""

    angle: float = 1.0
    deficit: float = 0.0

    @property
    def derivative_at_zero(self) -> float:
        return 1.0

    def __call__(self, z):
        if isinstance(z, (mpmath.mpc, mpmath.mpf)):
            return mpmath.expj(self.angle) * z
        return np.exp(1j * self.angle) * z

    def derivative(self, z):
        return np.exp(1j * self.angle) * np.ones_like(z)


_FAMILIES = {"harmonic", "geometric", "constant", "trivial", "list"}


@dataclass(frozen=True)
class FactorSchedule:
    """Closed-form rule for the parameters ``a_n`` (``n >= 1``).

    Families: ``harmonic`` (``a_n = 1 - 1/(n+1)``), ``geometric``
    (``a_n = 1 - q**n``), ``constant`` (``a_n = value``), ``trivial``
    (``a_n = 0``) and ``list`` (explicit values, optionally followed by a
    ``tail`` schedule).  ``rotation_from`` turns factor ``n`` into a rotation
    for every ``n >= rotation_from``.
    """

    family: str
    q: float | None = None
    value: float | None = None
    values: tuple = ()
    tail: "FactorSchedule | None" = None
    offset: int = 0
    rotation_from: int | None = None
    rotation_angle: float = 1.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise DomainError(f"unknown schedule family {self.family!r}")
        if self.family == "geometric" and not (self.q is not None and 0 < self.q < 1):
            raise DomainError("geometric family needs 0 < q < 1")
        if self.family == "constant" and not (self.value is not None and 0 <= self.value < 1):
            raise DomainError("constant family needs 0 <= value < 1")
        if self.family == "list":
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
            if not self.values or any(not 0 <= v < 1 for v in self.values):
                raise DomainError("list family needs values in [0, 1)")
        if self.offset < 0:
            raise DomainError("offset must be non-negative")

    # constructors -----------------------------------------------------------
    @classmethod
    def harmonic(cls):
        return cls("harmonic")

    @classmethod
    def geometric(cls, q: float = 0.25):
        return cls("geometric", q=q)

    @classmethod
    def constant(cls, value: float):
        return cls("constant", value=value)

    @classmethod
    def trivial(cls):
        return cls("trivial")

    @classmethod
    def from_list(cls, values: Sequence[float], tail: "FactorSchedule | None" = None):
        return cls("list", values=tuple(values), tail=tail)

    @classmethod
    def from_config(cls, cfg: dict) -> "FactorSchedule":
        """Build from string-valued keys ``family``, ``q``, ``value``, ``values``, ..."""
        cfg = dict(cfg)
        family = cfg.pop("family", "geometric")
        kw = {}
        if "rotation_from" in cfg:
            kw["rotation_from"] = int(cfg.pop("rotation_from"))
        if "rotation_angle" in cfg:
            kw["rotation_angle"] = float(cfg.pop("rotation_angle"))
        if family == "list":
            values = json.loads(cfg.pop("values"))
            tail = None
            if "tail" in cfg:
                tail = cls.from_config({"family": cfg.pop("tail"), **cfg})
                cfg.clear()
            sched = cls("list", values=tuple(values), tail=tail, **kw)
        else:
            if "q" in cfg:
                kw["q"] = float(cfg.pop("q"))
            if "value" in cfg:
                kw["value"] = float(cfg.pop("value"))
            sched = cls(family, **kw)
        if cfg:
            raise DomainError(f"unused schedule keys: {sorted(cfg)}")
        return sched

    # evaluation ---------------------------------------------------------------
    def shifted(self, k: int) -> "FactorSchedule":
        """Schedule whose factor ``n`` is this schedule's factor ``n + k``."""
        return replace(self, offset=self.offset + k)

    def is_rotation(self, n: int) -> bool:
        return self.rotation_from is not None and n + self.offset >= self.rotation_from

    def deficit(self, n: int, mp: bool = False):
        """``1 - a_n``; an ``mpmath.mpf`` when ``mp`` is true."""
        if n < 1:
            raise DomainError("schedule indices start at 1")
        if self.is_rotation(n):
            return mpmath.mpf(0) if mp else 0.0
        m = n + self.offset
        one = mpmath.mpf(1) if mp else 1.0
        if self.family == "harmonic":
            return one / (m + 1)
        if self.family == "geometric":
            return (mpmath.mpf(self.q) if mp else self.q) ** m
        if self.family == "constant":
            return one - (mpmath.mpf(self.value) if mp else self.value)
        if self.family == "trivial":
            return one
        if m <= len(self.values):
            return one - (mpmath.mpf(self.values[m - 1]) if mp else self.values[m - 1])
        if self.tail is None:
            raise DomainError(f"list schedule has no entry {m} and no tail rule")
        return self.tail.deficit(m, mp=mp)

    def a(self, n: int) -> float:
        return 1.0 - self.deficit(n)

    def factor(self, n: int):
        if self.is_rotation(n):
            return Rotation(self.rotation_angle)
        return BlaschkeFactor.from_deficit(self.deficit(n))

    def mp_factor(self, n: int):
        """Callable factor evaluated in mpmath arithmetic."""
        if self.is_rotation(n):
            return Rotation(self.rotation_angle)
        a = 1 - self.deficit(n, mp=True)
        return lambda z: z * (z + a) / (1 + a * z)

    @property
    def verdict_hint(self) -> str:
        """Tail behaviour of ``sum (1 - a_n)`` decided from the family."""
        if self.rotation_from is not None:
            return "converging"
        if self.family in ("harmonic", "constant", "trivial"):
            return "diverging"
        if self.family == "geometric":
            return "converging"
        return "inconclusive"

    def describe(self) -> dict:
        out = {"family": self.family}
        for key in ("q", "value"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        if self.values:
            out["values"] = list(self.values)
        if self.tail is not None:
            out["tail"] = self.tail.describe()
        if self.offset:
            out["offset"] = self.offset
        if self.rotation_from is not None:
            out["rotation_from"] = self.rotation_from
            out["rotation_angle"] = self.rotation_angle
        return out


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def evaluate_factor(f, z):
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z) > 1.0):
        raise DomainError("evaluate_factor needs |z| <= 1")
    out = f(z)
    return complex(out) if out.ndim == 0 else out


def factor_derivative_at_zero(f) -> float:
    return f.derivative_at_zero


def compose(schedule: FactorSchedule, n: int, z):
    """Forward composition ``B_n(z) = b_n(...b_1(z))``; ``n = 0`` is the identity."""
    if n < 0:
        raise DomainError("n must be non-negative")
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z) >= 1.0):
        raise DomainError("compose needs |z| < 1")
    for k in range(1, n + 1):
        z = schedule.factor(k)(z)
    return complex(z) if z.ndim == 0 else z


@dataclass(frozen=True)
class CompositionState:
    """Bookkeeping for ``B_n``: evaluator plus derivative and criterion sums at 0."""

    schedule: FactorSchedule
    index: int
    derivative_at_zero: float
    criterion_partial_sum: float

    @classmethod
    def at(cls, schedule: FactorSchedule, n: int) -> "CompositionState":
        rep = criterion_report(schedule, n) if n >= 1 else CriterionReport(0.0, 1.0, "")
        return cls(schedule, n, rep.derivative_product, rep.partial_sum)

    def __call__(self, z):
        return compose(self.schedule, self.index, z)

    def derivative(self, z):
        """Chain-rule derivative of ``B_n`` at ``z``."""
        z = np.asarray(z, dtype=complex)
        d = np.ones_like(z)
        for k in range(1, self.index + 1):
            f = self.schedule.factor(k)
            d = d * f.derivative(z)
            z = f(z)
        return d


@dataclass(frozen=True)
class CriterionReport:
    partial_sum: float
    derivative_product: float
    verdict_hint: str


def criterion_report(schedule: FactorSchedule, N: int) -> CriterionReport:
    """Partial sum of ``1 - a_n`` and product of ``a_n`` over ``n <= N``."""
    if N < 1:
        raise PreconditionError("criterion_report needs N >= 1")
    deficits = [schedule.deficit(n) for n in range(1, N + 1)]
    partial = math.fsum(deficits)
    with np.errstate(divide="ignore"):
        logs = np.log1p(-np.asarray(deficits))
    product = 0.0 if np.isneginf(logs).any() else math.exp(math.fsum(logs))
    return CriterionReport(partial, product, schedule.verdict_hint)


@dataclass(frozen=True)
class LimitEstimate:
    values: np.ndarray
    stabilized_at: int | None
    converged: bool
    iterations: int
    last_increment: float


def estimate_limit_function(
    schedule: FactorSchedule, grid, tol: float, max_iter: int = 5000
) -> LimitEstimate:
    """Iterate ``B_n`` on ``grid`` until two consecutive sup-increments fall below ``tol``.

    Failure to stabilise is reported through ``converged=False``.
    """
    z = np.atleast_1d(np.asarray(grid, dtype=complex)).copy()
    if np.any(np.abs(z) >= 1.0):
        raise DomainError("grid points must lie in the open disc")
    quiet = 0
    inc = math.inf
    for n in range(1, max_iter + 1):
        nz = schedule.factor(n)(z)
        inc = float(np.max(np.abs(nz - z))) if len(z) else 0.0
        z = nz
        quiet = quiet + 1 if inc < tol else 0
        if quiet >= 2:
            return LimitEstimate(z, n, True, n, inc)
    return LimitEstimate(z, None, False, max_iter, inc)


@dataclass(frozen=True)
class AnnulusRegion:
    inner: float
    outer: float

    @property
    def width(self) -> float:
        return self.outer - self.inner

    def contains(self, z):
        m = np.abs(z)
        return (m > self.inner) & (m < self.outer)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Area-uniform random points strictly inside the annulus."""
        u = rng.random(n)
        rad = np.sqrt(self.inner**2 + u * (self.outer**2 - self.inner**2))
        rad = np.clip(rad, np.nextafter(self.inner, 1), np.nextafter(self.outer, 0))
        return rad * np.exp(2j * np.pi * rng.random(n))


def detect_annulus(
    schedule: FactorSchedule,
    c: float,
    N: int,
    radial_samples: int = 200,
    angular_samples: int = 256,
    derivative_floor: float = DERIVATIVE_FLOOR,
) -> AnnulusRegion | None:
    """Widest sampled round annulus on which ``min_theta |B_N| > c``.

    Sampled radii are ``k / (radial_samples + 1)``; the returned bounds are
    the first and last qualifying radius of the longest qualifying run.
    """
    if not 0 < c < 1:
        raise PreconditionError("detect_annulus needs 0 < c < 1")
    if N >= 1:
        prod = criterion_report(schedule, N).derivative_product
        if prod < derivative_floor:
            warnings.warn(
                f"B_N'(0) = {prod:.3g} is below the floor {derivative_floor}; "
                "the annulus may not persist in the limit",
                RuntimeWarning,
                stacklevel=2,
            )
    radii = np.arange(1, radial_samples + 1) / (radial_samples + 1)
    theta = 2 * np.pi * np.arange(angular_samples) / angular_samples
    pts = radii[:, None] * np.exp(1j * theta)[None, :]
    mins = np.abs(compose(schedule, N, pts)).min(axis=1)
    ok = mins > c
    best, run_start, best_span = None, None, -1
    for i, flag in enumerate(np.append(ok, False)):
        if flag and run_start is None:
            run_start = i
        elif not flag and run_start is not None:
            if i - 1 - run_start > best_span:
                best_span, best = i - 1 - run_start, (run_start, i - 1)
            run_start = None
    if best is None:
        return None
    return AnnulusRegion(float(radii[best[0]]), float(radii[best[1]]))
