"""Hyperbolic geometry on the unit disc and round annuli, plus grid estimators.

All metrics use curvature -1, so the disc density is ``2 / (1 - |z|^2)`` and
``disc_distance(0, tanh(1/2)) == 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage, optimize, sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .errors import DomainError, IllConditionedError, UnreachableError

__all__ = [
    "R_STAR",
    "UnitDisc",
    "RoundAnnulus",
    "Raster",
    "CurveSample",
    "BlochRadius",
    "QuasiHyperbolicGrid",
    "disc_density",
    "disc_distance",
    "annulus_density",
    "annulus_distance",
    "quasi_hyperbolic_distance",
    "winding_number",
    "winding_number_of_map",
    "hyperbolic_bloch_radius",
    "load_raster",
    "save_raster",
]

R_STAR = math.tanh(0.5)


def _as_point(z) -> complex:
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise DomainError(f"non-finite point {z!r}")
    return z


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UnitDisc:
    def contains(self, z):
        return np.abs(z) < 1.0

    def boundary_distance(self, z):
        return np.maximum(1.0 - np.abs(z), 0.0)

    def bounding_box(self):
        return (-1.0, 1.0, -1.0, 1.0)


@dataclass(frozen=True)
class RoundAnnulus:
    """The annulus ``inner_radius < |z| < 1``."""

    inner_radius: float

    def __post_init__(self):
        if not 0.0 < self.inner_radius < 1.0:
            raise DomainError(f"inner_radius must lie in (0, 1), got {self.inner_radius}")

    @property
    def strip_width(self) -> float:
        return -math.log(self.inner_radius)

    def contains(self, z):
        m = np.abs(z)
        return (m > self.inner_radius) & (m < 1.0)

    def boundary_distance(self, z):
        m = np.abs(z)
        return np.maximum(np.minimum(m - self.inner_radius, 1.0 - m), 0.0)

    def bounding_box(self):
        return (-1.0, 1.0, -1.0, 1.0)


@dataclass(frozen=True, eq=False)
class Raster:
    """Occupancy grid; row ``i`` spans imaginary parts ``origin.imag + i*cell_size``.

    ``boundary_distance_field`` is derived from the grid with an exact
    Euclidean distance transform and is zero exactly on empty cells.
    """

    grid: np.ndarray
    cell_size: float
    origin: complex = 0j
    boundary_distance_field: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=bool)
        if grid.ndim != 2:
            raise DomainError("raster grid must be two-dimensional")
        if not self.cell_size > 0:
            raise DomainError("cell_size must be positive")
        object.__setattr__(self, "grid", grid)
        padded = np.pad(grid, 1, constant_values=False)
        edt = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
        # distance from a cell centre to the nearest empty cell centre, pulled
        # back by half a cell to approximate the distance to the cell edge
        bd = np.where(grid, (edt - 0.5) * self.cell_size, 0.0)
        object.__setattr__(self, "boundary_distance_field", bd)

    @property
    def shape(self):
        return self.grid.shape

    def cell_centers(self) -> np.ndarray:
        h, w = self.grid.shape
        x = self.origin.real + (np.arange(w) + 0.5) * self.cell_size
        y = self.origin.imag + (np.arange(h) + 0.5) * self.cell_size
        return x[None, :] + 1j * y[:, None]

    def locate(self, z):
        """Return ``(row, col, inside_bounds)`` for points ``z``."""
        z = np.asarray(z, dtype=complex)
        col = np.floor((z.real - self.origin.real) / self.cell_size).astype(int)
        row = np.floor((z.imag - self.origin.imag) / self.cell_size).astype(int)
        h, w = self.grid.shape
        ok = (row >= 0) & (row < h) & (col >= 0) & (col < w)
        return np.where(ok, row, 0), np.where(ok, col, 0), ok

    def contains(self, z):
        row, col, ok = self.locate(z)
        return ok & self.grid[row, col]

    def boundary_distance(self, z):
        row, col, ok = self.locate(z)
        return np.where(ok, self.boundary_distance_field[row, col], 0.0)

    def bounding_box(self):
        h, w = self.grid.shape
        x0, y0 = self.origin.real, self.origin.imag
        return (x0, x0 + w * self.cell_size, y0, y0 + h * self.cell_size)

    def to_text(self) -> str:
        h, w = self.grid.shape
        lines = [f"raster {w} {h} {self.cell_size!r}"]
        lines += ["".join("1" if v else "0" for v in row) for row in self.grid]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, origin: complex = 0j) -> "Raster":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise DomainError("empty raster text")
        head = lines[0].split()
        if len(head) != 4 or head[0] != "raster":
            raise DomainError(f"bad raster header: {lines[0]!r}")
        width, height, cell = int(head[1]), int(head[2]), float(head[3])
        body = "".join(lines[1:])
        if len(body) != width * height or set(body) - {"0", "1"}:
            raise DomainError(
                f"raster body must hold {width * height} characters from {{0,1}}"
            )
        grid = (np.frombuffer(body.encode(), dtype=np.uint8) == ord("1")).reshape(
            height, width
        )
        return cls(grid, cell, origin)


def save_raster(raster: Raster, path) -> None:
    Path(path).write_text(raster.to_text())


def load_raster(path, origin: complex = 0j) -> Raster:
    return Raster.from_text(Path(path).read_text(), origin=origin)


# ---------------------------------------------------------------------------
# Disc metric
# ---------------------------------------------------------------------------


def disc_density(z):
    z = np.asarray(z)
    m = np.abs(z)
    return 2.0 / ((1.0 - m) * (1.0 + m))


def disc_distance(z, w):
    """Hyperbolic distance in the unit disc.

    Equals ``2 artanh(|z - w| / |1 - conj(w) z|)``; evaluated through the
    arccosh form, which keeps full relative accuracy near the boundary.
    Accepts scalars or broadcastable arrays.
    """
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    mz, mw = np.abs(z), np.abs(w)
    if np.any(~np.isfinite(mz)) or np.any(~np.isfinite(mw)):
        raise DomainError("non-finite point")
    if np.any(mz >= 1.0) or np.any(mw >= 1.0):
        raise DomainError("disc_distance needs |z| < 1 and |w| < 1")
    delta = 2.0 * np.abs(z - w) ** 2 / ((1.0 - mz) * (1.0 + mz) * (1.0 - mw) * (1.0 + mw))
    d = np.log1p(delta + np.sqrt(delta * (delta + 2.0)))
    return float(d) if d.ndim == 0 else d


# ---------------------------------------------------------------------------
# Annulus metric
# ---------------------------------------------------------------------------


def annulus_density(domain: RoundAnnulus, z):
    """Density of the hyperbolic metric of ``domain`` at ``z``.

    Obtained by pushing the strip density ``(pi/L) / sin(pi x / L)`` through
    the covering ``zeta -> exp(zeta - L)`` with ``L = -log(inner_radius)``.
    """
    L = domain.strip_width
    m = np.abs(z)
    x = np.log(m) + L
    return (math.pi / L) / (m * np.sin(math.pi * x / L))


def _strip_coords(domain: RoundAnnulus, z: complex) -> complex:
    return complex(math.log(abs(z)) + domain.strip_width, math.atan2(z.imag, z.real))


def _wrap_angle(t: float) -> float:
    return (t + math.pi) % (2.0 * math.pi) - math.pi


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(96)
_GL_T = 0.5 * (_GL_NODES + 1.0)
_GL_W = 0.5 * _GL_WEIGHTS


def _logit(p):
    return math.log(p / (1.0 - p))


def _min_strip_path(p: complex, q: complex, L: float, modes: int) -> float:
    """Shortest length over a family of smooth paths in the strip ``0 < x < L``.

    The horizontal coordinate is carried through a logistic map so every
    candidate path stays inside the strip; both coordinates get ``modes``
    sine perturbations vanishing at the endpoints.
    """
    t = _GL_T
    j = np.arange(1, modes + 1)
    S = np.sin(np.pi * np.outer(t, j))
    dS = np.pi * j * np.cos(np.pi * np.outer(t, j))
    g0, g1 = _logit(p.real / L), _logit(q.real / L)
    y0, y1 = p.imag, q.imag
    scale = math.pi / L

    def length(c):
        cg, cy = c[:modes], c[modes:]
        g = g0 + t * (g1 - g0) + S @ cg
        dg = (g1 - g0) + dS @ cg
        dy = (y1 - y0) + dS @ cy
        s = 1.0 / (1.0 + np.exp(-g))
        dx = L * s * (1.0 - s) * dg
        x = L * s
        dens = scale / np.sin(math.pi * x / L)
        return float(np.sum(_GL_W * dens * np.hypot(dx, dy)))

    res = optimize.minimize(
        length, np.zeros(2 * modes), method="BFGS", options={"gtol": 1e-10}
    )
    return min(float(res.fun), length(np.zeros(2 * modes)))


def annulus_distance(domain: RoundAnnulus, z, w, modes: int = 8) -> float:
    """Hyperbolic distance in a round annulus by path-family minimisation.

    Paths are drawn in the logarithmic strip coordinates; every homotopy
    class whose crude lower bound could still beat the incumbent is tried.
    """
    z, w = _as_point(z), _as_point(w)
    if not (domain.contains(z) and domain.contains(w)):
        raise DomainError("annulus_distance needs both points inside the annulus")
    if z == w:
        return 0.0
    # fixed argument order makes the estimate exactly symmetric
    if (z.real, z.imag) > (w.real, w.imag):
        z, w = w, z
    L = domain.strip_width
    p, q = _strip_coords(domain, z), _strip_coords(domain, w)
    dy = _wrap_angle(q.imag - p.imag)
    best = math.inf
    for k in sorted(range(-3, 4), key=lambda k: abs(dy + 2 * math.pi * k)):
        target = complex(q.real, p.imag + dy + 2 * math.pi * k)
        # strip density is at least pi/L everywhere
        if (math.pi / L) * abs(target - p) >= best:
            continue
        best = min(best, _min_strip_path(p, target, L, modes))
    return best


def _annulus_covering_distance(domain: RoundAnnulus, z, w):
    """Vectorised annulus distance via the strip covering (used for grid scans)."""
    L = domain.strip_width
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    xz, yz = np.log(np.abs(z)) + L, np.angle(z)
    xw, yw = np.log(np.abs(w)) + L, np.angle(w)
    dy = np.mod(yw - yz + np.pi, 2 * np.pi) - np.pi
    best = np.full(np.broadcast(z, w).shape, np.inf)
    for k in (-1, 0, 1):
        # upper half-plane images of the two lifts
        P = np.exp((np.pi / L) * (1j * xz - yz))
        Q = np.exp((np.pi / L) * (1j * xw - (yz + dy + 2 * np.pi * k)))
        arg = np.abs(P - Q) ** 2 / (2.0 * P.imag * Q.imag)
        best = np.minimum(best, np.log1p(arg + np.sqrt(arg * (arg + 2.0))))
    return best


# ---------------------------------------------------------------------------
# Quasi-hyperbolic metric on grids
# ---------------------------------------------------------------------------

# half of the 16-neighbourhood; each entry carries the cells a move passes through
_OFFSETS = [
    ((0, 1), ()),
    ((1, 0), ()),
    ((1, 1), ()),
    ((1, -1), ()),
    ((1, 2), ((0, 1), (1, 1))),
    ((2, 1), ((1, 0), (1, 1))),
    ((1, -2), ((0, -1), (1, -1))),
    ((2, -1), ((1, 0), (1, -1))),
]


def _shifted(a: np.ndarray, di: int, dj: int, fill=False) -> np.ndarray:
    """``out[i, j] = a[i + di, j + dj]`` with ``fill`` outside the array."""
    h, w = a.shape
    out = np.full_like(a, fill)
    src = a[max(di, 0) : h + min(di, 0), max(dj, 0) : w + min(dj, 0)]
    out[max(-di, 0) : h + min(-di, 0), max(-dj, 0) : w + min(-dj, 0)] = src
    return out


class QuasiHyperbolicGrid:
    """Weighted 16-connected grid graph approximating the quasi-hyperbolic metric.

    Edge weight is the Euclidean edge length times the mean of
    ``1 / boundary_distance`` at its two endpoints.  Build once, then query
    many pairs from the same source cheaply.
    """

    def __init__(self, domain, resolution: int = 512):
        self.domain = domain
        if isinstance(domain, Raster):
            self.cell = domain.cell_size
            centers = domain.cell_centers()
            bd = domain.boundary_distance_field
        else:
            x0, x1, y0, y1 = domain.bounding_box()
            self.cell = (x1 - x0) / resolution
            xs = x0 + (np.arange(resolution) + 0.5) * self.cell
            ys = y0 + (np.arange(resolution) + 0.5) * self.cell
            centers = xs[None, :] + 1j * ys[:, None]
            bd = np.where(domain.contains(centers), domain.boundary_distance(centers), 0.0)
        occupied = bd > 0
        self.shape = occupied.shape
        self.centers = centers[occupied]
        self.node_bd = bd[occupied]
        index = np.full(occupied.shape, -1, dtype=np.int64)
        index[occupied] = np.arange(occupied.sum())
        inv = np.where(occupied, 1.0 / np.where(occupied, bd, 1.0), 0.0)

        rows, cols, weights = [], [], []
        for (di, dj), via in _OFFSETS:
            ok = occupied & _shifted(occupied, di, dj)
            for vi, vj in via:
                ok &= _shifted(occupied, vi, vj)
            src = index[ok]
            dst = _shifted(index, di, dj, fill=-1)[ok]
            wt = 0.5 * (inv[ok] + _shifted(inv, di, dj, fill=0.0)[ok])
            rows.append(src)
            cols.append(dst)
            weights.append(wt * self.cell * math.hypot(di, dj))
        n = len(self.centers)
        self.graph = sparse.csr_matrix(
            (np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        )

    @cached_property
    def _tree(self):
        return cKDTree(np.column_stack([self.centers.real, self.centers.imag]))

    def _snap(self, z: complex):
        if not self.domain.contains(z):
            raise DomainError(f"point {z!r} is not in the domain")
        bd = float(self.domain.boundary_distance(z))
        if bd <= 0:
            raise DomainError(f"point {z!r} has zero boundary distance")
        _, node = self._tree.query([z.real, z.imag])
        c = self.centers[node]
        cost = abs(z - c) * 0.5 * (1.0 / bd + 1.0 / self.node_bd[node])
        return int(node), cost, bd

    def distances_from(self, z, targets: Sequence[complex]) -> np.ndarray:
        z = _as_point(z)
        src, src_cost, bdz = self._snap(z)
        dist = csgraph.dijkstra(self.graph, directed=False, indices=src)
        out = np.empty(len(targets))
        for i, w in enumerate(targets):
            w = _as_point(w)
            if w == z:
                out[i] = 0.0
                continue
            dst, dst_cost, bdw = self._snap(w)
            if not np.isfinite(dist[dst]):
                raise UnreachableError(f"{z!r} and {w!r} are not connected on the grid")
            via_grid = src_cost + dist[dst] + dst_cost
            if dst == src:
                via_grid = min(via_grid, abs(z - w) * 0.5 * (1.0 / bdz + 1.0 / bdw))
            out[i] = via_grid
        return out

    def distance(self, z, w) -> float:
        return float(self.distances_from(z, [w])[0])


def quasi_hyperbolic_distance(domain, z, w, resolution: int = 512) -> float:
    """Quasi-hyperbolic distance ``k_D(z, w)`` estimated on a 16-connected grid."""
    z, w = _as_point(z), _as_point(w)
    if z == w:
        if not domain.contains(z):
            raise DomainError(f"point {z!r} is not in the domain")
        return 0.0
    return QuasiHyperbolicGrid(domain, resolution).distance(z, w)


# ---------------------------------------------------------------------------
# Winding numbers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CurveSample:
    points: np.ndarray
    closed: bool = True

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex).ravel()
        if len(pts) < 16:
            raise DomainError("a curve sample needs at least 16 points")
        if not np.all(np.isfinite(pts)):
            raise DomainError("curve points must be finite")
        steps = np.diff(np.append(pts, pts[0]) if self.closed else pts)
        if np.any(steps == 0):
            raise DomainError("consecutive curve points must be distinct")
        object.__setattr__(self, "points", pts)

    @classmethod
    def circle(cls, center=0j, radius=1.0, n=64):
        theta = 2 * np.pi * np.arange(n) / n
        return cls(center + radius * np.exp(1j * theta))


def _segment_distance(a: np.ndarray, b: np.ndarray, p: complex) -> np.ndarray:
    ab = b - a
    t = np.clip(((p - a) * np.conj(ab)).real / np.maximum(np.abs(ab) ** 2, 1e-300), 0, 1)
    return np.abs(a + t * ab - p)


def _polygon_turns(pts: np.ndarray, p: complex, tol: float) -> float:
    a, b = pts, np.roll(pts, -1)
    if np.min(_segment_distance(a, b, p)) <= tol:
        raise IllConditionedError(f"point {p!r} lies within {tol} of the curve")
    # a straight segment that misses p subtends an angle strictly inside (-pi, pi)
    return float(np.sum(np.angle((b - p) / (a - p)))) / (2 * math.pi)


def winding_number(curve: CurveSample, p, tol: float = 1e-9) -> int:
    """Number of turns the closed polygon ``curve`` makes around ``p``."""
    if not curve.closed:
        raise DomainError("winding_number needs a closed curve")
    turns = _polygon_turns(curve.points, _as_point(p), tol)
    return int(round(turns))


def winding_number_of_map(
    func: Callable,
    center: complex,
    radius: float,
    p=0j,
    samples: int = 64,
    max_angle: float = math.pi / 8,
    max_samples: int = 1 << 20,
    tol: float = 1e-9,
) -> int:
    """Winding number of ``func`` restricted to a circle, around ``p``.

    The circle is resampled until each sampled segment of the image turns by
    less than ``max_angle`` as seen from ``p``.
    """
    p = _as_point(p)
    theta = 2 * np.pi * np.arange(samples) / samples
    vals = np.asarray(func(center + radius * np.exp(1j * theta)), dtype=complex)
    scale = max(float(np.max(np.abs(vals - p))), 1e-300)
    for _ in range(64):
        if np.min(np.abs(vals - p)) <= tol * scale:
            raise IllConditionedError(f"point {p!r} lies on the image curve")
        nxt = np.roll(vals, -1)
        turn = np.abs(np.angle((nxt - p) / (vals - p)))
        bad = turn > max_angle
        if not bad.any():
            break
        if len(theta) + bad.sum() > max_samples:
            raise IllConditionedError("adaptive resampling did not resolve the image curve")
        nxt_theta = np.append(theta[1:], 2 * np.pi)
        mid = 0.5 * (theta[bad] + nxt_theta[bad])
        mid_vals = np.asarray(func(center + radius * np.exp(1j * mid)), dtype=complex)
        theta = np.concatenate([theta, mid])
        vals = np.concatenate([vals, mid_vals])
        order = np.argsort(theta)
        theta, vals = theta[order], vals[order]
    else:
        # 64 bisections without settling: the curve passes (numerically) through p
        raise IllConditionedError(f"point {p!r} is too close to the image curve")
    turns = _polygon_turns(vals, p, tol)
    return int(round(turns))


# ---------------------------------------------------------------------------
# Hyperbolic Bloch radius
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlochRadius:
    value: float
    resolution: float
    center: complex | None
    grid_size: int


def _subset_mask(ambient, subset, resolution: int):
    """Return ``(mask, inside, centers, cell)`` on a square grid over the ambient box."""
    if isinstance(subset, Raster):
        centers = subset.cell_centers()
        mask = subset.grid.copy()
        cell = subset.cell_size
    else:
        x0, x1, y0, y1 = ambient.bounding_box()
        cell = (x1 - x0) / resolution
        xs = x0 + (np.arange(resolution) + 0.5) * cell
        ys = y0 + (np.arange(resolution) + 0.5) * cell
        centers = xs[None, :] + 1j * ys[:, None]
        if callable(subset):
            mask = np.asarray(subset(centers), dtype=bool)
        else:
            pts = np.asarray(subset, dtype=complex).ravel()
            mask = np.zeros(centers.shape, dtype=bool)
            col = np.floor((pts.real - x0) / cell).astype(int)
            row = np.floor((pts.imag - y0) / cell).astype(int)
            ok = (row >= 0) & (row < resolution) & (col >= 0) & (col < resolution)
            mask[row[ok], col[ok]] = True
    inside = np.asarray(ambient.contains(centers), dtype=bool)
    return mask & inside, inside, centers, cell


def _ambient_distance(ambient, z, w):
    if isinstance(ambient, UnitDisc):
        return disc_distance(z, w)
    return _annulus_covering_distance(ambient, z, w)


def hyperbolic_bloch_radius(ambient, subset, resolution: int = 512) -> BlochRadius:
    """Radius of the largest hyperbolic disc of ``ambient`` inside ``subset``.

    ``subset`` may be a :class:`Raster` mask, a vectorised indicator
    function, or a cloud of points (rasterised by cell hits).  The
    complement's frontier is represented by midpoints between adjacent
    subset / complement cells.  Returns ``inf`` when the subset fills the
    ambient grid.
    """
    if not isinstance(ambient, (UnitDisc, RoundAnnulus)):
        raise NotImplementedError("Bloch radius needs an ambient with a known hyperbolic metric")
    mask, inside, centers, cell = _subset_mask(ambient, subset, resolution)
    n_grid = mask.shape[0]
    if not mask.any():
        raise DomainError("empty subset")
    comp = inside & ~mask
    if not comp.any():
        return BlochRadius(math.inf, 0.0, None, n_grid)

    frontier = []
    for di, dj in ((0, 1), (1, 0), (0, -1), (-1, 0)):
        pair = mask & _shifted(comp, di, dj)
        a = centers[pair]
        frontier.append(a + 0.5 * cell * (dj + 1j * di))
    frontier = np.concatenate(frontier)
    cand = centers[mask]

    tree = cKDTree(np.column_stack([frontier.real, frontier.imag]))
    e, idx = tree.query(np.column_stack([cand.real, cand.imag]))
    upper = _ambient_distance(ambient, cand, frontier[idx])
    if isinstance(ambient, UnitDisc):
        # the hyperbolic distance from c to the circle |q - c| = e is smallest
        # at the point of that circle closest to the origin
        m = np.abs(cand)
        lower = disc_distance(m, m - e)
    else:
        lower = (math.pi / ambient.strip_width) * e
    best_lower = float(np.max(lower))
    keep = np.flatnonzero(upper >= best_lower)

    best, best_c = -1.0, None
    chunk = max(1, int(4e6 // len(frontier)))
    for s in range(0, len(keep), chunk):
        sel = cand[keep[s : s + chunk]]
        d = _ambient_distance(ambient, sel[:, None], frontier[None, :]).min(axis=1)
        i = int(np.argmax(d))
        if d[i] > best:
            best, best_c = float(d[i]), complex(sel[i])
    if isinstance(ambient, UnitDisc):
        dens = float(disc_density(best_c))
    else:
        dens = float(annulus_density(ambient, best_c))
    return BlochRadius(best, dens * cell * math.sqrt(2.0), best_c, n_grid)
