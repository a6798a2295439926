"""Command-line front end.

Every command reads an optional config (``--config``), writes CSV/JSON files
into ``--out`` and exits with 0 on success, 2 when the run completed but the
result is negative (uncertified product, failed check), and 1 on errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .blaschke import BlaschkeFactor, compose, criterion_report
from .config import COMMANDS, ConfigError, ExperimentConfig, load_config
from .errors import WanderlabError
from .hypgeo import QuasiHyperbolicGrid, RoundAnnulus, UnitDisc, annulus_distance, disc_distance
from .surgery import audit_no_revisit, certify_product, omega_samples
from .wander import (
    classify,
    equicontinuity_gap,
    invariance_check,
    landau_check,
    pair_trace,
    trace_csv,
    u_field,
)

EXIT_OK, EXIT_ERROR, EXIT_NEGATIVE = 0, 1, 2

_HELP = {
    "classify": (
        "Trace u_n for one orbit pair and classify it.\n"
        "trace.csv: n, u_lower, u_exact, u_upper\n"
        "verdict.json: kind, limit_estimate, isometry_onset, horizon, eps_contract, eps_flat, window\n"
        "pairs.csv (when pairs > 0): pair, z0_re, z0_im, w_re, w_im, kind, limit_estimate, isometry_onset"
    ),
    "ufield": (
        "u_N on a square grid of the first disc.\n"
        "ufield.csv: re, im, u\n"
        "gaps.csv: n, gap (sup over the grid of |u_n - u_N|)\n"
        "ufield.json: horizon, gap_violations, u_min, u_max, invariance_discrepancy, equicontinuity_gap"
    ),
    "criterion": (
        "Partial sums of 1 - a_n and products of a_n.\n"
        "criterion.csv: n, partial_sum, derivative_product\n"
        "profile.csv: radius, min_modulus, max_modulus (of B_N on circles)\n"
        "criterion.json: partial_sum, derivative_product, verdict_hint"
    ),
    "landau": (
        "Hyperbolic Landau check for b_a over a list of parameters.\n"
        "landau.csv: a, derivative_norm, guaranteed_radius, measured_radius, resolution, passed\n"
        "landau.json: all_passed, bloch_constant_used, r_star, grid_resolution (exit 2 if any fails)"
    ),
    "surgery": (
        "Interpolation constants and the certified dilatation product.\n"
        "annuli.csv: n, delta0, delta1, C, K\n"
        "surgery.json: K_infinity_partial, tail_bound, certified, eta, theta_samples, ... (exit 2 if uncertified)"
    ),
    "qhd": (
        "Quasi-hyperbolic grid distances against the exact hyperbolic distance.\n"
        "qhd.csv: z_re, z_im, w_re, w_im, k, d, ratio\n"
        "qhd.json: pairs, resolution, bound_violations, ratio_min, ratio_max (exit 2 on violations)"
    ),
    "audit": (
        "Orbit revisit audit of the modified map.\n"
        "audit.csv: sample, re, im, status, steps, max_visits\n"
        "audit.json: summary counts plus omega statistics (exit 2 on a revisit or an omega entry)"
    ),
}


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n")


def _random_disc_points(rng, n, radius):
    rad = radius * np.sqrt(rng.random(n))
    return rad * np.exp(2j * np.pi * rng.random(n))


def _square_grid(size: int, radius: float) -> np.ndarray:
    xs = np.linspace(-radius, radius, size)
    return (xs[None, :] + 1j * xs[:, None]).ravel()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_classify(cfg: ExperimentConfig, out: Path) -> int:
    model = cfg.chain_model()
    N = cfg.get("horizon", 200)
    mode = cfg.get("mode", "exact" if model.perturbation is None else "bracketed")
    precision = cfg.get("precision", None)
    kw = dict(
        eps_contract=cfg.get("eps_contract", 1e-6),
        eps_flat=cfg.get("eps_flat", 1e-12),
        window=cfg.get("window", 50),
    )
    z0, w = cfg.get("z0", 0.2 + 0j), cfg.get("w", 0.5 + 0j)
    tr = pair_trace(model, z0, w, N, mode=mode, precision=precision)
    (out / "trace.csv").write_text(trace_csv(tr))
    verdict = classify(tr, **kw)
    (out / "verdict.json").write_text(verdict.to_json())

    n_pairs = cfg.get("pairs", 0)
    if n_pairs:
        rng = np.random.default_rng(cfg.seed)
        rows = []
        for i in range(n_pairs):
            a, b = _random_disc_points(rng, 2, 0.9)
            v = classify(pair_trace(model, a, b, N, mode=mode, precision=precision), **kw)
            rows.append([i, a.real, a.imag, b.real, b.imag, v.kind, v.limit_estimate, v.isometry_onset])
        _write_csv(out / "pairs.csv",
                   ["pair", "z0_re", "z0_im", "w_re", "w_im", "kind", "limit_estimate", "isometry_onset"], rows)
    return EXIT_OK


def cmd_ufield(cfg: ExperimentConfig, out: Path) -> int:
    model = cfg.chain_model()
    N = cfg.get("horizon", 60)
    z0 = cfg.get("z0", 0.2 + 0j)
    grid = _square_grid(cfg.get("grid_size", 20), cfg.get("grid_radius", 0.6))
    field = u_field(model, z0, grid, N)
    _write_csv(out / "ufield.csv", ["re", "im", "u"],
               ([p.real, p.imag, u] for p, u in zip(field.points, field.values)))
    _write_csv(out / "gaps.csv", ["n", "gap"], enumerate(field.gaps))
    summary = {
        "horizon": N,
        "gap_violations": field.gap_violations(),
        "u_min": float(np.nanmin(field.values)),
        "u_max": float(np.nanmax(field.values)),
        "invariance_discrepancy": invariance_check(model, z0, grid, N),
        "model": "exact disc model" if model.perturbation is None else "bracketed (lower metric)",
    }
    if model.perturbation is None:
        summary["equicontinuity_gap"] = equicontinuity_gap(model, z0, grid[:: max(1, len(grid) // 100)], N)
    _write_json(out / "ufield.json", summary)
    return EXIT_OK


def cmd_criterion(cfg: ExperimentConfig, out: Path) -> int:
    sched = cfg.factor_schedule()
    N = cfg.get("horizon", 100)
    rows = []
    for n in range(1, N + 1):
        rep = criterion_report(sched, n)
        rows.append([n, rep.partial_sum, rep.derivative_product])
    _write_csv(out / "criterion.csv", ["n", "partial_sum", "derivative_product"], rows)
    radial = cfg.get("radial_samples", 50)
    angular = cfg.get("angular_samples", 256)
    radii = np.arange(1, radial + 1) / (radial + 1)
    theta = 2 * np.pi * np.arange(angular) / angular
    mod = np.abs(compose(sched, N, radii[:, None] * np.exp(1j * theta)[None, :]))
    _write_csv(out / "profile.csv", ["radius", "min_modulus", "max_modulus"],
               zip(radii, mod.min(axis=1), mod.max(axis=1)))
    rep = criterion_report(sched, N)
    _write_json(out / "criterion.json", {
        "N": N,
        "partial_sum": rep.partial_sum,
        "derivative_product": rep.derivative_product,
        "verdict_hint": rep.verdict_hint,
        "schedule": sched.describe(),
    })
    return EXIT_OK


def cmd_landau(cfg: ExperimentConfig, out: Path) -> int:
    values = cfg.get("a_values", [round(0.1 * k, 1) for k in range(1, 10)])
    res = cfg.get("grid_resolution", 1024)
    bloch = cfg.get("bloch_constant", 0.433)
    rows, reports = [], []
    for a in values:
        rep = landau_check(BlaschkeFactor(a), res, bloch)
        reports.append(rep)
        rows.append([a, rep.derivative_norm, rep.guaranteed_radius, rep.measured_radius, rep.resolution, rep.passed])
    _write_csv(out / "landau.csv",
               ["a", "derivative_norm", "guaranteed_radius", "measured_radius", "resolution", "passed"], rows)
    ok = all(r.passed for r in reports)
    _write_json(out / "landau.json", {
        "all_passed": ok,
        "bloch_constant_used": bloch,
        "r_star": math.tanh(0.5),
        "grid_resolution": res,
    })
    return EXIT_OK if ok else EXIT_NEGATIVE


def cmd_surgery(cfg: ExperimentConfig, out: Path) -> int:
    sched = cfg.surgery_schedule()
    N_max = cfg.get("N_max", cfg.get("horizon", 40))
    rep = certify_product(sched, N_max, cfg.get("tail_tol", 1e-6), cfg.get("theta_samples", 4096))
    (out / "annuli.csv").write_text(rep.to_csv())
    summary = rep.summary()
    summary.update({
        "start_index": sched.start_index,
        "N_max": N_max,
        "r": sched.r,
        "r_prime": sched.r_prime,
        "envelope": None if rep.envelope is None else {"alpha": rep.envelope[0], "q": rep.envelope[1]},
    })
    _write_json(out / "surgery.json", summary)
    return EXIT_OK if rep.certified else EXIT_NEGATIVE


def cmd_qhd(cfg: ExperimentConfig, out: Path) -> int:
    dom_cfg = cfg.sections.get("domain", {})
    kind = dom_cfg.get("kind", "disc")
    if kind == "disc":
        domain = UnitDisc()
        exact = disc_distance
        rng = np.random.default_rng(cfg.seed)

        def draw(n):
            return _random_disc_points(rng, n, 0.9)
    elif kind == "annulus":
        domain = RoundAnnulus(dom_cfg.get("inner_radius", 0.3))
        rho = domain.inner_radius
        rng = np.random.default_rng(cfg.seed)

        def exact(z, w):
            return annulus_distance(domain, z, w)

        def draw(n):
            lo, hi = rho + 0.1 * (1 - rho), 1 - 0.1 * (1 - rho)
            rad = np.sqrt(lo**2 + rng.random(n) * (hi**2 - lo**2))
            return rad * np.exp(2j * np.pi * rng.random(n))
    else:
        raise ConfigError(f"unknown domain kind {kind!r}")

    n_pairs = cfg.get("pairs", 50)
    res = cfg.get("grid_resolution", 256)
    grid = QuasiHyperbolicGrid(domain, res)
    zs, ws = draw(n_pairs), draw(n_pairs)
    rows, ratios, violations = [], [], 0
    tol = 2 * grid.cell / min(float(domain.boundary_distance(p)) for p in np.append(zs, ws))
    for z, w in zip(zs, ws):
        k = grid.distance(z, w)
        d = float(exact(z, w))
        ratio = d / k if k > 0 else math.nan
        if not (k / 2 - tol <= d <= 2 * k + tol):
            violations += 1
        ratios.append(ratio)
        rows.append([z.real, z.imag, w.real, w.imag, k, d, ratio])
    _write_csv(out / "qhd.csv", ["z_re", "z_im", "w_re", "w_im", "k", "d", "ratio"], rows)
    _write_json(out / "qhd.json", {
        "domain": kind,
        "pairs": n_pairs,
        "resolution": res,
        "tolerance": tol,
        "bound_violations": violations,
        "ratio_min": float(np.nanmin(ratios)),
        "ratio_max": float(np.nanmax(ratios)),
    })
    return EXIT_OK if violations == 0 else EXIT_NEGATIVE


def cmd_audit(cfg: ExperimentConfig, out: Path) -> int:
    sched = cfg.surgery_schedule()
    model = sched.model
    N = sched.start_index
    horizon = cfg.get("horizon", 50)
    rng = np.random.default_rng(cfg.seed)
    count = cfg.get("samples", 500)
    pts = model.center(N) + _random_disc_points(rng, count, model.outer_radius(N) * (1 - 1e-12))
    rep = audit_no_revisit(sched, pts, horizon)
    _write_csv(out / "audit.csv", ["sample", "re", "im", "status", "steps", "max_visits"],
               ([i, p.real, p.imag, s, k, m] for i, (p, s, k, m)
                in enumerate(zip(rep.samples, rep.status, rep.steps, rep.max_visits))))
    summary = rep.summary()
    omega_n = cfg.get("omega_samples", 100)
    omega_entries = 0
    if omega_n:
        om = omega_samples(sched, omega_n, horizon, rng, cfg.get("omega_c", 0.25))
        if om is None:
            summary["omega"] = None
        else:
            orep = audit_no_revisit(sched, om, horizon)
            omega_entries = int(orep.entered_any().sum())
            summary["omega"] = {"samples": omega_n, "orbits_entering_annuli": omega_entries}
    _write_json(out / "audit.json", summary)
    ok = summary["max_visit_count"] <= 1 and omega_entries == 0
    return EXIT_OK if ok else EXIT_NEGATIVE


_DISPATCH = {
    "classify": cmd_classify,
    "ufield": cmd_ufield,
    "criterion": cmd_criterion,
    "landau": cmd_landau,
    "surgery": cmd_surgery,
    "qhd": cmd_qhd,
    "audit": cmd_audit,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wanderlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=_HELP[name].splitlines()[0], description=_HELP[name],
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", type=Path, help="key = value config file")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--seed", type=int, help="random seed (overrides the config)")
        p.add_argument("--horizon", type=int, help="chain horizon / last index (overrides the config)")
    return parser


def run(command: str, cfg: ExperimentConfig, out: Path) -> int:
    if cfg.command is not None and cfg.command != command:
        raise ConfigError(f"config is for {cfg.command!r}, not {command!r}")
    out.mkdir(parents=True, exist_ok=True)
    return _DISPATCH[command](cfg, out)


def _origin_module(exc: BaseException) -> str:
    """Name of the innermost package module on the traceback."""
    pkg = Path(__file__).parent
    name = "cli"
    for frame in traceback.extract_tb(exc.__traceback__):
        path = Path(frame.filename)
        if path.parent == pkg:
            name = path.stem
    return name


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.horizon is not None:
            cfg.knobs["horizon"] = args.horizon
        return run(args.command, cfg, args.out)
    except ConfigError as exc:
        print(f"wanderlab {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (WanderlabError, ValueError, TypeError, OSError) as exc:
        origin = _origin_module(exc)
        print(f"wanderlab {args.command}: {origin}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
