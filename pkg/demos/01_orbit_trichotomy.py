"""
Orbit pairs in a chain of discs
===============================

A chain model stacks unit discs at ``4n`` on the real axis and steps from
disc ``n`` to disc ``n+1`` with the degree-two factor
``b(z) = z (z + a) / (1 + a z)``.  The hyperbolic distance ``u_n`` between
two orbits can only shrink.  How fast the parameters ``a_n`` approach 1
decides whether it shrinks to zero, to a positive limit, or stops moving.

Run with ``python3 demos/01_orbit_trichotomy.py``.
"""

import numpy as np

from wanderlab.blaschke import FactorSchedule, criterion_report
from wanderlab.wander import ChainModel, classify, pair_trace

# %%
# Three schedules.  ``harmonic`` has ``sum(1 - a_n) = inf``; ``geometric``
# has a finite sum; the third replaces every factor from index 11 on by a
# rotation, which is an isometry of the disc.
schedules = {
    "harmonic": FactorSchedule.harmonic(),
    "geometric": FactorSchedule.geometric(0.25),
    "rotations from 11": FactorSchedule("geometric", q=0.25, rotation_from=11),
}

for name, sched in schedules.items():
    rep = criterion_report(sched, 200)
    print(f"{name:>18}: sum(1 - a_n) up to 200 = {rep.partial_sum:.4f}, hint = {rep.verdict_hint}")

# %%
# Trace one pair per schedule.  The geometric case needs more than double
# precision, because ``1 - a_n = 4**-n`` drops below machine epsilon after
# about 26 steps and later decrements would vanish in rounding.  ``auto``
# picks enough mpmath digits for the horizon.
z0, w = 0.2, 0.5 + 0.1j
runs = {
    "harmonic": dict(N=500, kw={"eps_contract": 0.02}),
    "geometric": dict(N=60, precision="auto", kw={"window": 10}),
    "rotations from 11": dict(N=80, kw={"window": 20}),
}
for name, opts in runs.items():
    tr = pair_trace(ChainModel(schedules[name]), z0, w, opts["N"], precision=opts.get("precision"))
    kw = dict(opts["kw"])
    if tr.digits is not None:
        kw["eps_flat"] = tr.resolution
    v = classify(tr, **kw)
    u = tr.primary
    print(f"\n{name}: u_0 = {u[0]:.6f}, u_N = {u[-1]:.6f}")
    print(f"  verdict {v.kind}, limit estimate {v.limit_estimate:.6f}, onset {v.isometry_onset}")

# %%
# The geometric decrements themselves decay geometrically, which is what
# lets the classifier extrapolate the limit.
tr = pair_trace(ChainModel(schedules["geometric"]), z0, w, 30, precision="auto")
ratios = tr.decrements[1:] / tr.decrements[:-1]
print("\ndecrement ratios, geometric schedule, steps 20..29:")
print(np.array2string(ratios[19:29], precision=4))
