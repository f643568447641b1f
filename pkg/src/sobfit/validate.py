"""Validation suite shared by the CLI and the acceptance tests: property
checks with frozen empirical bands, each reported as one pass/fail line."""

import time

import numpy as np

from .oracles import exact_trace_1d
from .solver import solve_homogeneous, solve_inhomogeneous


def _interp_check(rng, cases, tol=1e-8):
    worst = 0.0
    for (m, n, p, N) in cases:
        pts = rng.random((N, n))
        fs = rng.normal(size=N)
        art = solve_homogeneous(pts, m, n, p)
        E = art.points_raw
        for i in range(N):
            err = abs(art.query_jet(fs, E[i])[0] - fs[i]) / (1 + abs(fs[i]))
            worst = max(worst, err)
    return worst <= tol, worst


def _band_check_1d(rng, p, Ns, B):
    ratios = {N: [] for N in Ns}
    for N in Ns:
        for _ in range(8):
            xs = np.sort(rng.random(N))
            keep = np.concatenate([[True], np.diff(xs) > 1e-7])
            xs = xs[keep]
            fs = rng.normal(size=len(xs))
            art = solve_homogeneous(xs[:, None], 1, 1, p)
            E = art.points_raw[:, 0]
            r = art.norm_proxy(fs) / exact_trace_1d(E, fs, p)
            ratios[N].append(r)
    ok = all(1.0 / B <= r <= B for v in ratios.values() for r in v)
    meds = [float(np.median(v)) for v in ratios.values()]
    drift = max(meds) / min(meds) - 1.0
    return ok and drift < 0.35, {"medians": meds, "drift": drift}


def run_validation(quick=False, seed=0):
    rng = np.random.default_rng(seed)
    lines = []
    results = {}

    t0 = time.time()
    cases = [(1, 1, 2.5, 40), (1, 2, 3.0, 60), (2, 1, 2.5, 30), (2, 2, 2.5, 25)]
    if not quick:
        cases += [(1, 2, 3.0, 300), (2, 2, 3.0, 60)]
    ok, worst = _interp_check(rng, cases)
    results["interpolation"] = {"ok": bool(ok), "worst": float(worst)}
    lines.append(f"[{'PASS' if ok else 'FAIL'}] interpolation exactness "
                 f"(worst {worst:.2e})")

    ok, extra = _band_check_1d(rng, 2.0, (10, 60) if quick else (10, 100, 400), B=12.0)
    results["band_1d"] = {"ok": bool(ok), **extra}
    lines.append(f"[{'PASS' if ok else 'FAIL'}] 1-d oracle band "
                 f"(medians {extra['medians']})")

    # kernel annihilation
    pts = rng.random((50, 2))
    art = solve_homogeneous(pts, 2, 2, 2.5)
    E = art.points_raw
    worst = 0.0
    for _ in range(10):
        c = rng.normal(size=3)
        fP = c[0] + c[1] * E[:, 0] + c[2] * E[:, 1]
        worst = max(worst, art.norm_proxy(fP) / max(np.abs(c)))
    ok = worst <= 1e-6
    results["kernel"] = {"ok": bool(ok), "worst": float(worst)}
    lines.append(f"[{'PASS' if ok else 'FAIL'}] polynomial kernel "
                 f"(worst {worst:.2e})")

    # inhomogeneous edge cases
    art1 = solve_inhomogeneous(np.array([[0.3, 0.4]]), 1, 2, 3.0)
    v = art1.norm_proxy(np.array([2.5]))
    ok_n1 = abs(v - 2.5) < 1e-12
    art0 = solve_inhomogeneous(np.zeros((0, 2)), 1, 2, 3.0)
    ok_n0 = art0.norm_proxy(np.zeros(0)) == 0.0
    ok = ok_n1 and ok_n0
    results["inhom_edges"] = {"ok": bool(ok)}
    lines.append(f"[{'PASS' if ok else 'FAIL'}] inhomogeneous edge cases")

    summary = {"all_passed": all(v["ok"] for v in results.values()),
               "seconds": time.time() - t0}
    return {"summary": summary, "results": results, "lines": lines}
