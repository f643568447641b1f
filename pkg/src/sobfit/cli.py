"""Command-line entry points: fit, norm, query, validate, bench.

Exit codes: 0 ok, 2 parse error, 3 configuration error, 4 numeric failure.
"""

import argparse
import json
import sys
import time

import numpy as np

from . import io as sio
from .constants import Constants, default_constants
from .solver import solve_homogeneous, solve_inhomogeneous


def _constants_from(args, n, overrides=None):
    consts = default_constants(n)
    if overrides:
        merged = consts.manifest()
        merged.update(overrides)
        consts = Constants.from_manifest(merged)
    if getattr(args, "robust", False):
        consts.robust = True
    return consts


def cmd_fit(args):
    pts, fs = sio.read_problem_csv(args.input)
    overrides = {}
    if args.manifest:
        man = sio.read_manifest(args.manifest)
        overrides = man.get("constants", {})
        for k in ("m", "n", "p", "space"):
            if k in man and getattr(args, k, None) is None:
                setattr(args, k, man[k])
    m, n, p = args.m, args.n, args.p
    if None in (m, n, p):
        print("fit: m, n and p are required (flags or manifest)", file=sys.stderr)
        return 3
    if p <= n:
        print(f"fit: unsupported exponent p={p} <= n={n}", file=sys.stderr)
        return 3
    if pts.shape[1] != n:
        print(f"fit: input has {pts.shape[1]} coordinates, expected n={n}",
              file=sys.stderr)
        return 2
    consts = _constants_from(args, n, overrides)
    try:
        if args.space == "homogeneous":
            art = solve_homogeneous(pts, m, n, p, consts=consts)
        else:
            art = solve_inhomogeneous(pts, m, n, p, consts=consts)
    except OverflowError as e:
        print(f"fit: bit budget exceeded: {e}", file=sys.stderr)
        return 3
    except (ArithmeticError, np.linalg.LinAlgError) as e:
        print(f"fit: numeric failure: {e}", file=sys.stderr)
        return 4
    sio.save_artifact(args.output, art, pts, meta={"N": len(pts)})
    print(f"fit: wrote {args.output} (N={len(pts)}, m={m}, n={n}, p={p}, "
          f"space={args.space})")
    return 0


def cmd_norm(args):
    art, manifest = sio.load_artifact(args.artifact)
    fs = sio.read_values_csv(args.values)
    try:
        val = art.norm_proxy(fs)
    except IndexError:
        print("norm: value count does not match the fitted point set",
              file=sys.stderr)
        return 2
    print(f"{val!r}")
    return 0


def cmd_query(args):
    art, manifest = sio.load_artifact(args.artifact)
    fs = sio.read_values_csv(args.values)
    pts, _ = (sio.read_problem_csv(args.points) if args.points_have_values
              else (None, None)) if False else (None, None)
    rows = []
    with open(args.points) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([float(t) for t in line.split(",")])
    alpha = tuple(int(t) for t in args.alpha.split(",")) if args.alpha else None
    out = sys.stdout
    jets = art.jets
    header = ["x%d" % i for i in range(manifest["n"])]
    header += ["d" + "".join(map(str, a)) for a in
               ([alpha] if alpha else jets.alphas)]
    print(",".join(header), file=out)
    for r in rows:
        jet = art.query_jet(fs, np.asarray(r))
        sel = [jet[jets.index[alpha]]] if alpha else list(jet)
        print(",".join(map(repr, list(r) + [float(v) for v in sel])), file=out)
    return 0


def cmd_validate(args):
    from .validate import run_validation
    report = run_validation(quick=args.quick, seed=args.seed)
    print(json.dumps(report["summary"], indent=2))
    for line in report["lines"]:
        print(line)
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(report, fh, indent=2)
    return 0 if report["summary"]["all_passed"] else 4


def cmd_bench(args):
    import tracemalloc
    sizes = [int(s) for s in args.sizes.split(",")]
    print("N,fit_seconds,peak_mb,query_ms,proxy_seconds")
    rng = np.random.default_rng(args.seed)
    for N in sizes:
        pts = rng.random((N, args.n))
        fs = rng.normal(size=N)
        tracemalloc.start()
        t0 = time.perf_counter()
        art = solve_homogeneous(pts, args.m, args.n, args.p)
        t1 = time.perf_counter()
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        E = art.points_raw
        art.query_jet(fs, E[0])
        t2 = time.perf_counter()
        reps = min(50, N)
        for i in range(reps):
            art.query_jet(fs, E[i])
        t3 = time.perf_counter()
        t4 = time.perf_counter()
        art.norm_proxy(fs)
        t5 = time.perf_counter()
        print(f"{N},{t1 - t0:.3f},{peak / 1e6:.1f},"
              f"{(t3 - t2) / reps * 1e3:.3f},{t5 - t4:.4f}")
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(prog="sobfit",
                                 description="Sobolev scattered-data fitting")
    sub = ap.add_subparsers(dest="cmd", required=True)

    f = sub.add_parser("fit", help="fit data, write an artifact")
    f.add_argument("input")
    f.add_argument("-o", "--output", required=True)
    f.add_argument("--m", type=int)
    f.add_argument("--n", type=int)
    f.add_argument("--p", type=float)
    f.add_argument("--space", choices=["homogeneous", "inhomogeneous"],
                   default="homogeneous")
    f.add_argument("--manifest")
    f.add_argument("--robust", action="store_true")
    f.set_defaults(fn=cmd_fit)

    g = sub.add_parser("norm", help="evaluate the trace-norm proxy")
    g.add_argument("artifact")
    g.add_argument("values")
    g.set_defaults(fn=cmd_norm)

    q = sub.add_parser("query", help="jet queries at points")
    q.add_argument("artifact")
    q.add_argument("values")
    q.add_argument("points")
    q.add_argument("--alpha")
    q.set_defaults(fn=cmd_query, points_have_values=False)

    v = sub.add_parser("validate", help="run the validation suite")
    v.add_argument("--quick", action="store_true")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("-o", "--output")
    v.set_defaults(fn=cmd_validate)

    b = sub.add_parser("bench", help="timing and memory table")
    b.add_argument("--sizes", default="1000,10000")
    b.add_argument("--m", type=int, default=1)
    b.add_argument("--n", type=int, default=2)
    b.add_argument("--p", type=float, default=3.0)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(fn=cmd_bench)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except sio.ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
