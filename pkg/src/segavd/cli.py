"""Command line: generate, build, query, validate, bench, probe and render."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .avd import BuildConfig, build, deserialize, serialize
from .capsules import build_capsule
from .config import ParseError, SegAvdError, UsageError
from .ellipsoids import inscribed_ellipsoid
from .geometry import instance_to_dict, load_instance, local_feature_size
from .render import render_svg
from .tensors import ellipsoid_axes, tensor_stack
from .workbench import SUITES, gen_griddle, gen_random, report_json, run_bench, run_validation

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed(args) -> int:
    env = os.environ.get("SEGAVD_SEED")
    if env is not None and env != "":
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"SEGAVD_SEED must be an integer, got {env!r}") from None
    return args.seed


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _emit(doc, out=None):
    text = report_json(doc)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_instance(S, path, extra=None):
    doc = instance_to_dict(S)
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _stats_doc(S) -> dict:
    return {"n": S.n, "d": S.dim, "spread": S.spread, "min_gap": S.min_gap, "diameter": S.diam}


def _parse_point(text: str, dim: int) -> np.ndarray:
    try:
        p = np.array([float(t) for t in text.replace(" ", "").split(",")])
    except ValueError:
        raise UsageError(f"cannot parse point {text!r}") from None
    if p.shape != (dim,) or not np.isfinite(p).all():
        raise UsageError(f"point {text!r} must have {dim} finite coordinates")
    return p


def cmd_gen_random(args):
    S = gen_random(args.n, args.d, _seed(args), args.min_gap, args.max_length)
    _write_instance(S, args.output)
    _emit(_stats_doc(S))
    return EXIT_OK


def cmd_gen_griddle(args):
    G = gen_griddle(args.n, args.epsilon, args.delta)
    _write_instance(G.segments, args.output, {"griddle": {"n": G.n, "epsilon": G.eps, "delta": G.delta}})
    _emit({**_stats_doc(G.segments), "delta": G.delta})
    return EXIT_OK


def _config(args) -> BuildConfig:
    return BuildConfig(seed=_seed(args), certify=not args.no_certify, audit=not args.no_audit)


def cmd_build(args):
    S = load_instance(args.input)
    dag = build(S, args.epsilon, _config(args))
    serialize(dag, args.output)
    _emit(dag.stats().to_json())
    return EXIT_OK


def cmd_query(args):
    dag = deserialize(args.ds)
    if (args.point is None) == (args.points is None):
        raise UsageError("give exactly one of --point and --points")
    if args.point is not None:
        pts = [_parse_point(args.point, dag.dim)]
    else:
        with open(args.points) as fh:
            pts = []
            for k, line in enumerate(fh, 1):
                if line.strip() and not line.lstrip().startswith("#"):
                    try:
                        pts.append(_parse_point(line.strip(), dag.dim))
                    except UsageError as exc:
                        raise ParseError(f"{args.points}: line {k}: {exc}") from None
    for q in pts:
        sys.stdout.write(json.dumps(dag.query(q).to_json()) + "\n")
    return EXIT_OK


def cmd_validate(args):
    kw = {}
    if args.input:
        kw["S"] = load_instance(args.input)
    if args.ds:
        kw["dag"] = deserialize(args.ds)
        kw["S"] = kw["dag"].source
        kw["eps"] = kw["dag"].eps
    elif args.epsilon is not None:
        kw["eps"] = args.epsilon
    for name in ("configs", "samples", "pairs", "volume_samples", "queries"):
        if getattr(args, name) is not None:
            kw[name] = getattr(args, name)
    names = None if not args.suite else [s for part in args.suite for s in part.split(",") if s]
    report = run_validation(names, seed=_seed(args), **kw)
    if args.output:
        _emit(report.to_json(), args.output)
    sys.stdout.write(report.to_text())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_bench(args):
    fixtures = [(os.path.basename(p), load_instance(p)) for p in args.input]
    report = run_bench(fixtures, args.epsilon or [1.0, 0.5], args.queries, _seed(args), timing=not args.no_timing)
    if args.json:
        _emit(report.to_json(), args.json)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(report.to_csv())
    sys.stdout.write(report.to_text())
    ok = all(r.correct_rate == 1.0 for r in report.rows)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_probe(args):
    S = load_instance(args.input)
    x = _parse_point(args.point, S.dim)
    lfs = local_feature_size(x, S).phi if S.n >= 2 else None
    if args.radius is None and lfs is None:
        raise UsageError("a single segment has no local feature size; pass --radius")
    r = lfs if args.radius is None else args.radius
    tensors = []
    for k, H in enumerate(tensor_stack(x, S)):
        w, V = ellipsoid_axes(H)
        tensors.append({"segment": k, "matrix": H.tolist(), "semi_axes": w.tolist(), "directions": V.T.tolist()})
    C = build_capsule(S, x, r)
    E = inscribed_ellipsoid(C)
    doc = {
        "point": x.tolist(),
        "distances": S.distances(x).tolist(),
        "lfs": lfs,
        "radius": r,
        "tensors": tensors,
        "capsule": C.to_json(),
        "inscribed_ellipsoid": {**E.to_json(), "semi_axes": E.semi_axes.tolist(), "directions": E.directions.T.tolist()},
    }
    _emit(doc)
    return EXIT_OK


def cmd_render(args):
    if args.ds:
        dag = deserialize(args.ds)
        S = dag.source
    elif args.input:
        dag, S = None, load_instance(args.input)
    else:
        raise UsageError("give --ds or --input")
    svg = render_svg(S, dag, args.level, args.exponent, args.width, args.stroke_scale)
    with open(args.output, "w") as fh:
        fh.write(svg)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="segavd", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def seeded(sp):
        sp.add_argument("--seed", type=int, default=0, help="random seed (SEGAVD_SEED overrides)")

    g = sub.add_parser("gen-random", help="random segments in the unit cube")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=int, default=2)
    g.add_argument("--min-gap", type=_positive, default=0.01)
    g.add_argument("--max-length", type=_positive)
    g.add_argument("--output", "-o", default="instance.json")
    seeded(g)
    g.set_defaults(func=cmd_gen_random)

    g = sub.add_parser("gen-griddle", help="crossing grid of segments in 3-D")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--epsilon", type=_positive, required=True)
    g.add_argument("--delta", type=_positive)
    g.add_argument("--output", "-o", default="griddle.json")
    g.set_defaults(func=cmd_gen_griddle)

    b = sub.add_parser("build", help="build the structure for an instance")
    b.add_argument("--input", "-i", required=True)
    b.add_argument("--epsilon", type=_positive, required=True)
    b.add_argument("--output", "-o", default="structure.json")
    b.add_argument("--no-certify", action="store_true", help="only use the depth rule for final leaves")
    b.add_argument("--no-audit", action="store_true", help="skip the sampled coverage audit")
    seeded(b)
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="answer queries with a built structure")
    q.add_argument("--ds", required=True)
    q.add_argument("--point")
    q.add_argument("--points", help="file with one comma separated point per line")
    q.set_defaults(func=cmd_query)

    v = sub.add_parser("validate", help="run property suites")
    v.add_argument("--suite", action="append", help=f"suite name(s), comma separated: {', '.join(sorted(SUITES))}")
    v.add_argument("--input", "-i", help="instance to use instead of random ones")
    v.add_argument("--ds", help="structure for the structure suites")
    v.add_argument("--epsilon", type=_positive)
    v.add_argument("--configs", type=int)
    v.add_argument("--samples", type=int)
    v.add_argument("--pairs", type=int)
    v.add_argument("--volume-samples", type=int)
    v.add_argument("--queries", type=int)
    v.add_argument("--output", "-o", help="write the JSON report here")
    seeded(v)
    v.set_defaults(func=cmd_validate)

    k = sub.add_parser("bench", help="build and query benchmark")
    k.add_argument("--input", "-i", nargs="+", required=True)
    k.add_argument("--epsilon", type=_positive, action="append")
    k.add_argument("--queries", type=int, default=1000)
    k.add_argument("--json")
    k.add_argument("--csv")
    k.add_argument("--no-timing", action="store_true", help="omit timings so reports are reproducible")
    seeded(k)
    k.set_defaults(func=cmd_bench)

    r = sub.add_parser("probe", help="tensors, capsule and inscribed ellipsoid at a point")
    r.add_argument("--input", "-i", required=True)
    r.add_argument("--point", required=True)
    r.add_argument("--radius", type=_positive, help="capsule radius (default: local feature size)")
    r.set_defaults(func=cmd_probe)

    s = sub.add_parser("render", help="SVG of a planar instance or structure")
    s.add_argument("--ds")
    s.add_argument("--input", "-i")
    s.add_argument("--level", type=int, help="level to draw (default: all final leaves)")
    s.add_argument("--exponent", type=int, default=0)
    s.add_argument("--width", type=int, default=800)
    s.add_argument("--stroke-scale", type=_positive, default=1.0)
    s.add_argument("--output", "-o", default="structure.svg")
    s.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
        return args.func(args)
    except (SegAvdError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
