"""Command-line interface.

Exit codes: 0 success, 2 usage or malformed input, 3 numerically
inapplicable, 4 work budget exceeded. Every run writes a provenance JSON
into the output directory (``--out``, else $QAOA_WRAP_OUTDIR, else cwd).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BudgetError, InapplicableError, ValidationError

OUTDIR_ENV = "QAOA_WRAP_OUTDIR"
EXIT_OK, EXIT_USAGE, EXIT_INAPPLICABLE, EXIT_BUDGET = 0, 2, 3, 4


class UsageError(ValidationError):
    pass


# ---------------------------------------------------------------------------
# argument helpers


def parse_range(text: str, integer: bool = False) -> np.ndarray:
    """'a:b:n' or 'a:b:n:log' (also ':lin') into an axis."""
    parts = text.split(":")
    if len(parts) not in (3, 4):
        raise UsageError(f"range {text!r} must look like a:b:n[:log]")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"range {text!r} has non-numeric fields") from None
    mode = parts[3] if len(parts) == 4 else "lin"
    if mode not in ("lin", "log"):
        raise UsageError(f"range modifier must be lin or log, got {mode!r}")
    if n < 1:
        raise UsageError(f"range {text!r} is empty")
    if b < a:
        raise UsageError(f"range {text!r} runs backwards")
    if mode == "log":
        if a <= 0:
            raise UsageError("log ranges need a positive start")
        if integer:
            from .diagram import log_p_axis
            return log_p_axis(int(round(a)), int(round(b)), n)
        axis = np.geomspace(a, b, n)
    else:
        axis = np.linspace(a, b, n)
    if integer:
        axis = np.unique(np.round(axis).astype(int))
    return axis


def parse_pair(spec: str):
    """Example name, 'name:key=val,...', or a path to an instance JSON file."""
    from .model import EXAMPLES, example_pair, load_pair

    name, _, rest = spec.partition(":")
    if name in EXAMPLES:
        kwargs = {}
        for item in filter(None, rest.split(",")):
            key, eq, val = item.partition("=")
            if not eq:
                raise UsageError(f"example option {item!r} must be key=value")
            kwargs[key] = float(val) if key in ("a", "b") else int(val)
        try:
            return example_pair(name, **kwargs)
        except TypeError as exc:
            raise UsageError(f"bad options for example {name!r}: {exc}") from None
    path = Path(spec)
    if not path.exists():
        raise UsageError(f"{spec!r} is neither a built-in example ({', '.join(sorted(EXAMPLES))}) nor a file")
    return load_pair(path)


def parse_polyline(text: str):
    pts = []
    for chunk in filter(None, text.split(";")):
        try:
            f, d = (float(v) for v in chunk.split(","))
        except ValueError:
            raise UsageError(f"path vertex {chunk!r} must be 'f,delta'") from None
        pts.append((f, d))
    if len(pts) < 2:
        raise UsageError("a path needs at least two vertices")
    return pts


def _outdir(args) -> Path:
    out = Path(args.out or os.environ.get(OUTDIR_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def _provenance(args, argv, pair, outputs) -> Path:
    inputs = {k: v for k, v in vars(args).items() if k not in ("func",)}
    record = {
        "tool": "qaoa-wrap",
        "version": __version__,
        "command": args.command,
        "argv": list(argv),
        "inputs": inputs,
        "seed": inputs.get("seed"),
        "pair": None if pair is None else pair.to_json(),
        "outputs": [str(p) for p in outputs],
    }
    key = hashlib.sha256(json.dumps(_jsonable(record["argv"])).encode()).hexdigest()[:12]
    return _write_json(_outdir(args) / f"{args.command}_provenance_{key}.json", record)


# ---------------------------------------------------------------------------
# subcommands; each returns (pair or None, list of output paths)


def cmd_example(args):
    from .model import save_pair

    pair = parse_pair(args.name if not args.options else f"{args.name}:{args.options}")
    path = _outdir(args) / f"{pair.label}.json"
    save_pair(pair, path)
    print(path)
    return pair, [path]


def cmd_diagram(args):
    from . import diagram

    pair = parse_pair(args.pair)
    deltas = parse_range(args.delta)
    ps = parse_range(args.p, integer=True)
    if args.schedule != "ramp":
        raise UsageError("only the ramp schedule is available from the command line")
    grid = diagram.sweep(pair, deltas, ps, args.metric, budget=args.budget)
    out = _outdir(args)
    csv_path = diagram.export_csv(grid, out / grid.filename("csv"))
    outputs = [csv_path, csv_path.with_suffix(".meta.json")]
    if args.png:
        diagram.render_heatmap(grid, out / args.png, args.scale)
        outputs.append(out / args.png)
    print(csv_path)
    return pair, outputs


def cmd_flow(args):
    from .spectral import ParameterPath, spectral_flow, transport_eigenvector

    pair = parse_pair(args.pair)
    path = ParameterPath.polyline(parse_polyline(args.path), args.samples, args.closed)
    out = _outdir(args)
    base = f"{pair.label}_flow_{hashlib.sha256(args.path.encode()).hexdigest()[:8]}"
    flow = spectral_flow(pair, path, strict=not args.lenient)
    csv_path = out / f"{base}.csv"
    flow.to_csv(csv_path)
    outputs = [csv_path]
    summary = {"crossings": [c.__dict__ for c in flow.crossings], "warnings": list(flow.warnings),
               "min_overlap": float(np.min(flow.min_overlap)) if len(flow.min_overlap) else None}
    if args.start is not None:
        tr = transport_eigenvector(pair, path, args.start, strict=not args.lenient)
        summary["transport"] = {"start": args.start, "cost_overlaps": tr.cost_overlaps,
                                "dominant_cost_state": int(np.argmax(tr.cost_overlaps))}
    json_path = _write_json(out / f"{base}.json", summary)
    outputs.append(json_path)
    print(csv_path)
    return pair, outputs


def cmd_events(args):
    from .spectral import delta_crit, wrap_events

    pair = parse_pair(args.pair)
    events = wrap_events(pair, args.delta_max)
    try:
        crit = delta_crit(pair)
    except InapplicableError as exc:
        crit = None
        print(f"delta_crit: {exc}")
    for i, ev in enumerate(events):
        c = "-" if ev.c_eff is None else f"{abs(ev.c_eff):.6g}"
        print(f"[{i}] delta*={ev.delta_star:.12g} edge={ev.edge} x={ev.x} y={ev.y} m={ev.winding} "
              f"k={ev.k} |c_eff|={c} gamma={ev.gamma} isolated={ev.isolated} flags={','.join(ev.flags)}")
    if crit is not None:
        print(f"delta_crit = {crit:.12g} = 2*pi/{2 * math.pi / crit:.10g}")
    path = _write_json(_outdir(args) / f"{pair.label}_events.json",
                       {"delta_max": args.delta_max, "delta_crit": crit, "events": [e.to_json() for e in events]})
    return pair, [path]


def cmd_gap(args):
    from .dlz import locate_gap
    from .gaps import gap_prediction
    from .spectral import wrap_events

    pair = parse_pair(args.pair)
    events = wrap_events(pair, args.delta_max)
    if not 0 <= args.event < len(events):
        raise UsageError(f"event index {args.event} out of range (found {len(events)} events)")
    ev = events[args.event]
    pred = gap_prediction(ev, args.delta_offset)
    meas = locate_gap(pair, ev, args.delta_offset)
    rel = (pred.gap - meas.gap) / meas.gap if meas.gap else float("inf")
    print(f"predicted gap {pred.gap:.6e} at f={pred.f_star:.8f}")
    print(f"measured  gap {meas.gap:.6e} at f={meas.f:.8f}")
    print(f"relative difference {rel:+.4%}")
    path = _write_json(_outdir(args) / f"{pair.label}_gap_{args.event}.json",
                       {"prediction": pred.to_json(),
                        "measurement": {"f": meas.f, "delta": meas.delta, "gap": meas.gap, "phase_gap": meas.phase_gap},
                        "relative_difference": rel})
    return pair, [path]


def cmd_ridge(args):
    from .dlz import ridge_envelope

    pair = parse_pair(args.pair)
    calib = None
    if args.calib:
        try:
            calib = tuple(float(v) for v in args.calib.split(","))
        except ValueError:
            raise UsageError("--calib must be 'p,P'") from None
        if len(calib) != 2:
            raise UsageError("--calib must be 'p,P'")
    env = ridge_envelope(pair, parse_range(args.delta), args.target, args.mode, calib)
    out = _outdir(args)
    csv_path = out / f"{pair.label}_ridge_{args.mode}.csv"
    csv_path.write_text(env.to_csv())
    json_path = _write_json(out / f"{pair.label}_ridge_{args.mode}.json", env.to_json())
    print(csv_path)
    return pair, [csv_path, json_path]


def cmd_smallangle(args):
    from .engine import evolve, ramp_schedule
    from .smallangle import angle_sum_ramp, leading_expected_cost

    pair = parse_pair(args.pair)
    sched = ramp_schedule(args.delta, args.p)
    state = pair.mixer_ground_state()
    pred = leading_expected_cost(pair, state, sched, args.mixer_sign)
    sim = evolve(pair, sched).expected_cost if args.mixer_sign == 1 else None
    print(f"angle sum {angle_sum_ramp(args.p, args.delta):.10g}")
    print(f"leading-order expected cost {pred:.10g}")
    if sim is not None:
        print(f"simulated expected cost     {sim:.10g}")
    path = _write_json(_outdir(args) / f"{pair.label}_smallangle.json",
                       {"p": args.p, "delta": args.delta, "prediction": pred, "simulation": sim})
    return pair, [path]


def cmd_ceff_dist(args):
    from .gaps import ceff_distribution

    sample = ceff_distribution(args.n, args.count, args.seed, args.b)
    vals = sample.log10_ceff
    if vals.size == 0:
        raise InapplicableError("no nonzero couplings were found")
    edges = np.histogram_bin_edges(vals, bins=args.bins)
    counts, _ = np.histogram(vals, bins=edges)
    out = _outdir(args)
    csv_path = out / f"ceff_n{args.n}_c{args.count}_s{args.seed}.csv"
    with csv_path.open("w") as fh:
        fh.write("bin_lo,bin_hi,count\n")
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            fh.write(f"{lo!r},{hi!r},{int(c)}\n")
    summary = {"n": args.n, "count": args.count, "seed": args.seed, "b": args.b, "mean_log10": float(vals.mean()),
               "samples": int(vals.size), "zero_couplings": sample.zero_count,
               "singular_couplings": sample.singular_count, "instance_seeds": list(sample.seeds)}
    json_path = _write_json(csv_path.with_suffix(".json"), summary)
    print(f"mean log10|c_eff| = {vals.mean():.6f} over {vals.size} couplings")
    print(csv_path)
    return None, [csv_path, json_path]


def cmd_render(args):
    from .diagram import parse_csv, render_heatmap

    grid = parse_csv(args.csv)
    png = Path(args.png)
    render_heatmap(grid, png, args.scale, args.cell)
    print(png)
    return None, [png, png.with_suffix(".json")]


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qaoa-wrap", description="QAOA ramp diagrams, wrap-around and gap analysis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default ${OUTDIR_ENV} or cwd)")
    common.add_argument("--threads", type=int, default=1, help="parallelism cap (computations run serially)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("example", parents=[common], help="write a built-in instance as JSON")
    p.add_argument("name")
    p.add_argument("--options", default="", help="key=value list, e.g. n=8,seed=3 for sparse-ising")
    p.set_defaults(func=cmd_example)

    p = sub.add_parser("diagram", parents=[common], help="sweep a (delta, p) performance diagram")
    p.add_argument("pair")
    p.add_argument("--delta", default="0:3:61")
    p.add_argument("--p", default="1:10000:41:log")
    p.add_argument("--metric", default="ground_overlap_sq")
    p.add_argument("--schedule", default="ramp")
    p.add_argument("--budget", type=float, default=1e10)
    p.add_argument("--png", help="also render a heatmap with this file name")
    p.add_argument("--scale", choices=("linear", "log"), default="linear")
    p.set_defaults(func=cmd_diagram)

    p = sub.add_parser("flow", parents=[common], help="track eigen-curves along a path")
    p.add_argument("pair")
    p.add_argument("--path", required=True, help='"f0,d0;f1,d1;..."')
    p.add_argument("--samples", type=int, default=201)
    p.add_argument("--closed", action="store_true")
    p.add_argument("--start", type=int, help="also transport this eigenvector index")
    p.add_argument("--lenient", action="store_true", help="warn instead of failing on unresolved matching")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("events", parents=[common], help="list wrap-around events and delta_crit")
    p.add_argument("pair")
    p.add_argument("--delta-max", type=float, default=3.0)
    p.set_defaults(func=cmd_events)

    p = sub.add_parser("gap", parents=[common], help="predicted vs measured gap for one event")
    p.add_argument("pair")
    p.add_argument("--event", type=int, default=0)
    p.add_argument("--delta-offset", type=float, required=True)
    p.add_argument("--delta-max", type=float, default=3.0)
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("ridge", parents=[common], help="diabatic ridge envelope")
    p.add_argument("pair")
    p.add_argument("--target", type=float, default=0.95)
    p.add_argument("--mode", choices=("single", "combined", "corrected"), default="single")
    p.add_argument("--calib", help="'p,P' calibration for corrected mode")
    p.add_argument("--delta", default="0.9:1.5:61")
    p.set_defaults(func=cmd_ridge)

    p = sub.add_parser("smallangle", parents=[common], help="leading small-angle prediction vs simulation")
    p.add_argument("pair")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--mixer-sign", type=int, choices=(1, -1), default=1)
    p.set_defaults(func=cmd_smallangle)

    p = sub.add_parser("ceff-dist", parents=[common], help="sample log10|c_eff| over sparse Ising costs")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bins", type=int, default=30)
    p.add_argument("--b", type=float, default=0.5, help="mixer flip strength")
    p.set_defaults(func=cmd_ceff_dist)

    p = sub.add_parser("render", parents=[common], help="render a diagram CSV as a PNG heatmap")
    p.add_argument("csv")
    p.add_argument("--png", required=True)
    p.add_argument("--scale", choices=("linear", "log"), default="linear")
    p.add_argument("--cell", type=int, default=4)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        pair, outputs = args.func(args)
        _provenance(args, argv, pair, outputs)
    except (UsageError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InapplicableError as exc:
        print(f"inapplicable: {exc}", file=sys.stderr)
        return EXIT_INAPPLICABLE
    except BudgetError as exc:
        print(f"budget: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
