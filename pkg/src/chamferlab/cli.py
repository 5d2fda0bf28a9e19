"""Command-line interface: metrics, schedule, sweep, optimize, batch, ambiguity."""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import build_ambiguity_pair, default_sweep_config, sweep, sweep_to_csv, SweepConfig
from .cloud import PointCloud
from .descent import (
    ObjectiveSpec,
    OptimizerConfig,
    clustered_grid_benchmark,
    optimize,
)
from .errors import InvalidInputError, NumericalError
from .io import read_cloud, read_ply_mesh, write_xyz
from .metrics import (
    EMD_EXACT_MAX,
    MetricReport,
    chamfer_l1,
    chamfer_l2,
    dcd,
    emd_approx,
    emd_exact,
    fidelity,
    fscore,
    hausdorff,
    point_to_mesh,
)
from .objective import SCHEDULE_KINDS, FcdWeights, ScheduleSpec, UncertaintyState, schedule_weights

EXIT_OK = 0
EXIT_IO = 2
EXIT_VALIDATION = 3
EXIT_NUMERICAL = 4


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest(command: str, args: argparse.Namespace, input_paths: list[str]) -> str:
    flags = {
        k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config") and v is not None
    }
    payload = {
        "version": __version__,
        "command": command,
        "flags": flags,
        "seed": flags.get("seed"),
        "inputs": {p: _sha256(p) for p in sorted(input_paths)},
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _write(path: Path, content: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(content)


def _schedule_from_args(args: argparse.Namespace) -> ScheduleSpec | None:
    if args.schedule is None:
        return None
    return ScheduleSpec(
        kind=args.schedule,
        theta=args.theta,
        tau=args.tau,
        t=args.t,
        T=args.T,
        sigma=args.sigma,
    )


def _named(metric: str, thunk):
    """Evaluate one metric, prefixing validation errors with its name."""
    try:
        return thunk()
    except InvalidInputError as exc:
        raise InvalidInputError(f"{metric}: {exc}") from exc


def _emd_value(pred: PointCloud, gt: PointCloud, args: argparse.Namespace) -> float | None:
    if len(pred) == len(gt):
        if len(pred) <= EMD_EXACT_MAX:
            return emd_exact(pred, gt)
        if args.emd_approx:
            return emd_approx(pred, gt, args.emd_iterations, args.emd_epsilon)
        raise InvalidInputError(
            f"clouds exceed the exact-solver cap of {EMD_EXACT_MAX} points; pass --emd-approx"
        )
    if args.emd_approx:
        return emd_approx(pred, gt, args.emd_iterations, args.emd_epsilon)
    return None  # sizes differ and no approximate solver requested


def _compute_report(pred: PointCloud, gt: PointCloud, args: argparse.Namespace,
                    mesh=None, partial=None) -> MetricReport:
    return MetricReport(
        cd_l1=_named("cd_l1", lambda: chamfer_l1(pred, gt)),
        cd_l2=_named("cd_l2", lambda: chamfer_l2(pred, gt)),
        dcd=_named("dcd", lambda: dcd(pred, gt, args.dcd_temperature)),
        emd=_named("emd", lambda: _emd_value(pred, gt, args)),
        fscore=_named("fscore", lambda: fscore(pred, gt, args.fscore_threshold)),
        hausdorff=_named("hausdorff", lambda: hausdorff(pred, gt)),
        p2f=None if mesh is None else _named("p2f", lambda: point_to_mesh(pred, mesh)),
        fidelity=None if partial is None else _named("fidelity", lambda: fidelity(partial, pred)),
    )


def cmd_metrics(args: argparse.Namespace) -> int:
    pred = read_cloud(args.pred)
    gt = read_cloud(args.gt)
    mesh = read_ply_mesh(args.mesh) if args.mesh else None
    partial = read_cloud(args.partial_input) if args.partial_input else None
    report = _compute_report(pred, gt, args, mesh=mesh, partial=partial)
    print(report.to_json())
    if args.csv:
        _write(Path(args.csv), report.csv_header() + "\n" + report.csv_row() + "\n")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write(out / "report.json", report.to_json() + "\n")
        _write(out / "report.csv", report.csv_header() + "\n" + report.csv_row() + "\n")
        inputs = [args.pred, args.gt] + [p for p in (args.mesh, args.partial_input) if p]
        _write(out / "manifest.json", _manifest("metrics", args, inputs))
    return EXIT_OK


def cmd_schedule(args: argparse.Namespace) -> int:
    spec = ScheduleSpec(
        kind=args.kind, theta=args.theta, tau=args.tau, t=args.t, T=args.T, sigma=args.sigma
    )
    state = UncertaintyState.initial(spec.tau, spec.theta) if spec.kind == "uncertainty" else None
    lines = ["epoch,alpha,beta"]
    for epoch in range(spec.T + 1):
        w = schedule_weights(spec, epoch, state)
        lines.append(f"{epoch},{w.alpha!r},{w.beta!r}")
    content = "\n".join(lines) + "\n"
    if args.out:
        _write(Path(args.out), content)
        _write(Path(args.out).with_suffix(".manifest.json"), _manifest("schedule", args, []))
    else:
        sys.stdout.write(content)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    weights = FcdWeights(args.alpha, args.beta)
    if args.x_min >= args.x_max or args.x_step <= 0:
        raise InvalidInputError(
            f"invalid sweep range: x_min={args.x_min}, x_max={args.x_max}, x_step={args.x_step}"
        )
    base = default_sweep_config(weights)
    count = int(round((args.x_max - args.x_min) / args.x_step))
    xs = args.x_min + args.x_step * np.arange(count + 1)
    midpoint = 0.5 * (base.g1[0] + base.g2[0])
    xs = xs[np.abs(xs - midpoint) > 1e-9]
    config = SweepConfig(g1=base.g1, g2=base.g2, p1=base.p1, xs=xs, weights=weights)
    content = sweep_to_csv(sweep(config), config)
    if args.out:
        _write(Path(args.out), content)
        _write(Path(args.out).with_suffix(".manifest.json"), _manifest("sweep", args, []))
    else:
        sys.stdout.write(content)
    return EXIT_OK


def cmd_optimize(args: argparse.Namespace) -> int:
    if args.benchmark:
        if args.benchmark != "clustered-grid":
            raise InvalidInputError(f"unknown benchmark {args.benchmark!r}")
        init, target = clustered_grid_benchmark(seed=args.seed)
        inputs: list[str] = []
    else:
        if not (args.init and args.target):
            raise InvalidInputError("pass --benchmark or both --init and --target")
        init = read_cloud(args.init)
        target = read_cloud(args.target)
        inputs = [args.init, args.target]

    weights = FcdWeights(args.alpha, args.beta) if args.objective == "fcd" else None
    objective = ObjectiveSpec(
        kind=args.objective, weights=weights, r=args.r, dcd_temperature=args.dcd_temperature
    )
    schedule = _schedule_from_args(args)
    config = OptimizerConfig(
        steps=args.steps,
        step_size=args.step_size,
        update_rule=args.update_rule,
        momentum_coeff=args.momentum,
        seed=args.seed,
        record_every=args.record_every,
    )
    try:
        pinned = [int(i) for i in args.pin.split(",")] if args.pin else None
    except ValueError as exc:
        raise InvalidInputError(f"--pin expects comma-separated integers, got {args.pin!r}") from exc
    final, trace = optimize(init, target, objective, config, schedule=schedule, pinned=pinned)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_xyz(out / "final.xyz", final)
    _write(out / "trace.csv", trace.to_csv())
    _write(out / "manifest.json", _manifest("optimize", args, inputs))
    return EXIT_OK


def _batch_pair(pred_path: Path, gt_path: Path, args: argparse.Namespace) -> str:
    pred = read_cloud(pred_path)
    gt = read_cloud(gt_path)
    emd_value = None
    if len(pred) == len(gt) and len(pred) <= EMD_EXACT_MAX:
        emd_value = emd_exact(pred, gt)
    report = MetricReport(
        cd_l1=chamfer_l1(pred, gt),
        cd_l2=chamfer_l2(pred, gt),
        dcd=dcd(pred, gt, args.dcd_temperature),
        emd=emd_value,
        fscore=fscore(pred, gt, args.fscore_threshold),
        hausdorff=hausdorff(pred, gt),
    )
    return f"{pred_path.name},{report.csv_row()}"


def cmd_batch(args: argparse.Namespace) -> int:
    if args.parallelism < 1:
        raise InvalidInputError(f"--parallelism must be >= 1, got {args.parallelism}")
    root = Path(args.dir)
    if not root.is_dir():
        raise FileNotFoundError(f"not a directory: {root}")
    pred_paths = sorted(root.glob(args.pred_glob))
    pairs = []
    for pred_path in pred_paths:
        gt_name = pred_path.name.replace(args.pred_suffix, args.gt_suffix)
        if gt_name == pred_path.name:
            raise InvalidInputError(
                f"{pred_path.name}: cannot derive ground-truth name "
                f"(suffix {args.pred_suffix!r} not found)"
            )
        gt_path = pred_path.with_name(gt_name)
        if not gt_path.exists():
            raise FileNotFoundError(f"missing ground truth for {pred_path.name}: {gt_path}")
        pairs.append((pred_path, gt_path))

    lines = ["file," + MetricReport.csv_header()]
    if pairs:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.parallelism) as pool:
            rows = pool.map(lambda pair: _batch_pair(pair[0], pair[1], args), pairs)
            lines.extend(rows)  # map preserves input order
    content = "\n".join(lines) + "\n"
    if args.out:
        _write(Path(args.out), content)
        _write(
            Path(args.out).with_suffix(".manifest.json"),
            _manifest("batch", args, [str(p) for pair in pairs for p in pair]),
        )
    else:
        sys.stdout.write(content)
    return EXIT_OK


def cmd_ambiguity(args: argparse.Namespace) -> int:
    clustered, uniform, target, report = build_ambiguity_pair(
        args.n, args.seed, temperature=args.temperature
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_xyz(out / "clustered.xyz", clustered)
    write_xyz(out / "uniform.xyz", uniform)
    write_xyz(out / "target.xyz", target)
    _write(
        out / "report.json",
        json.dumps(
            {
                "cd_clustered": report.cd_clustered,
                "cd_uniform": report.cd_uniform,
                "dcd_clustered": report.dcd_clustered,
                "dcd_uniform": report.dcd_uniform,
                "temperature": report.temperature,
                "cluster_offset": report.cluster_offset,
            },
            sort_keys=True,
            indent=2,
        )
        + "\n",
    )
    _write(out / "manifest.json", _manifest("ambiguity", args, []))
    return EXIT_OK


def _add_schedule_flags(parser: argparse.ArgumentParser, with_kind_arg: bool) -> None:
    if with_kind_arg:
        parser.add_argument("--kind", required=True, choices=SCHEDULE_KINDS)
    parser.add_argument("--theta", type=float, default=2.0, help="upper weight bound")
    parser.add_argument("--tau", type=float, default=1.0, help="lower weight bound")
    parser.add_argument("--t", type=int, default=200, help="transition epoch")
    parser.add_argument("--T", type=int, default=400, help="total epochs")
    parser.add_argument("--sigma", type=float, default=200.0, help="exponential decay rate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chamferlab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"chamferlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("metrics", help="compare two point-cloud files")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--mesh", help="ASCII PLY mesh for point-to-mesh distance")
    p.add_argument("--partial-input", help="partial input cloud for the fidelity metric")
    p.add_argument("--fscore-threshold", type=float, default=0.01)
    p.add_argument("--dcd-temperature", type=float, default=1000.0)
    p.add_argument("--emd-approx", action="store_true", help="use the entropic EMD solver")
    p.add_argument("--emd-iterations", type=int, default=1000)
    p.add_argument("--emd-epsilon", type=float, default=0.01)
    p.add_argument("--csv", help="also write the report as a CSV file")
    p.add_argument("--out-dir", help="write report.json, report.csv, and a manifest here")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("schedule", help="dump (epoch, alpha, beta) rows for a schedule")
    _add_schedule_flags(p, with_kind_arg=True)
    p.add_argument("--out", help="CSV output path (stdout if omitted)")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("sweep", help="free-point value/gradient sweep CSV")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--x-min", type=float, default=0.6)
    p.add_argument("--x-max", type=float, default=3.4)
    p.add_argument("--x-step", type=float, default=0.1)
    p.add_argument("--out", help="CSV output path (stdout if omitted)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", help="gradient-descend a cloud onto a target")
    p.add_argument("--benchmark", help="named benchmark (clustered-grid)")
    p.add_argument("--init", help="initial cloud file")
    p.add_argument("--target", help="target cloud file")
    p.add_argument("--objective", default="fcd", choices=("cd-l1", "cd-l2", "fcd", "dcd-loss"))
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--r", type=int, default=1, choices=(1, 2))
    p.add_argument("--dcd-temperature", type=float, default=1000.0)
    p.add_argument("--schedule", choices=SCHEDULE_KINDS, help="weight schedule for fcd")
    _add_schedule_flags(p, with_kind_arg=False)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--step-size", type=float, default=0.05)
    p.add_argument("--update-rule", default="plain", choices=("plain", "momentum"))
    p.add_argument("--momentum", type=float, default=0.0)
    p.add_argument("--record-every", type=int, default=50)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--pin", help="comma-separated point indices to freeze")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("batch", help="metric table over a directory of cloud pairs")
    p.add_argument("--dir", required=True)
    p.add_argument("--pred-glob", default="*_pred.xyz")
    p.add_argument("--pred-suffix", default="_pred")
    p.add_argument("--gt-suffix", default="_gt")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--fscore-threshold", type=float, default=0.01)
    p.add_argument("--dcd-temperature", type=float, default=1000.0)
    p.add_argument("--out", help="CSV output path (stdout if omitted)")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("ambiguity", help="build the equal-Chamfer clustered/uniform pair")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_ambiguity)

    for sp in sub.choices.values():
        sp.add_argument("--config", help="JSON file of default flag values (flags win)")
    return parser


def _apply_config_defaults(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            defaults = json.load(fh)
        if not isinstance(defaults, dict):
            raise InvalidInputError("config file must hold a JSON object")
        sub_actions = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
        subparser = sub_actions[0].choices[args.command]
        subparser.set_defaults(**{k.replace("-", "_"): v for k, v in defaults.items()})
        args = parser.parse_args(argv)  # explicit flags still win over config defaults
    return args


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config_defaults(parser, argv)
        return args.func(args)
    except (InvalidInputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
