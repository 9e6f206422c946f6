"""Command-line entry point.

Exit codes: 0 success, 2 input error, 3 when no replicate converged.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import fixtures as fx
from . import io
from .pipeline import (PipelineConfig, benchmark, detect_image, detect_scatter, load_config,
                       run_baseline_dt_maxima, segment)
from .potential import FitError, InteractionSpec, solve_interaction_params

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 2, 3

log = logging.getLogger("salr")


def _config(args, **defaults) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    return cfg.replace(**{k: v for k, v in defaults.items() if getattr(cfg, k) == getattr(PipelineConfig(), k)})


def _delta_r(text: str) -> list[float]:
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) == 2:
            lo, hi, step = parts[0], parts[1], 1.0
        elif len(parts) == 3:
            lo, step, hi = parts
        else:
            raise argparse.ArgumentTypeError("use lo:hi or lo:step:hi")
        return list(np.arange(lo, hi + step / 2, step))
    return [float(v) for v in text.split(",")]


def cmd_detect_image(args) -> int:
    cfg = _config(args)
    image = io.read_image(args.image)
    result = detect_image(image, cfg, record_init=bool(args.plot))
    out = args.out or "seeds.csv"
    io.write_seeds(out, result.seeds)
    if args.json:
        io.write_json(args.json, result.to_json())
    if args.plot:
        from .plotting import image_overlay

        init = [p for o in result.objects for p in o.initial_positions[:1]]
        particles = np.vstack(init) if init else ()
        image_overlay(args.plot, image, result.mask, [s.position for s in result.seeds], particles=particles)
    print(f"{len(result.seeds)} seeds in {len(result.objects)} objects -> {out}")
    return EXIT_NOT_CONVERGED if result.all_failed else EXIT_OK


def cmd_cluster_points(args) -> int:
    cfg = _config(args, strategy="uniform-random")
    points, _ = io.read_points(args.points)
    result = detect_scatter(points, cfg)
    out = args.out or "seeds.csv"
    io.write_seeds(out, result.seeds)
    if args.json:
        io.write_json(args.json, result.to_json())
    if args.plot:
        from .plotting import projection_overlay

        projection_overlay(args.plot, points, [s.position for s in result.seeds])
    print(f"{len(result.seeds)} seeds -> {out}")
    return EXIT_NOT_CONVERGED if result.all_failed else EXIT_OK


def cmd_benchmark(args) -> int:
    seeds = io.read_seeds(args.seeds)
    truth = io.read_truth(args.truth)
    for oid in truth:
        seeds.setdefault(oid, np.zeros((0, truth[oid].shape[1])))
    baseline = None
    if args.baseline == "dt":
        if not args.image:
            raise io.InputError("--baseline dt needs --image to build the mask")
        cfg = _config(args)
        baseline = run_baseline_dt_maxima(segment(io.read_image(args.image), cfg))
    report = benchmark(seeds, truth, args.delta_r, baseline)
    text = json.dumps(report.to_json(), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_solve_potential(args) -> int:
    params = solve_interaction_params(InteractionSpec(args.d0, args.r0, args.ra))
    print(params.to_json())
    return EXIT_OK


FIXTURE_KINDS = ("disk-clumps", "dumbbells", "gaussian-blobs", "rare-arm")


def cmd_gen_fixtures(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind in ("disk-clumps", "dumbbells"):
        makers = ([("disk", fx.disk), ("two_disks", fx.two_disks), ("three_disks", fx.three_disks)]
                  if args.kind == "disk-clumps" else [("dumbbell", fx.dumbbell)])
        for name, make in makers:
            f = make()
            io.write_pgm(out / f"{name}.pgm", fx.mask_image(f.mask, seed=args.seed))
            with open(out / f"{name}_truth.csv", "w") as fh:
                fh.write("object_id,x1,x2\n")
                for c in f.centers:
                    fh.write(f"1,{c[0]:.6f},{c[1]:.6f}\n")
    elif args.kind == "gaussian-blobs":
        f = fx.gaussian_blobs(fx.octahedron_centers(60.0, args.dim), 6.0, args.points, seed=args.seed)
        io.write_points(out / "blobs.csv", f.points)
        io.write_points(out / "blobs_truth.csv", f.centers)
    else:
        f = fx.rare_arm(seed=args.seed)
        io.write_points(out / "rare_arm.csv", f.points)
        io.write_points(out / "rare_arm_truth.csv", f.centers)
    print(f"wrote {args.kind} fixtures to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="salr", description="Seed-point detection with SALR particle dynamics.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect-image", help="seed points of objects in a greyscale image")
    d.add_argument("image")
    d.add_argument("--config")
    d.add_argument("--out")
    d.add_argument("--json")
    d.add_argument("--plot")
    d.set_defaults(func=cmd_detect_image)

    c = sub.add_parser("cluster-points", help="cluster centres of CSV scatter points")
    c.add_argument("points")
    c.add_argument("--config")
    c.add_argument("--out")
    c.add_argument("--json")
    c.add_argument("--plot")
    c.set_defaults(func=cmd_cluster_points)

    b = sub.add_parser("benchmark", help="score seeds against truth")
    b.add_argument("--seeds", required=True)
    b.add_argument("--truth", required=True)
    b.add_argument("--delta-r", type=_delta_r, default=_delta_r("1:10"))
    b.add_argument("--baseline", choices=["dt"])
    b.add_argument("--image", help="image for the distance-transform baseline")
    b.add_argument("--config")
    b.add_argument("--out")
    b.set_defaults(func=cmd_benchmark)

    s = sub.add_parser("solve-potential", help="fit the pair-potential parameters")
    s.add_argument("--d0", type=float, default=-1.0)
    s.add_argument("--r0", type=float, default=2.0)
    s.add_argument("--ra", type=float, default=13.0)
    s.set_defaults(func=cmd_solve_potential)

    g = sub.add_parser("gen-fixtures", help="write synthetic corpora")
    g.add_argument("kind", choices=FIXTURE_KINDS)
    g.add_argument("out_dir")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--dim", type=int, default=3)
    g.add_argument("--points", type=int, default=10_000)
    g.set_defaults(func=cmd_gen_fixtures)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    try:
        return args.func(args)
    except (io.InputError, ValueError, FitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
