"""Command-line driver for renders and experiments.

Exit codes: 0 success, 1 scene parse/validation failure, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import experiments as ex
from . import reference_scene
from .io import ParseError, load_scene, write_csv, write_pgm
from .tracer import ClassFilter, render_retina


def _scan_points(lo: float, hi: float, step: float) -> list[float]:
    if not step > 0:
        raise ValueError("step must be > 0")
    if hi < lo:
        raise ValueError("max must be >= min")
    n = int(round((hi - lo) / step)) + 1
    return [round(lo + k * step, 12) for k in range(n)]


def cmd_render(args) -> int:
    scene = load_scene(args.scene)
    if args.rays is not None:
        scene = scene.with_source(samples_per_pixel=args.rays)
    res = render_retina(scene, args.seed, ClassFilter(args.filter), workers=args.workers)
    write_pgm(res.irradiance, f"{args.out}.pgm")
    write_csv(ex.ScanResult(range(len(res.pixel_weight)), res.pixel_weight), f"{args.out}.csv")
    print(f"retina weight {res.irradiance.total:.9g} of {res.emitted:.9g} emitted")
    return 0


def cmd_eyebox(args) -> int:
    scene = load_scene(args.scene)
    scan = ex.eyebox_scan(scene, _scan_points(args.min, args.max, args.step), args.seed)
    write_csv(scan, f"{args.out}.csv")
    write_csv(ex.ScanResult(scan.parameters, scan.extra["intensity"]), f"{args.out}_intensity.csv")
    print(f"eyebox extent {ex.eyebox_extent(scan, scene.settings.plateau):.9g} mm")
    return 0


def cmd_focus_sweep(args) -> int:
    scene = load_scene(args.scene)
    baseline = load_scene(args.baseline) if args.baseline else reference_scene("baseline")
    if args.steps < 1:
        raise ValueError("steps must be >= 1")
    f_values = [float(f) for f in np.linspace(args.fmin, args.fmax, args.steps)]
    sweep = ex.focus_sweep(scene, f_values, args.seed, baseline)
    write_csv(sweep.proposed, f"{args.out}_proposed.csv")
    write_csv(sweep.baseline, f"{args.out}_baseline.csv")
    print(f"max spot proposed {max(sweep.proposed.values):.9g} mm")
    print(f"max spot baseline {max(sweep.baseline.values):.9g} mm")
    print(f"ratio {sweep.ratio:.9g}")
    return 0


def cmd_ghosts(args) -> int:
    print(f"{ex.ghost_ratio(load_scene(args.scene), args.seed):.9g}")
    return 0


def cmd_fov(args) -> int:
    print(f"{ex.fov_limit(load_scene(args.scene), args.step, args.seed):.9g}")
    return 0


def cmd_check(args) -> int:
    scene = load_scene(args.scene)
    print(f"ok: {len(scene.elements)} element(s), {scene.source.n_pixels} pixel(s)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="retinaproj", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("render", help="render the retina irradiance map")
    r.add_argument("--scene", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--rays", type=int, help="samples per source pixel")
    r.add_argument("--filter", choices=[c.value for c in ClassFilter], default="all")
    r.add_argument("--out", required=True)
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_render)

    e = sub.add_parser("eyebox", help="field coverage versus pupil offset")
    e.add_argument("--scene", required=True)
    e.add_argument("--min", type=float, required=True)
    e.add_argument("--max", type=float, required=True)
    e.add_argument("--step", type=float, required=True)
    e.add_argument("--seed", type=int)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eyebox)

    f = sub.add_parser("focus-sweep", help="mean RMS spot versus eye focal length")
    f.add_argument("--scene", required=True)
    f.add_argument("--fmin", type=float, required=True)
    f.add_argument("--fmax", type=float, required=True)
    f.add_argument("--steps", type=int, required=True)
    f.add_argument("--seed", type=int)
    f.add_argument("--out", required=True)
    f.add_argument("--baseline", help="baseline scene (default: shipped diffuser scene)")
    f.set_defaults(func=cmd_focus_sweep)

    g = sub.add_parser("ghosts", help="ghost / image retina weight ratio")
    g.add_argument("--scene", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_ghosts)

    v = sub.add_parser("fov", help="plate-limited full field angle in degrees")
    v.add_argument("--scene", required=True)
    v.add_argument("--step", type=float, required=True)
    v.add_argument("--seed", type=int)
    v.set_defaults(func=cmd_fov)

    c = sub.add_parser("check", help="parse and validate a scene file")
    c.add_argument("--scene", required=True)
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {args.scene}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"error: {exc}", file=sys.stderr)
        return 1 if args.command == "check" else 2


if __name__ == "__main__":
    sys.exit(main())
