"""Command-line orchestration: field computation, snake runs, spectral
verification, and parameter sweeps.

Subcommands: synth, gvf, ggvf, snake, spectral, sweep, render.  Flag
values override config-file values (JSON, flat keys named after the
flags with dashes replaced by underscores), which override built-in
defaults; the effective configuration is echoed to stdout and embedded
in the run summary so a run is reconstructible from its artifacts.

Exit codes: 0 success, 1 parameter validation failure, 2 I/O or format
error, 3 divergence, 4 non-convergence at the iteration cap.

All artifacts are deterministic except the wall-time entries in
summaries and sweep tables.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import ioformats
from .errors import DivergenceError, FormatError, GvfError, ParameterError
from .grid import ScalarField, VectorField, clamp_magnitude, edge_map, gradient_central
from .snake import Snake, SnakeParams, snake_evolve
from .solver import (
    DomainMask,
    GgvfParams,
    GvfParams,
    ggvf_solve,
    ggvf_weight,
    gvf_solve,
    steady_residual,
    validate_ggvf_params,
)
from .spectral import parseval_energy, spectral_steady_state

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_DIVERGENCE = 3
EXIT_NO_CONVERGENCE = 4

_DEFAULTS = {
    "g": 2.0,
    "h": 0.02,
    "dt": 0.12,
    "delta": 1e-4,
    "threshold": math.inf,
    "t_max": 20000,
    "k": 100.0,
    "sigma": 2.0,
    "edge_sign": "attractive",
    "outer_margin": None,
    "inner_box": None,
    "force": False,
    "periodic": False,
    # snake stage
    "b": 0.2,
    "gamma": 1.0,
    "step": 1.0,
    "eps": 0.01,
    "snake_iters": 2000,
    "spacing": 2.0,
    "normalize": False,
    "tensile_sign": 1.0,
    "force_peak": 0.3,
    "stride": 8,
}


def _parse_box(text: str) -> tuple[int, int, int, int]:
    parts = text.split(",")
    if len(parts) != 4:
        raise ParameterError(f"expected x,y,w,h but got {text!r}")
    x, y, w, h = (int(p) for p in parts)
    if w <= 0 or h <= 0:
        raise ParameterError("box width and height must be positive")
    return (x, y, w, h)


def _parse_circle(text: str):
    parts = [float(p) for p in text.split(",")]
    if len(parts) == 3:
        cx, cy, r = parts
        n = max(16, int(round(2.0 * math.pi * r / 2.0)))
    elif len(parts) == 4:
        cx, cy, r = parts[:3]
        n = int(parts[3])
    else:
        raise ParameterError(f"expected cx,cy,r[,n] but got {text!r}")
    return cx, cy, r, n


def foreground_bbox(image: ScalarField) -> tuple[int, int, int, int] | None:
    """Bounding box (x, y, w, h) of pixels above half the peak intensity."""
    peak = image.values.max()
    if peak <= image.values.min():
        return None
    ys, xs = np.nonzero(image.values > 0.5 * peak)
    return (
        int(xs.min()),
        int(ys.min()),
        int(xs.max() - xs.min() + 1),
        int(ys.max() - ys.min() + 1),
    )


def build_mask(
    image: ScalarField,
    outer_margin: int | None,
    inner_box: tuple[int, int, int, int] | None,
) -> DomainMask:
    """Active domain: the foreground box grown by the outer margin
    (clipped to the frame) minus an optional rectangular hole."""
    outer = None
    if outer_margin is not None:
        bbox = foreground_bbox(image)
        if bbox is not None:
            x, y, w, h = bbox
            outer = (x - outer_margin, y - outer_margin, w + 2 * outer_margin, h + 2 * outer_margin)
    return DomainMask.from_rects(image.spec, outer=outer, hole=inner_box)


def _effective(args: argparse.Namespace, keys: list[str]) -> dict:
    """Merge defaults <- config file <- explicit flags for the given keys."""
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ParameterError("config file must hold a flat JSON object")
        cfg = loaded
    out = {}
    for key in keys:
        if getattr(args, key, None) is not None:
            out[key] = getattr(args, key)
        elif key in cfg:
            out[key] = cfg[key]
        else:
            out[key] = _DEFAULTS[key]
    return out


def _sanitize(obj):
    """JSON-safe copy: numpy scalars to Python ones, infinities to 'inf'."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    return obj


def _echo(effective: dict) -> None:
    print(json.dumps({"effective_config": _sanitize(effective)}, sort_keys=True))


def _write_summary(out_dir: Path, summary: dict) -> None:
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(_sanitize(summary), fh, sort_keys=True, indent=2)
        fh.write("\n")


def _run_snake_stage(field: VectorField, grad_peak: float, cfg: dict, out_dir: Path, init):
    """Scale the force so a unit source gradient moves a snaxel at most
    force_peak pixels per step, evolve, and write contour artifacts."""
    scale = cfg["force_peak"] / grad_peak if grad_peak > 0 else 1.0
    scaled = VectorField.from_arrays(
        field.u.values * scale, field.v.values * scale, field.spec.dx, field.spec.dy
    )
    params = SnakeParams(
        b=cfg["b"],
        gamma=cfg["gamma"],
        step=cfg["step"],
        eps=cfg["eps"],
        max_iter=int(cfg["snake_iters"]),
        resample_spacing=cfg["spacing"],
        normalize=bool(cfg["normalize"]),
        tensile_sign=float(cfg["tensile_sign"]),
    )
    result = snake_evolve(init, scaled, params)
    ioformats.write_contour(result.snake.points, out_dir / "contour.csv")
    ioformats.render(field, "magnitude-heatmap", out_dir / "snake_overlay.ppm",
                     snake_points=result.snake.points)
    return result


def cmd_synth(args) -> int:
    if args.shape == "ushape":
        img = ioformats.synth_ushape(args.width, args.height)
    elif args.shape == "box-hole":
        hole = _parse_box(args.hole_box) if args.hole_box else None
        img = ioformats.synth_box_with_hole(args.width, args.height, hole)
    elif args.shape == "disk":
        if args.cx is None or args.cy is None or args.radius is None:
            raise ParameterError("disk needs --cx, --cy and --radius")
        img = ioformats.synth_disk(args.width, args.height, args.cx, args.cy, args.radius)
    else:
        raise ParameterError(f"unknown shape {args.shape!r}")
    ioformats.write_pgm(img, args.out_image)
    print(json.dumps({"wrote": str(args.out_image), "shape": args.shape}, sort_keys=True))
    return EXIT_OK


def _pipeline(args, generalized: bool) -> int:
    keys = [
        "g", "h", "dt", "delta", "threshold", "t_max", "k", "sigma", "edge_sign",
        "outer_margin", "inner_box", "force", "periodic",
        "b", "gamma", "step", "eps", "snake_iters", "spacing", "normalize",
        "tensile_sign", "force_peak",
    ]
    cfg = _effective(args, keys)
    _echo(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    image = ioformats.read_pgm(args.image)
    f = edge_map(image, sigma=cfg["sigma"], sign=cfg["edge_sign"])
    inner = _parse_box(cfg["inner_box"]) if isinstance(cfg["inner_box"], str) else cfg["inner_box"]
    mask = build_mask(image, cfg["outer_margin"], inner)

    threshold = float(cfg["threshold"])
    t0 = time.perf_counter()
    if generalized:
        params = GgvfParams(
            K=cfg["k"], dt=cfg["dt"], delta=cfg["delta"], cap=threshold,
            max_iter=int(cfg["t_max"]),
        )
        violations = validate_ggvf_params(params, image.spec)
        if violations and not cfg["force"]:
            raise ParameterError("; ".join(violations))
        report = ggvf_solve(f, params, mask, periodic=cfg["periodic"], force=cfg["force"])
        weight = ggvf_weight(clamp_magnitude(gradient_central(f), threshold), cfg["k"])
        res_params = GvfParams(
            g=weight,
            h=ScalarField(f.spec, 1.0 - weight.values),
            dt=cfg["dt"], delta=cfg["delta"], cap=threshold,
            max_iter=int(cfg["t_max"]),
        )
    else:
        params = GvfParams(
            g=cfg["g"], h=cfg["h"], dt=cfg["dt"], delta=cfg["delta"], cap=threshold,
            max_iter=int(cfg["t_max"]),
        )
        report = gvf_solve(f, params, mask, periodic=cfg["periodic"], force=cfg["force"])
        res_params = params
    wall_ms = (time.perf_counter() - t0) * 1000.0

    ioformats.write_field(report.field, out_dir / "field.gvf")
    ioformats.render(report.field, "magnitude-heatmap", out_dir / "field_magnitude.ppm")
    ioformats.render(report.field, "arrows", out_dir / "field_arrows.ppm")
    residual = steady_residual(report.field, f, res_params, mask)

    summary = {
        "command": "ggvf" if generalized else "gvf",
        "image": str(args.image),
        "effective_config": cfg,
        "NI": report.iterations,
        "converged": report.converged,
        "residual": residual,
        "inside_count": report.inside_count,
        "pixel_updates": report.pixel_updates,
        "wall_ms": wall_ms,
        "artifacts": ["field.gvf", "field_magnitude.ppm", "field_arrows.ppm"],
    }

    snake_converged = True
    if args.snake:
        cx, cy, r, n = _parse_circle(args.snake)
        grad_peak = float(clamp_magnitude(gradient_central(f), threshold).magnitude().max())
        result = _run_snake_stage(
            report.field, grad_peak, cfg, out_dir, Snake.circle(cx, cy, r, n)
        )
        snake_converged = result.converged
        summary["snake"] = {
            "iterations": result.iterations,
            "converged": result.converged,
            "snaxels": len(result.snake),
        }
        summary["artifacts"] += ["contour.csv", "snake_overlay.ppm"]

    _write_summary(out_dir, summary)
    if not report.converged or not snake_converged:
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_snake(args) -> int:
    keys = ["b", "gamma", "step", "eps", "snake_iters", "spacing", "normalize",
            "tensile_sign", "force_peak"]
    cfg = _effective(args, keys)
    _echo(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    field = ioformats.read_field(args.field)
    if args.init_circle:
        cx, cy, r, n = _parse_circle(args.init_circle)
        init = Snake.circle(cx, cy, r, n)
    elif args.init_contour:
        init = Snake(ioformats.read_contour(args.init_contour))
    else:
        raise ParameterError("need --init-circle or --init-contour")
    peak = float(args.force_scale) if args.force_scale else float(field.magnitude().max())
    t0 = time.perf_counter()
    result = _run_snake_stage(field, peak, cfg, out_dir, init)
    _write_summary(out_dir, {
        "command": "snake",
        "field": str(args.field),
        "effective_config": cfg,
        "iterations": result.iterations,
        "converged": result.converged,
        "snaxels": len(result.snake),
        "wall_ms": (time.perf_counter() - t0) * 1000.0,
        "artifacts": ["contour.csv", "snake_overlay.ppm"],
    })
    return EXIT_OK if result.converged else EXIT_NO_CONVERGENCE


def cmd_spectral(args) -> int:
    keys = ["g", "h", "dt", "delta", "threshold", "t_max", "sigma", "edge_sign"]
    cfg = _effective(args, keys)
    _echo(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    image = ioformats.read_pgm(args.image)
    f = edge_map(image, sigma=cfg["sigma"], sign=cfg["edge_sign"])
    grad = clamp_magnitude(gradient_central(f), float(cfg["threshold"]))
    params = GvfParams(
        g=cfg["g"], h=cfg["h"], dt=cfg["dt"], delta=cfg["delta"],
        cap=float(cfg["threshold"]), max_iter=int(cfg["t_max"]),
    )
    t0 = time.perf_counter()
    report = gvf_solve(f, params, periodic=True)
    exact = spectral_steady_state(grad, cfg["g"], cfg["h"])
    num = math.sqrt(float(
        ((report.field.u.values - exact.u.values) ** 2
         + (report.field.v.values - exact.v.values) ** 2).sum()
    ))
    den = math.sqrt(float((exact.u.values**2 + exact.v.values**2).sum()))
    rel = num / den if den > 0 else 0.0
    _write_summary(out_dir, {
        "command": "spectral",
        "image": str(args.image),
        "effective_config": cfg,
        "NI": report.iterations,
        "converged": report.converged,
        "relative_l2_error": rel,
        "source_energy": parseval_energy(grad),
        "steady_energy": parseval_energy(exact),
        "wall_ms": (time.perf_counter() - t0) * 1000.0,
    })
    print(json.dumps({"relative_l2_error": rel}, sort_keys=True))
    return EXIT_OK if report.converged else EXIT_NO_CONVERGENCE


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def cmd_sweep(args) -> int:
    keys = ["g", "h", "dt", "delta", "threshold", "t_max", "sigma", "edge_sign", "force"]
    cfg = _effective(args, keys)
    _echo(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    image = ioformats.read_pgm(args.image)
    f = edge_map(image, sigma=cfg["sigma"], sign=cfg["edge_sign"])

    gs = _floats(args.g_list) if args.g_list else [cfg["g"]]
    hs = _floats(args.h_list) if args.h_list else [cfg["h"]]
    dts = _floats(args.dt_list) if args.dt_list else [cfg["dt"]]
    deltas = _floats(args.delta_list) if args.delta_list else [cfg["delta"]]
    ts = _floats(args.t_list) if args.t_list else [float(cfg["threshold"])]
    inners = (
        [None if tok == "none" else _parse_box(tok) for tok in args.inner_list.split(";")]
        if args.inner_list
        else [None]
    )
    outers = (
        [None if tok == "none" else int(tok) for tok in args.outer_list.split(";")]
        if args.outer_list
        else [None]
    )

    rows = []
    for g, h, dt, delta, t_cap, d_out, d_in in itertools.product(
        gs, hs, dts, deltas, ts, outers, inners
    ):
        row = {
            "g": g, "h": h, "dt": dt, "delta": delta,
            "T": "inf" if math.isinf(t_cap) else t_cap,
            "d_in": "none" if d_in is None else "x".join(str(v) for v in d_in),
            "d_out": "none" if d_out is None else d_out,
            "NI": "", "converged": "", "residual": "", "wall_ms": "", "error": "",
        }
        try:
            params = GvfParams(g=g, h=h, dt=dt, delta=delta, cap=t_cap,
                               max_iter=int(cfg["t_max"]))
            mask = build_mask(image, d_out, d_in)
            t0 = time.perf_counter()
            report = gvf_solve(f, params, mask, force=cfg["force"])
            wall = (time.perf_counter() - t0) * 1000.0
            row.update(
                NI=report.iterations,
                converged=report.converged,
                residual=f"{steady_residual(report.field, f, params, mask):.6g}",
                wall_ms=f"{wall:.3f}",
            )
        except GvfError as exc:
            row["error"] = str(exc)
        rows.append(row)

    columns = ["g", "h", "dt", "delta", "T", "d_in", "d_out",
               "NI", "converged", "residual", "wall_ms", "error"]
    with open(out_dir / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    print(json.dumps({"rows": len(rows), "wrote": str(out_dir / "sweep.csv")}, sort_keys=True))
    return EXIT_OK


def cmd_render(args) -> int:
    field = ioformats.read_field(args.field)
    contour = ioformats.read_contour(args.contour) if args.contour else None
    stride = args.stride if args.stride is not None else _DEFAULTS["stride"]
    ioformats.render(field, args.mode, args.out_image, snake_points=contour,
                     arrow_stride=stride)
    print(json.dumps({"wrote": str(args.out_image), "mode": args.mode}, sort_keys=True))
    return EXIT_OK


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--g", type=float, help="diffusion coefficient")
    p.add_argument("--h", type=float, help="reaction coefficient")
    p.add_argument("--dt", type=float, help="time step")
    p.add_argument("--delta", type=float, help="termination threshold")
    p.add_argument("--threshold", type=float, help="source gradient magnitude cap T")
    p.add_argument("--t-max", dest="t_max", type=int, help="iteration cap")
    p.add_argument("--k", type=float, help="edge sensitivity (generalized solve)")
    p.add_argument("--sigma", type=float, help="edge map Gaussian sigma")
    p.add_argument("--edge-sign", dest="edge_sign", choices=["attractive", "potential"])
    p.add_argument("--force", action="store_const", const=True,
                   help="solve despite constraint violations")
    p.add_argument("--periodic", action="store_const", const=True,
                   help="periodic borders instead of mirrored ones")
    p.add_argument("--outer-margin", dest="outer_margin", type=int,
                   help="active window margin around the foreground box")
    p.add_argument("--inner-box", dest="inner_box", help="rectangular hole x,y,w,h")
    p.add_argument("--config", help="JSON config file (flat flag-name keys)")


def _add_snake_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--b", type=float, help="tensile scale")
    p.add_argument("--gamma", type=float, help="external force scale")
    p.add_argument("--step", type=float, help="evolution step")
    p.add_argument("--eps", type=float, help="snake termination threshold")
    p.add_argument("--snake-iters", dest="snake_iters", type=int, help="snake iteration cap")
    p.add_argument("--spacing", type=float, help="resampling arc spacing (0 disables)")
    p.add_argument("--normalize", action="store_const", const=True,
                   help="use unit force vectors")
    p.add_argument("--tensile-sign", dest="tensile_sign", type=float, choices=[1.0, -1.0],
                   help="+1 as defined (inflating), -1 smoothing")
    p.add_argument("--force-peak", dest="force_peak", type=float,
                   help="largest per-step displacement for a unit gamma")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gvflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic test image")
    p.add_argument("--shape", required=True, choices=["ushape", "box-hole", "disk"])
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--hole-box", dest="hole_box", help="hole rectangle x,y,w,h")
    p.add_argument("--cx", type=float)
    p.add_argument("--cy", type=float)
    p.add_argument("--radius", type=float)
    p.add_argument("--out-image", dest="out_image", required=True)
    p.set_defaults(func=cmd_synth)

    for name, generalized in (("gvf", False), ("ggvf", True)):
        p = sub.add_parser(name, help=f"compute the {name} field from an image")
        p.add_argument("--image", required=True)
        p.add_argument("--out", required=True, help="artifact directory")
        p.add_argument("--snake", help="also run a snake from circle cx,cy,r[,n]")
        _add_solver_flags(p)
        _add_snake_flags(p)
        p.set_defaults(func=lambda a, gen=generalized: _pipeline(a, gen))

    p = sub.add_parser("snake", help="evolve a snake on a stored field")
    p.add_argument("--field", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init-circle", dest="init_circle", help="cx,cy,r[,n]")
    p.add_argument("--init-contour", dest="init_contour", help="contour CSV path")
    p.add_argument("--force-scale", dest="force_scale", type=float,
                   help="reference force magnitude (defaults to the field peak)")
    p.add_argument("--config", help="JSON config file")
    _add_snake_flags(p)
    p.set_defaults(func=cmd_snake)

    p = sub.add_parser("spectral", help="verify the periodic solve against the DFT oracle")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_spectral)

    p = sub.add_parser("sweep", help="run a parameter grid and write a CSV table")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--g-list", dest="g_list")
    p.add_argument("--h-list", dest="h_list")
    p.add_argument("--dt-list", dest="dt_list")
    p.add_argument("--delta-list", dest="delta_list")
    p.add_argument("--t-list", dest="t_list")
    p.add_argument("--outer-list", dest="outer_list", help="margins, ';' separated, 'none' allowed")
    p.add_argument("--inner-list", dest="inner_list", help="holes x,y,w,h, ';' separated, 'none' allowed")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("render", help="rasterize a stored field to PPM")
    p.add_argument("--field", required=True)
    p.add_argument("--mode", required=True, choices=list(ioformats.RENDER_MODES))
    p.add_argument("--out-image", dest="out_image", required=True)
    p.add_argument("--contour", help="overlay contour CSV")
    p.add_argument("--stride", type=int, help="arrow subsampling stride")
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except GvfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
