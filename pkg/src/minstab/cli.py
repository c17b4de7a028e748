"""Command-line client.

Single-shot commands (solve5, solve7, cond, curve65, curve45,
illposed-world, distance) build the same request models the HTTP service
accepts and either run the shared handlers in process or POST the JSON
to a running server (--server URL). Batch commands (gen-scenes, exp ...)
always run locally and write trials.csv plus summary.json.
"""

import argparse
import json
import os
import sys

from .errors import InvalidInput, MinstabError
from .lab import (
    RansacOptions,
    SceneConfig,
    add_noise,
    exp_cond_correlation,
    exp_curve_robustness,
    exp_histograms,
    exp_instability_ratio,
    exp_noise_sweep,
    sample_scene,
    trial_stream,
)
from .scene import normalized_to_pixels, project_calibrated
from .serialize import (
    read_correspondences,
    scene_to_dict,
    write_correspondences,
    write_scene,
)
from .service import (
    CondRequest,
    CurveRequest,
    DistanceRequest,
    SolveRequest,
    WorldRequest,
    handle_cond,
    handle_curve,
    handle_distance,
    handle_illposed_world,
    handle_solve,
)

_LOCAL_ROUTES = {
    "/solve/5pt": lambda p: handle_solve("essential", SolveRequest(**p)),
    "/solve/7pt": lambda p: handle_solve("fundamental", SolveRequest(**p)),
    "/cond": lambda p: handle_cond(CondRequest(**p)),
    "/curve/65": lambda p: handle_curve("fundamental", CurveRequest(**p)),
    "/curve/45": lambda p: handle_curve("essential", CurveRequest(**p)),
    "/illposed/world": lambda p: handle_illposed_world(WorldRequest(**p)),
    "/distance": lambda p: handle_distance(DistanceRequest(**p)),
}


def _dispatch(args, route, payload):
    """Run a request against the in-process handlers or a remote server."""
    if args.server:
        import httpx

        resp = httpx.post(args.server.rstrip("/") + route, json=payload,
                          timeout=300.0)
        if resp.status_code != 200:
            raise InvalidInput(f"server returned {resp.status_code}: {resp.text}")
        return resp.json()
    return _LOCAL_ROUTES[route](payload).model_dump()


def _emit(args, text):
    if getattr(args, "out", None):
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _emit_json(args, data):
    _emit(args, json.dumps(data, indent=2) + "\n")


def _corr_payload(args, extra=None):
    c = read_correspondences(args.input, unit=args.unit)
    payload = {"correspondences": [[float(a), float(b), float(d), float(e)]
                                   for (a, b), (d, e) in zip(c.x, c.xbar)],
               "unit": args.unit}
    if extra:
        payload.update(extra)
    return payload


def _csv_cell(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ------------------------------------------------------- single commands


def cmd_solve(args):
    route = "/solve/5pt" if args.command == "solve5" else "/solve/7pt"
    _emit_json(args, _dispatch(args, route, _corr_payload(args)))
    return 0


def cmd_cond(args):
    payload = {"kind": args.kind, "unit": args.unit}
    if args.scene:
        with open(args.scene) as f:
            payload["scene"] = json.load(f)
    elif args.input:
        payload.update(_corr_payload(args))
    else:
        raise InvalidInput("provide --input pts.csv or --scene scene.json")
    _emit_json(args, _dispatch(args, "/cond", payload))
    return 0


def cmd_curve(args):
    route = "/curve/65" if args.command == "curve65" else "/curve/45"
    viewport = [float(v) for v in args.viewport.split(",")]
    if len(viewport) != 4:
        raise InvalidInput("--viewport expects x0,y0,x1,y1")
    extra = {"viewport": viewport, "columns": args.cols,
             "refine_tol": args.refine_tol}
    if args.rows is not None:
        extra["rows"] = args.rows
    data = _dispatch(args, route, _corr_payload(args, extra))
    with_confirmed = args.command == "curve45"
    lines = ["branch,x,y,residual" + (",confirmed" if with_confirmed else "")]
    for v in data["vertices"]:
        row = [str(v["branch"]), repr(float(v["x"])), repr(float(v["y"])),
               repr(float(v["residual"]))]
        if with_confirmed:
            row.append(_csv_cell(bool(v["confirmed"])))
        lines.append(",".join(row))
    _emit(args, "\n".join(lines) + "\n")
    return 0


def cmd_illposed_world(args):
    with open(args.scene) as f:
        payload = {"scene": json.load(f)}
    _emit_json(args, _dispatch(args, "/illposed/world", payload))
    return 0


def cmd_distance(args):
    extra = {"kind": args.kind, "max_radius": args.max_radius,
             "refine_tol": args.refine_tol}
    _emit_json(args, _dispatch(args, "/distance", _corr_payload(args, extra)))
    return 0


# -------------------------------------------------------- batch commands


def _scene_config(args, overrides=None):
    fields = dict(kind=args.kind)
    cfg_file = getattr(args, "config", None)
    if cfg_file:
        with open(cfg_file) as f:
            data = json.load(f)
        fields.update(data.get("scene", {}))
    if getattr(args, "points", None):
        fields["n_points"] = args.points
    if overrides:
        fields.update(overrides)
    return SceneConfig(**fields)


def _ransac_options(args):
    fields = dict(iterations=args.iterations, threshold_px=args.threshold_px,
                  min_curve_distance_px=args.min_curve_distance_px,
                  seed=args.seed)
    cfg_file = getattr(args, "config", None)
    if cfg_file:
        with open(cfg_file) as f:
            data = json.load(f)
        fields.update(data.get("ransac", {}))
    return RansacOptions(**fields)


def _floats(text):
    return [float(v) for v in text.split(",") if v != ""]


def cmd_gen_scenes(args):
    cfg = _scene_config(args)
    os.makedirs(args.out, exist_ok=True)
    manifest = {"kind": cfg.kind, "trials": args.trials, "seed": args.seed,
                "sigma": args.sigma, "n_points": cfg.n_points, "scenes": []}
    for i in range(args.trials):
        rng = trial_stream(args.seed, i)
        scene, K = sample_scene(cfg, rng)
        c_px = normalized_to_pixels(K, project_calibrated(scene))
        if args.sigma > 0:
            c_px = add_noise(c_px, args.sigma, rng)
        scene_path = os.path.join(args.out, f"scene_{i:04d}.json")
        pts_path = os.path.join(args.out, f"pts_{i:04d}.csv")
        write_scene(scene_path, scene)
        write_correspondences(pts_path, c_px)
        manifest["scenes"].append({"scene": os.path.basename(scene_path),
                                   "pts": os.path.basename(pts_path)})
    with open(os.path.join(args.out, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    print(f"wrote {args.trials} scenes to {args.out}")
    return 0


def cmd_exp(args):
    cfg = _scene_config(args)
    common = dict(seed=args.seed, out_dir=args.out, threads=args.threads)
    if args.experiment == "ratio":
        summary = exp_instability_ratio(cfg, _floats(args.sigma),
                                        _floats(args.tau), args.trials,
                                        **common)
    elif args.experiment == "sweep":
        summary = exp_noise_sweep(cfg, _floats(args.sigma), args.trials,
                                  _ransac_options(args), **common)
    elif args.experiment == "hist":
        (sigma,) = _floats(args.sigma)
        (tau,) = _floats(args.tau)
        summary = exp_histograms(cfg, sigma, tau, args.trials,
                                 n_perturb=args.n_perturb,
                                 with_cond=not args.no_cond, **common)
    elif args.experiment == "cond":
        (sigma,) = _floats(args.sigma)
        summary = exp_cond_correlation(cfg, args.trials, sigma=sigma,
                                       n_perturb=args.n_perturb,
                                       well_posed_cond=args.max_cond, **common)
    elif args.experiment == "curve-rob":
        (sigma,) = _floats(args.sigma)
        summary = exp_curve_robustness(cfg, sigma, args.trials, **common)
    else:
        raise InvalidInput(f"unknown experiment {args.experiment!r}")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


# -------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(
        prog="minstab",
        description="Stability analysis of the 5-point/7-point minimal "
                    "problems: solvers, condition numbers, degeneracy "
                    "curves, and synthetic experiments.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def single(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--server", default=None,
                        help="base URL of a running service; default runs in process")
        sp.add_argument("--out", default=None, help="write output to this file")
        sp.add_argument("--unit", choices=["normalized", "pixels"],
                        default="normalized")
        return sp

    for name, kind in (("solve5", "essential"), ("solve7", "fundamental")):
        sp = single(name, f"solve the minimal {kind} problem from a CSV of pairs")
        sp.add_argument("--input", required=True, help="CSV with header x1,y1,x2,y2")
        sp.set_defaults(func=cmd_solve)

    sp = single("cond", "condition number from image data or a world scene")
    sp.add_argument("--kind", choices=["essential", "fundamental"], required=True)
    sp.add_argument("--input", default=None, help="CSV with header x1,y1,x2,y2")
    sp.add_argument("--scene", default=None, help="scene JSON file")
    sp.set_defaults(func=cmd_cond)

    for name, npts in (("curve65", 7), ("curve45", 5)):
        sp = single(name, f"trace the degeneracy curve of the last of {npts} pairs")
        sp.add_argument("--input", required=True,
                        help=f"CSV with header x1,y1,x2,y2 and {npts} rows")
        sp.add_argument("--viewport", required=True, help="x0,y0,x1,y1")
        sp.add_argument("--cols", type=int, default=640)
        sp.add_argument("--rows", type=int, default=None)
        sp.add_argument("--refine-tol", type=float, default=1e-3,
                        dest="refine_tol")
        sp.set_defaults(func=cmd_curve)

    sp = single("illposed-world", "test a world scene for ill-posedness")
    sp.add_argument("--scene", required=True, help="scene JSON file")
    sp.set_defaults(func=cmd_illposed_world)

    sp = single("distance", "distance from the last point to the degeneracy curve")
    sp.add_argument("--input", required=True, help="CSV with header x1,y1,x2,y2")
    sp.add_argument("--kind", choices=["essential", "fundamental"], required=True)
    sp.add_argument("--max-radius", type=float, default=1.0, dest="max_radius")
    sp.add_argument("--refine-tol", type=float, default=1e-3, dest="refine_tol")
    sp.set_defaults(func=cmd_distance)

    sp = sub.add_parser("gen-scenes", help="sample scenes to JSON/CSV files")
    sp.add_argument("--kind", choices=["essential", "fundamental"],
                    default="essential")
    sp.add_argument("--trials", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sigma", type=float, default=0.0,
                    help="pixel noise added to the written correspondences")
    sp.add_argument("--points", type=int, default=None)
    sp.add_argument("--config", default=None,
                    help="JSON file with a 'scene' object of SceneConfig fields")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_gen_scenes)

    sp = sub.add_parser(
        "exp",
        help="run an experiment; writes trials.csv and summary.json to --out",
        description="trials.csv columns by experiment — "
                    "ratio: trial,sigma,e,count_clean,count_noisy,count_changed,error; "
                    "sweep: trial,sigma,rot_err_deg,trans_err_deg,inliers,rejected,error; "
                    "hist: trial,sigma,tau,n_perturb,n_erroneous,n_count_changed,"
                    "count_clean,classification,distance_px,cond,error; "
                    "cond: trial,cond,max_rot_err_deg,max_trans_err_deg,max_e,"
                    "well_posed,error; "
                    "curve-rob: trial,sigma,distance_px,distance_perturbed_px,"
                    "log10_ratio,error",
    )
    sp.add_argument("experiment",
                    choices=["ratio", "sweep", "hist", "cond", "curve-rob"])
    sp.add_argument("--kind", choices=["essential", "fundamental"],
                    default="essential")
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sigma", default="0.3",
                    help="comma-separated noise levels (single value where "
                         "the experiment takes one)")
    sp.add_argument("--tau", default="0.5", help="comma-separated thresholds")
    sp.add_argument("--out", default=None, help="output directory")
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--points", type=int, default=None)
    sp.add_argument("--n-perturb", type=int, default=20, dest="n_perturb")
    sp.add_argument("--no-cond", action="store_true",
                    help="skip per-trial condition numbers in hist")
    sp.add_argument("--max-cond", type=float, default=1e3, dest="max_cond",
                    help="well-posedness cutoff for the cond experiment")
    sp.add_argument("--iterations", type=int, default=100,
                    help="RANSAC iterations (sweep)")
    sp.add_argument("--threshold-px", type=float, default=1.0,
                    dest="threshold_px")
    sp.add_argument("--min-curve-distance-px", type=float, default=0.0,
                    dest="min_curve_distance_px")
    sp.add_argument("--config", default=None,
                    help="JSON file with 'scene'/'ransac' objects mirroring "
                         "SceneConfig/RansacOptions")
    sp.set_defaults(func=cmd_exp)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MinstabError as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__,
                                     "detail": str(exc)}) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
