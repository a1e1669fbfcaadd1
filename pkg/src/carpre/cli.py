"""Command line entry points: synth, run, eval.

Exit codes: 0 success, 2 completed in degraded mode (warnings emitted),
1 fatal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .cameras import load_views, save_views
from .evaluate import evaluate
from .export import dumps_blueprint, export_all, load_blueprint, model_to_blueprint
from .params import Params
from .pipeline import run_pipeline
from .ply_io import load_ply, save_ply
from .synth import SceneSpec, synth_scene

log = logging.getLogger(__name__)


def _cmd_synth(args) -> int:
    with open(args.spec) as f:
        spec = SceneSpec.from_dict(json.load(f))
    result = synth_scene(spec)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    save_ply(out / "cloud.ply", result.cloud)
    save_views(out / "views", result.views)
    truth_doc = model_to_blueprint(result.truth, connectors=[],
                                   meta={"synthetic": True, "name": spec.name,
                                         "diameter": result.diameter})
    (out / "truth.json").write_text(dumps_blueprint(truth_doc))
    log.info("scene '%s': %d points, %d views -> %s", spec.name,
             len(result.cloud.points), len(result.views), out)
    print(f"wrote {out / 'cloud.ply'}, {len(result.views)} views, truth.json")
    return 0


def _cmd_run(args) -> int:
    cloud = load_ply(args.cloud)
    views = []
    if not args.no_images and args.views:
        views_dir = Path(args.views)
        if views_dir.is_dir():
            views = load_views(views_dir)
        else:
            log.warning("views directory %s not found", views_dir)
    params = Params.for_cloud(cloud.points, seed=args.seed)
    report = run_pipeline(cloud, views, params,
                          use_images=not args.no_images)
    model = report.model

    meta = {"seed": args.seed, "iterations": report.iterations,
            "degraded": report.degraded}
    out = Path(args.output)
    export_all(model, out, meta=meta)

    quality = evaluate(model, cloud.points, params)
    run_report = {
        "timings_s": {k: round(v, 3) for k, v in report.timings.items()},
        "iterations": report.iterations,
        "degraded": report.degraded,
        "warnings": report.warnings,
        "rmse_percent": quality["rmse_percent"],
        "n_parts": quality["n_parts"],
        "n_connections": quality["n_connections"],
    }
    (out / "report.json").write_text(json.dumps(run_report, indent=2,
                                                sort_keys=True) + "\n")
    print(f"{quality['n_parts']} parts, {quality['n_connections']} connections, "
          f"RMSE {quality['rmse_percent']:.3f}% of D -> {out}")
    return 2 if report.degraded or report.warnings else 0


def _cmd_eval(args) -> int:
    model, doc = load_blueprint(args.model)
    cloud = load_ply(args.cloud)
    params = model.params or Params.for_cloud(cloud.points)
    truth = None
    if args.truth:
        truth, _ = load_blueprint(args.truth)
    report = evaluate(model, cloud.points, params, truth=truth)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carpre",
        description="Reverse engineering of carpentered objects: point cloud "
                    "+ posed images -> fabricable flat-part assembly.")
    parser.add_argument("--debug", action="store_true",
                        help="verbose logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic scene")
    p_synth.add_argument("spec", help="scene spec JSON")
    p_synth.add_argument("-o", "--output", required=True, help="output dir")
    p_synth.set_defaults(func=_cmd_synth)

    p_run = sub.add_parser("run", help="reconstruct an assembly from a scan")
    p_run.add_argument("--cloud", required=True, help="oriented PLY cloud")
    p_run.add_argument("--views", help="directory of posed images")
    p_run.add_argument("-o", "--output", required=True, help="output dir")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--no-images", action="store_true",
                       help="geometry-only reconstruction")
    p_run.add_argument("--debug", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_eval = sub.add_parser("eval", help="score a blueprint against a scan")
    p_eval.add_argument("--model", required=True, help="blueprint.json")
    p_eval.add_argument("--cloud", required=True, help="oriented PLY cloud")
    p_eval.add_argument("--truth", help="ground-truth blueprint for diffs")
    p_eval.add_argument("--debug", action="store_true")
    p_eval.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if getattr(args, "debug", False) else logging.INFO
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception:
        log.exception("fatal error in '%s'", args.command)
        return 1


if __name__ == "__main__":
    sys.exit(main())
