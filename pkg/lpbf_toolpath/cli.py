"""
Command-line interface

    lpbf-toolpath sample       --domain D
    lpbf-toolpath train        --domain D
    lpbf-toolpath generate     --domain D --model M [--mode direct|voronoi-island]
    lpbf-toolpath baseline     --domain D --strategy zigzag|chessboard|atg
    lpbf-toolpath compare      --domain D --strategy drl,atg,zigzag [--model M]
    lpbf-toolpath export-gcode --toolpath T
    lpbf-toolpath angle-study

Every command writes into --out (default ./out) and finishes with a
manifest.json listing its outputs. Files are staged in a temporary
directory and only moved into --out when the command succeeds.
"""

import argparse
import dataclasses
import json
import logging
import math
import os
import shutil
import sys
import tempfile

import numpy as np

from . import __version__
from .baselines import BaselineSpec, generate as generate_baseline
from .config import load_config
from .env import OBSERVATION_DIM, ToolpathEnv, detect_sensitive_regions
from .errors import ToolpathError
from .geometry import load_domain, sample_uniform
from .learner import evaluate_policy, load_model, save_model, train
from .pathplan import export_gcode, finetune_gcode, plan_islands
from .report import (RunManifest, svg_angle_study, svg_depth_overlay, svg_points, svg_toolpath,
                     svg_training_curves, write_angle_study, write_depth_trace, write_episode_log,
                     write_field_snapshot, write_grid, write_summary)
from .thermal import TEMPLATE_ANGLES, ThermalSimulator, calibrate_absorptivity, depth_stats
from .toolpath import Toolpath

logger = logging.getLogger(__name__)

STRATEGIES = ("drl", "zigzag", "chessboard", "atg")


class _Run:
    """Per-command context: settings, staging directory and manifest"""

    def __init__(self, args):
        overrides = {
            "geometry.hatch_mm": None if args.hatch_um is None else args.hatch_um / 1000.0,
            "learner.episodes": args.episodes,
            "learner.seed": args.seed,
        }
        self.args = args
        self.cached_model = None
        self.config = load_config(args.config, overrides)
        self.stage = tempfile.mkdtemp(prefix=".lpbf-", dir=_parent_dir(args.out))
        self.manifest = RunManifest(
            command=args.command, version=__version__, config=self.config.snapshot(),
            seeds={"learner": self.config.learner.seed},
            inputs={k: v for k, v in (("domain", getattr(args, "domain", None)),
                                      ("model", getattr(args, "model", None)),
                                      ("toolpath", getattr(args, "toolpath", None)),
                                      ("config", args.config)) if v},
        )

    def path(self, *parts):
        full = os.path.join(self.stage, *parts)
        os.makedirs(os.path.dirname(full), exist_ok=True)
        return full

    def domain(self):
        if not self.args.domain:
            raise ToolpathError(f"'{self.args.command}' needs --domain")
        domain, seeds = load_domain(self.args.domain)
        return domain, seeds, sample_uniform(domain, self.config.geometry.hatch_mm,
                                             tol=self.config.geometry.boundary_tol_mm)

    def simulator(self):
        cfg = self.config.thermal
        sim = ThermalSimulator.from_config(cfg)
        if cfg.calibrate:
            result = calibrate_absorptivity(sim, cfg.target_depth_um, cfg.calibration_low, cfg.calibration_high)
            self.manifest.calibration = dataclasses.asdict(result)
            sim = sim.with_laser(absorptivity=result.absorptivity)
        else:
            self.manifest.calibration = {"absorptivity": cfg.absorptivity, "calibrated": False}
        return sim

    def publish(self):
        self.manifest.write(self.stage)
        os.makedirs(self.args.out, exist_ok=True)
        for root, _, files in os.walk(self.stage):
            for fname in files:
                src = os.path.join(root, fname)
                dst = os.path.join(self.args.out, os.path.relpath(src, self.stage))
                os.makedirs(os.path.dirname(dst), exist_ok=True)
                os.replace(src, dst)
        logger.info("Wrote %d files to %s", len(self.manifest.outputs) + 1, self.args.out)

    def discard(self):
        shutil.rmtree(self.stage, ignore_errors=True)


def _parent_dir(out):
    parent = os.path.dirname(os.path.abspath(out))
    os.makedirs(parent, exist_ok=True)
    return parent


def _model(run):
    if not run.args.model:
        raise ToolpathError(f"'{run.args.command}' needs --model")
    return load_model(run.args.model, expected_input=OBSERVATION_DIM)


def _env_kwargs(config):
    return {"env_config": config.env, "velocity": config.thermal.velocity_mm_s}


def cmd_sample(run):
    domain, _, grid = run.domain()
    write_grid(run.path("grid.csv"), grid)
    svg_points(run.path("grid.svg"), grid, domain.vertices, title=f"{grid.n_points} sample points")
    logger.info("Sampled %d points at h=%.1fum", grid.n_points, grid.hatch_um)


def cmd_train(run):
    domain, _, grid = run.domain()
    cfg = run.config
    every = cfg.run.snapshot_every

    def snapshot(episode, agent, env, record):
        if every and episode % every == 0:
            path, stats = evaluate_policy(agent.net, grid, **_env_kwargs(cfg))
            svg_toolpath(run.path("snapshots", f"episode_{episode:04d}.svg"), path, domain.vertices,
                         title=f"episode {episode}: reward {stats.total_reward:.3f}, "
                               f"{stats.sensitive_count} sensitive")

    policy, log = train(lambda: ToolpathEnv(grid, cfg.env, cfg.thermal.velocity_mm_s), cfg.learner,
                        callback=snapshot, progress=not run.args.quiet)
    calibration = run.simulator().laser.absorptivity

    save_model(policy, run.path("model.json"), cfg.snapshot(), {"absorptivity": calibration})
    write_episode_log(run.path("training_log.csv"), log)
    svg_training_curves(run.path("training_curves.svg"), log)
    path, stats = evaluate_policy(policy, grid, metadata={"episodes": cfg.learner.episodes}, **_env_kwargs(cfg))
    path.save(run.path("toolpath.json"))
    svg_toolpath(run.path("toolpath.svg"), path, domain.vertices)
    logger.info("Greedy rollout: reward %.4f, %d sensitive regions, %d void moves",
                stats.total_reward, stats.sensitive_count, stats.void_moves)


def cmd_generate(run):
    domain, seeds, grid = run.domain()
    model = _model(run)
    cfg = run.config
    if run.args.mode == "direct":
        path, _ = evaluate_policy(model, grid, metadata={"mode": "direct"}, **_env_kwargs(cfg))
    else:
        plan = plan_islands(domain, grid, model, cfg.geometry.island_size_mm, seeds=seeds,
                            n_random=cfg.geometry.voronoi_random_seeds,
                            rng=np.random.default_rng(cfg.learner.seed), decay=cfg.pathplan.idw_decay,
                            threshold=cfg.pathplan.gcode_threshold_h * grid.hatch, **_env_kwargs(cfg))
        path = plan.toolpath
        _save_json(run.path("island_plan.json"), plan.to_dict())
    path.save(run.path("toolpath.json"))
    svg_toolpath(run.path("toolpath.svg"), path, domain.vertices)


def _save_json(path, data):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


def _strategy_path(run, name, domain, grid):
    cfg = run.config
    if name == "drl":
        path, _ = evaluate_policy(run.cached_model, grid, metadata={"generator": "drl"}, **_env_kwargs(cfg))
        return path
    spec = BaselineSpec(kind=name, island_size=cfg.geometry.island_size_mm)
    return generate_baseline(spec, grid, domain, **_env_kwargs(cfg))


def cmd_baseline(run):
    domain, _, grid = run.domain()
    names = _strategies(run.args.strategy)
    if len(names) != 1 or names[0] == "drl":
        raise ToolpathError("'baseline' takes exactly one of --strategy zigzag|chessboard|atg")
    path = _strategy_path(run, names[0], domain, grid)
    path.save(run.path("toolpath.json"))
    svg_toolpath(run.path("toolpath.svg"), path, domain.vertices, title=names[0])


def _strategies(text):
    names = [s.strip().lower() for s in (text or "").split(",") if s.strip()]
    for name in names:
        if name not in STRATEGIES:
            raise ToolpathError(f"unknown strategy {name!r}; expected one of {', '.join(STRATEGIES)}")
    return names


def cmd_compare(run):
    names = _strategies(run.args.strategy or "drl,atg,zigzag")
    if len(names) < 2:
        raise ToolpathError("'compare' needs at least two strategies")
    domain, _, grid = run.domain()
    if "drl" in names:
        run.cached_model = _model(run)
    sim = run.simulator()
    coeff = run.config.env.sensitive_coeff
    xmin, ymin, xmax, ymax = grid.bounds
    extent = (xmin - grid.hatch, ymin - grid.hatch, xmax + grid.hatch, ymax + grid.hatch)

    rows, traces = [], {}
    for n, name in enumerate(names):
        tag = f"{n + 1}_{name}"
        path = _strategy_path(run, name, domain, grid)
        events = sim.discretize(path)
        trace = sim.trace(events)
        write_depth_trace(run.path(f"depth_{tag}.csv"), trace)
        write_field_snapshot(run.path(f"field_{tag}.csv"), *sim.field_snapshot(events, events.end_time, extent))
        path.save(run.path(f"toolpath_{tag}.json"))
        svg_toolpath(run.path(f"toolpath_{tag}.svg"), path, domain.vertices, title=name)
        stats = depth_stats(trace)
        rows.append({"strategy": name, "avg_depth_um": stats["avg"], "peak_depth_um": stats["peak"],
                     "sensitive_count": detect_sensitive_regions(path, coeff).count,
                     "void_moves": path.void_count(), "path_length_mm": path.length()})
        traces[name if name not in traces else tag] = trace
        logger.info("%s: avg %.2fum, peak %.2fum", name, stats["avg"], stats["peak"])
    write_summary(run.path("summary.csv"), rows)
    svg_depth_overlay(run.path("depth_overlay.svg"), traces)


def cmd_export_gcode(run):
    if not run.args.toolpath:
        raise ToolpathError("'export-gcode' needs --toolpath")
    path = Toolpath.load(run.args.toolpath)
    program = finetune_gcode(path, run.config.pathplan.gcode_threshold_h * path.hatch)
    export_gcode(program, run.path("toolpath.gcode"))
    logger.info("G-code: %d motions, %d isolated points removed", len(program.motions), len(program.removed))


def cmd_angle_study(run):
    cfg = run.config.thermal
    sim = run.simulator()
    angles = list(TEMPLATE_ANGLES) + [a for a in cfg.sweep_angles() if a not in TEMPLATE_ANGLES]
    results = sim.angle_template_study(angles, cfg.template_leg_mm, cfg.near_vertex_mm)
    write_angle_study(run.path("angle_study.csv"), results)
    svg_angle_study(run.path("angle_study.svg"), results)
    straight = dict(results).get(180.0, math.nan)
    logger.info("Angle study: %d angles, straight depth %.2fum", len(results), straight)


COMMANDS = {
    "sample": cmd_sample,
    "train": cmd_train,
    "generate": cmd_generate,
    "baseline": cmd_baseline,
    "compare": cmd_compare,
    "export-gcode": cmd_export_gcode,
    "angle-study": cmd_angle_study,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="lpbf-toolpath",
                                     description="Thermally uniform LPBF scan patterns by deep Q-learning")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="YAML config file (default: $LPBF_TOOLPATH_CONFIG)")
    common.add_argument("--out", default="out", help="Output directory")
    common.add_argument("--seed", type=int, default=None, help="RNG seed (learner.seed)")
    common.add_argument("--hatch-um", type=float, default=None, help="Hatch spacing in um (geometry.hatch_mm)")
    common.add_argument("--episodes", type=int, default=None, help="Training episodes (learner.episodes)")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    common.add_argument("--quiet", "-q", action="store_true", help="Warnings only, no progress bar")

    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name, parents=[common])
        if name not in ("export-gcode", "angle-study"):
            cmd.add_argument("--domain", help="Domain JSON file")
        if name in ("generate", "compare"):
            cmd.add_argument("--model", help="Model JSON written by 'train'")
        if name in ("baseline", "compare"):
            cmd.add_argument("--strategy", help="Comma-separated: " + ", ".join(STRATEGIES))
        if name == "generate":
            cmd.add_argument("--mode", choices=("direct", "voronoi-island"), default="direct")
        if name == "export-gcode":
            cmd.add_argument("--toolpath", help="Toolpath JSON")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    run = None
    try:
        run = _Run(args)
        COMMANDS[args.command](run)
        run.publish()
    except (ToolpathError, ValueError, OSError) as e:
        logger.error("%s failed: %s", args.command, e)
        return 2
    except Exception:
        logger.exception("%s failed unexpectedly", args.command)
        return 1
    finally:
        if run is not None:
            run.discard()
    return 0


if __name__ == "__main__":
    sys.exit(main())
