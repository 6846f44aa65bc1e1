"""Command-line front end: ``isoplab {profile,flow,verify,ball}``.

Exit status: 0 success, 1 verification or solver failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry as geo
from .flow import FlowTrace, evolve
from .profile import profile_curve, uniform_xi_grid
from .verify import DEFAULT_TOLERANCES, VerifyConfig, build_metric, run_all

log = logging.getLogger("isoplab")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    metric: dict = field(default_factory=lambda: {"builtin": "round"})
    n_grid: int = 512
    flow: dict = field(default_factory=lambda: {"t_end": 10.0, "record_every": 0.5, "n_grid": 64})
    profile: dict = field(default_factory=lambda: {"xi_points": 63, "xi_min": None})
    verify: dict = field(default_factory=lambda: {"window": [0.25, 0.75], "tolerances": {}})
    output: str = "."
    seed: int = 0
    jobs: int = 1

    def xi_grid(self) -> np.ndarray:
        n = int(self.profile.get("xi_points", 63))
        xi_min = self.profile.get("xi_min")
        if xi_min is None:
            return uniform_xi_grid(n)
        return np.linspace(float(xi_min), 1.0 - float(xi_min), n)

    def verify_config(self) -> VerifyConfig:
        tol = self.verify.get("tolerances", {}) or {}
        extra = {k: v for k, v in self.verify.items() if k not in ("window", "tolerances")}
        return VerifyConfig.from_dict(dict(
            metric=self.metric,
            n_grid=self.n_grid,
            flow_n_grid=int(self.flow.get("n_grid", 64)),
            t_end=float(self.flow.get("t_end", 10.0)),
            record_every=float(self.flow.get("record_every", 0.5)),
            xi_points=int(self.profile.get("xi_points", 63)),
            window=tuple(self.verify.get("window", (0.25, 0.75))),
            seed=self.seed,
            jobs=self.jobs,
            tolerances=tol,
            **extra,
        ))


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(args) -> RunConfig:
    cfg = RunConfig()
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - set(RunConfig.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in RunConfig.__dataclass_fields__:
        if key in data:
            cur = getattr(cfg, key)
            setattr(cfg, key, _merge(cur, data[key]) if isinstance(cur, dict) else data[key])

    # flags override the file
    if args.builtin:
        name, *rest = args.builtin
        if len(rest) > 1:
            raise ConfigError("--builtin takes a name and at most one parameter")
        try:
            param = float(rest[0]) if rest else None
        except ValueError as exc:
            raise ConfigError(f"bad builtin parameter {rest[0]!r}") from exc
        cfg.metric = {"builtin": name, "param": param}
    if args.metric:
        cfg.metric = {"path": args.metric}
    if args.n_grid is not None:
        cfg.n_grid = args.n_grid
    if args.out is not None:
        cfg.output = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.jobs = args.jobs if args.jobs is not None else int(os.environ.get("ISOPLAB_JOBS", cfg.jobs))
    if getattr(args, "xi_points", None) is not None:
        cfg.profile["xi_points"] = args.xi_points
    if getattr(args, "xi_min", None) is not None:
        cfg.profile["xi_min"] = args.xi_min
    if getattr(args, "t_end", None) is not None:
        cfg.flow["t_end"] = args.t_end
    if getattr(args, "record_every", None) is not None:
        cfg.flow["record_every"] = args.record_every
    if getattr(args, "flow_n_grid", None) is not None:
        cfg.flow["n_grid"] = args.flow_n_grid
    if getattr(args, "tolerance", None) is not None:
        cfg.verify["tolerances"] = {k: args.tolerance for k in DEFAULT_TOLERANCES}
    return cfg


def _metric(cfg: RunConfig, n_grid: int) -> geo.RotSymMetric:
    try:
        return build_metric(cfg.metric, n_grid)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed metric JSON {cfg.metric.get('path')}: {exc}") from exc
    except (OSError, ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"cannot build metric {cfg.metric}: {exc}") from exc


def cmd_profile(cfg: RunConfig) -> int:
    m = _metric(cfg, cfg.n_grid)
    xi = cfg.xi_grid()
    try:
        curve = profile_curve(m, xi, jobs=cfg.jobs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    except Exception as exc:  # noqa: BLE001
        log.error("profile solver failed: %s", exc)
        return EXIT_FAIL
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    curve.save_csv(out / "profile.csv")
    log.info("wrote %s (%d points)", out / "profile.csv", len(curve.points))
    return EXIT_OK


def cmd_flow(cfg: RunConfig) -> int:
    n = int(cfg.flow.get("n_grid", 64))
    m = _metric(cfg, n)
    try:
        trace = evolve(m, float(cfg.flow["t_end"]), float(cfg.flow["record_every"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    trace.save(cfg.output)
    log.info("flow %s at t=%.6g, %d snapshots in %s", trace.status, trace.times[-1], len(trace.times), cfg.output)
    if trace.status == "failed":
        log.error("flow invariant breach: %s", trace.breach)
        return EXIT_FAIL
    return EXIT_OK


def cmd_verify(cfg: RunConfig, trace_dir: str | None) -> int:
    try:
        vcfg = cfg.verify_config()
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    trace = None
    if trace_dir is not None:
        try:
            trace = FlowTrace.load(trace_dir)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load trace {trace_dir}: {exc}") from exc
    report = run_all(vcfg, trace)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_ball(cfg: RunConfig, center: float, radius: float) -> int:
    m = _metric(cfg, cfg.n_grid)
    try:
        b = geo.geodesic_ball(m, center, radius)
    except geo.FocalRadiusExceeded as exc:
        log.error("%s", exc)
        return EXIT_FAIL
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(json.dumps({"center_colatitude": b.center_colatitude, "radius": b.radius,
                      "area": b.area, "perimeter": b.perimeter, "kappa": b.kappa}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override it")
    src = common.add_mutually_exclusive_group()
    src.add_argument("--builtin", nargs="+", metavar="NAME [PARAM]",
                     help="round | const C | quadrupole A | cos2 A")
    src.add_argument("--metric", help="metric JSON file")
    common.add_argument("--n-grid", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, help="worker processes (default $ISOPLAB_JOBS or 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="isoplab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("profile", parents=[common], help="sample the isoperimetric profile")
    sp.add_argument("--xi-points", type=int)
    sp.add_argument("--xi-min", type=float)

    sf = sub.add_parser("flow", parents=[common], help="evolve under normalized Ricci flow")
    sf.add_argument("--t-end", type=float)
    sf.add_argument("--record-every", type=float)
    sf.add_argument("--flow-n-grid", type=int)

    sv = sub.add_parser("verify", parents=[common], help="run all checks and write report.json")
    sv.add_argument("--trace", help="existing trace directory to verify instead of running the flow")
    sv.add_argument("--t-end", type=float)
    sv.add_argument("--record-every", type=float)
    sv.add_argument("--flow-n-grid", type=int)
    sv.add_argument("--xi-points", type=int)
    sv.add_argument("--tolerance", type=float, help="set every tolerance to this value")

    sb = sub.add_parser("ball", parents=[common], help="area and perimeter of one geodesic ball")
    sb.add_argument("--center", type=float, required=True)
    sb.add_argument("--radius", type=float, required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        if cfg.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if args.command == "profile":
            return cmd_profile(cfg)
        if args.command == "flow":
            return cmd_flow(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, args.trace)
        return cmd_ball(cfg, args.center, args.radius)
    except ConfigError as exc:
        print(f"isoplab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
