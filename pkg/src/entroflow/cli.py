"""Command line entry point.

Examples
--------
    entroflow run torus_kernel --out runs/
    entroflow run --config my.json --set a=0.25 --set geometry.resolution=[32,32]
    entroflow run --all --workers 4
    entroflow verify runs/torus_kernel/trace.csv
    entroflow oracle --n 2 --a 0.25
    entroflow spectrum sphere_kernel --k 16
    entroflow plot runs/torus_kernel/trace.csv --out charts/

Exit codes: 0 when every verdict passes, 2 when a verdict fails, 1 on an
execution error (the module's message is printed verbatim).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import config as cfgmod
from .charts import write_line_chart
from .diagnostics import (EntropyTrace, euclidean_oracle, euclidean_quadrature, run_trace,
                          standard_verdicts, tolerance_model, verify_dissipation, verify_mass,
                          verify_monotone, build_scenario)
from .errors import EntroflowError
from .operators import low_spectrum

log = logging.getLogger("entroflow")

ENTROPY_COLUMNS = ("W", "Y0", "Ya", "Ha")
EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
DEFAULT_OUT = "entroflow-out"


@dataclass
class RunManifest:
    config: dict
    first_nonzero: Optional[float]
    tolerances: dict
    files: list = field(default_factory=list)
    exit_status: Optional[int] = None
    trace_meta: dict = field(default_factory=dict)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def default_out_dir() -> str:
    return os.environ.get("ENTROFLOW_OUT", DEFAULT_OUT)


def write_charts(trace: EntropyTrace, out_dir: Path, title: str = "") -> list:
    files = []
    for col in ENTROPY_COLUMNS:
        if col in trace:
            path = out_dir / f"{col}.svg"
            write_line_chart(path, trace["t"], trace[col], "t", col, title)
            files.append(path.name)
    return files


def run(cfg: cfgmod.ScenarioConfig, out_dir) -> RunManifest:
    """Execute one scenario and write trace, verdicts, charts and manifest into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        trace = run_trace(cfg)
    except EntroflowError:
        # the run started, so a manifest records the failure before the error propagates
        RunManifest(cfg.to_dict(), None, {}, ["manifest.json"], EXIT_ERROR).write(
            out_dir / "manifest.json")
        raise
    trace.meta.update(tol_scale=cfg.tol_scale, oracle_tol=cfg.oracle_tol)
    verdicts = standard_verdicts(trace, cfg)
    tol = {"monotone": cfg.monotone_tol, "rigidity_threshold": cfg.rigidity_threshold}
    if "adj_dissipation" in trace:
        tol["dissipation"] = tolerance_model(trace, cfg.tol_scale)

    trace.to_csv(out_dir / "trace.csv")
    lines = [v.line() for v in verdicts]
    (out_dir / "verdicts.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(f"[{cfg.name}] {line}")
    files = ["trace.csv", "verdicts.txt"] + write_charts(trace, out_dir, cfg.name) + ["manifest.json"]
    status = EXIT_PASS if all(v.passed for v in verdicts) else EXIT_FAIL
    manifest = RunManifest(cfg.to_dict(), trace.meta.get("first_nonzero"), tol, files, status,
                           trace.meta)
    manifest.write(out_dir / "manifest.json")
    return manifest


def _run_worker(name: str, overrides, out_root: str):
    try:
        cfg = cfgmod.registry_config(name, overrides)
        return name, run(cfg, Path(out_root) / name).exit_status, ""
    except (EntroflowError, ValueError) as exc:
        return name, EXIT_ERROR, str(exc)


def _common_overrides(args) -> list:
    extra = list(args.set or [])
    if args.seed is not None:
        extra.append(f"seed={args.seed}")
    if args.tol_scale is not None:
        extra.append(f"tol_scale={args.tol_scale}")
    return extra


def _load_config(args) -> cfgmod.ScenarioConfig:
    overrides = _common_overrides(args)
    if args.config:
        base = dict(cfgmod.REGISTRY[args.scenario], name=args.scenario) if args.scenario else None
        return cfgmod.parse_config(args.config, overrides, base)
    if args.scenario:
        return cfgmod.registry_config(args.scenario, overrides)
    return cfgmod.parse_config(None, overrides)


def cmd_run(args) -> int:
    out_root = Path(args.out or default_out_dir())
    if args.all:
        names = list(cfgmod.REGISTRY)
        overrides = _common_overrides(args)
        status = EXIT_PASS
        with ProcessPoolExecutor(max_workers=args.workers or os.cpu_count()) as pool:
            for name, code, msg in pool.map(_run_worker, names, [overrides] * len(names),
                                            [str(out_root)] * len(names)):
                if msg:
                    print(f"[{name}] error: {msg}", file=sys.stderr)
                status = max(status, code)
        return status
    cfg = _load_config(args)
    out_dir = out_root if args.out else out_root / cfg.name
    return run(cfg, out_dir).exit_status


def _trace_meta(trace_path: Path, args) -> dict:
    manifest = trace_path.with_name("manifest.json")
    if args.manifest:
        manifest = Path(args.manifest)
    if manifest.exists():
        return json.loads(manifest.read_text())["trace_meta"]
    if args.config or args.scenario:
        cfg = _load_config(args)
        manifold, _ = build_scenario(cfg)
        return {"kind": cfg.kind, "dt": cfg.dt, "mesh_size": manifold.mesh_size,
                "tol_constant": cfg.tol_constant, "tol_scale": cfg.tol_scale,
                "oracle_tol": cfg.oracle_tol}
    raise EntroflowError(f"no manifest.json next to {trace_path}; pass --manifest or --config")


def cmd_verify(args) -> int:
    path = Path(args.trace)
    meta = _trace_meta(path, args)
    trace = EntropyTrace.from_csv(path, meta)
    verdicts = [verify_mass(trace)]
    for col in ("W", "Y0", "Ya", "Ha"):
        if col in trace:
            verdicts.append(verify_monotone(trace, col, args.monotone_tol))
    if "adj_dissipation" in trace:
        verdicts.extend(verify_dissipation(trace, tolerance_model(trace, args.tol_scale)))
    for v in verdicts:
        print(v.line())
    return EXIT_PASS if all(v.passed for v in verdicts) else EXIT_FAIL


def cmd_oracle(args) -> int:
    t_grid = np.linspace(args.t_start, args.t_end, args.count)
    trace = euclidean_oracle(args.n, args.a, t_grid)
    worst = 0.0
    print("t,W,Y0,Ya,adj_dissipation,max_abs_diff_vs_quadrature")
    for i, t in enumerate(t_grid):
        q = euclidean_quadrature(args.n, args.a, float(t))
        diff = max(abs(q[c] - trace[c][i]) for c in ("W", "Y0", "Ya", "omega", "adj_dissipation",
                                                      "rigidity_gap"))
        worst = max(worst, diff)
        print(f"{t:.6g},{trace['W'][i]:.12g},{trace['Y0'][i]:.12g},{trace['Ya'][i]:.12g},"
              f"{trace['adj_dissipation'][i]:.12g},{diff:.3e}")
    tol = 1e-8 * (args.tol_scale or 1.0)
    ok = worst <= tol
    print(f"oracle-vs-quadrature {'PASS' if ok else 'FAIL'} worst={worst:.6e} tol={tol:.6e}")
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_spectrum(args) -> int:
    cfg = _load_config(args)
    _, op = build_scenario(cfg)
    spec = low_spectrum(op, min(args.k, op.vertex_count), seed=cfg.seed)
    for line in spec.report_lines():
        print(line)
    return EXIT_PASS


def cmd_plot(args) -> int:
    path = Path(args.trace)
    trace = EntropyTrace.from_csv(path)
    out = Path(args.out) if args.out else path.parent
    out.mkdir(parents=True, exist_ok=True)
    for name in write_charts(trace, out, path.stem):
        print(out / name)
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON scenario config")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key (repeatable; geometry.KEY for geometry)")
    common.add_argument("--out", help="output directory (default $ENTROFLOW_OUT or ./entroflow-out)")
    common.add_argument("--seed", type=int, default=None, help="eigensolver seed (default 42)")
    common.add_argument("--workers", type=int, default=None, help="worker pool size for run --all")
    common.add_argument("--tol-scale", type=float, default=None, help="multiply every model tolerance")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="entroflow", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run a scenario and emit trace, verdicts, charts")
    r.add_argument("scenario", nargs="?", help=f"registry scenario ({', '.join(cfgmod.REGISTRY)})")
    r.add_argument("--all", action="store_true", help="run every registry scenario")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", parents=[common], help="re-check a stored trace")
    v.add_argument("trace")
    v.add_argument("scenario", nargs="?")
    v.add_argument("--manifest", help="manifest.json with the trace metadata")
    v.add_argument("--monotone-tol", type=float, default=1e-6)
    v.set_defaults(func=cmd_verify)

    o = sub.add_parser("oracle", parents=[common], help="Euclidean closed forms vs quadrature")
    o.add_argument("--n", type=int, default=2)
    o.add_argument("--a", type=float, default=0.0)
    o.add_argument("--t-start", type=float, default=0.05)
    o.add_argument("--t-end", type=float, default=10.0)
    o.add_argument("--count", type=int, default=12)
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser("spectrum", parents=[common], help="print the low spectrum of a scenario")
    s.add_argument("scenario", nargs="?")
    s.add_argument("--k", type=int, default=16)
    s.set_defaults(func=cmd_spectrum)

    pl = sub.add_parser("plot", parents=[common], help="SVG charts of a stored trace")
    pl.add_argument("trace")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (EntroflowError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
