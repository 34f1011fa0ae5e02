"""Command-line entry point: run scenarios, list presets, validate configs.

Exit codes: 0 success, 2 configuration or usage error, 3 divergence,
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import PRESETS, build_config, config_hash, dump_tree, parse_value, read_tree, resolve_tree
from .sim import ConfigError, SimLog, run
from .spatial import rot_to_quat

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4
DV_TOLERANCE = 1e-6

TRAJECTORY_COLUMNS = ["t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz", "pdx", "pdy", "pdz"]
ERROR_COLUMNS = ["t", "epx", "epy", "epz", "ep_norm", "rot_err"] + [f"s{k}" for k in range(1, 7)] + ["s_norm"]
ESTIMATE_COLUMNS = (
    ["t", "active"]
    + [f"phi{k}" for k in range(1, 11)]
    + ["dhatx", "dhaty", "dhatz"]
    + [f"what{k}" for k in range(1, 7)]
    + ["sat_flag"]
)
LYAPUNOV_COLUMNS = ["t", "V", "dV"]


@dataclass
class RunSummary:
    """Run digest; every field is a pure function of the log."""

    termination: str
    steps: int
    final_ep_norm: Optional[float]
    steady_ep_norm: Optional[float]  # mean over the last 10% of steps
    max_s_norm_post_failure: Optional[float]  # None without events
    final_phi: list
    final_d_hat: list
    phi_error_norm: list  # ||phi_hat_i - phi/n||
    d_error_norm: list  # ||d_hat_i - d_i||
    v_violations: int  # steps with dV > 1e-6
    saturation_events: int  # (step, agent) pairs with a saturation flag
    diverged_at: Optional[float] = None


def _norm(x) -> float:
    return float(np.linalg.norm(x))


def summarize(sim_log: SimLog) -> RunSummary:
    cfg = sim_log.config
    recs = sim_log.records
    ep = [_norm(r.e_p) for r in recs]
    tail = max(1, math.ceil(len(recs) / 10)) if recs else 0
    t_fail = min((ev.t for ev in cfg.events), default=None)
    post = [_norm(r.s) for r in recs if t_fail is not None and r.t >= t_fail]
    truth = cfg.payload.phi() / cfg.n
    if recs:
        phi, d_hat = recs[-1].phi, recs[-1].d_hat
    else:
        phi = np.array([e.phi for e in cfg.estimator_init]) if cfg.estimator_init else np.zeros((cfg.n, 10))
        d_hat = np.array([e.d_hat for e in cfg.estimator_init]) if cfg.estimator_init else np.zeros((cfg.n, 3))
    return RunSummary(
        termination=sim_log.termination,
        steps=len(recs),
        final_ep_norm=ep[-1] if ep else None,
        steady_ep_norm=float(np.mean(ep[-tail:])) if ep else None,
        max_s_norm_post_failure=max(post) if post else None,
        final_phi=phi.tolist(),
        final_d_hat=d_hat.tolist(),
        phi_error_norm=[_norm(p - truth) for p in phi],
        d_error_norm=[_norm(d - g.d) for d, g in zip(d_hat, cfg.grasps)],
        v_violations=sum(1 for r in recs if r.dV > DV_TOLERANCE),
        saturation_events=int(sum(int(np.count_nonzero(r.saturated)) for r in recs)),
        diverged_at=sim_log.diverged_at,
    )


def _fmt(values) -> str:
    # repr of a Python float is the shortest string that round-trips exactly.
    return ",".join(repr(float(v)) for v in values)


def _write(path: Path, header, rows) -> None:
    try:
        with path.open("w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(_fmt(row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from None


def emit_logs(sim_log: SimLog, outdir, resolved_text: str) -> RunSummary:
    """Write the CSV logs, ``summary.json`` and ``config.resolved`` into ``outdir``."""
    out = Path(outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from None
    recs = sim_log.records
    cfg = sim_log.config

    def traj_rows():
        for r in recs:
            st = r.state
            yield [r.t, *st.p, *rot_to_quat(st.R), *st.v, *st.w, *(st.p + r.e_p)]

    def error_rows():
        for r in recs:
            yield [r.t, *r.e_p, _norm(r.e_p), r.rot_err, *r.s, _norm(r.s)]

    _write(out / "trajectory.csv", TRAJECTORY_COLUMNS, traj_rows())
    _write(out / "errors.csv", ERROR_COLUMNS, error_rows())
    for i in range(cfg.n):
        rows = (
            [r.t, int(r.active[i]), *r.phi[i], *r.d_hat[i], *r.w_hat[i], int(r.saturated[i])] for r in recs
        )
        _write(out / f"estimates_agent{i}.csv", ESTIMATE_COLUMNS, rows)
    _write(out / "lyapunov.csv", LYAPUNOV_COLUMNS, ([r.t, r.V, r.dV] for r in recs))
    summary = summarize(sim_log)
    doc = asdict(summary)
    doc["config_hash"] = config_hash(resolved_text)
    for name, text in (("summary.json", json.dumps(doc, indent=2) + "\n"), ("config.resolved", resolved_text)):
        path = out / name
        try:
            path.write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror or exc}") from None
    return summary


def _parse_set(item: str):
    key, sep, value = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"--set expects key=value, got {item!r}")
    return key.strip(), parse_value(value.strip())


def _parse_disable(item: str) -> dict:
    agent, sep, t = item.partition("@")
    try:
        if not sep:
            raise ValueError
        return {"kind": "disable_agent", "agent": int(agent), "t": float(t)}
    except ValueError:
        raise ConfigError(f"--disable expects AGENT@TIME (e.g. 2@5.0), got {item!r}") from None


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cotransport", description="Cooperative payload transport simulator.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write logs")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="YAML scenario file")
    src.add_argument("--preset", choices=sorted(PRESETS))
    r.add_argument("--out", default="out", help="output directory (default: ./out)")
    r.add_argument("--dt", type=float, help="step size [s]")
    r.add_argument("--duration", type=float, help="run length [s]")
    r.add_argument("--plant", choices=["wrench", "rotor"])
    r.add_argument("--disable", action="append", default=[], metavar="AGENT@TIME", help="add a failure event")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")

    p = sub.add_parser("preset", help="preset operations")
    p.add_argument("action", choices=["list"])

    v = sub.add_parser("validate", help="check a config file without running it")
    v.add_argument("--config", required=True)
    return ap


def _resolve_run_args(args) -> dict:
    raw = read_tree(args.config) if args.config else {"preset": args.preset}
    overrides = [_parse_set(s) for s in args.set]
    for key, value in (("sim.dt", args.dt), ("sim.duration", args.duration), ("scenario.plant", args.plant)):
        if value is not None:
            overrides.append((key, value))
    tree = resolve_tree(raw, overrides)
    if args.disable:
        tree["events"] = list(tree["events"]) + [_parse_disable(d) for d in args.disable]
        tree = resolve_tree(tree)
    return tree


def _cmd_run(args) -> int:
    tree = _resolve_run_args(args)
    cfg = build_config(tree)
    text = dump_tree(tree)
    log.info("running %s: %d steps of %g s", cfg.name, cfg.n_steps, cfg.dt)
    result = run(cfg)
    summary = emit_logs(result, args.out, text)
    print(f"{summary.termination}: {summary.steps} steps, final |e_p| = {summary.final_ep_norm}, logs in {args.out}")
    if result.termination != "Completed":
        print(f"diverged at t = {result.diverged_at}: {result.reason}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "preset":
            for name in sorted(PRESETS):
                print(name)
            return EXIT_OK
        if args.command == "validate":
            build_config(resolve_tree(read_tree(args.config)))
            print(f"{args.config}: ok")
            return EXIT_OK
        return _cmd_run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
