"""Batch command line: ``micropolar {microflow,linear,nonlinear,decay-report,verify}``."""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from . import diagnostics, verify
from .config import RunConfig, config_from_dict, echo_config, parse_config
from .errors import ConfigError, ConvergenceError, DomainError, MicropolarError
from .linear import LinearProblem, coercivity_constants, energy_identity_check, functionals, solve_linear
from .microflow import MicroflowSpec, PotentialMicroflow, make_conservative_data
from .nonlinear import ForcingProfile, solve_micropolar
from .random_fields import (
    STREAM_FORCE_U,
    STREAM_FORCE_W,
    STREAM_MICROROTATION,
    STREAM_VELOCITY,
    random_vector_field,
)
from .snapshot import write_snapshot
from .spectral import Grid, curl, sobolev_norm, synthesize

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


class RunDiverged(Exception):
    def __init__(self, err: ConvergenceError):
        super().__init__(str(err))
        self.err = err


def _dumps(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"))


class RunWriter:
    """Owns the output directory of one run."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.root = Path(cfg.output.directory)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "snapshots").mkdir(exist_ok=True)
        (self.root / "config.json").write_text(echo_config(cfg))
        self._diag = open(self.root / "diagnostics.ndjson", "w", encoding="utf-8")
        self._index = open(self.root / "snapshots" / "index.ndjson", "w", encoding="utf-8")

    def record(self, rec: dict):
        self._diag.write(_dumps(rec) + "\n")

    def snapshot(self, step: int, t: float, fields: dict):
        name = f"step_{step:07d}.mpsf"
        write_snapshot(self.root / "snapshots" / name, fields)
        self._index.write(_dumps({"step": step, "t": t, "file": name}) + "\n")

    def close(self):
        self._diag.close()
        self._index.close()

    def report(self, doc: dict, text: str, stem: str = "report"):
        formats = self.cfg.output.formats
        if "json" in formats:
            (self.root / f"{stem}.json").write_text(json.dumps(doc, indent=2) + "\n")
        if "text" in formats:
            (self.root / f"{stem}.txt").write_text(text)


# --- scenario data ------------------------------------------------------------

def build_grid(cfg: RunConfig) -> Grid:
    return Grid(cfg.grid.n_modes, Fraction(cfg.grid.dealias_fraction))


def build_zeta0(cfg: RunConfig, grid: Grid):
    m = cfg.data.microflow
    spec = MicroflowSpec(q=cfg.sobolev.q, seed=cfg.seed, spectrum_slope=m.spectrum_slope,
                         mode_cutoff=m.mode_cutoff, amplitude=m.amplitude)
    return make_conservative_data(spec, grid)


def build_perturbation(cfg: RunConfig, grid: Grid):
    d = cfg.data
    u = random_vector_field(grid, cfg.seed, STREAM_VELOCITY, decay=d.perturbation_slope,
                            cutoff=d.perturbation_cutoff, kind="solenoidal", l2=d.u_amplitude)
    w = random_vector_field(grid, cfg.seed, STREAM_MICROROTATION, decay=d.perturbation_slope,
                            cutoff=d.perturbation_cutoff, include_mean=True, l2=d.omega_amplitude)
    return u, w


def build_forcing(cfg: RunConfig, grid: Grid) -> ForcingProfile:
    fc = cfg.forcing
    if fc.C == 0:
        return ForcingProfile(None, fc.envelope, fc.mu, 0.0)
    f0 = random_vector_field(grid, cfg.seed, STREAM_FORCE_U, decay=fc.spectrum_slope, cutoff=fc.cutoff,
                             kind="solenoidal")
    g0 = random_vector_field(grid, cfg.seed, STREAM_FORCE_W, decay=fc.spectrum_slope, cutoff=fc.cutoff)
    return ForcingProfile.from_fields(f0, g0, fc.envelope, fc.mu, fc.C)


def _stride_hit(cfg: RunConfig, n: int) -> bool:
    return n % cfg.numerics.snapshot_stride == 0 or n == cfg.n_steps


# --- scenarios ----------------------------------------------------------------

def run_microflow(cfg: RunConfig, out: RunWriter) -> dict:
    grid = build_grid(cfg)
    params = cfg.params
    zeta0 = build_zeta0(cfg, grid)
    flow = PotentialMicroflow(zeta0, params)
    dt = cfg.numerics.dt
    prev = None
    monotone = True
    for n in range(cfg.n_steps + 1):
        t = n * dt
        z = flow(t)
        rec = {
            "t": t,
            "zeta_Hq": sobolev_norm(z, cfg.sobolev.q),
            "zeta_L2": sobolev_norm(z),
            "curl_max": float(np.max(np.abs(synthesize(curl(z))))),
        }
        if prev is not None and rec["zeta_L2"] > prev:
            monotone = False
        prev = rec["zeta_L2"]
        out.record(rec)
        if _stride_hit(cfg, n):
            out.snapshot(n, t, {"zeta": z})
    return {"steps": cfg.n_steps, "monotone_L2": monotone, "final": rec}


def run_linear(cfg: RunConfig, out: RunWriter) -> dict:
    grid = build_grid(cfg)
    params = cfg.params
    zeta0 = build_zeta0(cfg, grid)
    u0, w0 = build_perturbation(cfg, grid)
    profile = build_forcing(cfg, grid)
    forcing = None if profile.is_zero else (lambda t: profile(t, grid))
    s = cfg.sobolev.s
    problem = LinearProblem(params, zeta0, u0, w0, forcing=forcing, s=s)
    num = cfg.numerics
    try:
        traj = solve_linear(problem, num.horizon, num.dt, picard_tol=num.picard_tol, max_iters=num.max_iters,
                            enforce_contraction=num.enforce_contraction)
    except ConvergenceError as err:
        raise RunDiverged(err) from err
    consts = coercivity_constants(params)
    violations = 0
    for n, (t, u, w) in enumerate(zip(traj.times, traj.u, traj.omega)):
        f, g = problem.forcing_at(t)
        e = functionals(u, w, f, g, problem.microflow(t), params, s, t)
        top = sobolev_norm(u, 1 + s, homogeneous=True) ** 2 + sobolev_norm(w, 1 + s) ** 2
        if e.D < consts.C0 * e.E + consts.C1 * top - 1e-10 * max(e.D, 1e-300):
            violations += 1
        out.record({
            "t": float(t), "E": e.E, "D": e.D, "F": e.F,
            "u_Hs": sobolev_norm(u, s), "w_Hs": sobolev_norm(w, s),
            "picard_iters": int(traj.iterations[n]),
        })
        if _stride_hit(cfg, n):
            out.snapshot(n, float(t), {"u": u, "omega": w})
    defect = energy_identity_check(traj, problem) if len(traj) >= 3 else None
    return {"steps": len(traj) - 1, "dt_used": traj.dt, "energy_identity_defect": defect,
            "coercivity": {"C0": consts.C0, "C1": consts.C1, "violations": violations}}


def run_nonlinear(cfg: RunConfig, out: RunWriter) -> dict:
    grid = build_grid(cfg)
    params = cfg.params
    zeta0 = build_zeta0(cfg, grid)
    du, dw = build_perturbation(cfg, grid)
    u0 = du.with_mean(cfg.data.velocity_mean)
    w0 = zeta0 + dw
    forcing = build_forcing(cfg, grid)
    microflow = PotentialMicroflow(zeta0, params)
    s = cfg.sobolev.s
    num = cfg.numerics
    dt = num.dt
    ladder = cfg.sobolev.theta_ladder
    stats = {"max_iters": 0, "max_contraction": 0.0, "last_contraction": 0.0}

    def callback(state, iters, ratio):
        n = int(round(state.t / dt))
        zeta = microflow(state.t)
        fluct = state.u.with_mean((0.0, 0.0, 0.0))
        h = state.omega - zeta
        rec = {
            "t": state.t,
            "E0": 0.5 * params.rho * sobolev_norm(fluct) ** 2 + 0.5 * params.j * sobolev_norm(h) ** 2,
            "u_H1s": sobolev_norm(fluct, 1 + s, homogeneous=True),
            "w_minus_zeta_H1s": sobolev_norm(h, 1 + s),
            "p_H1s": sobolev_norm(state.p, 1 + s, homogeneous=True),
            "picard_iters": int(iters),
            "contraction": float(ratio),
        }
        for theta in ladder:
            rec[diagnostics.interp_key(theta)] = diagnostics.interpolated_norm(fluct, state.omega, zeta, theta, s)
        out.record(rec)
        if _stride_hit(cfg, n):
            out.snapshot(n, state.t, {"u": state.u, "omega": state.omega, "p": state.p})
        stats["max_iters"] = max(stats["max_iters"], int(iters))
        stats["max_contraction"] = max(stats["max_contraction"], float(ratio))
        stats["last_contraction"] = float(ratio)

    try:
        solve_micropolar((u0, w0), zeta0, forcing, params, num.horizon, dt, s=s, picard_tol=num.picard_tol,
                         max_iters=num.max_iters, store_every=cfg.n_steps, callback=callback)
    except ConvergenceError as err:
        raise RunDiverged(err) from err
    return {"steps": cfg.n_steps, **stats}


SCENARIOS = {"microflow": run_microflow, "linear": run_linear, "nonlinear": run_nonlinear,
             "decay-report": run_nonlinear}


def _summary_text(doc: dict) -> str:
    lines = [f"{doc['scenario']} run: {doc['status']}"]
    for key, value in doc.items():
        if key in ("scenario", "status"):
            continue
        lines.append(f"  {key}: {json.dumps(value)}")
    return "\n".join(lines) + "\n"


def run(cfg: RunConfig) -> int:
    """Execute one configured run; returns the process exit status."""
    out = RunWriter(cfg)
    doc = {"scenario": cfg.scenario, "seed": cfg.seed}
    try:
        summary = SCENARIOS[cfg.scenario](cfg, out)
    except RunDiverged as exc:
        err = exc.err
        doc.update({"status": "diverged", "message": str(err), "t": err.t, "iterations": err.iterations,
                    "contraction": _finite_or_none(err.contraction)})
        out.close()
        out.report(doc, _summary_text(doc))
        return EXIT_DIVERGED
    out.close()
    doc.update({"status": "ok", **summary})
    out.report(doc, _summary_text(doc))
    if cfg.scenario == "decay-report":
        return write_decay_report(out.root)
    return EXIT_OK


def _finite_or_none(x):
    return float(x) if x is not None and math.isfinite(x) else None


def read_records(path: Path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_decay_report(run_dir) -> int:
    run_dir = Path(run_dir)
    cfg = parse_config((run_dir / "config.json").read_text())
    if cfg.scenario not in ("nonlinear", "decay-report"):
        raise ConfigError(f"decay-report needs a nonlinear run, got scenario {cfg.scenario!r}")
    records = read_records(run_dir / "diagnostics.ndjson")
    dg = cfg.diagnostics
    report = diagnostics.decay_report(
        records, cfg.params, envelope=cfg.forcing.envelope if cfg.forcing.C > 0 else "none",
        mu=cfg.forcing.mu, theta_ladder=cfg.sobolev.theta_ladder,
        zeta_is_zero=cfg.data.microflow.amplitude == 0, t_burn=dg.t_burn,
        energy_slack=dg.energy_slack, envelope_slack=dg.envelope_slack)
    formats = cfg.output.formats
    if "json" in formats:
        (run_dir / "decay_report.json").write_text(json.dumps(report, indent=2) + "\n")
    if "text" in formats:
        (run_dir / "decay_report.txt").write_text(diagnostics.render_text(report))
    (run_dir / "decay.csv").write_text(diagnostics.plot_csv(records, cfg.sobolev.theta_ladder))
    return EXIT_OK


def load_config(path: str, scenario: str, seed: Optional[int], output: Optional[str]) -> RunConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError:
        return parse_config(text)  # raises with line and column
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be an object")
    allowed = ("nonlinear", "decay-report") if scenario == "nonlinear" else (scenario,)
    raw.setdefault("scenario", scenario)
    if raw["scenario"] not in allowed:
        raise ConfigError(f"config scenario {raw['scenario']!r} does not match subcommand {scenario!r}")
    if seed is not None:
        raw["seed"] = seed
    if output is not None:
        raw.setdefault("output", {})
        if not isinstance(raw["output"], dict):
            raise ConfigError("output: expected an object")
        raw["output"]["directory"] = output
    return config_from_dict(raw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="micropolar", description="Micropolar flow solver on the 3-torus.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("microflow", "linear", "nonlinear"):
        p = sub.add_parser(name, help=f"run the {name} scenario from a JSON config")
        p.add_argument("config")
        p.add_argument("--output", help="override output.directory")
        p.add_argument("--seed", type=int, help="override the config seed")
    p = sub.add_parser("decay-report", help="fit decay rates of a finished nonlinear run")
    p.add_argument("run_dir")
    sub.add_parser("verify", help="run the built-in oracle suites")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return EXIT_OK if verify.run_all() else EXIT_FAILURE
        if args.command == "decay-report":
            return write_decay_report(args.run_dir)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cfg = load_config(args.config, args.command, args.seed, args.output)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        return run(cfg)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except MicropolarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
