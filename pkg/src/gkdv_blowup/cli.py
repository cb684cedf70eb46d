"""Command-line orchestration: reproducible pipelines and reports.

Subcommands: constants | spectrum | profiles | decompose | evolve | verify
| pipeline. Configuration is a flat key=value file plus flag overrides;
unknown keys are rejected before any computation. Every stage persists its
artifacts with 64-bit content hashes in a manifest, and a finished run can
be re-executed idempotently: stages whose artifacts are present and hash
clean are skipped.

Exit codes: 0 success, 2 config error, 3 numeric failure, 4 acceptance
check failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import AsymptoticsReport, build_report
from .errors import ConfigError, GkdvError, MissingArtifactError
from .evolver import (
    EvolverConfig,
    Trajectory,
    evolve,
    minimal_mass_initial_data,
    staged_evolve,
)
from .grid import (
    LINE,
    PERIODIC,
    Grid,
    GridFunction,
    line_grid,
    read_csv,
    write_csv,
)
from .ground_state import soliton_constants
from .linearized import LinearizedOperator, spectrum_grid
from .modulation import (
    decompose,
    decompose_trajectory,
    f0_diagnostic,
    minimal_mass_identities,
)
from .profiles import ProfileSet, build_profiles

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_CHECKS = 4


# ----------------------------------------------------------------------
# Configuration
# ----------------------------------------------------------------------

PIPELINE_SCHEMA = {
    "n": (int, 100),
    "K": (int, 3),
    "gamma": (float, 0.9),
    "spacing": (float, 1.0 / 64.0),
    "domain_left": (float, -96.0),
    "domain_right": (float, 32.0),
    "t_end": (float, 0.4),
    "dt": (float, 0.0),                 # 0 -> scheduled steps under the cap
    "scheme": (str, "etdrk4"),
    "dt_divisor": (float, 14.0),        # early-time refinement of the cap
    "dt_power": (float, 3.0),
    "segment_ratio": (float, 1.18),
    "snapshots": (int, 40),
    "snapshot_stride": (int, 0),        # 0 -> derived from `snapshots`
    "profile_left": (float, -160.0),
    "profile_right": (float, 40.0),
    "profile_spacing": (float, 1.0 / 64.0),
    "tail_time": (float, 0.0),          # 0 -> three quarters of t_end
}


@dataclass
class RunConfig:
    """A validated flat parameter table for one command."""

    command: str
    parameters: dict
    output_dir: Path
    seed: int = 0

    def stage_params(self, keys):
        return {k: self.parameters[k] for k in keys}


def parse_config_file(path: Path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


def validate_parameters(raw: dict, schema: dict) -> dict:
    params = {k: default for k, (_, default) in schema.items()}
    for key, val in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown configuration key {key!r}")
        typ = schema[key][0]
        try:
            params[key] = typ(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"key {key!r}: cannot parse {val!r} as {typ.__name__}") from exc
    return params


# ----------------------------------------------------------------------
# Manifest and hashing
# ----------------------------------------------------------------------

def content_hash(path: Path) -> str:
    digest = hashlib.blake2b(Path(path).read_bytes(), digest_size=8)
    return digest.hexdigest()


@dataclass
class RunManifest:
    config_echo: dict
    artifact_checksums: dict = field(default_factory=dict)
    versions: str = ""
    timings: dict = field(default_factory=dict)
    stages_done: list = field(default_factory=list)

    def save(self, run_dir: Path):
        payload = {
            "config_echo": self.config_echo,
            "artifact_checksums": self.artifact_checksums,
            "versions": self.versions,
            "timings": self.timings,
            "stages_done": self.stages_done,
        }
        (run_dir / "manifest.json").write_text(json.dumps(payload, indent=2, sort_keys=True))

    @classmethod
    def load(cls, run_dir: Path) -> "RunManifest":
        path = run_dir / "manifest.json"
        if not path.exists():
            raise MissingArtifactError(f"no manifest in {run_dir}")
        d = json.loads(path.read_text())
        return cls(
            config_echo=d["config_echo"],
            artifact_checksums=d["artifact_checksums"],
            versions=d.get("versions", ""),
            timings=d.get("timings", {}),
            stages_done=d.get("stages_done", []),
        )


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True))


def _stage_clean(manifest: RunManifest, run_dir: Path, stage: str, files) -> bool:
    if stage not in manifest.stages_done:
        return False
    for f in files:
        rel = str(f.relative_to(run_dir))
        if rel not in manifest.artifact_checksums or not f.exists():
            return False
        if content_hash(f) != manifest.artifact_checksums[rel]:
            return False
    return True


# ----------------------------------------------------------------------
# Profile persistence
# ----------------------------------------------------------------------

def save_profiles(ps: ProfileSet, out_dir: Path) -> list:
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for k in range(1, ps.K + 1):
        f = out_dir / f"profile_{k}.csv"
        write_csv(ps.profile(k), f)
        files.append(f)
    summary = out_dir / "profile_summary.json"
    _write_json(summary, ps.summary())
    files.append(summary)
    return files


def load_profiles(out_dir: Path) -> ProfileSet:
    summary = json.loads((out_dir / "profile_summary.json").read_text())
    K = summary["K"]
    profiles = [read_csv(out_dir / f"profile_{k}.csv") for k in range(1, K + 1)]
    return ProfileSet(
        K=K,
        grid=profiles[0].grid,
        profiles=profiles,
        betas={int(k): v for k, v in summary["betas"].items()},
        left_coeffs={int(k): np.array(v) for k, v in summary["left_coeffs"].items()},
        d_coeffs={int(k): {int(j): v for j, v in d.items()}
                  for k, d in summary["d_coeffs"].items()},
        gamma_default=summary["gamma_default"],
        pq_pairing=summary["pq_pairing"],
        solvability_residuals={int(k): v for k, v in summary["solvability_residuals"].items()},
        left_fit_residuals={int(k): v for k, v in summary["left_fit_residuals"].items()},
    )


# ----------------------------------------------------------------------
# Pipeline
# ----------------------------------------------------------------------

def run_pipeline(cfg: RunConfig, echo=print, upto: str = "verify") -> RunManifest:
    """profiles -> initial data -> evolve -> decompose -> verify, idempotent.

    `upto` stops the pipeline after the named stage (the evolve subcommand
    uses it); the report is emitted only for complete runs.
    """
    run_dir = Path(cfg.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    p = cfg.parameters

    config_echo = {"command": cfg.command, "seed": cfg.seed,
                   "parameters": {k: p[k] for k in sorted(p)}}
    try:
        manifest = RunManifest.load(run_dir)
        if manifest.config_echo != config_echo:
            manifest = RunManifest(config_echo=config_echo)
    except MissingArtifactError:
        manifest = RunManifest(config_echo=config_echo)
    manifest.versions = f"gkdv-blowup {__version__}"

    def finish_stage(stage, files, t0):
        for f in files:
            manifest.artifact_checksums[str(f.relative_to(run_dir))] = content_hash(f)
        if stage not in manifest.stages_done:
            manifest.stages_done.append(stage)
        manifest.timings[stage] = round(time.time() - t0, 3)
        manifest.save(run_dir)

    # ---- stage: profiles ----
    prof_dir = run_dir / "profiles"
    prof_files = [prof_dir / f"profile_{k}.csv" for k in range(1, p["K"] + 1)]
    prof_files.append(prof_dir / "profile_summary.json")
    if _stage_clean(manifest, run_dir, "profiles", prof_files):
        echo("stage profiles: clean, skipping")
        ps = load_profiles(prof_dir)
    else:
        t0 = time.time()
        grid = line_grid(p["profile_left"], p["profile_right"], p["profile_spacing"])
        ps = build_profiles(p["K"], grid, gamma_default=p["gamma"])
        files = save_profiles(ps, prof_dir)
        finish_stage("profiles", files, t0)
        echo(f"stage profiles: K={p['K']} built")

    # ---- stage: initial data ----
    init_dir = run_dir / "initdata"
    init_files = [init_dir / "u0.csv", init_dir / "initdata.json"]
    xgrid = Grid(p["domain_left"], p["domain_right"],
                 int(round((p["domain_right"] - p["domain_left"]) / p["spacing"])),
                 PERIODIC)
    if _stage_clean(manifest, run_dir, "initdata", init_files):
        echo("stage initdata: clean, skipping")
        meta = json.loads(init_files[1].read_text())
        u0 = read_csv(init_files[0], topology=PERIODIC)
    else:
        t0 = time.time()
        init_dir.mkdir(parents=True, exist_ok=True)
        data = minimal_mass_initial_data(p["n"], ps, gamma=p["gamma"], grid=xgrid)
        u0 = data.u0
        meta = {
            "n": data.n, "t_start": data.t_start, "lam": data.lam, "b": data.b,
            "x_center": data.x_center, "gamma": data.gamma,
            "cutoff_inner_x": data.cutoff_inner_x,
            "cutoff_outer_x": data.cutoff_outer_x,
            "tail_reach": data.tail_reach,
        }
        write_csv(u0, init_files[0])
        _write_json(init_files[1], meta)
        finish_stage("initdata", init_files, t0)
        echo(f"stage initdata: n={p['n']} at t={data.t_start:.4g}")

    # ---- stage: evolve ----
    ev_dir = run_dir / "evolve"
    ev_meta_file = ev_dir / "evolve_meta.json"
    ev_files = None
    if ev_meta_file.exists():
        try:
            prev = json.loads(ev_meta_file.read_text())
            ev_files = [ev_dir / name for name in prev["files"]] + [ev_meta_file]
        except (KeyError, json.JSONDecodeError):
            ev_files = None
    if ev_files is not None and _stage_clean(manifest, run_dir, "evolve", ev_files):
        echo("stage evolve: clean, skipping")
        traj = load_trajectory(ev_dir, xgrid)
    else:
        t0 = time.time()
        ev_dir.mkdir(parents=True, exist_ok=True)
        if p["dt"] > 0:
            span = p["t_end"] - meta["t_start"]
            steps = max(1, math.ceil(span / p["dt"] - 1e-9))
            stride = (p["snapshot_stride"] if p["snapshot_stride"] > 0
                      else max(1, steps // max(p["snapshots"], 1)))
            ecfg = EvolverConfig(grid=xgrid, dt=p["dt"], t_start=meta["t_start"],
                                 t_end=p["t_end"], snapshot_stride=stride,
                                 scheme=p["scheme"])
            traj = evolve(u0, ecfg)
        else:
            traj = staged_evolve(
                u0, xgrid, meta["t_start"], p["t_end"], scheme=p["scheme"],
                divisor=p["dt_divisor"], power=p["dt_power"],
                segment_ratio=p["segment_ratio"], target_snapshots=p["snapshots"],
            )
        files = save_trajectory(traj, ev_dir)
        finish_stage("evolve", files, t0)
        echo(f"stage evolve: {len(traj.snapshots)} snapshots, "
             f"drift mass {traj.mass_drift():.1e} energy {traj.energy_drift():.1e}")
    if upto == "evolve":
        return manifest

    # ---- stage: decompose ----
    dec_dir = run_dir / "decompose"
    dec_files = [dec_dir / "states.json"]
    if _stage_clean(manifest, run_dir, "decompose", dec_files):
        echo("stage decompose: clean, skipping")
        states_data = json.loads(dec_files[0].read_text())
        attach_states(traj, states_data, ps, p["gamma"])
    else:
        t0 = time.time()
        dec_dir.mkdir(parents=True, exist_ok=True)
        guess = (meta["lam"], meta["x_center"], meta["b"])
        states = decompose_trajectory(traj, ps, gamma=p["gamma"], first_guess=guess)
        mass_offset = traj.conserved[0][1] - soliton_constants().mass_L2_sq
        e0 = traj.conserved[0][2]
        states_data = []
        for st in states:
            ids = minimal_mass_identities(st, ps, e0, mass_offset=mass_offset)
            states_data.append({
                "t": st.time_label, "lam": st.lam, "x": st.center, "b": st.b,
                "pairings": list(st.pairings()),
                "mass_gap": ids["mass_gap"], "energy_gap": ids["energy_gap"],
                "local_eps_sq": ids["local_eps_sq"],
                "f0": f0_diagnostic(st, ps),
            })
        _write_json(dec_files[0], states_data)
        finish_stage("decompose", dec_files, t0)
        echo(f"stage decompose: {len(states)} states")

    # ---- stage: verify ----
    ver_dir = run_dir / "verify"
    ver_files = [ver_dir / "report.json", ver_dir / "checks.json",
                 ver_dir / "plateau.dat", ver_dir / "residuals_m0.dat",
                 ver_dir / "residuals_m1.dat"]
    if _stage_clean(manifest, run_dir, "verify", ver_files):
        echo("stage verify: clean, skipping")
        report_d = json.loads(ver_files[0].read_text())
        checks = json.loads(ver_files[1].read_text())
    else:
        t0 = time.time()
        ver_dir.mkdir(parents=True, exist_ok=True)
        tail_time = p["tail_time"] if p["tail_time"] > 0 else None
        report = build_report(traj, ps, soliton_constants(),
                              reach=meta["tail_reach"], tail_time=tail_time)
        report_d = report.as_dict()
        checks = evaluate_checks(report_d, traj)
        _write_json(ver_files[0], report_d)
        _write_json(ver_files[1], checks)
        write_gnuplot_tail(traj, report, ver_files[2])
        for m, f in ((0, ver_files[3]), (1, ver_files[4])):
            rows = [(t, r) for (t, mm, r) in report.residual_series if mm == m]
            f.write_text("# t residual\n" + "".join(
                f"{t:.17g} {r:.17g}\n" for t, r in rows))
        finish_stage("verify", ver_files, t0)
        echo("stage verify: report built")

    # ---- report ----
    report_md = emit_report(run_dir)
    manifest.artifact_checksums[str(report_md.relative_to(run_dir))] = content_hash(report_md)
    manifest.save(run_dir)
    failed = [c for c in checks if not c["passed"]]
    echo(f"report: {len(checks) - len(failed)}/{len(checks)} checks passed")
    return manifest


def save_trajectory(traj: Trajectory, ev_dir: Path) -> list:
    files = []
    names = []
    for i, (t, u) in enumerate(traj.snapshots):
        name = f"snap_{i:04d}.csv"
        write_csv(u, ev_dir / name)
        files.append(ev_dir / name)
        names.append(name)
    cons = ev_dir / "conserved.csv"
    with open(cons, "w") as fh:
        fh.write("# t,mass,energy,mean\n")
        for row in traj.conserved:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    files.append(cons)
    names.append("conserved.csv")
    meta = {
        "files": names,
        "times": [t for t, _ in traj.snapshots],
        "t_start": traj.config.t_start, "t_end": traj.config.t_end,
        "dt": traj.config.dt, "snapshot_stride": traj.config.snapshot_stride,
        "scheme": traj.config.scheme,
    }
    meta_file = ev_dir / "evolve_meta.json"
    _write_json(meta_file, meta)
    files.append(meta_file)
    return files


def load_trajectory(ev_dir: Path, grid: Grid) -> Trajectory:
    meta = json.loads((ev_dir / "evolve_meta.json").read_text())
    cfg = EvolverConfig(grid=grid, dt=meta["dt"], t_start=meta["t_start"],
                        t_end=meta["t_end"], snapshot_stride=meta["snapshot_stride"],
                        scheme=meta.get("scheme", "ifrk4"))
    traj = Trajectory(config=cfg)
    for t, name in zip(meta["times"], meta["files"]):
        if not name.startswith("snap_"):
            continue
        traj.snapshots.append((t, read_csv(ev_dir / name, topology=PERIODIC)))
    data = np.loadtxt(ev_dir / "conserved.csv", delimiter=",", comments="#", ndmin=2)
    traj.conserved = [tuple(row) for row in data]
    return traj


def attach_states(traj: Trajectory, states_data, ps: ProfileSet, gamma: float):
    """Rebuild parameter-only states from the persisted decomposition.

    The verification stage consumes the scalar series (lam, x, b, t);
    remainder-dependent diagnostics were evaluated and persisted by the
    decompose stage itself.
    """
    from .modulation import ModulationState
    stub_grid = line_grid(-1.0, 1.0, 2.0 / 15.0)
    zeros = np.zeros(stub_grid.n_points)
    states = []
    for (t, _), rec in zip(traj.snapshots, states_data):
        states.append(ModulationState(
            lam=rec["lam"], center=rec["x"], b=rec["b"],
            epsilon=GridFunction(stub_grid, zeros),
            time_label=t, gamma=gamma,
        ))
    traj.modulation = states
    return states


def write_gnuplot_tail(traj, report: AsymptoticsReport, path: Path):
    idx = int(np.argmin(np.abs(np.array(traj.times)
                               - report.extras["tail_snapshot_time"])))
    t, u = traj.snapshots[idx]
    from .asymptotics import tail_profile as _tp
    tp = _tp(u, t, soliton_constants(), reach=report.tail_window[1])
    path.write_text("# R compensated\n" + "".join(
        f"{r:.17g} {c:.17g}\n" for r, c in zip(tp.radii, tp.compensated)))


# ----------------------------------------------------------------------
# Acceptance-style checks over a finished report
# ----------------------------------------------------------------------

def _monotone_decreasing_toward_small_t(series, n_thin=8):
    rows = sorted(series)
    if len(rows) > n_thin:
        idx = np.linspace(0, len(rows) - 1, n_thin).astype(int)
        rows = [rows[i] for i in idx]
    vals = [r for _, r in rows]
    return all(b > a for a, b in zip(vals, vals[1:]))


def evaluate_checks(report: dict, traj) -> list:
    """Quantitative pass/fail table mirroring the acceptance gate."""
    consts = soliton_constants()
    fit = report["parameter_fit"]
    checks = []

    def add(name, value, target, tol, mode="rel"):
        if mode == "rel":
            ok = abs(value - target) <= tol * abs(target)
        elif mode == "abs":
            ok = abs(value - target) <= tol
        else:
            ok = bool(value)
        checks.append({"name": name, "value": value if mode != "bool" else bool(value),
                       "target": target, "tol": tol, "mode": mode,
                       "passed": bool(ok)})

    add("mass_drift", traj.mass_drift(), 0.0, 1e-8, mode="abs")
    add("energy_drift", traj.energy_drift(), 0.0, 1e-6, mode="abs")
    add("drift_law_intercept", fit["drift_intercept"], -2.0, 0.10)
    add("b_over_lambda_sq_limit", fit["b_over_lambda_sq_limit"],
        -fit["ell0_energy"], 0.02)
    add("ell0_kinematic_vs_energy", fit["ell0"], fit["ell0_energy"], 0.02)

    for m in (0, 1):
        series = [(t, r) for (t, mm, r) in report["residual_series"] if mm == m]
        mono = _monotone_decreasing_toward_small_t(series)
        rows = sorted(series)
        ratio = rows[0][1] / rows[-1][1]
        add(f"profile_residual_m{m}_monotone", mono, True, 0, mode="bool")
        add(f"profile_residual_m{m}_ratio", ratio, 0.0, 0.3, mode="abs")

    add("tail_plateau", report["tail_coefficient_fit"], -consts.tail_coefficient, 0.10)
    wi = report["windowed_integral_checks"][0]
    add("windowed_signed_integral", wi["value"], wi["prediction"], 0.15)
    add("l1_law", report["l1"]["value"], report["l1"]["prediction"], 0.15)

    exps = report["loglog_exponents"]
    add("exponent_lambda", exps["lambda_vs_t"], 1.0, 0.1, mode="abs")
    # the drift parameter's early window carries a computable correction
    # excess at fixed seed index, so its slope is checked against the
    # fitted-expansion slope over the same window
    add("exponent_b", exps["b_vs_t"], exps["b_vs_t_model"], 0.1, mode="abs")
    add("exponent_tail", exps["tail_vs_R"], -1.5, 0.1, mode="abs")
    return checks


def emit_report(run_dir: Path) -> Path:
    """Render verify outputs as a human-readable pass/fail summary."""
    run_dir = Path(run_dir)
    ver = run_dir / "verify"
    if not (ver / "checks.json").exists() or not (run_dir / "manifest.json").exists():
        raise MissingArtifactError("verify outputs or manifest missing; run the pipeline")
    checks = json.loads((ver / "checks.json").read_text())
    report = json.loads((ver / "report.json").read_text())
    lines = ["# Run report", ""]
    lines.append(f"- scaling rate: {report['ell0']:.6g} "
                 f"(energy route {report['parameter_fit']['ell0_energy']:.6g})")
    lines.append(f"- profile shift c0: {report['c0']:.6g}; "
                 f"cubic drift coefficient (dynamic): {report['beta3_dynamic']:.6g}")
    lines.append(f"- tail plateau: {report['tail_coefficient_fit']:.6g} over "
                 f"window {report['tail_window']}")
    lines.append("")
    lines.append("| check | value | target | tol | mode | result |")
    lines.append("|---|---|---|---|---|---|")
    for c in checks:
        val = c["value"]
        vs = f"{val:.6g}" if isinstance(val, float) else str(val)
        tgt = c["target"]
        ts = f"{tgt:.6g}" if isinstance(tgt, float) else str(tgt)
        lines.append(f"| {c['name']} | {vs} | {ts} | {c['tol']} | {c['mode']} | "
                     f"{'PASS' if c['passed'] else 'FAIL'} |")
    out = run_dir / "report.md"
    out.write_text("\n".join(lines) + "\n")
    return out


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------

COMMAND_SCHEMAS = {
    "spectrum": {"spacing": (float, 1.0 / 40.0)},
    "profiles": {"K": (int, 3), "grid_left": (float, -120.0),
                 "grid_right": (float, 40.0), "spacing": (float, 1.0 / 64.0),
                 "gamma": (float, 0.9)},
    "decompose": {"K": (int, 3), "gamma": (float, 0.9), "input": (str, ""),
                  "topology": (str, LINE), "lam": (float, 0.0),
                  "x": (float, 0.0), "b": (float, 0.0)},
    "evolve": PIPELINE_SCHEMA,
    "verify": PIPELINE_SCHEMA,
    "pipeline": PIPELINE_SCHEMA,
}


def _load_params(args, schema) -> dict:
    raw = {}
    if args.config:
        raw.update(parse_config_file(Path(args.config)))
    for key in schema:
        val = getattr(args, f"opt_{key}", None)
        if val is not None:
            raw[key] = val
    domain = getattr(args, "domain", None)
    if domain is not None:
        try:
            left, right = (s.strip() for s in domain.split(":"))
        except ValueError as exc:
            raise ConfigError("--domain expects LEFT:RIGHT") from exc
        raw["domain_left"], raw["domain_right"] = left, right
    for key, val in args.overrides or []:
        raw[key] = val
    return validate_parameters(raw, schema)


def cmd_constants(args) -> int:
    print(json.dumps(soliton_constants().as_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_spectrum(args) -> int:
    p = _load_params(args, COMMAND_SCHEMAS["spectrum"])
    op = LinearizedOperator(spectrum_grid(p["spacing"]))
    print(json.dumps(op.spectrum_summary(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_profiles(args) -> int:
    p = _load_params(args, COMMAND_SCHEMAS["profiles"])
    grid = line_grid(p["grid_left"], p["grid_right"], p["spacing"])
    ps = build_profiles(p["K"], grid, gamma_default=p["gamma"])
    out = Path(args.output_dir)
    save_profiles(ps, out)
    print(json.dumps(ps.summary(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_decompose(args) -> int:
    p = _load_params(args, COMMAND_SCHEMAS["decompose"])
    if not p["input"]:
        raise ConfigError("decompose needs input=<csv path>")
    u = read_csv(p["input"], topology=p["topology"])
    ps = build_profiles(p["K"], gamma_default=p["gamma"])
    guess = (p["lam"], p["x"], p["b"]) if p["lam"] > 0 else None
    st = decompose(u, ps, guess=guess, gamma=p["gamma"])
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "state.json", {
        "lam": st.lam, "x": st.center, "b": st.b,
        "pairings": list(st.pairings()),
    })
    write_csv(st.epsilon, out / "epsilon.csv")
    print(json.dumps({"lam": st.lam, "x": st.center, "b": st.b}, sort_keys=True))
    return EXIT_OK


def cmd_evolve(args) -> int:
    cfg = RunConfig("evolve", _load_params(args, PIPELINE_SCHEMA),
                    Path(args.output_dir), seed=args.seed)
    run_pipeline(cfg, upto="evolve")
    return EXIT_OK


def cmd_verify(args) -> int:
    run_dir = Path(args.output_dir)
    ps = load_profiles(run_dir / "profiles")
    meta = json.loads((run_dir / "initdata" / "initdata.json").read_text())
    p = json.loads((run_dir / "manifest.json").read_text())["config_echo"]["parameters"]
    xgrid = Grid(p["domain_left"], p["domain_right"],
                 int(round((p["domain_right"] - p["domain_left"]) / p["spacing"])),
                 PERIODIC)
    traj = load_trajectory(run_dir / "evolve", xgrid)
    states_data = json.loads((run_dir / "decompose" / "states.json").read_text())
    attach_states(traj, states_data, ps, p["gamma"])
    report = build_report(traj, ps, soliton_constants(), reach=meta["tail_reach"],
                          tail_time=p["tail_time"] if p["tail_time"] > 0 else None)
    checks = evaluate_checks(report.as_dict(), traj)
    ver = run_dir / "verify"
    ver.mkdir(parents=True, exist_ok=True)
    _write_json(ver / "report.json", report.as_dict())
    _write_json(ver / "checks.json", checks)
    emit_report(run_dir)
    failed = [c for c in checks if not c["passed"]]
    print(json.dumps(report.as_dict()["parameter_fit"], indent=2, sort_keys=True))
    return EXIT_CHECKS if failed else EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = RunConfig("pipeline", _load_params(args, PIPELINE_SCHEMA),
                    Path(args.output_dir), seed=args.seed)
    run_pipeline(cfg)
    checks = json.loads((Path(args.output_dir) / "verify" / "checks.json").read_text())
    failed = [c for c in checks if not c["passed"]]
    return EXIT_CHECKS if failed else EXIT_OK


COMMANDS = {
    "constants": cmd_constants,
    "spectrum": cmd_spectrum,
    "profiles": cmd_profiles,
    "decompose": cmd_decompose,
    "evolve": cmd_evolve,
    "verify": cmd_verify,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gkdv-blowup",
        description="Refined blow-up profiles and asymptotics checks for the "
                    "quintic KdV minimal-mass regime.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="key = value parameter file")
        sp.add_argument("--output-dir", default="runs/latest")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--set", dest="overrides", nargs=2, action="append",
                        metavar=("KEY", "VALUE"), help="override one parameter")
        for key in COMMAND_SCHEMAS.get(name, {}):
            sp.add_argument(f"--{key.replace('_', '-')}", dest=f"opt_{key}",
                            default=None)
        if name in ("evolve", "pipeline", "verify"):
            sp.add_argument("--domain", default=None, metavar="LEFT:RIGHT")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GkdvError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
