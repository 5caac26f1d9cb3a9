"""Command line: simulate | lln-study | clt-study | metrics | validate | constants.

Exit status: 0 ok, 2 invalid input (configuration, missing or corrupt
files), 3 invariant violation.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, backend
from .errors import ConfigError, VlasovWaveError

EXIT_OK, EXIT_INVALID, EXIT_VIOLATION = 0, 2, 3
OUTPUT_ENV = "VLASOVWAVE_OUTPUT"
PRESETS = ("ground-state", "two-body", "eight-body", "lln", "clt")


# helpers -------------------------------------------------------------------------
def preset_path(name: str) -> Path:
    return Path(str(resources.files("vlasovwave") / "presets" / f"{name}.yaml"))


def resolve_config(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    if arg in PRESETS:
        return preset_path(arg)
    raise ConfigError(f"no config file or preset named {arg!r} (presets: {', '.join(PRESETS)})")


def load_config(args):
    from .config import RunConfig

    path = resolve_config(args.config)
    cfg = RunConfig.load(path).override(args.set)
    if getattr(args, "threads", None):
        cfg.data["threads"] = int(args.threads)
    cfg.validate()
    return cfg, path


def output_dir(cfg, path: Path, args) -> Path:
    if getattr(args, "out", None):
        out = Path(args.out)
    elif cfg.get("output.dir"):
        out = Path(cfg.get("output.dir"))
    else:
        out = Path(os.environ.get(OUTPUT_ENV, "vlasovwave-runs")) / path.stem
    out.mkdir(parents=True, exist_ok=True)
    return out


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    return x


def write_manifest(out: Path, cfg, command: str, extra: dict):
    man = dict(tool="vlasovwave", version=__version__, backend=backend.NAME, command=command,
               config=cfg.echo(), seed=cfg.get("ensemble.seed"), **extra)
    (out / "manifest.json").write_text(json.dumps(_jsonable(man), indent=1, sort_keys=True))


def write_rows(path: Path, rows):
    rows = list(rows)
    keys = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=keys)
        wr.writeheader()
        for r in rows:
            wr.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})


GNUPLOT_DIAG = """# gnuplot script for diagnostics.csv
set datafile separator ','
set key autotitle columnhead
set multiplot layout 2,1
set ylabel 'E(t) - E(0)'
plot 'diagnostics.csv' using 'time':(column('E') - {E0!r}) with lines
set ylabel '|P|, |J|'
plot 'diagnostics.csv' using 'time':(sqrt(column('P1')**2+column('P2')**2+column('P3')**2)) with lines, \\
     '' using 'time':(sqrt(column('J1')**2+column('J2')**2+column('J3')**2)) with lines
unset multiplot
"""

GNUPLOT_LLN = """# gnuplot script for lln.csv
set datafile separator ','
set logscale xy
set xlabel 'N'
set ylabel 'KR distance to the reference'
plot for [t in '{times}'] 'lln.csv' using (column('t') == t+0 ? column('N') : 1/0):'mean' with linespoints title 't='.t, \\
     {c0!r} * x**-0.5 with lines dashtype 2 title 'N^(-1/2)'
"""

GNUPLOT_CLT = """# gnuplot script for cf.csv
set datafile separator ','
set key autotitle columnhead
set xlabel 'probe point'
set ylabel '|empirical CF - Gaussian CF|'
plot for [col=2:{last}] 'cf.csv' using 1:col with linespoints
"""


# simulate ------------------------------------------------------------------------------
def _initial_state(cfg):
    from .dynamics import SystemState
    from .field import free_field, init_ground_field

    k, g = cfg.kernel(), cfg.grid()
    e = cfg.ensemble()
    order = cfg.get("grid.order")
    R = e.support_radius() + k.radius
    if cfg.get("ensemble.field") == "ground":
        f = init_ground_field(k, g, e.q, e.weight, support_radius=R, order=order)
    else:
        f = free_field(g, g.zeros(), order=order)
        f.support_radius = R
    return k, SystemState(e, f)


def check_record(k, rec, ref, E_perp, R, mass, tol) -> dict:
    """Every per-sample bound and drift check; name -> (lhs, rhs, ok)."""
    from .conservation import apriori_bounds, growth_bounds

    checks = {}
    ab = apriori_bounds(rec, ref["E0"], E_perp, ref["P0"], ref["J0"], R, mass, tol["bound"])
    checks.update(ab.checks)
    gb = growth_bounds(rec, ref["EW0"], ref["p0max"], k.constants.l2, rec.time, tol["bound"])
    checks.update(gb.checks)
    dE = abs(rec.E - ref["E0"]) / max(abs(ref["E0"]), 1e-300)
    checks["energy_drift"] = (dE, tol["energy_drift"], bool(dE <= tol["energy_drift"]))
    scale = tol["momentum_drift"] * k.constants.l2
    dP = float(np.linalg.norm(rec.P - ref["P0"]))
    dJ = float(np.linalg.norm(rec.J - ref["J0"]))
    checks["momentum_drift"] = (dP, scale, bool(dP <= scale))
    checks["angular_drift"] = (dJ, scale, bool(dJ <= scale))
    checks["subluminal"] = (rec.max_speed, 1.0, bool(rec.max_speed < 1.0))
    return checks


def reference_values(rec0, state) -> dict:
    """Quantities at t = 0 that later samples are compared with."""
    return dict(E0=rec0.E, P0=rec0.P, J0=rec0.J, particle_P0=rec0.particle_P, particle_J0=rec0.particle_J,
                EW0=rec0.field, p0max=rec0.max_p)


def simulate(cfg, out: Path, log=print) -> int:
    from .conservation import functionals, ground_state_energy, write_diagnostics
    from .dynamics import run
    from .field import save_field
    from .particles import save_ensemble_csv

    k, state = _initial_state(cfg)
    dt = cfg.dt()
    T = float(cfg.get("integrator.T"))
    every = int(cfg.get("integrator.every"))
    snap_every = int(cfg.get("integrator.snapshot_every") or 0)
    tol = cfg.get("tolerances")
    E_perp = ground_state_energy(k)
    R = state.field.support_radius
    mass = state.ensemble.total_mass
    snaps = out / "snapshots"
    snaps.mkdir(exist_ok=True)
    records, bound_rows, files = [], [], []
    ref = {}
    step = {"n": 0}
    nsteps = int(round(T / dt))

    def snapshot(s, n):
        name = f"{n:06d}"
        save_ensemble_csv(s.ensemble, snaps / f"ensemble_{name}.csv")
        save_field(s.field, snaps / f"field_{name}")
        files.append(dict(step=n, time=s.time, ensemble=f"snapshots/ensemble_{name}.csv",
                          field=f"snapshots/field_{name}.bin"))

    def on_sample(s):
        rec = functionals(k, s)
        if not ref:
            ref.update(reference_values(rec, s))
        checks = check_record(k, rec, ref, E_perp, R, mass, tol)
        rec.flags = {name: v[2] for name, v in checks.items()}
        records.append(rec)
        for name, (lhs, rhs, ok) in checks.items():
            bound_rows.append(dict(time=rec.time, check=name, lhs=lhs, rhs=rhs, ok=int(ok)))
        n = step["n"]
        if n == 0 or n == nsteps or (snap_every and n % snap_every == 0):
            snapshot(s, n)
        step["n"] += every

    run(k, state, dt, T, every=every, on_sample=on_sample)
    if nsteps % every:
        step["n"] = nsteps
        on_sample(state)
    write_diagnostics(records, out / "diagnostics.csv")
    write_rows(out / "bounds.csv", bound_rows)
    violations = sorted({r["check"] for r in bound_rows if not r["ok"]})
    (out / "plot.gp").write_text(GNUPLOT_DIAG.format(E0=float(ref["E0"])))
    last = records[-1]
    summary = dict(dt=dt, nsteps=nsteps, E_perp=E_perp, E0=ref["E0"], E_final=last.E,
                   energy_drift=abs(last.E - ref["E0"]) / abs(ref["E0"]),
                   momentum_drift=float(np.linalg.norm(last.P - ref["P0"])),
                   angular_drift=float(np.linalg.norm(last.J - ref["J0"])), violations=violations,
                   kernel_constants=k.constants.as_dict(), support_radius=R, mass=mass, snapshots=files)
    write_manifest(out, cfg, "simulate", dict(summary=summary))
    log(f"simulate: {nsteps} steps of dt={dt:.6g}; rel. energy drift {summary['energy_drift']:.3e}; "
        f"|dP| {summary['momentum_drift']:.3e}; |dJ| {summary['angular_drift']:.3e}")
    if violations:
        log("invariant violations: " + ", ".join(violations))
        return EXIT_VIOLATION
    return EXIT_OK


# validate --------------------------------------------------------------------------------
def validate_run(run_dir: Path, log=print) -> int:
    from .config import RunConfig
    from .conservation import functionals, ground_state_energy, read_diagnostics, record_from_row
    from .dynamics import SystemState
    from .field import load_field
    from .particles import load_ensemble_csv

    try:
        man = json.loads((run_dir / "manifest.json").read_text())
        cfg = RunConfig(man["config"])
        rows = read_diagnostics(run_dir / "diagnostics.csv")
        records = [record_from_row(r) for r in rows]
    except (OSError, KeyError, ValueError) as exc:
        log(f"validate: unreadable run directory: {exc}")
        return EXIT_INVALID
    if not records:
        log("validate: empty diagnostics")
        return EXIT_INVALID
    k = cfg.kernel()
    tol = cfg.get("tolerances")
    s = man["summary"]
    E_perp = ground_state_energy(k)
    ref = reference_values(records[0], None)
    problems = []
    for rec in records:
        for name, (lhs, rhs, ok) in check_record(k, rec, ref, E_perp, s["support_radius"], s["mass"], tol).items():
            if not ok:
                problems.append(f"t={rec.time:.6g} {name}: {lhs:.6g} > {rhs:.6g}")
    # recompute the stored functionals from the snapshots
    by_time = {round(r.time, 9): r for r in records}
    for snap in s.get("snapshots", []):
        try:
            e = load_ensemble_csv(run_dir / snap["ensemble"])
            f = load_field(run_dir / snap["field"])
        except (OSError, ValueError, KeyError) as exc:
            log(f"validate: corrupt snapshot {snap}: {exc}")
            return EXIT_INVALID
        rec = functionals(k, SystemState(e, f))
        stored = by_time.get(round(rec.time, 9))
        if stored is None:
            problems.append(f"snapshot at t={rec.time:.6g} has no diagnostics row")
            continue
        for name in ("E", "M", "kinetic", "coupling", "field"):
            a, b = getattr(rec, name), getattr(stored, name)
            if abs(a - b) > 1e-9 * max(1.0, abs(a)):
                problems.append(f"t={rec.time:.6g} {name}: snapshot gives {a:.12g}, diagnostics say {b:.12g}")
        for name in ("P", "J", "particle_P", "particle_J"):
            a, b = getattr(rec, name), getattr(stored, name)
            if np.linalg.norm(a - b) > 1e-9 * max(1.0, np.linalg.norm(a)):
                problems.append(f"t={rec.time:.6g} {name}: snapshot disagrees with diagnostics")
        if abs(rec.max_speed - stored.max_speed) > 1e-12:
            problems.append(f"t={rec.time:.6g} max_speed: snapshot disagrees with diagnostics")
    drift = max(abs(r.E - ref["E0"]) / abs(ref["E0"]) for r in records)
    log(f"validate: {len(records)} samples, {len(s.get('snapshots', []))} snapshots, max rel. energy drift "
        f"{drift:.3e} (tolerance {tol['energy_drift']:.1e})")
    if problems:
        for p in problems[:20]:
            log("  " + p)
        if len(problems) > 20:
            log(f"  ... {len(problems) - 20} more")
        return EXIT_VIOLATION
    log("validate: pass")
    return EXIT_OK


# studies -----------------------------------------------------------------------------------
def lln(cfg, out: Path, log=print) -> int:
    from .studies import lln_study

    s = cfg.get("study")
    res = lln_study(cfg.kernel(), cfg.law(), cfg.grid(), s["Ns"], s["replicas"], s["times"], s["n_ref"], s["group"],
                    int(cfg.get("ensemble.seed")), cfl=float(cfg.get("integrator.cfl")))
    write_rows(out / "lln.csv", res.rows())
    write_rows(out / "lln_replicas.csv", (dict(N=N, replica=r, t=t, distance=res.distances[i, r, j])
                                          for i, N in enumerate(res.Ns) for r in range(res.distances.shape[1])
                                          for j, t in enumerate(res.times)))
    c0 = float(res.mean[0, -1] * np.sqrt(res.Ns[0]))
    (out / "plot.gp").write_text(GNUPLOT_LLN.format(times=" ".join(f"{t:g}" for t in res.times), c0=c0))
    summary = dict(slopes=dict(zip(map(str, res.times), res.slopes)), monotone=dict(zip(map(str, res.times), res.monotone)),
                   gaps=res.gaps, modes=res.modes, runtime_s=res.runtime, **res.meta)
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=1))
    write_manifest(out, cfg, "lln-study", dict(summary=summary))
    for j, t in enumerate(res.times):
        log(f"t={t:g}: slope {res.slopes[j]:+.3f}, monotone {res.monotone[j]}, reference bracket {res.gaps[j]:.2e}")
    return EXIT_OK


def _probes(cfg):
    from .fluctuations import BumpProbe, default_probes

    p = cfg.get("study.probes")
    if p == "default":
        return default_probes()
    return [BumpProbe(tuple(x["center"]), int(x["axis"]), float(x.get("width", 0.4)), x.get("pairing", "psi"))
            for x in p]


def clt(cfg, out: Path, log=print) -> int:
    from .studies import clt_study

    s = cfg.get("study")
    res = clt_study(cfg.kernel(), cfg.law(), cfg.grid(), s["Ns"], s["M"], s["times"], s["z0"], s["n_ref"],
                    int(cfg.get("ensemble.seed")), probes=_probes(cfg), cfl=float(cfg.get("integrator.cfl")),
                    threads=int(cfg.get("threads")))
    for r in res.records:
        write_rows(out / f"deltas_N{r.N}.csv",
                   ({"replica": i, "seed": r.seeds[i], **dict(zip(res.labels, row))} for i, row in enumerate(r.deltas)))
    write_rows(out / "cf.csv", ({"point": i, **{f"N{r.N}": float(v) for r, v in zip(res.records, col)}}
                                for i, col in enumerate(_cf_table(res))))
    (out / "plot.gp").write_text(GNUPLOT_CLT.format(last=len(res.records) + 1))
    summary = dict(labels=res.labels, Q=res.Q, probes=[p.as_dict() for p in res.probes], cf_points=res.cf_points,
                   cf_discrepancy=dict(zip(map(str, res.Ns), res.cf)), cf_slope=res.cf_slope,
                   normality=res.normality, runtime_s=res.runtime, **res.meta,
                   studies=[dict(N=r.N, M=r.M, mean=r.mean, stderr=r.stderr, cov=r.cov,
                                 mean_within_3se=res.mean_check(r)) for r in res.records])
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=1))
    write_manifest(out, cfg, "clt-study", dict(probes=[p.as_dict() for p in res.probes], rng="Philox",
                                               seed_rule="master XOR replica"))
    for r, c in zip(res.records, res.cf):
        log(f"N={r.N}: rel. Frobenius |cov - Q| {res.meta['frobenius'][r.N]:.3f}, CF discrepancy {c:.3f}, "
            f"mean within 3 s.e. {res.mean_check(r)}")
    log(f"normality at N={res.Ns[-1]}: rejected={res.normality['rejected']}")
    return EXIT_OK


def _cf_table(res):
    """Per-point CF discrepancy for every N: rows are probe points."""
    Z = res.cf_points
    gauss = np.exp(-0.5 * np.einsum("ki,ij,kj->k", Z, res.Q, Z))
    cols = [np.abs(np.exp(1j * r.deltas @ Z.T).mean(axis=0) - gauss) for r in res.records]
    return np.array(cols).T


# metrics and constants ----------------------------------------------------------------------
def metrics(args, log=print) -> int:
    from .measures import bl_distance, empirical, kr_distance, signed_extension_norm
    from .particles import load_ensemble_csv

    try:
        a, b = empirical(load_ensemble_csv(args.a)), empirical(load_ensemble_csv(args.b))
    except (OSError, ValueError, KeyError) as exc:
        log(f"metrics: {exc}")
        return EXIT_INVALID
    res = {}
    try:
        if abs(a.total - b.total) < 1e-9:
            r = kr_distance(a, b, full=True)
            res["kr"] = dict(value=r.value, mode=r.mode, gap=r.gap)
            r = bl_distance(a, b, full=True)
            res["bl"] = dict(value=r.value, mode=r.mode, gap=r.gap)
        res["signed_extension_norm"] = signed_extension_norm(a - b)
    except ValueError as exc:
        log(f"metrics: {exc}")
        return EXIT_INVALID
    log(json.dumps(res, indent=1))
    return EXIT_OK


def constants(args, log=print) -> int:
    from .conservation import ground_state_energy, self_energy_shells
    from .kernel import RegularizationKernel
    from .meanfield import contraction_constants

    k = RegularizationKernel(radius=args.radius)
    out = dict(radius=k.radius, **k.constants.as_dict(), self_energy=k.self_energy(),
               self_energy_field_route=self_energy_shells(k), E_perp=ground_state_energy(k), backend=backend.NAME)
    if not args.no_contraction:
        cc = contraction_constants(k, E=args.energy)
        out["contraction"] = {key: v for key, v in cc.items()}
    log(json.dumps(_jsonable(out), indent=1))
    return EXIT_OK


# entry point ----------------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vlasovwave", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"vlasovwave {__version__} ({backend.NAME} backend)")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help=f"YAML file or preset name ({', '.join(PRESETS)})")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key, e.g. --set integrator.T=2 (repeatable)")
        p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV}/<config name>)")
        p.add_argument("--threads", type=int, help="worker processes for replica loops")
        return p

    with_config("simulate", "run the coupled particle-field system")
    with_config("lln-study", "empirical-measure convergence study")
    with_config("clt-study", "fluctuation (central limit) study")
    p = sub.add_parser("metrics", help="KR / BL distances between two ensemble CSV files")
    p.add_argument("a")
    p.add_argument("b")
    p = sub.add_parser("validate", help="re-check a simulate run directory offline")
    p.add_argument("run_dir")
    p = sub.add_parser("constants", help="kernel, ground-state and contraction constants")
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--energy", type=float, default=None, help="energy E for the a-priori field bound")
    p.add_argument("--no-contraction", action="store_true", help="skip the FFT-based contraction constants")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "metrics":
            return metrics(args)
        if args.command == "validate":
            return validate_run(Path(args.run_dir))
        if args.command == "constants":
            return constants(args)
        cfg, path = load_config(args)
        kind = cfg.get("study.kind")
        expected = {"simulate": "simulate", "lln-study": "lln", "clt-study": "clt"}[args.command]
        if kind != expected:
            raise ConfigError(f"study.kind is {kind!r} but the command needs {expected!r}",
                              cfg.lines.line(("study", "kind")))
        out = output_dir(cfg, path, args)
        if args.command == "simulate":
            return simulate(cfg, out)
        if args.command == "lln-study":
            return lln(cfg, out)
        return clt(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except VlasovWaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
