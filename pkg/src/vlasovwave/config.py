"""Run configuration: YAML loading with source lines, defaults, overrides and validation."""
from __future__ import annotations

import copy
import math
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError

DEFAULTS = {
    "kernel": {"radius": 1.0, "radial_nodes": 512},
    "grid": {"n": 64, "half_width": 6.0, "order": 6},
    "integrator": {"T": 1.0, "dt": None, "cfl": 0.4, "every": 1, "snapshot_every": 0},
    "ensemble": {"particles": None, "file": None, "law": None, "N": None, "seed": 0, "field": "ground"},
    "study": {"kind": "simulate"},
    "tolerances": {"bound": 1e-6, "energy_drift": 1e-3, "momentum_drift": 1e-3},
    "output": {"dir": None},
    "threads": 1,
}

STUDY_DEFAULTS = {
    "lln": {"Ns": [64, 128, 256, 512, 1024, 2048], "replicas": 16, "times": [0.0, 1.0, 2.0], "n_ref": 16384,
            "group": 8},
    "clt": {"Ns": [64, 256, 1024], "M": 200, "times": [1.0, 2.0], "z0": [0.2, 0.3, -0.1, 0.05, 0.0, 0.02],
            "n_ref": 4096, "probes": "default"},
}


class _Lines:
    """Line numbers (1-based) of every key path in a YAML document."""

    def __init__(self):
        self.map = {}

    def walk(self, node, path=()):
        self.map.setdefault(path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                self.map[path + (k.value,)] = k.start_mark.line + 1
                self.walk(v, path + (k.value,))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                self.walk(v, path + (i,))

    def line(self, path):
        path = tuple(path)
        while path and path not in self.map:
            path = path[:-1]
        return self.map.get(path)


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in (extra or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


class RunConfig:
    def __init__(self, data: dict, lines: _Lines | None = None, source: str | None = None):
        self.raw = data
        self.lines = lines or _Lines()
        self.source = source
        self.data = _merge(DEFAULTS, data)
        kind = self.data["study"].get("kind", "simulate")
        if kind in STUDY_DEFAULTS:
            self.data["study"] = _merge(STUDY_DEFAULTS[kind], self.data["study"])

    # access ---------------------------------------------------------------
    def __getitem__(self, key):
        return self.data[key]

    def get(self, path, default=None):
        cur = self.data
        for p in path.split("."):
            if not isinstance(cur, dict) or p not in cur:
                return default
            cur = cur[p]
        return cur

    def error(self, path, message):
        return ConfigError(f"{path}: {message}", self.lines.line(path.split(".")))

    @classmethod
    def load(cls, path) -> "RunConfig":
        text = Path(path).read_text()
        return cls.from_text(text, str(path))

    @classmethod
    def from_text(cls, text: str, source: str = "<string>") -> "RunConfig":
        try:
            node = yaml.compose(text)
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"unparsable YAML: {getattr(exc, 'problem', exc)}",
                              mark.line + 1 if mark is not None else None) from None
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("top level must be a mapping", 1)
        lines = _Lines()
        if node is not None:
            lines.walk(node)
        unknown = [k for k in data if k not in DEFAULTS]
        if unknown:
            raise ConfigError(f"unknown section {unknown[0]!r}", lines.line((unknown[0],)))
        return cls(data, lines, source)

    def override(self, assignments) -> "RunConfig":
        """Apply KEY=VALUE strings (dotted keys, YAML-typed values), one config key each."""
        for a in assignments or ():
            if "=" not in a:
                raise ConfigError(f"override {a!r} is not KEY=VALUE")
            key, val = a.split("=", 1)
            parts = key.strip().split(".")
            if parts[0] not in DEFAULTS:
                raise ConfigError(f"override targets unknown section {parts[0]!r}")
            cur = self.data
            for p in parts[:-1]:
                cur = cur.setdefault(p, {})
            cur[parts[-1]] = yaml.safe_load(val)
        return self

    def echo(self) -> dict:
        return copy.deepcopy(self.data)

    # validation -------------------------------------------------------------
    def validate(self) -> "RunConfig":
        d = self.data
        r = d["kernel"]["radius"]
        if not isinstance(r, (int, float)) or r <= 0:
            raise self.error("kernel.radius", "must be a positive number")
        n = d["grid"]["n"]
        if not isinstance(n, int) or n < 9:
            raise self.error("grid.n", "must be an integer >= 9")
        X = d["grid"]["half_width"]
        if not isinstance(X, (int, float)) or X <= 0:
            raise self.error("grid.half_width", "must be positive")
        if d["grid"]["order"] not in (2, 4, 6):
            raise self.error("grid.order", "Laplacian order must be 2, 4 or 6")
        T = d["integrator"]["T"]
        if not isinstance(T, (int, float)) or T <= 0:
            raise self.error("integrator.T", "must be positive")
        h = 2 * X / (n - 1)
        dt = self.dt()
        from .field import cfl_limit

        lim = min(cfl_limit(h, d["grid"]["order"]), h / math.sqrt(3))
        if dt > lim * (1 + 1e-12):
            raise self.error("integrator.dt" if d["integrator"]["dt"] else "integrator.cfl",
                             f"dt={dt:.6g} violates the CFL limit {lim:.6g}")
        every = d["integrator"]["every"]
        if not isinstance(every, int) or every < 1:
            raise self.error("integrator.every", "must be a positive integer")
        kind = d["study"].get("kind", "simulate")
        if kind not in ("simulate", "lln", "clt"):
            raise self.error("study.kind", "must be simulate, lln or clt")
        if kind == "simulate":
            self._validate_ensemble()
            R = self.support_radius()
            need = R + T + h * (d["grid"]["order"] // 2)
            if X < need:
                raise self.error("grid.half_width", f"box {X} smaller than R + T + frame = {need:.6g} "
                                 "(domain-of-dependence guard)")
        else:
            self._validate_study(kind)
        thr = d["threads"]
        if not isinstance(thr, int) or thr < 1:
            raise self.error("threads", "must be a positive integer")
        return self

    def _validate_ensemble(self):
        e = self.data["ensemble"]
        srcs = [k for k in ("particles", "file", "law") if e.get(k) is not None]
        if len(srcs) != 1:
            raise self.error("ensemble", "give exactly one of particles, file or law")
        if e.get("particles") is not None:
            P = e["particles"]
            if not isinstance(P, list) or len(P) == 0:
                raise self.error("ensemble.particles", "need at least one particle (N = 0 is not a system)")
            for i, row in enumerate(P):
                if not isinstance(row, list) or len(row) not in (6, 7) or not all(
                        isinstance(x, (int, float)) for x in row):
                    raise ConfigError(f"ensemble.particles[{i}]: expected [q1,q2,q3,p1,p2,p3] or with weight",
                                      self.lines.line(("ensemble", "particles", i)))
                if len(row) == 7 and row[6] <= 0:
                    raise ConfigError(f"ensemble.particles[{i}]: weight must be positive",
                                      self.lines.line(("ensemble", "particles", i)))
        if e.get("law") is not None:
            N = e.get("N")
            if not isinstance(N, int) or N < 1:
                raise self.error("ensemble.N", "sampled ensembles need an integer N >= 1")
        if e.get("field") not in ("ground", "free"):
            raise self.error("ensemble.field", "must be 'ground' or 'free'")

    def _validate_study(self, kind):
        s = self.data["study"]
        if kind == "lln":
            Ns = s["Ns"]
            if not Ns or not all(isinstance(x, int) and x >= 1 for x in Ns):
                raise self.error("study.Ns", "must be a list of positive integers")
            if s["n_ref"] < 8 * max(Ns):
                raise self.error("study.n_ref", f"reference needs >= 8 x max N = {8 * max(Ns)} atoms")
            if s["n_ref"] % s["group"]:
                raise self.error("study.group", "must divide n_ref")
            if s["replicas"] < 1:
                raise self.error("study.replicas", "must be >= 1")
        if kind == "clt":
            if not isinstance(s["M"], int) or s["M"] < 2:
                raise self.error("study.M", "need M >= 2 replicas to estimate a covariance")
            if s["probes"] != "default" and (not isinstance(s["probes"], list) or len(s["probes"]) == 0):
                raise self.error("study.probes", "probe family must be 'default' or a non-empty list")
            if len(s["z0"]) != 6:
                raise self.error("study.z0", "test particle needs 6 phase coordinates")
        times = s["times"]
        if not times or any(t < 0 for t in times):
            raise self.error("study.times", "must be a non-empty list of nonnegative times")
        law = self.data["ensemble"].get("law")
        if law is None:
            raise self.error("ensemble.law", "studies need an initial law")
        X = self.data["grid"]["half_width"]
        h = 2 * X / (self.data["grid"]["n"] - 1)
        R = self.law().support_radius + self.data["kernel"]["radius"]
        need = R + max(times) + h * (self.data["grid"]["order"] // 2)
        if X < need:
            raise self.error("grid.half_width", f"box {X} smaller than R + T + frame = {need:.6g}")

    # derived objects ----------------------------------------------------------
    def h(self) -> float:
        return 2 * self.data["grid"]["half_width"] / (self.data["grid"]["n"] - 1)

    def dt(self) -> float:
        it = self.data["integrator"]
        if it.get("dt"):
            return float(it["dt"])
        T = float(it["T"])
        return T / math.ceil(T / (it["cfl"] * self.h()) - 1e-12)

    def kernel(self):
        from .kernel import RegularizationKernel

        k = self.data["kernel"]
        return RegularizationKernel(radius=float(k["radius"]), radial_nodes=int(k.get("radial_nodes", 512)))

    def grid(self):
        from .grid import Grid

        return Grid(int(self.data["grid"]["n"]), float(self.data["grid"]["half_width"]))

    def law(self):
        from .laws import make_law

        try:
            return make_law(self.data["ensemble"]["law"])
        except (TypeError, ValueError) as exc:
            raise self.error("ensemble.law", str(exc)) from None

    def ensemble(self):
        from .laws import replica_rng
        from .particles import ParticleEnsemble, load_ensemble_csv

        e = self.data["ensemble"]
        if e.get("particles") is not None:
            z = np.array([r[:6] for r in e["particles"]], dtype=float)
            w = np.array([r[6] if len(r) == 7 else 1.0 for r in e["particles"]], dtype=float)
            return ParticleEnsemble(z[:, :3], z[:, 3:], w / w.sum())
        if e.get("file") is not None:
            p = Path(e["file"])
            if not p.is_absolute() and self.source:
                p = Path(self.source).parent / p
            return load_ensemble_csv(p)
        return self.law().sample(replica_rng(int(e.get("seed", 0)), 0), int(e["N"]))

    def support_radius(self) -> float:
        e = self.ensemble()
        return e.support_radius() + float(self.data["kernel"]["radius"])
