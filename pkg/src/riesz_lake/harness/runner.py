"""Wire the modules into a single scenario run and write its outputs."""
from __future__ import annotations

import copy
import csv
import json
import logging
import math
import os
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..dynamics import ParticleState, critical_point_1d, jittered_lattice, sample_monokinetic_init, simulate
from ..equilibrium import Confinement, equilibrium_case, torus_uniform, uniform_ball, uniform_interval
from ..errors import ConfigError, PreconditionError, RieszLakeError, UnsupportedError
from ..exact_1d import ExactInit, exact_state
from ..kernels import Kernel
from ..lake import evolve, random_smooth, taylor_green
from ..modulated_energy import DIAGNOSTIC_COLUMNS, EffectiveBackground, calibrated_constant, corrector, total_modulated_energy
from .config import normalize, resolve_dt, resolve_epsilon, resolve_r_N

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    config: dict
    records: list
    meta: dict
    out_dir: Path | None = None
    trajectory: object = field(default=None, repr=False)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])


@dataclass
class Scenario:
    """Concrete objects built from a validated config."""

    config: dict
    kernel: Kernel
    V: Confinement
    mu: object
    N: int
    epsilon: float
    gamma: float
    dt: float
    fields: object
    C: float


class FieldTrack:
    """Modulating field evaluated at increasing times (analytic or solver-evolved)."""

    def __init__(self, cfg, domain, gamma, kernel, epsilon, mu):
        self.kind = cfg["kind"]
        self.cfg = cfg
        self.gamma = gamma
        self.kernel = kernel
        self.epsilon = epsilon
        self.mu = mu
        self.current = None
        if self.kind == "zero":
            return
        n = int(cfg.get("n", domain["n"]))
        L = float(domain["L"])
        if kernel.d != 2:
            raise ConfigError("modulating fields are implemented for d = 2", field="field.kind")
        if self.kind == "taylor_green":
            self.current = taylor_green(n, L, float(cfg["amplitude"]), gamma)
        else:
            self.current = random_smooth(n, L, int(cfg["kmax"]), 0, float(cfg["amplitude"]), gamma)
        self.n, self.L = n, L
        self.field_dt = float(cfg.get("dt", 0.25 * L / (n * max(float(cfg["amplitude"]), 1e-12))))

    def at(self, t):
        if self.current is None:
            return None
        if t > self.current.t + 1e-14:
            if self.kind == "taylor_green" and not self.cfg["evolve"]:
                self.current = taylor_green(self.n, self.L, float(self.cfg["amplitude"]), self.gamma, t)
            else:
                self.current = evolve(self.current, t - self.current.t, self.field_dt)
        return self.current

    def background(self, t):
        f = self.at(t)
        if f is None:
            return EffectiveBackground(self.mu, None, self.epsilon)
        U = corrector(f.u, f.dtu, self.gamma, self.kernel)
        return EffectiveBackground(self.mu, U, self.epsilon)


def build_background(cfg, kernel):
    dom, bg = cfg["domain"], cfg.get("background", {})
    if dom["kind"] == "torus":
        return torus_uniform(kernel.d, float(dom["L"]))
    kind = bg.get("kind", "equilibrium")
    if kind == "equilibrium":
        case = bg.get("case")
        if case is None:
            raise ConfigError("whole-space runs need background.case or background.kind", field="background")
        try:
            return equilibrium_case(case).mu
        except UnsupportedError as exc:
            raise ConfigError(str(exc), field="background.case") from None
    if kind == "uniform_interval":
        return uniform_interval(float(bg.get("R", 1.0)))
    if kind == "uniform_ball":
        return uniform_ball(float(bg.get("R", 1.0)), kernel.d)
    raise ConfigError(f"unknown background.kind {kind!r}", field="background.kind")


def build_scenario(raw: dict) -> Scenario:
    cfg = normalize(raw)
    dom = cfg["domain"]
    kcfg = dict(cfg["kernel"])
    try:
        if dom["kind"] == "torus":
            kcfg.setdefault("L", float(dom["L"]))
            kernel = Kernel.from_config(kcfg, d=int(dom.get("d", kcfg.get("d", 2))))
            if not kernel.periodic:
                raise ConfigError("torus domains need a torus_* kernel family", field="kernel.family")
            if not math.isclose(kernel.L, float(dom["L"])):
                raise ConfigError("kernel.L differs from domain.L", field="kernel.L")
        else:
            kernel = Kernel.from_config(kcfg)
            if kernel.periodic:
                raise ConfigError("torus kernels need domain.kind = 'torus'", field="domain.kind")
    except RieszLakeError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid kernel: {exc}", field="kernel") from None
    except KeyError as exc:
        raise ConfigError(f"kernel is missing {exc}", field="kernel") from None
    try:
        V = Confinement.from_config(cfg["confinement"])
    except (RieszLakeError, KeyError) as exc:
        raise ConfigError(f"invalid confinement: {exc}", field="confinement") from None
    mu = build_background(cfg, kernel)
    N = cfg["particles"]["N"]
    eps = resolve_epsilon(cfg)
    gamma = float(cfg["particles"]["gamma"])
    dt = resolve_dt(cfg)
    C = cfg["diagnostics"].get("C")
    if C is None:
        try:
            C = calibrated_constant(kernel.d, kernel.s) if kernel.family != "torus_spectral" else 0.0
        except UnsupportedError:
            log.warning("no calibrated constant for (d, s) = (%s, %s); using C = 0", kernel.d, kernel.s)
            C = 0.0
    fields = FieldTrack(cfg["field"], dom, gamma, kernel, eps, mu)
    try:
        fields.background(0.0)
    except PreconditionError as exc:
        name = "particles.epsilon" if "epsilon" in cfg["particles"] else "particles.epsilon_rule"
        raise ConfigError(str(exc), field=name) from None
    return Scenario(cfg, kernel, V, mu, N, eps, gamma, dt, fields, float(C))


def initial_state(sc: Scenario) -> tuple[ParticleState, ExactInit | None]:
    init = sc.config["init"]
    kind, seed = init["kind"], int(sc.config["seed"])
    u0 = sc.fields.at(0.0)
    if kind in ("exact_1d", "critical"):
        if sc.kernel.family != "oned_coulomb" or sc.V.kind != "quadratic" or sc.V.a != 1.0 or sc.gamma != 0:
            raise ConfigError(
                f"init.kind = {kind!r} needs kernel oned_coulomb, confinement quadratic with a = 1 and gamma = 0",
                field="init.kind",
            )
        if kind == "critical":
            return critical_point_1d(sc.N, sc.epsilon), ExactInit.critical(sc.N, sc.epsilon)
        variant = init["variant"]
        if variant not in ("shifted", "critical"):
            raise ConfigError("init.variant must be 'shifted' or 'critical'", field="init.variant")
        ex = ExactInit.shifted(sc.N, sc.epsilon) if variant == "shifted" else ExactInit.critical(sc.N, sc.epsilon)
        return ex.to_state(), ex
    r_N = resolve_r_N(sc.config)
    if kind == "monokinetic":
        return sample_monokinetic_init(sc.mu, u0, sc.N, r_N, seed, sc.epsilon, sc.gamma), None
    try:
        X = jittered_lattice(sc.mu, sc.N, float(init["jitter"]), seed)
    except PreconditionError as exc:
        raise ConfigError(str(exc), field="init.kind") from None
    st = sample_monokinetic_init(sc.mu, u0, sc.N, r_N, seed, sc.epsilon, sc.gamma)
    v = st.velocities - (0 if u0 is None else u0(st.positions)) + (0 if u0 is None else u0(X))
    return ParticleState(X, v, 0.0, sc.epsilon, sc.gamma), None


def _fmt(x):
    return repr(float(x))


def write_diagnostics_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DIAGNOSTIC_COLUMNS)
        for r in records:
            w.writerow([_fmt(v) for v in r.row()])


def read_diagnostics_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {c: np.array([float(r[c]) for r in rows]) for c in DIAGNOSTIC_COLUMNS}


def _atomic_write(path, text):
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def versions():
    return {"riesz_lake": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def run_scenario(raw: dict, out_dir=None, write=True) -> RunResult:
    """Run one scenario; writes ``diagnostics.csv``, ``meta.json`` and optionally ``trajectory.csv``.

    Raises
    ------
    ConfigError
        On any validation failure (the CLI maps this to exit code 2).
    """
    start = time.perf_counter()
    sc = build_scenario(raw)
    cfg = sc.config
    state0, exact = initial_state(sc)
    T = float(cfg["time"]["T"])
    diag = cfg["diagnostics"]
    kappa = diag.get("kappa")
    K_max = int(diag["K_max"])

    def record(state):
        u = sc.fields.at(state.t)
        mu_eff = sc.fields.background(state.t)
        return total_modulated_energy(state, u, mu_eff, sc.V, sc.kernel, C=sc.C, kappa=kappa, K_max=K_max)

    records = []
    errs = {"x": 0.0, "v": 0.0}

    def observe(state):
        records.append(record(state))
        if exact is not None:
            ref = exact_state(exact, state.t)
            errs["x"] = max(errs["x"], float(np.max(np.abs(state.positions - ref.positions))))
            errs["v"] = max(errs["v"], float(np.max(np.abs(state.velocities - ref.velocities))))
        return {}

    keep = bool(diag["write_trajectory"])
    traj = simulate(
        state0, T, sc.dt, sc.kernel, sc.V,
        sample_every=int(cfg["time"]["sample_every"]),
        diagnostics={"_": observe},
        scheme=cfg["time"]["scheme"],
        keep_states=keep,
    )
    meta = {
        "config": cfg,
        "resolved": {
            "N": sc.N,
            "epsilon": sc.epsilon,
            "gamma": sc.gamma,
            "dt": sc.dt,
            "steps": traj.steps,
            "scheme": cfg["time"]["scheme"],
            "C": sc.C,
            "kernel_scale": sc.kernel.local_scale,
            "mu_sup": sc.fields.background(0.0).sup_norm,
        },
        "seed": cfg["seed"],
        "versions": versions(),
        "wall_time_s": time.perf_counter() - start,
    }
    if exact is not None:
        meta["max_err_vs_exact"] = errs["x"]
        meta["max_verr_vs_exact"] = errs["v"]
    result = RunResult(cfg, records, meta, None, traj)
    if write:
        out = Path(out_dir if out_dir is not None else cfg["output"]["dir"])
        out.mkdir(parents=True, exist_ok=True)
        write_diagnostics_csv(out / "diagnostics.csv", records)
        if keep:
            traj.to_csv(out / "trajectory.csv")
        _atomic_write(out / "meta.json", json.dumps(meta, indent=2, default=_json_default))
        if diag["plots"]:
            from .plots import plot_timeseries

            plot_timeseries(out / "diagnostics.csv", ["H_N", "script_H"], out / "diagnostics.svg")
        result.out_dir = out
    return result


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o)}")


def with_overrides(raw: dict, **sections) -> dict:
    """Copy of ``raw`` with table entries replaced, e.g. ``particles={"N": 64}``."""
    out = copy.deepcopy(raw)
    for sec, vals in sections.items():
        if isinstance(vals, dict):
            out.setdefault(sec, {}).update(vals)
        else:
            out[sec] = vals
    return out
