"""Scenario configurations, the task runner, and the bundled invariant suites.

A scenario is a JSON document (schema shipped with the package) naming a
grid, an initial state, potentials, an optional gauge function and a list of
tasks.  Tasks emit CSV/JSON artifacts with a fixed 17-digit float format and
record their tolerance checks; a run passes when every check passes.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field as dc_field
from importlib import resources
from pathlib import Path

import numpy as np

from . import fields as fld
from . import states as st
from .evolution import (PropagatorConfig, advect_gaussian,
                        backward_characteristics_density, classical_limit_study,
                        equation_rhs, residual_refinement_study,
                        schrodinger_propagate, tomographic_residual)
from .gauge_kernels import apply_kernel, kernel_from_trace, kernel_linear_chi
from .numerics import FLOAT_FORMAT, Grid
from .tomography import (TomographyParams, compute_tomogram,
                         compute_tomogram_family, periodic_axis,
                         reconstruct_density, reconstruct_wigner_from_probability,
                         tomogram_l1_distance)
from .units import INTERNAL, UnitsContext
from .wigner import gauge_independent_wigner, psf_distance_max

__all__ = ["ScenarioConfig", "RunReport", "run_scenario_config", "bundled_scenarios",
           "scenario_tags", "validate_config", "ConfigError"]


class ConfigError(ValueError):
    """Scenario configuration is structurally invalid."""


@dataclass
class ScenarioConfig:
    raw: dict

    @property
    def name(self) -> str:
        return self.raw["name"]

    def units(self) -> UnitsContext:
        return UnitsContext(**self.raw.get("units", {}))

    def grid(self) -> Grid:
        gspec = self.raw["grid"]
        return Grid.uniform(gspec["min"], gspec["max"], gspec["n"],
                            gspec.get("dim", 1))

    def state(self, units: UnitsContext):
        sspec = self.raw["state"]
        grid = self.grid()
        kind = sspec["type"]
        if kind == "gaussian":
            return st.gaussian_packet(grid, sspec.get("q0", 0.0),
                                      sspec.get("p0", 0.0),
                                      sspec.get("sigma", 1.0), units)
        if kind == "thermal":
            return st.thermal_density(grid, sspec.get("nbar", 0.5), units)
        if kind == "harmonic_eigenstate":
            return st.harmonic_eigenstate(grid, sspec.get("level", 0), units)
        raise ConfigError(f"unknown state type {kind!r}")

    def potentials(self, units: UnitsContext) -> fld.Potentials:
        return fld.potentials_from_descriptor(self.raw["potentials"], units)

    def gauge(self):
        gspec = self.raw.get("gauge", {"type": "zero"})
        kind = gspec["type"]
        dim = self.raw["grid"].get("dim", 1)
        if kind == "zero":
            return fld.zero_gauge(dim)
        if kind == "linear":
            return fld.linear_gauge(gspec["a"])
        if kind == "quadratic":
            return fld.quadratic_gauge(gspec["b"], dim)
        if kind == "cubic":
            return fld.cubic_gauge(gspec["kappa"], dim)
        if kind == "time_only":
            rate = gspec.get("rate", 1.0)
            return fld.time_gauge(lambda t: rate * t, lambda t: rate, dim)
        if kind == "separable":
            rate = gspec.get("rate", 1.0)
            return fld.separable_gauge(gspec["c"], lambda t: np.sin(rate * t),
                                       lambda t: rate * np.cos(rate * t))
        raise ConfigError(f"unknown gauge type {kind!r}")


@dataclass
class RunReport:
    name: str
    config_hash: str
    tasks: list = dc_field(default_factory=list)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(t["status"] == "pass" for t in self.tasks)

    def to_dict(self) -> dict:
        return {"name": self.name, "config_hash": self.config_hash,
                "passed": self.passed, "wall_time_s": self.wall_time,
                "tasks": self.tasks}


def config_hash(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def validate_config(raw: dict):
    import jsonschema
    schema = json.loads(resources.files("emtomo.schema")
                        .joinpath("scenario.schema.json").read_text())
    try:
        jsonschema.validate(raw, schema)
    except jsonschema.ValidationError as err:
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {err.message}") from err


def _write_csv(path: Path, columns: dict):
    arrays = [np.asarray(v, dtype=float) for v in columns.values()]
    data = np.column_stack(arrays)
    header = ",".join(columns.keys())
    np.savetxt(path, data, fmt=FLOAT_FORMAT, delimiter=",", header=header,
               comments="")


# ---------------------------------------------------------------------------
# task implementations
# ---------------------------------------------------------------------------

def _task_compute_tomogram(cfg: ScenarioConfig, task: dict, outdir: Path) -> dict:
    units = cfg.units()
    state = cfg.state(units)
    pot = cfg.potentials(units)
    chi = cfg.gauge()
    params = TomographyParams.symplectic(task.get("mu", 1.0), task.get("nu", 1.0))
    gauge_kind = task.get("gauge_kind", "gauge_independent")
    tom = compute_tomogram(state, params, gauge_kind, pot, units=units)

    state_c = st.gauge_phase_transform(state, chi, units=units)
    pot_c = fld.gauge_transform_potentials(pot, chi, units)
    tom_c = compute_tomogram(state_c, params, gauge_kind, pot_c, x=tom.x,
                             units=units)
    dist = tomogram_l1_distance(tom, tom_c)
    tol = task.get("two_gauge_tol", 1e-6)
    _write_csv(outdir / "tomogram.csv", {"x": tom.x, "value": tom.values,
                                         "value_second_gauge": tom_c.values})
    metrics = {"two_gauge_l1": dist,
               "normalization_correction": tom.normalization_correction}
    ok = dist <= tol if gauge_kind == "gauge_independent" else dist > tol
    return {"task": "compute_tomogram", "metrics": metrics,
            "status": "pass" if ok else "fail"}


def _task_kernel_check(cfg: ScenarioConfig, task: dict, outdir: Path) -> dict:
    units = cfg.units()
    grid = cfg.grid()
    state = cfg.state(units)
    chi = cfg.gauge()
    h = grid.spacings[0]
    k0 = units.inverse_length
    params = TomographyParams.symplectic(task.get("mu", 1.0), task.get("nu", 1.0))
    mu, nu, _ = params.resolve(units)
    period = 2.0 * np.pi * abs(nu[0]) * units.hbar / h
    x = periodic_axis(period / 2.0, task.get("n_x", 96))
    dmu = 2.0 * np.pi / (grid.shape[0] * h * k0)
    in_mu = dmu * (np.arange(grid.shape[0] + 1) - grid.shape[0] // 2)
    in_nu = (h / units.momentum_scale) * (np.arange(grid.shape[0] + 1)
                                          - grid.shape[0] // 2)
    fam_half = 1.3 * (abs(in_mu[-1]) * max(abs(grid.axes[0].lo), grid.axes[0].hi)
                      + abs(in_nu[-1]) * np.pi * units.hbar / (2 * h))
    fam_x = np.linspace(-fam_half, fam_half, 513)
    fam = compute_tomogram_family(state, in_mu, in_nu, fam_x,
                                  gauge_kind="ordinary", units=units)
    ker = kernel_from_trace("symplectic", chi, grid, params, x, in_mu, in_nu,
                            units=units)
    out = apply_kernel(ker, fam, units)
    state_c = st.gauge_phase_transform(state, chi, units=units)
    direct = compute_tomogram(state_c, params, "ordinary", x=x, units=units)
    l1 = tomogram_l1_distance(out, direct)
    tol = task.get("tol", 1e-3)
    ker.save(outdir / "kernel")
    _write_csv(outdir / "kernel_check.csv",
               {"x": x, "kernel_route": out.values, "direct_route": direct.values})
    return {"task": "kernel_check",
            "metrics": {"consistency_l1": l1, "norm_check": ker.norm_check,
                        "imag_fraction": ker.imag_fraction},
            "status": "pass" if l1 <= tol else "fail"}


def _task_residual(cfg: ScenarioConfig, task: dict, outdir: Path) -> dict:
    units = cfg.units()
    pot = cfg.potentials(units)
    equation = task["equation"]
    levels = task.get("levels", 2)
    base_n = task.get("base_n", cfg.raw["grid"]["n"])
    base_dt = task.get("base_dt", cfg.raw.get("propagator", {}).get("dt", 0.02))
    t_center = task.get("t_center", 0.3)
    sample_steps = task.get("sample_steps", 5)
    dim = cfg.raw["grid"].get("dim", 1)
    gspec = cfg.raw["grid"]
    sspec = cfg.raw["state"]
    center = (task.get("center_mu", [1.0] * dim), task.get("center_nu", [0.7] * dim))
    if equation == "liouville_optical":
        center = task.get("center_theta", [0.7])
    scalar_x = equation in ("scalar_kinetic", "liouville_scalar")
    classical = equation.startswith("liouville")
    x_half = task.get("x_half", 12.0)
    n_x = task.get("n_x", 96)

    def runner(level):
        n = base_n * 2 ** level
        dt = base_dt / 2 ** level
        steps0 = int(round(t_center / dt)) - 2 * sample_steps
        if steps0 < 1:
            raise ConfigError("t_center too small for the sampling stencil")
        times, traj = [], []
        if classical:
            sigma = np.broadcast_to(np.asarray(sspec.get("sigma", 1.0)), (dim,))
            q0 = np.broadcast_to(np.asarray(sspec.get("q0", 0.0), dtype=float), (dim,))
            p0 = np.broadcast_to(np.asarray(sspec.get("p0", 0.0), dtype=float), (dim,))
            sp = units.hbar / (2.0 * sigma)
            if dim == 2:
                mean0 = np.concatenate([q0, p0])
                cov0 = np.diag(np.concatenate([sigma ** 2, sp ** 2]))
                for i in range(5):
                    t = t_center + (i - 2) * sample_steps * dt
                    traj.append(advect_gaussian(mean0, cov0, pot, t, dt, dim, units))
                    times.append(t)
            else:
                qa = np.linspace(gspec["min"], gspec["max"], n)
                pa = np.linspace(-6.0, 6.0, n)

                def w0(qv, pv):
                    out = np.ones(qv.shape[0])
                    for a in range(dim):
                        out *= np.exp(-(qv[:, a] - q0[a]) ** 2 / (2 * sigma[a] ** 2)) \
                            / np.sqrt(2 * np.pi * sigma[a] ** 2)
                        out *= np.exp(-(pv[:, a] - p0[a]) ** 2 / (2 * sp[a] ** 2)) \
                            / np.sqrt(2 * np.pi * sp[a] ** 2)
                    return out

                for i in range(5):
                    t = t_center + (i - 2) * sample_steps * dt
                    traj.append(backward_characteristics_density(
                        w0, (qa,), (pa,), pot, t, dt, units))
                    times.append(t)
        else:
            grid = Grid.uniform(gspec["min"], gspec["max"], n, dim)
            psi = st.gaussian_packet(grid, sspec.get("q0", 0.0),
                                     sspec.get("p0", 0.0),
                                     sspec.get("sigma", 1.0), units)
            method = "dense" if dim == 1 else "sparse_fd4"
            psi_t = schrodinger_propagate(
                psi, pot, PropagatorConfig(dt=dt, steps=steps0, method=method), units)
            traj = [psi_t]
            times = [psi_t.time]
            for _ in range(4):
                traj.append(schrodinger_propagate(
                    traj[-1], pot,
                    PropagatorConfig(dt=dt, steps=sample_steps, method=method), units))
                times.append(traj[-1].time)
        if scalar_x:
            x_axes = (periodic_axis(x_half, n_x),)
        elif dim == 2:
            halves = task.get("x_half_axes", [x_half, x_half])
            x_axes = tuple(periodic_axis(hh, n_x) for hh in halves)
        else:
            x_axes = (periodic_axis(x_half, n_x),)
        return tomographic_residual(traj, np.array(times), equation, pot, center,
                                    x_axes, stencil_delta=0.1 / 2 ** level,
                                    units=units,
                                    engine="direct" if dim == 2 else "auto")

    report = residual_refinement_study(runner, equation, levels)
    _write_csv(outdir / f"residual_{equation}.csv",
               {"level": np.arange(levels), "l2": np.array(report.residuals)})
    min_order = task.get("min_order", 1.8)
    ok = report.order >= min_order and report.monotone()
    return {"task": "residual",
            "metrics": {"equation": equation, "residuals": report.residuals,
                        "order": report.order},
            "status": "pass" if ok else "fail"}


def _task_classical_limit(cfg: ScenarioConfig, task: dict, outdir: Path) -> dict:
    units = cfg.units()
    pot = cfg.potentials(units)
    chi = cfg.gauge()
    hbar_list = cfg.raw.get("hbar_list", [1.0, 0.5, 0.25, 0.125])
    directions = [tuple(d) for d in task.get("directions",
                                             [[1.0, 0.0], [0.0, 1.0], [0.8, 0.6]])]
    scenario = {"potentials": pot,
                "chi": None if chi.descriptor.get("type") == "zero" else chi,
                "t_final": task.get("t_final", 0.6),
                "dt": task.get("dt", 2e-3),
                "n_grid": cfg.raw["grid"]["n"],
                "n_x": task.get("n_x", 161),
                "q0": cfg.raw["state"].get("q0", 0.0),
                "p0": cfg.raw["state"].get("p0", 0.0),
                "directions": directions}
    result = classical_limit_study(scenario, hbar_list, units)
    rows = result["rows"]
    _write_csv(outdir / "classical_limit.csv",
               {"hbar": [r["hbar"] for r in rows],
                "tomogram_distance": [r["tomogram_distance"] for r in rows],
                "gauge_sensitivity": [r["gauge_sensitivity"] for r in rows]})
    mode = task.get("expect", "monotone")
    if mode == "monotone":
        ok = result["tomogram_monotone"]
        if scenario["chi"] is not None:
            ok = ok and result["gauge_monotone"]
    else:
        ok = all(r["tomogram_distance"] <= task.get("tol", 1e-3) for r in rows)
    return {"task": "classical_limit",
            "metrics": {"rows": rows,
                        "tomogram_monotone": result["tomogram_monotone"],
                        "gauge_monotone": result["gauge_monotone"]},
            "status": "pass" if ok else "fail"}


def _task_reconstruct(cfg: ScenarioConfig, task: dict, outdir: Path) -> dict:
    units = cfg.units()
    grid = cfg.grid()
    state = cfg.state(units)
    pot = cfg.potentials(units)
    rho = st.density_from_wavefunction(state) if isinstance(state, st.WaveFunction) \
        else state
    lam = task.get("lambda", 4.0)
    n_par = task.get("n_parameters", 33)
    mu_grid = np.linspace(-lam, lam, n_par)
    nu_grid = np.linspace(-lam, lam, n_par)
    x = np.linspace(-task.get("x_half", 24.0), task.get("x_half", 24.0),
                    task.get("n_x", 257))
    gauge_kind = task.get("gauge_kind", "gauge_independent")
    fam = compute_tomogram_family(state, mu_grid, nu_grid, x, gauge_kind=gauge_kind,
                                  potentials=pot, units=units)
    rec, rep = reconstruct_density(fam, grid, pot if gauge_kind == "gauge_independent"
                                   else None, units=units, reference=rho,
                                   min_fidelity=task.get("min_fidelity", 0.9))
    wg = gauge_independent_wigner(state, pot, units=units) \
        if gauge_kind == "gauge_independent" else None
    metrics = {"fidelity": rep["fidelity"],
               "trace_pre_normalization": rep["trace_pre_normalization"]}
    if wg is not None:
        wrec = reconstruct_wigner_from_probability(fam, wg.q_axes[0], wg.p_axes[0],
                                                   units)
        l1 = float(np.sum(np.abs(wrec.values - wg.values)) * wg.cell_volume()
                   / wg.abs_integral())
        metrics["wigner_l1"] = l1
    _write_csv(outdir / "reconstruction_diag.csv",
               {"q": grid.axis_points(0), "rho_diag": rec.diagonal().ravel()})
    ok = rep["fidelity"] >= task.get("min_fidelity_pass", 0.999)
    return {"task": "reconstruct", "metrics": metrics,
            "status": "pass" if ok else "fail"}


_TASKS = {
    "compute_tomogram": _task_compute_tomogram,
    "kernel_check": _task_kernel_check,
    "residual": _task_residual,
    "classical_limit": _task_classical_limit,
    "reconstruct": _task_reconstruct,
}


def run_scenario_config(raw: dict, output_root: Path) -> RunReport:
    validate_config(raw)
    chash = config_hash(raw)
    report = RunReport(raw["name"], chash)
    outdir = Path(output_root) / f"{raw['name']}-{chash}"
    outdir.mkdir(parents=True, exist_ok=True)
    cfg = ScenarioConfig(raw)
    start = time.time()
    for task in raw["tasks"]:
        impl = _TASKS.get(task["task"])
        if impl is None:
            raise ConfigError(f"unknown task {task['task']!r}")
        result = impl(cfg, task, outdir)
        report.tasks.append(result)
    report.wall_time = time.time() - start
    (outdir / "report.json").write_text(json.dumps(report.to_dict(), indent=2,
                                                   default=float))
    return report


# ---------------------------------------------------------------------------
# bundled scenarios
# ---------------------------------------------------------------------------

def bundled_scenarios() -> dict:
    """Named scenario configurations with their suite tags."""
    base_grid = {"min": -12.0, "max": 12.0, "n": 128, "dim": 1}
    small_grid = {"min": -8.0, "max": 8.0, "n": 32, "dim": 1}
    scen = {}

    scen["gauge_invariance_1d"] = ({"gauge"}, {
        "name": "gauge_invariance_1d",
        "grid": base_grid,
        "state": {"type": "gaussian", "q0": 0.3, "p0": 0.5, "sigma": 1.0},
        "potentials": {"type": "polynomial", "dim": 1, "phi": {},
                       "A": [{"[1]": 0.5}]},
        "gauge": {"type": "linear", "a": [1.0]},
        "tasks": [{"task": "compute_tomogram", "mu": 1.0, "nu": 1.0,
                   "gauge_kind": "gauge_independent", "two_gauge_tol": 1e-6}],
    })
    scen["gauge_invariance_quadratic"] = ({"gauge"}, {
        "name": "gauge_invariance_quadratic",
        "grid": base_grid,
        "state": {"type": "gaussian", "q0": 0.3, "p0": 0.5, "sigma": 1.0},
        "potentials": {"type": "free", "dim": 1},
        "gauge": {"type": "quadratic", "b": 0.4},
        "tasks": [{"task": "compute_tomogram", "mu": 1.0, "nu": 1.0,
                   "gauge_kind": "gauge_independent", "two_gauge_tol": 1e-6}],
    })
    scen["ordinary_tomogram_not_invariant"] = ({"gauge"}, {
        "name": "ordinary_tomogram_not_invariant",
        "grid": base_grid,
        "state": {"type": "gaussian", "q0": 0.0, "p0": 0.0, "sigma": 1.0},
        "potentials": {"type": "free", "dim": 1},
        "gauge": {"type": "linear", "a": [1.0]},
        "tasks": [{"task": "compute_tomogram", "mu": 1.0, "nu": 1.0,
                   "gauge_kind": "ordinary", "two_gauge_tol": 0.05}],
    })
    scen["kernel_reproducing"] = ({"gauge", "kernel"}, {
        "name": "kernel_reproducing",
        "grid": small_grid,
        "state": {"type": "gaussian", "q0": 0.3, "p0": 0.2, "sigma": 1.0},
        "potentials": {"type": "free", "dim": 1},
        "gauge": {"type": "zero"},
        "tasks": [{"task": "kernel_check", "tol": 1e-3}],
    })
    scen["kernel_linear"] = ({"gauge", "kernel"}, {
        "name": "kernel_linear",
        "grid": small_grid,
        "state": {"type": "gaussian", "q0": 0.3, "p0": 0.2, "sigma": 1.0},
        "potentials": {"type": "free", "dim": 1},
        "gauge": {"type": "linear", "a": [0.9]},
        "tasks": [{"task": "kernel_check", "tol": 1e-3}],
    })
    scen["kernel_quadratic"] = ({"gauge", "kernel"}, {
        "name": "kernel_quadratic",
        "grid": small_grid,
        "state": {"type": "gaussian", "q0": 0.3, "p0": 0.2, "sigma": 1.0},
        "potentials": {"type": "free", "dim": 1},
        "gauge": {"type": "quadratic", "b": 0.1},
        "tasks": [{"task": "kernel_check", "tol": 5e-3}],
    })
    scen["reconstruction_roundtrip"] = ({"reconstruction"}, {
        "name": "reconstruction_roundtrip",
        "grid": {"min": -12.0, "max": 12.0, "n": 64, "dim": 1},
        "state": {"type": "gaussian", "q0": 0.4, "p0": 0.3,
                  "sigma": 0.7071067811865476},
        "potentials": {"type": "free", "dim": 1},
        "tasks": [{"task": "reconstruct", "lambda": 4.0, "n_parameters": 33,
                   "min_fidelity_pass": 0.999}],
    })
    scen["residual_free_quantum"] = ({"residual"}, {
        "name": "residual_free_quantum",
        "grid": {"min": -12.0, "max": 12.0, "n": 64, "dim": 1},
        "state": {"type": "gaussian", "q0": 0.0, "p0": 0.6, "sigma": 1.0},
        "potentials": {"type": "free", "dim": 1},
        "propagator": {"dt": 0.02},
        "tasks": [{"task": "residual", "equation": "symplectic_generalized",
                   "levels": 2, "x_half": 16.0}],
    })
    scen["residual_harmonic_classical"] = ({"residual"}, {
        "name": "residual_harmonic_classical",
        "grid": {"min": -8.0, "max": 8.0, "n": 96, "dim": 1},
        "state": {"type": "gaussian", "q0": 0.4, "p0": 0.3, "sigma": 1.0},
        "potentials": {"type": "harmonic", "dim": 1, "omega0": 1.0},
        "tasks": [{"task": "residual", "equation": "liouville_scalar",
                   "levels": 2, "x_half": 12.0}],
    })
    scen["classical_limit_harmonic"] = ({"limit"}, {
        "name": "classical_limit_harmonic",
        "grid": base_grid,
        "state": {"type": "gaussian", "q0": 1.0, "p0": 0.0, "sigma": 1.0},
        "potentials": {"type": "harmonic", "dim": 1, "omega0": 1.0},
        "hbar_list": [1.0, 0.5, 0.25, 0.125],
        "tasks": [{"task": "classical_limit", "expect": "tolerance",
                   "tol": 1e-3, "t_final": 0.5}],
    })
    scen["classical_limit_anharmonic"] = ({"limit"}, {
        "name": "classical_limit_anharmonic",
        "grid": base_grid,
        "state": {"type": "gaussian", "q0": 1.0, "p0": 0.0, "sigma": 1.0},
        "potentials": {"type": "anharmonic", "dim": 1, "omega0": 1.0,
                       "quartic": 0.1},
        "gauge": {"type": "cubic", "kappa": 0.5},
        "hbar_list": [1.0, 0.5, 0.25, 0.125],
        "tasks": [{"task": "classical_limit", "expect": "monotone",
                   "t_final": 0.5}],
    })
    return scen


def scenario_tags() -> set:
    tags = set()
    for t, _ in bundled_scenarios().values():
        tags |= t
    return tags
