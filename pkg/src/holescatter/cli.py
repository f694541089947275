"""Batch runner: ``holescatter <command> --config FILE --out DIR``.

Commands
--------
simulate         capacitances, retarded system, probe traces and snapshots
oracle-validate  sphere-oracle sweep against the single-hole closed form
medium           effective-medium volume solve, exterior probes, optional
                 comparison against periodic clusters
design           density / potential / scaled-capacitance chain and layout
convergence      refinement sweeps with fitted rates

Exit codes: 0 success, 1 solver failure, 2 refused precondition or bad
input, 3 acceptance threshold missed.

Every run writes ``manifest.ini`` holding the fully resolved configuration
(defaults included) plus resolved quantities such as the time step.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import os
import sys
from importlib import resources

import numpy as np

from . import __version__
from .capacitance import fill_capacitances
from .cluster import (
    Cluster,
    Hole,
    SourceConfig,
    Sphere,
    check_expansion_condition,
    check_solvability_condition,
    cluster_to_config,
    holes_from_config,
    load_cluster,
    periodic_layout,
    regime_exponents,
    separations,
)
from .design import (
    SubharmonicityError,
    cbar_from_p,
    cross_grid_errors,
    field_from_files,
    field_manifest,
    field_to_csv,
    from_function,
    layout_from_cbar,
    p_from_rho,
    rho_from_p,
    solve_p,
)
from .fields import (
    FieldGrid,
    ProbeSet,
    default_exclusion,
    grid_eval,
    probe_traces,
    snapshot_manifest,
    traces_to_csv,
)
from .io import atomic_write, csv_text, ini_text
from .medium import CFLError, VoxelGrid, exterior_W, march_volume, refinement_sweep
from .oracle import compare_with_asymptotic, loglog_slope
from .retarded import (
    ConvergenceError,
    SolvabilityError,
    SystemSolution,
    assemble,
    default_dt,
    march,
    residual,
    stability_check,
)
from .signal import INTERP_ORDERS, SampledSignal, Trace, make_signal

logger = logging.getLogger("holescatter")

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_REFUSED = 2
EXIT_THRESHOLD = 3

COMMANDS = ("simulate", "oracle-validate", "medium", "design", "convergence")

# Materialized into every manifest so a changed default cannot silently alter results.
DEFAULTS = {
    "signal": {"kind": "smooth-bump", "scale": "1.0", "shift": "0.0", "amplitude": "1.0", "file": ""},
    "source": {"c0": "1.0"},
    "time": {"dt": "auto", "interp": "cubic", "tol": "1e-10", "max_iter": "200"},
    "probes": {"points": "", "exclusion": "auto", "which": "scattered, total"},
    "oracle": {"slope_threshold": "1.8", "dt": "auto", "per_radius": "20"},
    "medium": {"dt": "auto", "dump_voxels": "false"},
    "compare": {"cells_per_side": ""},
    "design": {"a": "", "levels": "3", "order_threshold": "1.8", "central_fraction": "0.5"},
    "convergence": {"levels": "3", "threshold": "auto", "output_samples": "81"},
}
SECTIONS_FOR = {
    "simulate": ("signal", "source", "time", "probes"),
    "oracle-validate": ("signal", "source", "time", "probes", "oracle"),
    "medium": ("signal", "source", "time", "probes", "medium", "compare"),
    "design": ("design",),
    "convergence": ("signal", "source", "time", "probes", "convergence", "oracle", "medium"),
}


class Refusal(Exception):
    """A precondition failed; the run did not start."""


class ThresholdFailure(Exception):
    """The run finished but an acceptance gate was missed."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------
def shipped_configs() -> list:
    root = resources.files("holescatter") / "configs"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".cfg"))


def resolve_config_path(name: str) -> str:
    """A filesystem path, or the bare name of a shipped config (with or without ``.cfg``)."""
    if os.path.exists(name):
        return name
    root = resources.files("holescatter") / "configs"
    for candidate in (name, name + ".cfg"):
        p = root / candidate
        if p.is_file():
            return str(p)
    raise Refusal(f"config {name!r} not found (shipped configs: {', '.join(shipped_configs())})")


def load_config(path: str, command: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    with open(path) as fh:
        cp.read_file(fh)
    for sec in SECTIONS_FOR[command]:
        if not cp.has_section(sec):
            cp.add_section(sec)
        for k, v in DEFAULTS[sec].items():
            if not cp.has_option(sec, k):
                cp.set(sec, k, v)
    return cp


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _points(text: str) -> np.ndarray:
    rows = [r for r in text.replace("\n", ";").split(";") if r.strip()]
    pts = [_floats(r) for r in rows]
    if any(len(p) != 3 for p in pts):
        raise Refusal(f"points must be 'x, y, z' triples separated by ';': {text!r}")
    return np.asarray(pts, dtype=float).reshape(-1, 3)


def _get(cp, sec, key, fallback=None):
    if cp.has_option(sec, key):
        v = cp.get(sec, key).strip()
        return v if v != "" else fallback
    return fallback


def _require(cp, sec, key) -> str:
    v = _get(cp, sec, key)
    if v is None:
        raise Refusal(f"missing [{sec}] {key}")
    return v


def build_signal(cp, base_dir: str):
    sec = cp["signal"]
    kind = sec.get("kind").strip()
    if kind == "user-sampled":
        path = _require(cp, "signal", "file")
        full = path if os.path.isabs(path) else os.path.join(base_dir, path)
        with open(full) as fh:
            trace = Trace.from_csv(fh.read())
        return SampledSignal(trace, sec.get("order", "cubic"))
    params = {k: float(sec[k]) for k in ("scale", "shift", "amplitude")}
    return make_signal(kind, **params)


def build_source(cp, base_dir: str) -> SourceConfig:
    pos = _floats(_require(cp, "source", "position"))
    if len(pos) != 3:
        raise Refusal("[source] position needs three coordinates")
    return SourceConfig(pos, build_signal(cp, base_dir), float(cp["source"]["c0"]))


def build_clusters(cp, base_dir: str) -> list:
    """``[(label, Cluster)]``; a ``radius_sweep`` yields one cluster per radius."""
    if cp.has_section("cluster") and _get(cp, "cluster", "file"):
        path = cp["cluster"]["file"].strip()
        full = path if os.path.isabs(path) else os.path.join(base_dir, path)
        base = list(load_cluster(full).holes)
    elif cp.has_section("cluster") and _get(cp, "cluster", "generator"):
        gen = cp["cluster"]["generator"].strip()
        if gen == "lattice":
            return [("", lattice_cluster(cp))]
        if gen != "periodic":
            raise Refusal(f"unknown cluster generator {gen!r} (periodic, lattice)")
        box = _floats(_require(cp, "cluster", "box"))
        cbar = float(_get(cp, "cluster", "cbar", repr(4 * math.pi)))
        n = _get(cp, "cluster", "cells_per_side")
        a = _get(cp, "cluster", "a")
        cl = periodic_layout(box, float(a) if a else None, cbar, int(n) if n else None)
        return [("", cl)]
    else:
        base = holes_from_config(cp, base_dir)
    sweep = _get(cp, "cluster", "radius_sweep") if cp.has_section("cluster") else None
    if not sweep:
        return [("", Cluster(tuple(base)))]
    out = []
    for k, r in enumerate(_floats(sweep)):
        holes = tuple(Hole(h.center, Sphere(r), None) if isinstance(h.shape, Sphere) else h for h in base)
        out.append((f"eps_{k}", Cluster(holes)))
    return out


def lattice_cluster(cp) -> Cluster:
    """``counts`` spheres per axis at spacing ``pitch`` centred on ``center``."""
    center = np.asarray(_floats(_get(cp, "cluster", "center", "0, 0, 0")))
    pitch = float(_require(cp, "cluster", "pitch"))
    n = int(_require(cp, "cluster", "counts"))
    radius = float(_require(cp, "cluster", "radius"))
    offs = pitch * (np.arange(n) - (n - 1) / 2)
    holes = tuple(Hole.sphere(center + (x, y, z), radius) for x in offs for y in offs for z in offs)
    return Cluster(holes)


def _time(cp):
    sec = cp["time"]
    T = float(_require(cp, "time", "T"))
    if not T > 0:
        raise Refusal("[time] T must be positive")
    dt = sec["dt"].strip()
    interp = sec["interp"].strip()
    if interp not in INTERP_ORDERS:
        raise Refusal(f"[time] interp must be one of {INTERP_ORDERS}")
    return T, (None if dt == "auto" else float(dt)), interp, float(sec["tol"]), int(sec["max_iter"])


def _which(cp) -> tuple:
    return tuple(w.strip() for w in cp["probes"]["which"].split(",") if w.strip())


class Run:
    """Collects output files under ``out`` and writes the manifest last."""

    def __init__(self, command, cp, out, threads, force):
        self.command = command
        self.cp = cp
        self.out = out
        self.threads = threads
        self.force = force
        self.files = []
        self.resolved = {}
        self.verdicts = {}

    def write(self, rel: str, text: str) -> None:
        atomic_write(os.path.join(self.out, rel), text)
        self.files.append(rel)

    def manifest(self, status: str) -> None:
        sections = {
            "run": {
                "command": self.command,
                "version": __version__,
                "threads": "auto" if self.threads is None else str(self.threads),
                "force": self.force,
                "status": status,
                "files": sorted(self.files),
            }
        }
        if self.resolved:
            sections["resolved"] = self.resolved
        if self.verdicts:
            sections["verdicts"] = self.verdicts
        for name in self.cp.sections():
            sections[f"config.{name}"] = dict(self.cp[name])
        atomic_write(os.path.join(self.out, "manifest.ini"), ini_text(sections))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------
def _conditions(cluster: Cluster) -> dict:
    if len(cluster) == 0:
        return {"holes": 0}
    a, d, _ = separations(cluster)
    reg = regime_exponents(cluster) if len(cluster) > 1 else None
    out = {
        "holes": len(cluster),
        "a": float(a),
        "d": float(d) if math.isfinite(d) else "inf",
        "expansion_margin": float(check_expansion_condition(cluster)),
        "solvability_margin": float(check_solvability_condition(cluster)),
    }
    if reg:
        out["s"] = float(reg["s"])
        out["beta"] = float(reg["beta"])
        out["error_exponents"] = [float(v) for v in reg["error_exponents"]]
    return out


def _empty_solution(T, dt, interp) -> SystemSolution:
    n = int(math.ceil(T / dt - 1e-9))
    return SystemSolution(dt, np.zeros((0, n + 1)), np.zeros(n + 1, dtype=np.int64), 0.0, interp)


def _grid_from_config(cp) -> FieldGrid | None:
    if not cp.has_section("grid"):
        return None
    sec = cp["grid"]
    u = _floats(sec["u_range"])
    v = _floats(sec["v_range"])
    nu, nv = (int(x) for x in _floats(sec["counts"]))
    times = _floats(sec["times"])
    return FieldGrid.plane(u[0], u[1], v[0], v[1], nu, nv, float(sec["height"]), times, int(sec.get("normal_axis", "2")))


def run_simulate(run: Run, base_dir: str) -> None:
    cp = run.cp
    source = build_source(cp, base_dir)
    T, dt, interp, tol, max_iter = _time(cp)
    pts_text = _get(cp, "probes", "points", "")
    probes = _points(pts_text) if pts_text else np.zeros((0, 3))
    which = _which(cp)
    grid = _grid_from_config(cp)
    for label, cluster in build_clusters(cp, base_dir):
        prefix = f"{label}/" if label else ""
        cluster = fill_capacitances(cluster)
        source.check_outside(cluster)
        cond = _conditions(cluster)
        if len(cluster):
            system = assemble(cluster, source)
            step = default_dt(system, T) if dt is None else dt
            solution = march(system, T, step, interp, tol, max_iter, force=run.force)
            res = residual(system, solution)
            stab = stability_check(system, solution)
            cond.update(
                {
                    "residual": res,
                    "stability_ratio": stab.worst_ratio,
                    "stability_time": stab.worst_time,
                    "stability_passed": stab.passed,
                    "max_jacobi_iterations": int(solution.iterations.max()),
                }
            )
            run.write(prefix + "alpha.csv", solution.to_csv())
            run.write(prefix + "solution.ini", solution.metadata_text(system.margin))
        else:
            step = T / 1024 if dt is None else dt
            solution = _empty_solution(T, step, interp)
        run.resolved[f"{label or 'run'}.dt"] = float(step)
        run.write(prefix + "conditions.ini", ini_text({"conditions": cond, "holes": {"file": "cluster.cfg"}}))
        run.write(prefix + "cluster.cfg", cluster_to_config(cluster))

        excl_text = cp["probes"]["exclusion"].strip()
        exclusion = default_exclusion(cluster) if excl_text == "auto" else float(excl_text)
        run.resolved[f"{label or 'run'}.exclusion"] = float(exclusion)
        if len(probes):
            ProbeSet(probes, exclusion).validate(cluster, source)
            t = solution.times
            cols, names = [], []
            for w in which:
                tr = probe_traces(cluster, solution, source, probes, t, w)
                for k in range(len(probes)):
                    cols.append(tr[k])
                    names.append(f"p{k}_{w}")
            run.write(prefix + "probes.csv", traces_to_csv(t, np.asarray(cols).reshape(len(cols), -1), names))
            run.write(prefix + "probes.ini", ini_text({"probes": {f"p{k}": list(map(float, p)) for k, p in enumerate(probes)}}))
        if grid is not None:
            snaps = grid_eval(cluster, solution, source, grid, cp["grid"].get("which", "scattered").strip(), exclusion)
            names = [f"snapshot_{k}.csv" for k in range(len(grid.times))]
            for k, name in enumerate(names):
                run.write(prefix + name, snaps.to_csv(k))
            run.write(prefix + "grid.ini", snapshot_manifest(grid, snaps, names))


def _oracle_inputs(cp, base_dir):
    source = build_source(cp, base_dir)
    T = float(_require(cp, "time", "T"))
    sec = cp["oracle"]
    center = _floats(_require(cp, "oracle", "center"))
    radii = _floats(_require(cp, "oracle", "radii"))
    probes = _points(_get(cp, "oracle", "probes") or _require(cp, "probes", "points"))
    dt = None if sec["dt"].strip() == "auto" else float(sec["dt"])
    return source, T, center, radii, probes, dt


def _oracle_sweep(run: Run, base_dir: str, prefix: str = "") -> bool:
    cp = run.cp
    source, T, center, radii, probes, dt = _oracle_inputs(cp, base_dir)
    if dt is None:
        from .oracle import commensurate_dt

        dt = commensurate_dt(radii, source.c0, int(cp["oracle"]["per_radius"]))
    run.resolved["oracle.dt"] = float(dt)
    cmp = compare_with_asymptotic(center, source, radii, probes, T, dt)
    threshold = float(cp["oracle"]["slope_threshold"])
    run.write(prefix + "oracle.ini", cmp.to_text(threshold))
    rows = [
        (float(r), float(a), float(b), float(c), float(d))
        for r, a, b, c, d in zip(cmp.radii, cmp.max_diff, cmp.l2_diff, cmp.max_diff_march, cmp.density_residual)
    ]
    run.write(prefix + "oracle.csv", csv_text(["radius", "max_diff", "l2_diff", "max_diff_marched", "density_residual"], rows))
    ok = math.isfinite(cmp.slope) and cmp.slope >= threshold
    run.verdicts["oracle_slope"] = "undefined" if not math.isfinite(cmp.slope) else float(cmp.slope)
    run.verdicts["oracle"] = "pass" if ok else "fail"
    return ok


def run_oracle_validate(run: Run, base_dir: str) -> None:
    if not _oracle_sweep(run, base_dir):
        raise ThresholdFailure("oracle slope below threshold")


def _voxel_grid(cp, sec="medium", per_side=None) -> VoxelGrid:
    box = _floats(_require(cp, sec, "box"))
    cbar = float(_require(cp, sec, "cbar"))
    if per_side is not None:
        return VoxelGrid.cubic(box, per_side, cbar)
    if _get(cp, sec, "voxels_per_side"):
        return VoxelGrid.cubic(box, int(cp[sec]["voxels_per_side"]), cbar)
    return VoxelGrid(box, float(_require(cp, sec, "h")), cbar)


def run_medium(run: Run, base_dir: str) -> None:
    cp = run.cp
    source = build_source(cp, base_dir)
    T, _, interp, tol, _ = _time(cp)
    grid = _voxel_grid(cp)
    dtm = cp["medium"]["dt"].strip()
    probes = _points(_require(cp, "probes", "points"))
    for p in probes:
        if grid.contains(p):
            raise Refusal(f"probe {tuple(p)} lies inside the medium box")
    sol = march_volume(grid, source, T, None if dtm == "auto" else float(dtm), interp, tol)
    run.resolved["medium.dt"] = float(sol.dt)
    run.resolved["medium.h"] = float(grid.h)
    run.resolved["medium.voxels"] = grid.n_voxels
    t = sol.times
    W = np.array([exterior_W(grid, sol, source, p, t) for p in probes]).reshape(len(probes), -1)
    run.write("medium_probes.csv", traces_to_csv(t, W, [f"p{k}_W" for k in range(len(probes))]))
    run.write("medium.ini", ini_text({"medium": {"precausal_max": sol.precausal_max, "tol": tol}}))
    if cp["medium"]["dump_voxels"].strip().lower() == "true":
        run.write("voxels.csv", csv_text(["voxel", "time", "value"], sol.dump_rows()))
    cells = _floats(cp["compare"]["cells_per_side"])
    if cells:
        reports = refinement_sweep(grid.box, float(grid.cbar), source, probes, T, tuple(int(c) for c in cells),
                                   grid.shape[0], interp)
        rows = []
        for n, rep in zip(cells, reports):
            for k, (rel, mx) in enumerate(zip(rep.relative_l2, rep.max_abs)):
                rows.append((int(n), rep.n_holes, k, float(rel), float(mx)))
        run.write("compare.csv", csv_text(["cells_per_side", "holes", "probe", "relative_l2", "max_abs"], rows))
        worst = [r.worst_relative_l2 for r in reports]
        ok = all(b < a for a, b in zip(worst, worst[1:]))
        run.verdicts["compare_worst_relative_l2"] = [float(w) for w in worst]
        run.verdicts["compare_monotone"] = "pass" if ok else "fail"
        if not ok:
            raise ThresholdFailure("cluster-vs-medium difference is not monotonically decreasing")


def _design_input(cp, base_dir):
    kind = _require(cp, "design", "input").strip()
    if kind not in ("cbar", "rho"):
        raise Refusal("[design] input must be 'cbar' or 'rho'")
    path = _get(cp, "design", "file")
    if path:
        full = path if os.path.isabs(path) else os.path.join(base_dir, path)
        man = _require(cp, "design", "manifest")
        mfull = man if os.path.isabs(man) else os.path.join(base_dir, man)
        with open(full) as fh, open(mfull) as mh:
            fld = field_from_files(fh.read(), mh.read())
        return kind, fld, None
    box = _floats(_require(cp, "design", "box"))
    h = (box[1] - box[0]) / int(_require(cp, "design", "nodes_per_side")) if _get(cp, "design", "nodes_per_side") else float(_require(cp, "design", "h"))
    value = float(_require(cp, "design", "value"))
    fld = from_function(box, h, lambda x: np.full(len(x), value), kind)
    return kind, fld, value


def run_design(run: Run, base_dir: str) -> None:
    cp = run.cp
    sec = cp["design"]
    kind, fld, const = _design_input(cp, base_dir)
    run.resolved["design.h"] = float(fld.h)
    if kind == "rho":
        p = p_from_rho(fld)
        try:
            cbar = cbar_from_p(p)
        except SubharmonicityError as exc:
            raise Refusal(str(exc)) from exc
        run.resolved["design.boundary_adjustment"] = float(p.adjustment)
    else:
        cbar = fld
        if np.any(cbar.interior < 0):
            raise Refusal("scaled capacitance must be non-negative")
    p_solved = solve_p(cbar, fld.box, fld.h)
    recovered = cbar_from_p(p_solved, allow_roundoff=bool(np.all(cbar.interior == 0)))
    err = float(np.max(np.abs(recovered.interior - cbar.interior)))
    bound = float(fld.h**2 * max(1.0, float(np.max(np.abs(cbar.interior)))))
    for name, f in (("cbar", cbar), ("p", p_solved), ("rho", rho_from_p(p_solved)), ("cbar_recovered", recovered)):
        run.write(f"{name}.csv", field_to_csv(f))
        run.write(f"{name}.ini", field_manifest(f))
    report = {
        "roundtrip_max_error": err,
        "roundtrip_bound": bound,
        "p_min": float(p_solved.values.min()),
        "p_max": float(p_solved.values.max()),
    }
    ok = err <= bound and 0 < report["p_min"] and report["p_max"] <= 1.0
    levels = int(sec["levels"])
    if const is not None and kind == "cbar" and levels >= 2:
        errs, hs = cross_grid_errors(const, fld.box, fld.h, levels, float(sec["central_fraction"]))
        order = loglog_slope(hs, errs)
        report["cross_grid_h"] = [float(v) for v in hs]
        report["cross_grid_error"] = [float(v) for v in errs]
        report["cross_grid_order"] = "undefined" if not math.isfinite(order) else float(order)
        if math.isfinite(order):
            ok = ok and order >= float(sec["order_threshold"])
        elif any(e > 0 for e in errs):
            ok = False
    a = _get(cp, "design", "a")
    if a:
        cl = layout_from_cbar(cbar, float(a))
        run.write("cluster.cfg", cluster_to_config(cl))
        report["holes"] = len(cl)
    run.write("design.ini", ini_text({"design": report}))
    run.verdicts["design"] = "pass" if ok else "fail"
    if not ok:
        raise ThresholdFailure("design roundtrip outside its bound")


def _difference_rates(params, traces):
    """Successive max differences and their pairwise and fitted orders."""
    diffs = [float(np.max(np.abs(traces[k] - traces[k + 1]))) for k in range(len(traces) - 1)]
    pairs = []
    for k in range(len(diffs) - 1):
        if diffs[k] > 0 and diffs[k + 1] > 0:
            pairs.append(math.log(diffs[k] / diffs[k + 1]) / math.log(params[k] / params[k + 1]))
        else:
            pairs.append(math.nan)
    fitted = loglog_slope(params[: len(diffs)], diffs) if len(diffs) >= 2 else math.nan
    return diffs, pairs, fitted


NOMINAL_ORDER = {"linear": 2.0, "cubic": 4.0}


def run_convergence(run: Run, base_dir: str) -> None:
    cp = run.cp
    sec = cp["convergence"]
    mode = _require(cp, "convergence", "mode").strip()
    levels = int(sec["levels"])
    if mode == "oracle":
        if not _oracle_sweep(run, base_dir):
            raise ThresholdFailure("oracle slope below threshold")
        return
    source = build_source(cp, base_dir)
    T, _, interp, tol, max_iter = _time(cp)
    tc = np.linspace(0.0, T, int(sec["output_samples"]))
    probes = _points(_require(cp, "probes", "points"))
    if mode == "dt":
        (_, cluster), *_ = build_clusters(cp, base_dir)
        cluster = fill_capacitances(cluster)
        system = assemble(cluster, source)
        dt0 = float(_get(cp, "convergence", "dt0", repr(T / 64)))
        params = [dt0 / 2**k for k in range(levels + 1)]
        traces = []
        for step in params:
            sol = march(system, T, step, interp, tol, max_iter, force=run.force)
            traces.append(probe_traces(cluster, sol, source, probes, tc, "scattered"))
        nominal = NOMINAL_ORDER[interp]
        label = "dt"
    elif mode == "medium":
        n0 = int(_get(cp, "convergence", "voxels0", "3"))
        params, traces = [], []
        for k in range(levels):
            grid = _voxel_grid(cp, per_side=n0 * 2**k)
            sol = march_volume(grid, source, T, None, interp, tol)
            params.append(grid.h)
            traces.append(np.array([exterior_W(grid, sol, source, p, tc) for p in probes]))
        nominal = 2.0
        label = "h"
    else:
        raise Refusal(f"unknown convergence mode {mode!r} (oracle, dt, medium)")
    diffs, pairs, fitted = _difference_rates(params, traces)
    th = sec["threshold"].strip()
    threshold = 0.9 * nominal if th == "auto" else float(th)
    rows = [(k, float(params[k]), float(diffs[k]), float(pairs[k - 1]) if k >= 1 else math.nan)
            for k in range(len(diffs))]
    run.write("rates.csv", csv_text(["level", label, "max_difference", "observed_order"], rows))
    run.resolved["convergence.threshold"] = float(threshold)
    run.resolved["convergence.nominal_order"] = float(nominal)
    if math.isfinite(fitted):
        run.verdicts["fitted_order"] = float(fitted)
        ok = fitted >= threshold
    elif all(d == 0 for d in diffs):
        run.verdicts["fitted_order"] = "undefined"
        ok = True
    else:
        run.verdicts["fitted_order"] = "undefined"
        ok = False
    run.verdicts["convergence"] = "pass" if ok else "fail"
    if not ok:
        raise ThresholdFailure(f"observed order {fitted:.3g} below {threshold:.3g}")


RUNNERS = {
    "simulate": run_simulate,
    "oracle-validate": run_oracle_validate,
    "medium": run_medium,
    "design": run_design,
    "convergence": run_convergence,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="holescatter", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="config file path or shipped config name")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--threads", type=int, default=None, help="recorded in the manifest")
        sp.add_argument("--force", action="store_true", help="march even when the solvability margin is >= 1")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    run = None
    try:
        path = resolve_config_path(args.config)
        cp = load_config(path, args.command)
        run = Run(args.command, cp, args.out, args.threads, args.force)
        RUNNERS[args.command](run, os.path.dirname(os.path.abspath(path)))
    except ThresholdFailure as exc:
        print(f"threshold failure: {exc}", file=sys.stderr)
        run.manifest("threshold-failure")
        return EXIT_THRESHOLD
    except (Refusal, SolvabilityError, SubharmonicityError, CFLError, ValueError, configparser.Error, OSError) as exc:
        print(f"refused: {exc}", file=sys.stderr)
        if run is not None:
            run.manifest("refused")
        return EXIT_REFUSED
    except (ConvergenceError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        if run is not None:
            run.manifest("solver-failure")
        return EXIT_SOLVER
    run.manifest("ok")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
