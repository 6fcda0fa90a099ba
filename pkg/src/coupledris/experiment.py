"""Seeded Monte-Carlo runs over scatterer placements.

Output files of :func:`run_experiment` (schema version 1):

``trace.csv``
    ``realization,iter,rate_bps_hz,elapsed_s``; one row per outer iteration
    (``iter = 0`` is the random initial point).  ``elapsed_s`` is only
    filled when ``run.timing`` is on, so that by default the file is a pure
    function of the scenario and seed.
``summary.json``
    per-realization records and aggregates (mean, median, std).
``plot.csv``
    ``iter,mean_rate,std_rate,count``; realizations that stopped early are
    carried forward at their final rate.
``timings.csv``
    wall-clock seconds per phase; never reproducible, never compared.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bundle
from .channel import RisLoadState, achievable_rate, end_to_end_channel, reduce_network
from .em_model import Scene, assemble_impedance_set, linear_array, place_clusters
from .errors import BundleFormatError, CoupledRisError, ScenarioError
from .optimizer import solve_p0, waterfill
from .scenario import Scenario

log = logging.getLogger(__name__)

TRACE_SCHEMA = 1


def realization_seeds(master_seed: int, index: int) -> tuple[int, int]:
    """(placement seed, initialization seed) for one realization."""
    ss = np.random.SeedSequence([master_seed, index])
    place, init = ss.spawn(2)
    return int(place.generate_state(1)[0]), int(init.generate_state(1)[0])


def build_scene(s: Scenario, placement_seed: int) -> Scene:
    g, sc = s.geometry, s.scatterers
    lam = g.wavelength_m
    length, radius = g.wire_length * lam, g.wire_radius * lam

    def xy(center):
        return (center[0] * lam, center[1] * lam, 0.0)

    tx = linear_array(g.tx_count, g.tx_spacing * lam, xy(g.tx_center), lam, length=length, radius=radius)
    rx = linear_array(g.rx_count, g.rx_spacing * lam, xy(g.rx_center), lam, length=length, radius=radius)
    ris = linear_array(g.ris_count, g.ris_spacing * lam, xy(g.ris_center), lam, length=length, radius=radius)
    region = [tuple(v * lam for v in r) for r in (sc.region_x, sc.region_y, sc.region_z)]
    scat = place_clusters(
        int(np.random.SeedSequence([sc.seed, placement_seed]).generate_state(1)[0]),
        sc.clusters, sc.per_cluster, region, sc.min_separation * lam,
        cluster_size=sc.cluster_size * lam, length=length, radius=radius,
        keep_out=[d.center for d in tx + rx + ris],
    )
    ids = [i // sc.per_cluster for i in range(len(scat))]
    return Scene(lam, tx, rx, ris, scat, g.ris_spacing * lam, ids)


def bundle_path(s: Scenario) -> Path | None:
    if not s.geometry.bundle:
        return None
    path = Path(s.geometry.bundle)
    return path if path.is_absolute() else Path(s.base_dir) / path


def check_inputs(s: Scenario) -> None:
    """Fail early on problems shared by every realization.

    Raises
    ------
    BundleFormatError
        If the configured impedance bundle is unreadable or inconsistent
        with the scenario's port counts.
    """
    path = bundle_path(s)
    if path is None:
        return
    z = bundle.load_impedance_set(path)
    g = s.geometry
    if z.dims[:3] != (g.tx_count, g.rx_count, g.ris_count):
        raise BundleFormatError(
            f"bundle {path} has (M, L, N) = {z.dims[:3]}, scenario expects "
            f"{(g.tx_count, g.rx_count, g.ris_count)}"
        )


def impedance_set_for(s: Scenario, placement_seed: int):
    g, ld = s.geometry, s.loads
    if g.bundle:
        z = bundle.load_impedance_set(bundle_path(s))
    else:
        scene = build_scene(s, placement_seed)
        m, l, _, ne = scene.dims
        z = assemble_impedance_set(scene, [ld.zg_ohm] * m, [ld.zl_ohm] * l, [ld.zus_ohm] * ne,
                                   workers=s.run.workers)
    if not g.direct_link:
        z = z.without_direct_link()
    return z


@dataclass
class RealizationResult:
    index: int
    ok: bool
    final_rate: float = math.nan
    model_rate: float = math.nan
    iterations: int = 0
    converged: bool = False
    rates: list[float] = field(default_factory=list)
    elapsed: list[float] = field(default_factory=list)
    phase_seconds: dict[str, float] = field(default_factory=dict)
    error: str = ""
    x: list[float] = field(default_factory=list)


def solve_realization(s: Scenario, index: int, init_x=None) -> RealizationResult:
    """Build, reduce and optimize one realization.

    In MCU mode the optimizer sees the RIS without mutual coupling.  The
    loads of every iteration are then scored on the coupled channel, with a
    transmit covariance water-filled for that channel; those scores form the
    reported rate sequence.  ``model_rate`` is always the optimizer's own
    final objective.
    """
    run, ld, sig = s.run, s.loads, s.signal
    place_seed, init_seed = realization_seeds(run.seed, index)
    phases = {}
    try:
        t0 = time.perf_counter()
        z = impedance_set_for(s, place_seed)
        t1 = time.perf_counter()
        net = reduce_network(z)
        t2 = time.perf_counter()
        n = net.dims[2]
        bounds = (ld.x_lb_ohm, ld.x_ub_ohm)
        if init_x is None:
            loads = RisLoadState.random(np.random.default_rng(init_seed), n, ld.r0_ohm, bounds)
        else:
            loads = RisLoadState(np.full(n, ld.r0_ohm), init_x, bounds)
        coupled_rates = []

        def score(_, __, state):
            h = end_to_end_channel(net, state.z)
            coupled_rates.append(achievable_rate(h, waterfill(h, sig.pt_w, sig.sigma2_w), sig.sigma2_w))

        mcu = run.coupling_mode == "MCU"
        _, loads, trace = solve_p0(
            net.uncoupled() if mcu else net, loads, sig.pt_w, sig.sigma2_w,
            run.epsilon, run.max_outer, solver=run.solver, grid_points=run.grid_points,
            fast=run.fast, on_iteration=score if mcu else None,
        )
        t3 = time.perf_counter()
        rates = coupled_rates if mcu else list(trace.rates)
        phases.update(impedances=t1 - t0, reduction=t2 - t1, optimize=t3 - t2,
                      waterfill=sum(trace.waterfill_seconds), sweeps=sum(trace.sweep_seconds))
        return RealizationResult(
            index, True, rates[-1], trace.rates[-1], trace.iterations, trace.converged,
            rates, list(trace.elapsed), phases, x=[float(v) for v in loads.x],
        )
    except CoupledRisError as exc:
        log.warning("realization %d failed: %s", index, exc)
        return RealizationResult(index, False, error=f"{type(exc).__name__}: {exc}")


def _solve_task(args):
    return solve_realization(*args)


def run_realizations(s: Scenario, indices, parallel: int = 1):
    tasks = [(s, i) for i in indices]
    if parallel > 1:
        with ProcessPoolExecutor(parallel) as pool:
            return list(pool.map(_solve_task, tasks))
    return [_solve_task(t) for t in tasks]


@dataclass
class RunSummary:
    results: list[RealizationResult]
    scenario_seed: int

    @property
    def ok(self):
        return [r for r in self.results if r.ok]

    def aggregates(self) -> dict:
        rates = np.array([r.final_rate for r in self.ok])
        iters = [r.iterations for r in self.ok]
        if rates.size == 0:
            return {"realizations": len(self.results), "succeeded": 0}
        return {
            "realizations": len(self.results),
            "succeeded": len(self.ok),
            "converged": sum(r.converged for r in self.ok),
            "mean_rate": float(np.mean(rates)),
            "median_rate": float(np.median(rates)),
            "std_rate": float(np.std(rates)),
            "mean_iterations": float(np.mean(iters)),
        }

    @property
    def exit_code(self) -> int:
        return 0 if all(r.ok for r in self.results) else 1

    def to_json(self, timing: bool = False) -> str:
        records = []
        for r in self.results:
            rec = {
                "realization": r.index, "ok": r.ok, "final_rate": r.final_rate,
                "model_rate": r.model_rate, "iterations": r.iterations,
                "converged": r.converged, "error": r.error,
            }
            if timing:
                rec["phase_seconds"] = r.phase_seconds
            records.append(rec)
        doc = {"schema": TRACE_SCHEMA, "seed": self.scenario_seed,
               "aggregates": self.aggregates(), "realizations": records}
        return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _fmt(v: float) -> str:
    return repr(float(v))


def trace_csv(results, timing: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["realization", "iter", "rate_bps_hz", "elapsed_s"])
    for r in results:
        for it, rate in enumerate(r.rates):
            el = _fmt(r.elapsed[it]) if timing else ""
            w.writerow([r.index, it, _fmt(rate), el])
    return buf.getvalue()


def plot_csv(results) -> str:
    ok = [r for r in results if r.ok and r.rates]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iter", "mean_rate", "std_rate", "count"])
    if ok:
        depth = max(len(r.rates) for r in ok)
        padded = np.array([r.rates + [r.rates[-1]] * (depth - len(r.rates)) for r in ok])
        for it in range(depth):
            col = padded[:, it]
            w.writerow([it, _fmt(col.mean()), _fmt(col.std()), len(col)])
    return buf.getvalue()


def timings_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    phases = ["impedances", "reduction", "optimize", "waterfill", "sweeps"]
    w.writerow(["realization"] + [f"{p}_s" for p in phases])
    for r in results:
        w.writerow([r.index] + [_fmt(r.phase_seconds.get(p, math.nan)) for p in phases])
    return buf.getvalue()


def run_experiment(s: Scenario, out_dir=None, parallel: int = 1) -> RunSummary:
    """Run ``run.realizations`` seeded realizations and write the output files."""
    check_inputs(s)
    summary = RunSummary(run_realizations(s, range(s.run.realizations), parallel), s.run.seed)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trace.csv").write_text(trace_csv(summary.results, s.run.timing))
        (out / "summary.json").write_text(summary.to_json(s.run.timing))
        (out / "plot.csv").write_text(plot_csv(summary.results))
        (out / "timings.csv").write_text(timings_csv(summary.results))
    return summary


def summary_from_trace(text: str) -> dict:
    """Final rate per realization recomputed from a trace file."""
    finals = {}
    for row in csv.DictReader(io.StringIO(text)):
        finals[int(row["realization"])] = float(row["rate_bps_hz"])
    return finals


def sweep_spacing(s: Scenario, d_values, mode: str, couplings=None, out_path=None) -> str:
    """Converged rate versus RIS spacing.

    ``fixed_aperture`` scales the element count inversely with the spacing
    so the RIS length matches the scenario's; ``fixed_count`` keeps the
    count and shrinks the surface.  Returns (and optionally writes) CSV.
    """
    if not d_values:
        raise ScenarioError("d_values must not be empty")
    if mode not in ("fixed_aperture", "fixed_count"):
        raise ScenarioError(f"unknown sweep mode {mode!r}")
    couplings = couplings or [s.run.coupling_mode]
    g = s.geometry
    aperture = g.ris_count * g.ris_spacing
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mode", "coupling_mode", "d_lambda", "n_ris", "mean_rate", "std_rate",
                "succeeded", "mean_iterations"])
    for d in d_values:
        if d > 0.5:
            log.warning("spacing %.4g lambda exceeds one half", d)
        n = g.ris_count if mode == "fixed_count" else max(1, int(round(aperture / d)))
        if n > s.run.max_ris:
            raise ScenarioError(
                f"d = {d:g} lambda needs {n} RIS elements, above run.max_ris = {s.run.max_ris}; "
                "raise run.max_ris or use a coarser spacing"
            )
        for coupling in couplings:
            sub = s.with_("geometry", ris_count=n, ris_spacing=d).with_("run", coupling_mode=coupling)
            check_inputs(sub)
            summ = RunSummary(run_realizations(sub, range(sub.run.realizations)), sub.run.seed)
            agg = summ.aggregates()
            w.writerow([mode, coupling, _fmt(d), n, _fmt(agg.get("mean_rate", math.nan)),
                        _fmt(agg.get("std_rate", math.nan)), agg["succeeded"],
                        _fmt(agg.get("mean_iterations", math.nan))])
    text = buf.getvalue()
    if out_path is not None:
        Path(out_path).write_text(text)
    return text


def export_impedances(s: Scenario, out_path, realization: int = 0) -> None:
    place_seed, _ = realization_seeds(s.run.seed, realization)
    z = impedance_set_for(s.with_("geometry", direct_link=True), place_seed)
    bundle.save_impedance_set(z, out_path)
