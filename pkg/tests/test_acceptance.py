"""Acceptance suite: ten end-to-end criteria at their stated tolerances.

Each test records a single PASS/FAIL line (shown in the terminal summary)
and then asserts.  Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from coupledris import oracle
from coupledris.channel import RisLoadState, end_to_end_channel, reduce_network
from coupledris.cli import main
from coupledris.experiment import impedance_set_for, realization_seeds, solve_realization
from coupledris.optimizer import CLOSED_FORM_BRANCHES, bcd_sweep, solve_p0, waterfill
from coupledris.scenario import load_scenario
from coupledris.verify import (
    check_det_identity,
    check_prop1,
    check_reduction,
    check_sherman_morrison,
    check_waterfill,
)

SCENARIO = Path(__file__).resolve().parents[1] / "scenarios" / "paper_setup.txt"
SEEDS = range(10)


@pytest.fixture(scope="module")
def reference():
    """Reference geometry: N = 32, M = 4, L = 1, 4 clusters of 10 scatterers."""
    s = load_scenario(SCENARIO)
    g, sc = s.geometry, s.scatterers
    assert (g.ris_count, g.tx_count, g.rx_count) == (32, 4, 1)
    assert (sc.clusters, sc.per_cluster) == (4, 10)
    assert (s.signal.pt_dbm, s.signal.sigma2_dbm, s.loads.r0_ohm) == (21.0, -80.0, 0.2)
    assert (s.loads.x_lb_ohm, s.loads.x_ub_ohm) == (-302.50, -19.66)
    return s


def _problem(s, index):
    place, init = realization_seeds(s.run.seed, index)
    net = reduce_network(impedance_set_for(s, place))
    ld = s.loads
    loads = RisLoadState.random(np.random.default_rng(init), net.dims[2], ld.r0_ohm,
                                (ld.x_lb_ohm, ld.x_ub_ohm))
    return net, loads


class TestAcceptance:
    def test_01_closed_form_matches_grid(self, record_criterion):
        t0 = time.perf_counter()
        gap, coverage = check_prop1(1000, seed=0, grid=100_001)
        dt = time.perf_counter() - t0
        ok = gap.passed and coverage.passed and dt <= 60 and gap.samples >= 1000
        record_criterion(1, "closed form vs 100001-point grid", ok,
                         f"max shortfall {gap.max_relative_error:.2e} (tol 1e-9) over "
                         f"{gap.samples} cases; {coverage.detail}; {dt:.1f} s (limit 60 s)")
        assert ok

    def test_02_sherman_morrison(self, record_criterion):
        (r,) = check_sherman_morrison(200, seed=0)
        ok = r.max_relative_error < 1e-10 and r.samples >= 200
        record_criterion(2, "Sherman-Morrison vs dense inverse", ok,
                         f"max rel err {r.max_relative_error:.2e} (tol 1e-10), n={r.samples}")
        assert ok

    def test_03_determinant_identity(self, record_criterion):
        (r,) = check_det_identity(200, seed=0, samples=50)
        ok = r.max_relative_error < 1e-9 and r.samples >= 200
        record_criterion(3, "closed-form det S_k vs full determinant ratio", ok,
                         f"max rel err {r.max_relative_error:.2e} (tol 1e-9), "
                         f"n={r.samples} x 50 samples")
        assert ok

    def test_04_monotone_convergence(self, reference, record_criterion):
        s = reference
        t0 = time.perf_counter()
        worst, most_iters, all_converged = 0.0, 0, True
        for index in SEEDS:
            net, loads = _problem(s, index)
            _, _, trace = solve_p0(net, loads, s.signal.pt_w, s.signal.sigma2_w,
                                   epsilon=1e-4, max_outer=50)
            worst = max(worst, trace.ascent_violation())
            most_iters = max(most_iters, trace.iterations)
            all_converged &= trace.converged and abs(trace.rates[-1] - trace.rates[-2]) < 1e-4
        dt = time.perf_counter() - t0
        ok = worst <= 1e-10 and all_converged and most_iters <= 50 and dt <= 300
        record_criterion(4, "monotone convergence on 10 reference scenarios", ok,
                         f"worst rate decrease {worst:.2e} (tol 1e-10); max iterations "
                         f"{most_iters} (limit 50); all converged={all_converged}; {dt:.1f} s")
        assert ok

    def test_05_reduction(self, record_criterion):
        (r,) = check_reduction(100, seed=0)
        ok = r.max_relative_error < 1e-9 and r.samples >= 100
        record_criterion(5, "reduce_network vs block elimination", ok,
                         f"max rel err {r.max_relative_error:.2e} (tol 1e-9), n={r.samples}")
        assert ok

    def test_06_waterfilling(self, record_criterion):
        budget, kkt, uniform = check_waterfill(500, seed=0)
        ok = (budget.max_relative_error <= 1e-9 and kkt.max_relative_error <= 1e-8
              and uniform.max_relative_error == 0.0)
        record_criterion(6, "water-filling budget, KKT level, beats uniform", ok,
                         f"budget {budget.max_relative_error:.1e}, level spread "
                         f"{kkt.max_relative_error:.1e}, worst deficit vs uniform "
                         f"{uniform.max_relative_error:.1e}, n={budget.samples}")
        assert ok

    def test_07_sweep_time_scaling(self, record_criterion):
        sizes = (16, 32, 64)
        times = []
        for n in sizes:
            rng = np.random.default_rng(n)
            z = oracle.random_impedance_set(rng, 4, 1, n, 40)
            net = reduce_network(z)
            loads = RisLoadState.random(rng, n, 0.2, (-302.5, -19.66))
            h = end_to_end_channel(net, loads.z)
            sigma2 = float(np.mean(np.abs(h) ** 2))
            q = waterfill(h, 1.0, sigma2)
            bcd_sweep(net, loads, q, sigma2)  # warm-up
            best = np.inf
            for _ in range(7):
                t0 = time.perf_counter()
                bcd_sweep(net, loads, q, sigma2)
                best = min(best, time.perf_counter() - t0)
            times.append(best)
        slope = float(np.polyfit(np.log(sizes), np.log(times), 1)[0])
        ok = 3.3 <= slope <= 4.5
        detail = ", ".join(f"N={n}: {t * 1e3:.2f} ms" for n, t in zip(sizes, times))
        record_criterion(7, "per-sweep time scaling exponent", ok,
                         f"fitted exponent {slope:.2f} (band [3.3, 4.5]); {detail}")
        assert ok

    def test_08_closed_form_vs_grid(self, reference, record_criterion):
        s = reference
        cf_sel, grid_sel, worst_gap = [], [], -np.inf
        for index in range(3):
            net, loads = _problem(s, index)
            args = (net, loads, s.signal.pt_w, s.signal.sigma2_w, 1e-6, 200)
            _, _, cf = solve_p0(*args)
            _, _, gb = solve_p0(*args, solver="grid_baseline", grid_points=10_000)
            cf_sel += [u.select_seconds for it in cf.updates for u in it]
            grid_sel += [u.select_seconds for it in gb.updates for u in it]
            worst_gap = max(worst_gap, gb.rates[-1] - cf.rates[-1])
        ratio = float(np.median(cf_sel) / np.median(grid_sel))
        ok = ratio <= 0.1 and worst_gap <= 1e-6
        record_criterion(8, "closed-form vs 1e4-point grid update", ok,
                         f"median selection time ratio {ratio:.4f} (limit 0.1); grid final "
                         f"rate minus closed-form {worst_gap:.2e} (limit 1e-6)")
        assert ok

    def test_09_mca_warm_start_beats_mcu(self, reference, record_criterion):
        s = reference.with_("geometry", ris_spacing=0.125)
        margins = []
        for index in SEEDS:
            mcu = solve_realization(s.with_("run", coupling_mode="MCU"), index)
            mca = solve_realization(s.with_("run", coupling_mode="MCA"), index, init_x=mcu.x)
            assert mcu.ok and mca.ok
            margins.append(mca.final_rate - mcu.final_rate)
        ok = min(margins) >= 0.0
        record_criterion(9, "MCA from MCU start >= MCU at d = lambda/8", ok,
                         f"min gain {min(margins):.3e}, mean gain {np.mean(margins):.3f} "
                         f"bits/s/Hz over {len(margins)} seeds")
        assert ok

    def test_10_deterministic_trace(self, tmp_path, record_criterion, capsys):
        for out in ("a", "b"):
            rc = main(["run", str(SCENARIO), "--realizations", "3", "--out-dir", str(tmp_path / out)])
            assert rc == 0
        capsys.readouterr()
        files = ("trace.csv", "summary.json", "plot.csv")
        same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
                   for f in files)
        record_criterion(10, "byte-identical run outputs", same,
                         f"{', '.join(files)} identical across two runs: {same}")
        assert same
