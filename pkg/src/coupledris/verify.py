"""Oracle cross-check corpus behind the ``verify`` command."""

from __future__ import annotations

import math

import numpy as np

from . import oracle
from .channel import RisLoadState, achievable_rate, end_to_end_channel, reduce_network
from .errors import DegenerateElementError
from .optimizer import (
    CLOSED_FORM_BRANCHES,
    decouple_element,
    det_coefficients,
    optimal_reactance,
    waterfill,
    waterfill_powers,
)

LEVELS = {
    "quick": dict(prop1=300, sm=40, det=40, reduction=40, channel=30, rate=100, wf=100),
    "full": dict(prop1=1000, sm=200, det=200, reduction=100, channel=100, rate=500, wf=500),
}


def _report(name, errors, tol, seed, detail=""):
    errors = np.asarray(errors, dtype=float)
    worst = int(np.argmax(errors))
    return oracle.OracleReport(name, float(errors[worst]), f"seed={seed}:case={worst}",
                               len(errors), tol, detail)


def check_prop1(n, seed, grid=100_001):
    rng = np.random.default_rng([seed, 1])
    gaps, seen = [], set()
    for i in range(n):
        c = oracle.random_coefficients(rng, branch=i % 5)
        bounds = oracle.random_bounds(rng, c)
        x, branch = optimal_reactance(c, bounds)
        seen.add(branch)
        _, fg = oracle.grid_max_f(c, bounds, grid)
        gaps.append(max(0.0, fg - float(oracle.f_value(c, x))))
    missing = [b.value for b in CLOSED_FORM_BRANCHES if b not in seen]
    return [
        _report("prop1_vs_grid", gaps, 1e-9, seed),
        oracle.OracleReport("prop1_branch_coverage", float(len(missing)), f"seed={seed}", n, 0.0,
                            "missing: " + ",".join(missing) if missing else "all five branches"),
    ]


def _random_instance(rng, m_max=4, l_max=4, n_max=16, ne_max=8, n_min=2):
    m = int(rng.integers(1, m_max + 1))
    l = int(rng.integers(1, l_max + 1))
    n = int(rng.integers(n_min, n_max + 1))
    ne = int(rng.integers(0, ne_max + 1))
    z = oracle.random_impedance_set(rng, m, l, n, ne)
    loads = RisLoadState.random(rng, n, rng.uniform(0, 1), (-300.0, -20.0))
    return z, loads


def check_sherman_morrison(n, seed):
    rng = np.random.default_rng([seed, 2])
    errs = []
    for _ in range(n):
        z, loads = _random_instance(rng, n_max=oracle.MAX_ORACLE_NRIS)
        net = reduce_network(z)
        k = int(rng.integers(net.dims[2]))
        d = decouple_element(net, loads, k)
        zr = loads.z.copy()
        zr[k] = 0
        a_k = net.Z_SS + net.Z_SOS + np.diag(zr)
        zk = loads.r0[k] + 1j * rng.uniform(-300, -20)
        errs.append(oracle.rel_err(d.z_sca(zk), oracle.direct_z_sca(a_k, k, zk)))
    return [_report("sherman_morrison", errs, 1e-10, seed)]


def check_det_identity(n, seed, samples=50):
    rng = np.random.default_rng([seed, 3])
    errs = []
    for _ in range(n):
        z, loads = _random_instance(rng)
        net = reduce_network(z)
        k = int(rng.integers(net.dims[2]))
        d = decouple_element(net, loads, k)
        h = end_to_end_channel(net, loads.z)
        sigma2 = float(np.mean(np.abs(h) ** 2)) * 10 ** rng.uniform(-2, 1)
        q = waterfill(h, 1.0, sigma2) if rng.random() < 0.5 else _random_psd(rng, h.shape[1])
        try:
            c = det_coefficients(d, q, sigma2, loads.r0[k])
        except DegenerateElementError:
            continue
        l = h.shape[0]
        base = oracle.leibniz_det(np.eye(l) + d.B @ q @ d.B.conj().T / sigma2)
        worst = 0.0
        for x in rng.uniform(-300, -20, samples):
            hk = d.channel(loads.r0[k] + 1j * x)
            full = oracle.leibniz_det(np.eye(l) + hk @ q @ hk.conj().T / sigma2)
            ratio = (full / base).real
            worst = max(worst, abs(float(oracle.f_value(c, x)) - ratio) / abs(ratio))
        errs.append(worst)
    return [_report("det_identity", errs, 1e-9, seed)]


def _random_psd(rng, m):
    g = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    q = g @ g.conj().T
    return q / np.trace(q).real


def check_reduction(n, seed):
    rng = np.random.default_rng([seed, 4])
    errs = []
    for _ in range(n):
        z, _ = _random_instance(rng, ne_max=8)
        net = reduce_network(z)
        ref = oracle.dense_block_elimination(z)
        errs.append(max(oracle.rel_err(getattr(net, k), v) for k, v in ref.items()))
    return [_report("reduction_vs_elimination", errs, 1e-9, seed)]


def check_channel(n, seed, corrupt=None):
    """Decoupled and direct channel paths against the explicit-inverse channel.

    ``corrupt`` may alter the reduced network (fault injection); a failing
    consistency check then names the blocks that disagree with the
    elimination oracle.
    """
    rng = np.random.default_rng([seed, 5])
    errs_direct, errs_decoupled, suspects = [], [], set()
    for _ in range(n):
        z, loads = _random_instance(rng)
        net = reduce_network(z)
        if corrupt is not None:
            net = corrupt(net)
        ref = oracle.dense_channel(z, loads.z)
        errs_direct.append(oracle.rel_err(end_to_end_channel(net, loads.z), ref))
        worst = 0.0
        for k in range(net.dims[2]):
            d = decouple_element(net, loads, k)
            worst = max(worst, oracle.rel_err(d.channel(loads.z[k]), ref))
        errs_decoupled.append(worst)
        if worst > 1e-10:
            blocks = oracle.dense_block_elimination(z)
            for name, val in blocks.items():
                if oracle.rel_err(getattr(net, name), val) > 1e-9:
                    suspects.add(name)
    detail = "suspect blocks: " + ",".join(sorted(suspects)) if suspects else ""
    return [
        _report("channel_vs_dense", errs_direct, 1e-9, seed, detail),
        _report("channel_decoupled_consistency", errs_decoupled, 1e-10, seed, detail),
    ]


def check_rate(n, seed):
    rng = np.random.default_rng([seed, 6])
    errs = []
    for _ in range(n):
        l, m = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        h = rng.normal(size=(l, m)) + 1j * rng.normal(size=(l, m))
        q = _random_psd(rng, m) * rng.uniform(0.1, 10)
        s2 = rng.uniform(0.1, 2)
        ref = oracle.dense_logdet_rate(h, q, s2)
        errs.append(abs(achievable_rate(h, q, s2) - ref) / max(abs(ref), 1e-300))
    return [_report("rate_vs_leibniz", errs, 1e-9, seed)]


def check_waterfill(n, seed):
    rng = np.random.default_rng([seed, 7])
    budget, kkt, ascent = [], [], []
    for _ in range(n):
        l, m = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        h = (rng.normal(size=(l, m)) + 1j * rng.normal(size=(l, m))) * 10 ** rng.uniform(-3, 0)
        pt, s2 = rng.uniform(0.01, 10), 10 ** rng.uniform(-4, 0)
        q = waterfill(h, pt, s2)
        budget.append(abs(np.trace(q).real - pt) / pt)
        sv = np.linalg.svd(h, compute_uv=False)
        gains = sv[sv > sv[0] * 1e-13] ** 2 / s2
        p, level = waterfill_powers(gains, pt)
        act = p > 0
        spread = np.ptp(p[act] + 1 / gains[act]) / level if act.any() else 0.0
        inactive_ok = np.all(level - 1 / gains[~act] <= 1e-12 * level)
        kkt.append(spread if inactive_ok else math.inf)
        uniform = achievable_rate(h, np.eye(m) * pt / m, s2)
        ascent.append(max(0.0, uniform - achievable_rate(h, q, s2)))
    return [
        _report("waterfill_budget", budget, 1e-9, seed),
        _report("waterfill_kkt_level", kkt, 1e-8, seed),
        _report("waterfill_vs_uniform", ascent, 1e-12, seed),
    ]


def run_checks(level: str = "quick", seed: int = 0, corrupt=None) -> list[oracle.OracleReport]:
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r}")
    cfg = LEVELS[level]
    reports = []
    reports += check_prop1(cfg["prop1"], seed)
    reports += check_sherman_morrison(cfg["sm"], seed)
    reports += check_det_identity(cfg["det"], seed)
    reports += check_reduction(cfg["reduction"], seed)
    reports += check_channel(cfg["channel"], seed, corrupt)
    reports += check_rate(cfg["rate"], seed)
    reports += check_waterfill(cfg["wf"], seed)
    return reports
