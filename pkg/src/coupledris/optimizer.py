"""Alternating water-filling / closed-form reactance optimization.

The transmit covariance is set by water-filling on the current channel.  The
RIS reactances are then swept one at a time: with every other load frozen,
the channel is an affine function of ``1 / chi_k`` where ``chi_k = 1 + a_k
z_k``, the rate gain collapses to a scalar function of ``X_k`` and its
global maximum over the feasible interval is available in closed form.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .channel import ReducedNetwork, RisLoadState, achievable_rate, end_to_end_channel
from .errors import ContractError, DegenerateElementError

log = logging.getLogger(__name__)

INERT_TOL = 1e-14
CHI_TOL = 1e-14
REAL_RTOL = 1e-12
TIE_RTOL = 1e-12
DEFAULT_EPSILON = 1e-4


# ---------------------------------------------------------------------------
# Q-step


def waterfill_powers(gains, p_total: float):
    """Water-filling over parallel channels with power gains ``gains``.

    Returns ``(powers, level)`` where ``level`` is ``1/alpha`` and
    ``powers[i] = max(level - 1/gains[i], 0)`` sums to ``p_total``.
    Zero gains never receive power.
    """
    gains = np.asarray(gains, dtype=float)
    p = np.zeros_like(gains)
    usable = np.flatnonzero(gains > 0)
    if usable.size == 0 or p_total <= 0:
        return p, 0.0
    order = usable[np.argsort(-gains[usable], kind="stable")]
    inv = 1.0 / gains[order]
    # largest active set whose level stays above the weakest active floor
    csum = np.cumsum(inv)
    counts = np.arange(1, order.size + 1)
    levels = (p_total + csum) / counts
    active = int(np.flatnonzero(levels > inv)[-1]) + 1
    level = levels[active - 1]
    p[order[:active]] = level - inv[:active]
    return p, float(level)


def waterfill(h, p_total: float, sigma2: float) -> np.ndarray:
    """Capacity-achieving transmit covariance for a fixed channel ``h``."""
    if not p_total > 0:
        raise ContractError("transmit power must be positive")
    h = np.asarray(h)
    m = h.shape[1]
    _, s, vh = np.linalg.svd(h)
    if s.size == 0 or s[0] == 0:
        return np.zeros((m, m), dtype=complex)
    if m == 1:
        return np.full((1, 1), p_total, dtype=complex)
    keep = s > s[0] * 1e-13
    gains = s[keep] ** 2 / sigma2
    p, _ = waterfill_powers(gains, p_total)
    v = vh[: keep.sum()].conj().T
    q = (v * p) @ v.conj().T
    q = (q + q.conj().T) / 2
    # remove the rounding drift of the eigen-expansion from the budget
    return q * (p_total / np.trace(q).real)


# ---------------------------------------------------------------------------
# per-element decomposition


@dataclass(frozen=True, eq=False)
class DecoupledElement:
    """Channel as a function of the k-th RIS load only: ``H = B + u v^H / chi``.

    ``a_col`` is ``A_k^-1 e_k`` and ``a_sot`` is ``A_k^-1 Z_SOT``; together
    with ``lu`` (a factorization of ``A_k``) they allow re-deriving any
    quantity of the decomposition.
    """

    k: int
    a_k: complex
    B: np.ndarray
    u: np.ndarray
    v: np.ndarray
    lu: tuple | None = field(default=None, repr=False)
    a_col: np.ndarray | None = field(default=None, repr=False)
    a_sot: np.ndarray | None = field(default=None, repr=False)

    @property
    def C(self) -> np.ndarray:
        return np.outer(self.u, self.v.conj())

    def chi(self, z_k) -> complex:
        return 1 + self.a_k * z_k

    def channel(self, z_k) -> np.ndarray:
        chi = self.chi(z_k)
        if abs(chi) < CHI_TOL:
            raise DegenerateElementError(self.k, f"|chi_k| = {abs(chi):.2e}")
        return self.B + np.outer(self.u, self.v.conj()) / chi

    def z_sca(self, z_k) -> np.ndarray:
        """``(A_k + z_k e_k e_k^T)^-1`` by the Sherman-Morrison formula."""
        n = self.a_col.shape[0]
        inv = lu_solve(self.lu, np.eye(n, dtype=complex))
        row = inv[self.k]
        return inv - np.outer(self.a_col, row) * z_k / (1 + z_k * self.a_k)


def _load_matrix_without(net, loads, k):
    zr = loads.r0 + 1j * loads.x
    zr[k] = 0
    return net.Z_SS + net.Z_SOS + np.diag(zr)


def _decompose(net, k, a_col, a_sot, lu=None):
    a_k = a_col[k]
    if abs(a_k) < CHI_TOL:
        raise DegenerateElementError(k, f"|a_k| = {abs(a_k):.2e}")
    row_sot = a_sot[k]  # e_k^T A_k^-1 Z_SOT
    inner = a_sot - np.outer(a_col, row_sot) / a_k
    B = net.Z_RL @ (net.Z_ROT - net.Z_ROS @ inner) @ net.Z_TG
    u = -net.Z_RL @ (net.Z_ROS @ a_col)
    v = ((row_sot @ net.Z_TG) / a_k).conj()
    return DecoupledElement(k, complex(a_k), B, u, v, lu, a_col, a_sot)


def decouple_element(net: ReducedNetwork, loads: RisLoadState, k: int) -> DecoupledElement:
    """Isolate RIS element ``k``.

    Raises
    ------
    DegenerateElementError
        If ``a_k`` vanishes (the Sherman-Morrison split is undefined).
    """
    a = _load_matrix_without(net, loads, k)
    lu = lu_factor(a, check_finite=True)
    if np.any(np.abs(np.diag(lu[0])) == 0):
        raise DegenerateElementError(k, "A_k is singular")
    n = a.shape[0]
    e = np.zeros(n, dtype=complex)
    e[k] = 1
    a_col = lu_solve(lu, e)
    a_sot = lu_solve(lu, net.Z_SOT)
    return _decompose(net, k, a_col, a_sot, lu)


# ---------------------------------------------------------------------------
# closed-form single-element problem


@dataclass(frozen=True)
class DetCoefficients:
    """``det S_k = 1 + c1/chi + conj(c1/chi) + c2/|chi|^2`` with ``chi = 1 + a_k z_k``."""

    c1: complex
    c2: float
    a_k: complex
    r0k: float

    def chi(self, x):
        return 1 + self.a_k * (self.r0k + 1j * np.asarray(x, dtype=float))

    def f(self, x):
        """Rate-gain ratio ``det S_k`` as a function of the reactance."""
        chi = self.chi(x)
        t = self.c1 / chi
        val = 1 + 2 * t.real + self.c2 / (chi.real ** 2 + chi.imag ** 2)
        return float(val) if np.ndim(val) == 0 else val


def det_coefficients(d: DecoupledElement, q, sigma2: float, r0k: float = 0.0) -> DetCoefficients:
    """Closed-form coefficients of ``det S_k`` for element ``d``.

    The rate splits as ``log2 det(I + B Q B^H / s2) + log2 det S_k`` and
    ``S_k`` acts only on the span of two vectors; an orthonormal basis of
    that span (Gram-Schmidt) reduces ``det S_k`` to a 2x2 determinant.

    Raises
    ------
    DegenerateElementError
        When ``||u~_k|| < 1e-14``: the element does not influence the rate.
    """
    q = np.asarray(q)
    g = np.eye(d.B.shape[0]) + d.B @ q @ d.B.conj().T / sigma2
    lam, U = np.linalg.eigh((g + g.conj().T) / 2)
    inv_sqrt = 1 / np.sqrt(lam)
    u_t = inv_sqrt * (U.conj().T @ d.u)
    v_t = inv_sqrt * (U.conj().T @ (d.B @ (q @ d.v)))
    nu = np.linalg.norm(u_t)
    if nu < INERT_TOL:
        raise DegenerateElementError(d.k, "inert (u~_k = 0)")
    t1 = u_t / nu
    t = v_t - np.vdot(t1, v_t) / np.vdot(t1, t1) * t1
    tn = np.linalg.norm(t)
    v_t2 = np.vdot(v_t, t / tn) if tn >= INERT_TOL else 0.0
    c1 = nu * np.vdot(v_t, t1) / sigma2
    vqv = np.vdot(d.v, q @ d.v)
    if abs(vqv.imag) > 1e-10 * max(abs(vqv), 1e-300):
        raise ContractError("v^H Q v is not real; Q is not Hermitian")
    c2 = nu ** 2 * vqv.real / sigma2 - nu ** 2 * abs(v_t2) ** 2 / sigma2 ** 2
    return DetCoefficients(complex(c1), float(c2), d.a_k, float(r0k))


class Branch(enum.Enum):
    """Which case of the single-element solution produced ``X_k``."""

    REAL_POSITIVE = "real/positive"
    REAL_NEGATIVE = "real/negative"
    REAL_ZERO = "real/zero"
    COMPLEX_POSITIVE = "complex/positive"
    COMPLEX_NEGATIVE = "complex/negative"
    INERT = "inert"


CLOSED_FORM_BRANCHES = tuple(b for b in Branch if b is not Branch.INERT)


def _ge(fa, fb):
    return fa >= fb - TIE_RTOL * max(abs(fa), abs(fb), 1.0)


def _better_end(c, lb, ub):
    return lb if _ge(c.f(lb), c.f(ub)) else ub


def _x_real_case(c):
    c1, a, r = c.c1, c.a_k, c.r0k
    ac = a.conjugate()
    num = (c1 / ac).imag + 2 * r * c1.imag + c.c2 * (1 / ac).imag
    den = 2 * (c1.real + r * (c1 * ac).real) + c.c2
    return num / den


def _x_complex_case(c):
    """Maximizing stationary point when ``c1 conj(a_k)`` is not real."""
    c1, a, r, c2 = c.c1, c.a_k, c.r0k, c.c2
    ca = c1 * a.conjugate()
    dd = c1.real * a.imag - a.real * c1.imag
    half_beta = c1.real + r * ca.real + c2 / 2
    kmag = abs(ca * (a.real / abs(a) ** 2 + r) + c2 / 2)
    if half_beta <= 0:
        return (half_beta - kmag) / dd
    # same root, rationalized to avoid cancellation in half_beta - kmag
    b = 1 + a * r
    alpha = -2 * dd
    beta = 2 * half_beta
    num = -2 * a.imag * beta - alpha * abs(b) ** 2
    return -num / (abs(a) ** 2 * (beta + 2 * kmag))


def optimal_reactance(c: DetCoefficients, bounds) -> tuple[float, Branch]:
    """Global maximizer of ``c.f`` over ``bounds = (X_lb, X_ub)``.

    The five cases follow the sign structure of ``f``: when ``c1 conj(a_k)``
    is real ``f`` has a single extremum, a maximum or a minimum depending on
    the sign of ``2 Re c1 + 2 R_0k Re(c1 conj(a_k)) + c2``; otherwise ``f``
    has one maximum and one minimum and the ordering of the two is fixed by
    the sign of ``Re c1 Im a_k - Re a_k Im c1``.
    """
    lb, ub = (float(b) for b in bounds)
    if not lb < ub:
        raise ContractError(f"invalid bounds [{lb}, {ub}]")
    if not (np.isfinite(c.c1) and np.isfinite(c.c2) and np.isfinite(c.a_k)):
        raise ContractError("non-finite coefficients")
    c1, a, r, c2 = c.c1, c.a_k, c.r0k, c.c2
    ca = c1 * a.conjugate()
    if abs(ca.imag) <= REAL_RTOL * abs(ca):
        den = 2 * c1.real + 2 * r * ca.real + c2
        scale = 2 * abs(c1.real) + 2 * abs(r * ca.real) + abs(c2)
        if abs(den) <= CHI_TOL * scale or den == 0:
            return _better_end(c, lb, ub), Branch.REAL_ZERO
        x1 = _x_real_case(c)
        if den > 0:
            if lb < x1 < ub:
                return x1, Branch.REAL_POSITIVE
            return (lb if x1 <= lb else ub), Branch.REAL_POSITIVE
        if lb < x1 < ub:
            return _better_end(c, lb, ub), Branch.REAL_NEGATIVE
        return (ub if x1 <= lb else lb), Branch.REAL_NEGATIVE

    dd = c1.real * a.imag - a.real * c1.imag
    x2 = _x_complex_case(c)
    if dd > 0:
        if lb < x2 < ub:
            return (x2 if _ge(c.f(x2), c.f(ub)) else ub), Branch.COMPLEX_POSITIVE
        if x2 <= lb:
            return _better_end(c, lb, ub), Branch.COMPLEX_POSITIVE
        return ub, Branch.COMPLEX_POSITIVE
    if lb < x2 < ub:
        return (x2 if _ge(c.f(x2), c.f(lb)) else lb), Branch.COMPLEX_NEGATIVE
    if x2 >= ub:
        return _better_end(c, lb, ub), Branch.COMPLEX_NEGATIVE
    return lb, Branch.COMPLEX_NEGATIVE


# ---------------------------------------------------------------------------
# sweeps and the outer loop


@dataclass(frozen=True)
class ElementUpdate:
    k: int
    x_before: float
    x_after: float
    branch: Branch | None
    rate_before: float
    rate_after: float
    select_seconds: float


def _full_inverse(net, z):
    a = net.Z_SS + net.Z_SOS + np.diag(z)
    return lu_solve(lu_factor(a), np.eye(a.shape[0], dtype=complex))


def _sweep(net, loads, q, sigma2, choose, updates, fast):
    r0 = np.array(loads.r0)
    x = np.array(loads.x)
    bounds = loads.bounds
    n = x.size
    ainv = _full_inverse(net, r0 + 1j * x) if fast else None
    for k in range(n):
        z_old = r0[k] + 1j * x[k]
        try:
            if fast:
                # remove the k-th load from the running inverse
                col, row = ainv[:, k].copy(), ainv[k].copy()
                ak_inv = ainv + z_old * np.outer(col, row) / (1 - z_old * ainv[k, k])
                d = _decompose(net, k, ak_inv[:, k], ak_inv @ net.Z_SOT)
            else:
                d = decouple_element(net, RisLoadState(r0, x, bounds), k)
            c = det_coefficients(d, q, sigma2, r0[k])
        except DegenerateElementError as exc:
            log.warning("skipping element %d: %s", k, exc.reason)
            if updates is not None:
                updates.append(ElementUpdate(k, x[k], x[k], Branch.INERT, math.nan, math.nan, 0.0))
            continue
        t0 = time.perf_counter()
        xk, branch = choose(c, bounds)
        dt = time.perf_counter() - t0
        xk = min(max(float(xk), bounds[0]), bounds[1])
        z_new = r0[k] + 1j * xk
        if updates is not None:
            before = achievable_rate(d.channel(z_old), q, sigma2)
            after = achievable_rate(d.channel(z_new), q, sigma2)
            updates.append(ElementUpdate(k, float(x[k]), xk, branch, before, after, dt))
        x[k] = xk
        if fast:
            col, row = ak_inv[:, k], ak_inv[k]
            ainv = ak_inv - z_new * np.outer(col, row) / (1 + z_new * d.a_k)
    return loads.with_x(x)


def bcd_sweep(net: ReducedNetwork, loads: RisLoadState, q, sigma2: float, *,
              updates: list | None = None, fast: bool = False) -> RisLoadState:
    """One pass of closed-form reactance updates, ``k = 0 .. N_RIS - 1``.

    Degenerate or inert elements keep their reactance.  If ``updates`` is a
    list, an :class:`ElementUpdate` is appended for every element.  ``fast``
    keeps a running inverse with rank-one updates instead of factorizing
    ``A_k`` for every element.
    """
    return _sweep(net, loads, q, sigma2, optimal_reactance, updates, fast)


def grid_baseline_sweep(net: ReducedNetwork, loads: RisLoadState, q, sigma2: float,
                        grid_points: int = 10_001, *, updates: list | None = None,
                        fast: bool = False) -> RisLoadState:
    """Like :func:`bcd_sweep` but each element is maximized by grid search."""
    from .oracle import grid_max_f

    def choose(c, bounds):
        return grid_max_f(c, bounds, grid_points)[0], None

    return _sweep(net, loads, q, sigma2, choose, updates, fast)


@dataclass
class OptimizerTrace:
    """Record of one :func:`solve_p0` run.

    ``rates[0]`` is the rate of the initial point; ``rates[q]`` the rate after
    outer iteration ``q``.  ``updates[q - 1]`` holds the element updates of
    iteration ``q``.
    """

    epsilon: float
    rates: list[float] = field(default_factory=list)
    waterfill_rates: list[float] = field(default_factory=list)
    updates: list[list[ElementUpdate]] = field(default_factory=list)
    waterfill_seconds: list[float] = field(default_factory=list)
    sweep_seconds: list[float] = field(default_factory=list)
    elapsed: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.rates) - 1

    @property
    def branches(self):
        return [[u.branch for u in it] for it in self.updates]

    def ascent_violation(self) -> float:
        """Largest rate decrease anywhere in the run (0 if monotone)."""
        worst = 0.0
        seq = [self.rates[0]]
        for q, ups in enumerate(self.updates):
            seq.append(self.waterfill_rates[q])
            seq.extend(u.rate_after for u in ups if u.branch is not Branch.INERT)
            seq.append(self.rates[q + 1])
        for u in (u for ups in self.updates for u in ups if u.branch is not Branch.INERT):
            worst = max(worst, u.rate_before - u.rate_after)
        diffs = np.diff(seq)
        return max(worst, float(-diffs.min()) if diffs.size else 0.0)


def solve_p0(
    net: ReducedNetwork,
    init_loads: RisLoadState,
    p_total: float,
    sigma2: float,
    epsilon: float = DEFAULT_EPSILON,
    max_outer: int = 100,
    *,
    solver: str = "closed_form",
    grid_points: int = 10_001,
    fast: bool = False,
    record_updates: bool = True,
    on_iteration=None,
):
    """Alternate water-filling and reactance sweeps until the rate settles.

    Iterates until two consecutive outer iterations differ by at most
    ``epsilon`` bits/s/Hz or ``max_outer`` iterations have run.  At least one
    iteration is always performed.  ``on_iteration(q, Q, loads)`` is called
    for the initial point (``q = 0``) and after every outer iteration.

    Returns
    -------
    (Q, loads, trace)
        Final covariance, final loads and an :class:`OptimizerTrace`.
    """
    if epsilon < 0 or max_outer < 1:
        raise ContractError("need epsilon >= 0 and max_outer >= 1")
    if solver == "closed_form":
        def sweep(loads, q, ups):
            return bcd_sweep(net, loads, q, sigma2, updates=ups, fast=fast)
    elif solver == "grid_baseline":
        def sweep(loads, q, ups):
            return grid_baseline_sweep(net, loads, q, sigma2, grid_points, updates=ups, fast=fast)
    else:
        raise ContractError(f"unknown solver {solver!r}")

    trace = OptimizerTrace(epsilon)
    start = time.perf_counter()
    loads = init_loads
    h = end_to_end_channel(net, loads.z)
    q = waterfill(h, p_total, sigma2)
    rate = achievable_rate(h, q, sigma2)
    trace.rates.append(rate)
    trace.elapsed.append(0.0)
    if on_iteration is not None:
        on_iteration(0, q, loads)
    while True:
        t0 = time.perf_counter()
        h = end_to_end_channel(net, loads.z)
        q = waterfill(h, p_total, sigma2)
        trace.waterfill_rates.append(achievable_rate(h, q, sigma2))
        t1 = time.perf_counter()
        ups = [] if record_updates else None
        loads = sweep(loads, q, ups)
        t2 = time.perf_counter()
        new_rate = achievable_rate(end_to_end_channel(net, loads.z), q, sigma2)
        trace.updates.append(ups or [])
        trace.waterfill_seconds.append(t1 - t0)
        trace.sweep_seconds.append(t2 - t1)
        trace.rates.append(new_rate)
        trace.elapsed.append(time.perf_counter() - start)
        if on_iteration is not None:
            on_iteration(trace.iterations, q, loads)
        if abs(new_rate - rate) <= epsilon:
            trace.converged = True
            break
        rate = new_rate
        if trace.iterations >= max_outer:
            break
    return q, loads, trace
