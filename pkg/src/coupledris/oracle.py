"""Slow reference implementations used to cross-check the fast paths.

Nothing here shares numerical kernels with :mod:`channel` or
:mod:`optimizer`: inverses are explicit, eliminations are hand-rolled and
determinants come from the Leibniz expansion.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .em_model import GROUPS, ImpedanceSet
from .errors import ContractError

MAX_ORACLE_L = 6
MAX_ORACLE_NRIS = 64


@dataclass(frozen=True)
class OracleReport:
    name: str
    max_relative_error: float
    worst_case_id: str
    samples: int
    tolerance: float
    detail: str = ""

    def __post_init__(self):
        if not self.max_relative_error >= 0 or self.samples < 1:
            raise ContractError("invalid oracle report")

    @property
    def passed(self) -> bool:
        return self.max_relative_error <= self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" [{self.detail}]" if self.detail else ""
        return (f"{status} {self.name}: max_rel_err={self.max_relative_error:.3e} "
                f"(tol {self.tolerance:.0e}, n={self.samples}, worst={self.worst_case_id}){extra}")


def rel_err(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def _inv(mat):
    if mat.size == 0:
        return mat
    inv = np.linalg.inv(mat)
    if not np.all(np.isfinite(inv)):
        raise np.linalg.LinAlgError("singular matrix")
    return inv


def dense_channel(z: ImpedanceSet, z_ris) -> np.ndarray:
    """End-to-end channel written out with explicit inverses."""
    z_ris = np.asarray(z_ris)
    if z_ris.ndim == 1:
        z_ris = np.diag(z_ris)
    m, l, n, ne = z.dims
    if ne:
        zoo_inv = _inv(z.Z_OO + z.Z_US)
        z_rot = z.Z_RT - z.Z_RO @ zoo_inv @ z.Z_OT
        z_ros = z.Z_RO @ zoo_inv @ z.Z_OS - z.Z_RS
        z_sos = -z.Z_SO @ zoo_inv @ z.Z_OS
        z_sot = z.Z_SO @ zoo_inv @ z.Z_OT - z.Z_ST
    else:
        z_rot, z_ros, z_sos, z_sot = z.Z_RT, -z.Z_RS, np.zeros((n, n)), -z.Z_ST
    z_rl = _inv(np.eye(l) + z.Z_RR @ _inv(z.Z_L))
    z_tg = _inv(z.Z_TT + z.Z_G)
    z_sca = _inv(z.Z_SS + z_sos + z_ris)
    return z_rl @ (z_rot - z_ros @ z_sca @ z_sot) @ z_tg


def dense_block_elimination(z: ImpedanceSet) -> dict[str, np.ndarray]:
    """Reduced blocks by Gauss-Jordan elimination of the scatterer ports.

    The loaded multiport matrix (``Z_OO + Z_US`` on the scatterer diagonal)
    is pivoted on every scatterer row in turn; the surviving T/R/S block is
    the Schur complement, from which the reduced blocks are read off with
    the sign conventions of the channel model.
    """
    m, l, n, ne = z.dims
    full = np.array(z.z, dtype=complex)
    o0 = m + l + n
    full[o0:, o0:] += np.diag(z.z_us)
    size = full.shape[0]
    for p in range(o0, size):
        piv = full[p, p]
        if piv == 0:
            raise np.linalg.LinAlgError("zero pivot during elimination")
        for i in range(size):
            if i == p:
                continue
            factor = full[i, p] / piv
            if factor != 0:
                full[i, :] -= factor * full[p, :]
    schur = full[:o0, :o0]
    t, r, s = slice(0, m), slice(m, m + l), slice(m + l, o0)
    return {
        "Z_ROT": schur[r, t],
        "Z_ROS": -schur[r, s],
        "Z_SOS": schur[s, s] - z.Z_SS,
        "Z_SOT": -schur[s, t],
    }


def f_value(c, x):
    """Single-element objective transcribed term by term."""
    z = c.r0k + 1j * np.asarray(x, dtype=float)
    chi = 1 + c.a_k * z
    chi_c = 1 + np.conj(c.a_k) * np.conj(z)
    return np.real(1 + c.c1 / chi + np.conj(c.c1) / chi_c + c.c2 / np.abs(chi) ** 2)


def grid_max_f(c, bounds, n: int):
    """Best point of ``f`` on ``n`` equally spaced reactances (endpoints included)."""
    if n < 2:
        raise ContractError("grid needs at least two points")
    grid = np.linspace(bounds[0], bounds[1], n)
    vals = f_value(c, grid)
    i = int(np.argmax(vals))
    return float(grid[i]), float(vals[i])


def leibniz_det(a) -> complex:
    a = np.asarray(a)
    n = a.shape[0]
    total = 0j
    for perm in itertools.permutations(range(n)):
        inversions = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        term = complex(1.0)
        for i, p in enumerate(perm):
            term *= a[i, p]
        total += -term if inversions % 2 else term
    return total


def dense_logdet_rate(h, q, sigma2) -> float:
    h = np.asarray(h)
    l = h.shape[0]
    if l > MAX_ORACLE_L:
        raise ContractError(f"oracle determinant limited to L <= {MAX_ORACLE_L}")
    g = np.eye(l) + h @ np.asarray(q) @ h.conj().T / sigma2
    return math.log2(leibniz_det(g).real)


def direct_z_sca(a_k, k, z_k):
    a = np.array(a_k, dtype=complex)
    a[k, k] += z_k
    return _inv(a)


# ---------------------------------------------------------------------------
# random instances


def random_symmetric(rng, n, diag=(60.0, 40.0), off=5.0):
    x = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) * off
    x = (x + x.T) / 2
    x[np.diag_indices(n)] = diag[0] * (1 + 0.2 * rng.random(n)) + 1j * diag[1] * rng.normal(size=n)
    return x


def random_impedance_set(rng, m, l, n, ne, wavelength=0.1) -> ImpedanceSet:
    total = m + l + n + ne
    z = random_symmetric(rng, total)
    return ImpedanceSet(
        wavelength, (m, l, n, ne), z,
        50 * np.ones(m), 50 * np.ones(l), rng.uniform(0, 5, ne) + 1j * rng.normal(size=ne),
    )


def random_coefficients(rng, branch=None):
    """Random ``DetCoefficients`` aimed at one case of the closed form."""
    from .optimizer import DetCoefficients

    a = complex(*rng.normal(size=2)) * 10 ** rng.uniform(-3, -1)
    r0 = float(rng.choice([0.0, rng.uniform(0, 5)]))
    kind = branch if branch is not None else rng.integers(5)
    if kind in (0, 1, 2):
        # c1 conj(a) real
        c1 = rng.normal() * 10 ** rng.uniform(-1, 2) * a / abs(a)
        base = 2 * c1.real + 2 * r0 * (c1 * a.conjugate()).real
        if kind == 2:
            c2 = -base
        else:
            c2 = -base + (1 if kind == 0 else -1) * abs(rng.normal()) * 10 ** rng.uniform(-1, 2)
    else:
        c1 = complex(*rng.normal(size=2)) * 10 ** rng.uniform(-1, 2)
        c2 = rng.normal() * 10 ** rng.uniform(-1, 2)
    return DetCoefficients(complex(c1), float(c2), a, r0)


def random_bounds(rng, c):
    """Interval placed around, beside or away from the stationary points."""
    center = c.a_k.imag / abs(c.a_k) ** 2
    spread = 1 / abs(c.a_k)
    lo = center + spread * rng.uniform(-3, 2)
    return lo, lo + spread * 10 ** rng.uniform(-1, 0.7)
