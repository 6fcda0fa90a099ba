"""Scatterer elimination, end-to-end channel and achievable rate."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .em_model import ImpedanceSet
from .errors import ChannelError, ContractError, ReductionError

COND_LIMIT = 1e12


def _check_conditioning(mat, name, exc=ReductionError):
    if mat.size == 0:
        return
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        if exc is ReductionError:
            raise ReductionError(name, cond)
        raise exc(f"{name} is singular or ill-conditioned (cond ~ {cond:.3e})")


@dataclass(frozen=True, eq=False)
class ReducedNetwork:
    """Impedance blocks seen by the optimizer after the scatterers are absorbed.

    ``Z_RL`` and ``Z_TG`` are stored already inverted, i.e.
    ``(I + Z_RR Z_L^-1)^-1`` and ``(Z_TT + Z_G)^-1``.
    """

    Z_ROT: np.ndarray
    Z_ROS: np.ndarray
    Z_SOS: np.ndarray
    Z_SOT: np.ndarray
    Z_RL: np.ndarray
    Z_TG: np.ndarray
    Z_SS: np.ndarray

    def __post_init__(self):
        l, m = self.Z_ROT.shape
        n = self.Z_SS.shape[0]
        shapes = {
            "Z_ROS": (l, n), "Z_SOS": (n, n), "Z_SOT": (n, m),
            "Z_RL": (l, l), "Z_TG": (m, m), "Z_SS": (n, n),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ContractError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def dims(self):
        """(L, M, N_RIS)"""
        l, m = self.Z_ROT.shape
        return l, m, self.Z_SS.shape[0]

    def with_blocks(self, **blocks) -> "ReducedNetwork":
        return replace(self, **blocks)

    def uncoupled(self) -> "ReducedNetwork":
        """Same network with the RIS mutual coupling (off-diagonal Z_SS) dropped."""
        return replace(self, Z_SS=np.diag(np.diag(self.Z_SS)))


def reduce_network(z: ImpedanceSet) -> ReducedNetwork:
    """Absorb the scatterer ports into the T/R/S blocks.

    Raises
    ------
    ReductionError
        If ``Z_OO + Z_US``, ``Z_TT + Z_G`` or ``I + Z_RR Z_L^-1`` is singular
        or has a condition number above 1e12.
    """
    m, l, n, ne = z.dims
    Z_RT, Z_RS, Z_ST = z.Z_RT, z.Z_RS, z.Z_ST
    if ne:
        zbar = z.Z_OO + np.diag(z.z_us)
        _check_conditioning(zbar, "Z_OO + Z_US")
        rhs = np.hstack([z.Z_OT, z.Z_OS])
        sol = np.linalg.solve(zbar, rhs)
        oo_t, oo_s = sol[:, :m], sol[:, m:]
        Z_ROT = Z_RT - z.Z_RO @ oo_t
        Z_ROS = z.Z_RO @ oo_s - Z_RS
        Z_SOS = -z.Z_SO @ oo_s
        Z_SOT = z.Z_SO @ oo_t - Z_ST
    else:
        Z_ROT = np.array(Z_RT)
        Z_ROS = -Z_RS
        Z_SOS = np.zeros((n, n), dtype=complex)
        Z_SOT = -Z_ST

    tg = z.Z_TT + np.diag(z.z_g)
    _check_conditioning(tg, "Z_TT + Z_G")
    Z_TG = np.linalg.solve(tg, np.eye(m))

    if np.any(z.z_l == 0):
        raise ReductionError("Z_L", np.inf)
    rl = np.eye(l) + z.Z_RR / z.z_l[None, :]
    _check_conditioning(rl, "I_L + Z_RR Z_L^-1")
    Z_RL = np.linalg.solve(rl, np.eye(l))

    return ReducedNetwork(Z_ROT, Z_ROS, Z_SOS, Z_SOT, Z_RL, Z_TG, np.array(z.Z_SS))


@dataclass(frozen=True, eq=False)
class RisLoadState:
    """Per-element loads ``R_0k + j X_k`` with reactances confined to ``bounds``."""

    r0: np.ndarray
    x: np.ndarray
    bounds: tuple[float, float]

    def __post_init__(self):
        r0 = np.array(self.r0, dtype=float).reshape(-1)
        x = np.array(self.x, dtype=float).reshape(-1)
        lb, ub = (float(b) for b in self.bounds)
        if r0.shape != x.shape:
            raise ContractError("r0 and x must have the same length")
        if not lb < ub:
            raise ContractError(f"invalid reactance bounds [{lb}, {ub}]")
        if np.any(r0 < 0):
            raise ContractError("parasitic resistances must be non-negative")
        if np.any((x < lb) | (x > ub)) or not np.all(np.isfinite(x)):
            raise ContractError("reactance outside the feasible interval")
        r0.flags.writeable = False
        x.flags.writeable = False
        object.__setattr__(self, "r0", r0)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "bounds", (lb, ub))

    @classmethod
    def random(cls, rng, n, r0, bounds) -> "RisLoadState":
        lb, ub = bounds
        return cls(np.broadcast_to(np.asarray(r0, dtype=float), (n,)), rng.uniform(lb, ub, n), bounds)

    @property
    def z(self) -> np.ndarray:
        return self.r0 + 1j * self.x

    def with_x(self, x) -> "RisLoadState":
        return RisLoadState(self.r0, x, self.bounds)


def ris_impedance_matrix(s: RisLoadState) -> np.ndarray:
    return np.diag(s.r0 + 1j * s.x)


def _as_matrix(z_ris):
    z_ris = np.asarray(z_ris)
    return np.diag(z_ris) if z_ris.ndim == 1 else z_ris


def end_to_end_channel(net: ReducedNetwork, z_ris) -> np.ndarray:
    """Channel matrix from generator voltages to receiver load voltages.

    ``z_ris`` is the RIS load matrix or its diagonal.
    """
    a = net.Z_SS + net.Z_SOS + _as_matrix(z_ris)
    _check_conditioning(a, "Z_SS + Z_SOS + Z_RIS", exc=ChannelError)
    y = np.linalg.solve(a, net.Z_SOT)
    return net.Z_RL @ (net.Z_ROT - net.Z_ROS @ y) @ net.Z_TG


def check_covariance(q, tol=1e-10):
    q = np.asarray(q)
    scale = max(1.0, float(np.max(np.abs(q), initial=0.0)))
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ContractError("covariance must be square")
    if np.max(np.abs(q - q.conj().T), initial=0.0) > tol * scale:
        raise ContractError("covariance is not Hermitian")
    if q.size and np.linalg.eigvalsh((q + q.conj().T) / 2).min() < -tol * scale:
        raise ContractError("covariance is not positive semidefinite")


def achievable_rate(h, q, sigma2: float) -> float:
    """``log2 det(I + H Q H^H / sigma2)`` in bits/s/Hz."""
    if not sigma2 > 0:
        raise ContractError("noise power must be positive")
    h = np.asarray(h)
    check_covariance(q)
    g = np.eye(h.shape[0]) + h @ q @ h.conj().T / sigma2
    g = (g + g.conj().T) / 2
    try:
        chol = np.linalg.cholesky(g)
        rate = 2 * np.sum(np.log2(np.real(np.diag(chol))))
    except np.linalg.LinAlgError:
        sign, logdet = np.linalg.slogdet(g)
        rate = logdet / np.log(2)
    return max(float(rate), 0.0)
