"""Thin-wire dipole scenes and their impedance matrices.

Self and mutual impedances are computed with the induced-EMF method under a
sinusoidal current assumption.  The field radiated by a sinusoidal filament
is known in closed form, so every entry reduces to a single adaptive
quadrature along the receiving wire.  Self terms are evaluated on the wire
surface (radial offset equal to the wire radius).
"""

from __future__ import annotations

import cmath
import itertools
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .errors import ContractError, PlacementError, QuadratureError

ETA0 = 376.730313668  # free-space wave impedance, ohms
QUAD_EPSREL = 1e-10
QUAD_LIMIT = 400

GROUPS = ("T", "R", "S", "O")


@dataclass(frozen=True)
class Dipole:
    """A straight, perfectly conducting thin wire.

    Parameters
    ----------
    center : 3-tuple of float
        Position of the feed point in meters.
    axis : 3-tuple of float
        Unit vector along the wire.
    length : float
        Total wire length in meters.
    radius : float
        Wire radius in meters.
    """

    center: tuple[float, float, float]
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    length: float = 0.05
    radius: float = 2e-4

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "axis", tuple(float(c) for c in self.axis))
        if len(self.center) != 3 or len(self.axis) != 3:
            raise ContractError("center and axis must be 3-vectors")
        if not all(math.isfinite(c) for c in self.center):
            raise ContractError(f"non-finite dipole center {self.center}")
        if abs(math.sqrt(sum(c * c for c in self.axis)) - 1.0) > 1e-12:
            raise ContractError(f"dipole axis {self.axis} is not a unit vector")
        if not (self.length > 0 and self.radius > 0):
            raise ContractError("length and radius must be positive")
        if self.radius / self.length >= 0.1:
            raise ContractError(
                f"thin-wire assumption violated: radius/length = {self.radius / self.length:.3g}"
            )

    def translated(self, offset) -> "Dipole":
        c = tuple(ci + oi for ci, oi in zip(self.center, offset))
        return Dipole(c, self.axis, self.length, self.radius)


@dataclass(frozen=True)
class Scene:
    """All dipoles of one RIS-assisted link.

    ``cluster_ids`` assigns each scatterer to a cluster; it may be empty when
    there are no scatterers.
    """

    wavelength: float
    tx: tuple[Dipole, ...]
    rx: tuple[Dipole, ...]
    ris: tuple[Dipole, ...]
    scatterers: tuple[Dipole, ...] = ()
    ris_spacing: float = 0.0
    cluster_ids: tuple[int, ...] = ()

    def __post_init__(self):
        for name in ("tx", "rx", "ris", "scatterers", "cluster_ids"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.wavelength > 0:
            raise ContractError("wavelength must be positive")
        if not (self.tx and self.rx and self.ris):
            raise ContractError("scene needs at least one tx, rx and RIS dipole")
        if self.cluster_ids and len(self.cluster_ids) != len(self.scatterers):
            raise ContractError("cluster_ids must match the scatterer count")
        if self.ris_spacing > self.wavelength / 2 * (1 + 1e-12):
            warnings.warn(
                f"RIS spacing {self.ris_spacing:.4g} m exceeds half a wavelength",
                stacklevel=2,
            )
        seen = {}
        for idx, d in enumerate(self.dipoles):
            key = (d.center, d.axis)
            if key in seen:
                raise ContractError(f"dipoles {seen[key]} and {idx} coincide")
            seen[key] = idx

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return len(self.tx), len(self.rx), len(self.ris), len(self.scatterers)

    @property
    def dipoles(self) -> tuple[Dipole, ...]:
        """Dipoles in port order: transmitter, receiver, RIS, scatterers."""
        return self.tx + self.rx + self.ris + self.scatterers

    def translated(self, offset) -> "Scene":
        move = lambda ds: tuple(d.translated(offset) for d in ds)  # noqa: E731
        return Scene(
            self.wavelength, move(self.tx), move(self.rx), move(self.ris),
            move(self.scatterers), self.ris_spacing, self.cluster_ids,
        )


def _block_slices(dims):
    edges = np.concatenate([[0], np.cumsum(dims)])
    return {g: slice(int(edges[i]), int(edges[i + 1])) for i, g in enumerate(GROUPS)}


@dataclass(frozen=True, eq=False)
class ImpedanceSet:
    """Full multiport impedance description of a scene.

    The self/mutual impedances of all ports are stored as one symmetric
    matrix ``z`` in port order T, R, S, O; named blocks such as ``Z_RT`` are
    read-only views into it.  Terminations are kept as diagonal vectors.
    """

    wavelength: float
    dims: tuple[int, int, int, int]
    z: np.ndarray
    z_g: np.ndarray
    z_l: np.ndarray
    z_us: np.ndarray
    _slices: dict = field(init=False, repr=False)

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        object.__setattr__(self, "dims", dims)
        n = sum(dims)
        z = np.array(self.z, dtype=complex)
        if z.shape != (n, n):
            raise ContractError(f"impedance matrix has shape {z.shape}, expected {(n, n)}")
        m, l, _, ne = dims
        terms = {}
        for name, size in (("z_g", m), ("z_l", l), ("z_us", ne)):
            v = np.array(getattr(self, name), dtype=complex).reshape(-1)
            if v.shape != (size,):
                raise ContractError(f"{name} has {v.size} entries, expected {size}")
            v.flags.writeable = False
            terms[name] = v
        z.flags.writeable = False
        object.__setattr__(self, "z", z)
        for name, v in terms.items():
            object.__setattr__(self, name, v)
        object.__setattr__(self, "_slices", _block_slices(dims))

    def block(self, name: str) -> np.ndarray:
        """Return block ``name`` (e.g. ``"RT"`` or ``"Z_RT"``) of the full matrix."""
        name = name.removeprefix("Z_")
        if len(name) != 2 or any(g not in GROUPS for g in name):
            raise KeyError(name)
        return self.z[self._slices[name[0]], self._slices[name[1]]]

    def __getattr__(self, name):
        if name.startswith("Z_") and len(name) == 4:
            try:
                return self.block(name)
            except KeyError:
                pass
        raise AttributeError(name)

    @property
    def Z_G(self):
        return np.diag(self.z_g)

    @property
    def Z_L(self):
        return np.diag(self.z_l)

    @property
    def Z_US(self):
        return np.diag(self.z_us)

    def replace(self, **blocks) -> "ImpedanceSet":
        """Copy with some blocks overwritten; reciprocal partners are kept in sync."""
        z = np.array(self.z)
        for name, value in blocks.items():
            name = name.removeprefix("Z_")
            a, b = name
            value = np.asarray(value, dtype=complex)
            z[self._slices[a], self._slices[b]] = value
            z[self._slices[b], self._slices[a]] = value.T
        return ImpedanceSet(self.wavelength, self.dims, z, self.z_g, self.z_l, self.z_us)

    def without_direct_link(self) -> "ImpedanceSet":
        m, l, _, _ = self.dims
        return self.replace(RT=np.zeros((l, m)))

    def reciprocity_error(self) -> float:
        scale = max(float(np.max(np.abs(self.z), initial=0.0)), 1e-300)
        return float(np.max(np.abs(self.z - self.z.T), initial=0.0)) / scale


# ---------------------------------------------------------------------------
# induced-EMF mutual impedance


def _canonical(d: Dipole) -> tuple:
    return (d.center, d.axis, d.length, d.radius)


def mutual_impedance(d1: Dipole, d2: Dipole, wavelength: float) -> complex:
    """Self or mutual impedance between two thin-wire dipoles, in ohms.

    Both wires carry sinusoidal currents referred to their feed points.  The
    pair is put in a canonical order before integration, so the result is
    exactly symmetric in its arguments.

    Raises
    ------
    QuadratureError
        If the adaptive quadrature does not reach its tolerance.
    """
    if _canonical(d2) < _canonical(d1):
        d1, d2 = d2, d1
    w0 = tuple(round(b - a, 12) for a, b in zip(d1.center, d2.center))
    self_term = d1 == d2
    return _induced_emf(
        w0, d1.axis, d2.axis, d1.length, d2.length,
        d1.radius if self_term else 0.0, float(wavelength),
    )


def _perpendicular(axis):
    a = np.asarray(axis)
    trial = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    n = trial - a * (trial @ a)
    return n / np.linalg.norm(n)


@lru_cache(maxsize=200_000)
def _induced_emf(w0, axis1, axis2, l1, l2, self_radius, wavelength):
    k = 2 * math.pi / wavelength
    h1, h2 = l1 / 2, l2 / 2
    s1, s2 = math.sin(k * h1), math.sin(k * h2)
    if abs(s1) < 1e-9 or abs(s2) < 1e-9:
        raise ContractError("feed current vanishes: wire length is a multiple of the wavelength")
    cos_kh1 = math.cos(k * h1)
    a1 = np.asarray(axis1)
    a2 = np.asarray(axis2)
    if self_radius > 0:
        w0 = tuple(_perpendicular(axis1) * self_radius)
    wx, wy, wz = w0
    a1x, a1y, a1z = a1
    a2x, a2y, a2z = a2
    cos12 = float(a1 @ a2)
    pre = 1j * ETA0 / (4 * math.pi)

    def integrand(s):
        px, py, pz = wx + s * a2x, wy + s * a2y, wz + s * a2z
        z = px * a1x + py * a1y + pz * a1z
        rx, ry, rz = px - z * a1x, py - z * a1y, pz - z * a1z
        rho2 = rx * rx + ry * ry + rz * rz
        r1 = math.sqrt(rho2 + (z - h1) ** 2)
        r2 = math.sqrt(rho2 + (z + h1) ** 2)
        r0 = math.sqrt(rho2 + z * z)
        g1 = cmath.exp(-1j * k * r1) / r1
        g2 = cmath.exp(-1j * k * r2) / r2
        g0 = cmath.exp(-1j * k * r0) / r0
        e_tan = -(g1 + g2 - 2 * cos_kh1 * g0) * cos12
        radial = rx * a2x + ry * a2y + rz * a2z
        if radial != 0.0:
            e_tan += ((z - h1) * g1 + (z + h1) * g2 - 2 * z * cos_kh1 * g0) * radial / rho2
        return pre * e_tan * math.sin(k * (h2 - abs(s)))

    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            val, _ = quad(
                integrand, -h2, h2, points=[0.0], complex_func=True,
                epsabs=0.0, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT,
            )
        except (IntegrationWarning, ZeroDivisionError) as exc:
            raise QuadratureError(f"induced-EMF quadrature failed: {exc}") from exc
    z12 = -val / (s1 * s2)
    if not cmath.isfinite(z12):
        raise QuadratureError("induced-EMF quadrature returned a non-finite value")
    return complex(z12)


def _row_task(args):
    dipoles, wavelength, rows = args
    out = []
    for i in rows:
        row = []
        for j in range(i, len(dipoles)):
            try:
                row.append(mutual_impedance(dipoles[i], dipoles[j], wavelength))
            except QuadratureError as exc:
                raise QuadratureError(str(exc), pair=(i, j)) from exc
        out.append(row)
    return out


def impedance_matrix(dipoles: Sequence[Dipole], wavelength: float, workers: int = 1) -> np.ndarray:
    """Symmetric matrix of self/mutual impedances of ``dipoles``."""
    n = len(dipoles)
    z = np.zeros((n, n), dtype=complex)
    if n == 0:
        return z
    dipoles = tuple(dipoles)
    if workers > 1 and n > 1:
        chunks = [list(range(i, n, workers)) for i in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_row_task, [(dipoles, wavelength, c) for c in chunks]))
        rows = {}
        for chunk, res in zip(chunks, results):
            rows.update(zip(chunk, res))
    else:
        rows = dict(zip(range(n), _row_task((dipoles, wavelength, range(n)))))
    for i in range(n):
        z[i, i:] = rows[i]
        z[i:, i] = rows[i]
    return z


def assemble_impedance_set(
    scene: Scene,
    z_g: Iterable[complex],
    z_l: Iterable[complex],
    z_us: Iterable[complex],
    workers: int = 1,
) -> ImpedanceSet:
    """Fill every impedance block of ``scene`` and attach the terminations.

    ``z_g``, ``z_l`` and ``z_us`` are the diagonal values of the generator,
    receiver-load and scatterer-load matrices.
    """
    m, l, n, ne = scene.dims
    z_g, z_l, z_us = (np.asarray(list(v), dtype=complex) for v in (z_g, z_l, z_us))
    for name, v, size in (("Z_G", z_g, m), ("Z_L", z_l, l), ("Z_US", z_us, ne)):
        if v.size != size:
            raise ContractError(f"{name} has {v.size} diagonal values, scene needs {size}")
    z = impedance_matrix(scene.dipoles, scene.wavelength, workers=workers)
    return ImpedanceSet(scene.wavelength, scene.dims, z, z_g, z_l, z_us)


# ---------------------------------------------------------------------------
# geometry helpers


def linear_array(count, spacing, center, wavelength, *, length=None, radius=None,
                 direction=(1.0, 0.0, 0.0), axis=(0.0, 0.0, 1.0)) -> list[Dipole]:
    """``count`` parallel dipoles spaced by ``spacing`` along ``direction``."""
    length = wavelength / 2 if length is None else length
    radius = wavelength / 500 if radius is None else radius
    c = np.asarray(center, dtype=float)
    u = np.asarray(direction, dtype=float)
    offsets = (np.arange(count) - (count - 1) / 2) * spacing
    return [Dipole(tuple(c + o * u), axis, length, radius) for o in offsets]


def place_clusters(
    rng_seed: int,
    n_clusters: int,
    per_cluster: int,
    region,
    min_separation: float,
    *,
    cluster_size: float = 0.2,
    length: float = 0.05,
    radius: float = 2e-4,
    axis=(0.0, 0.0, 1.0),
    keep_out: Sequence[Sequence[float]] = (),
    max_tries: int = 10_000,
) -> list[Dipole]:
    """Randomly place clustered scatterer dipoles.

    Cluster centers are uniform in ``region`` (``((x0, x1), (y0, y1), (z0,
    z1))`` in meters).  Members are uniform in a cube of side
    ``cluster_size`` around their center, clipped to ``region``.  Every new
    center keeps ``min_separation`` from all placed scatterers and from the
    ``keep_out`` points (other dipoles of the scene).
    """
    if per_cluster <= 0 or n_clusters <= 0:
        return []
    box = np.asarray(region, dtype=float).reshape(3, 2)
    if np.any(box[:, 1] < box[:, 0]):
        raise ContractError(f"invalid region {region}")
    rng = np.random.default_rng(rng_seed)
    placed = [np.asarray(p, dtype=float) for p in keep_out]
    n_fixed = len(placed)
    out = []
    for _ in range(n_clusters):
        center = rng.uniform(box[:, 0], box[:, 1])
        lo = np.maximum(box[:, 0], center - cluster_size / 2)
        hi = np.minimum(box[:, 1], center + cluster_size / 2)
        for _ in range(per_cluster):
            for _ in range(max_tries):
                p = rng.uniform(lo, hi)
                if not placed or np.min(np.linalg.norm(np.asarray(placed) - p, axis=1)) >= min_separation:
                    break
            else:
                raise PlacementError(
                    f"could not keep min_separation={min_separation:g} m after {max_tries} tries "
                    f"({len(placed) - n_fixed} scatterers placed)"
                )
            placed.append(p)
            out.append(Dipole(tuple(p), axis, length, radius))
    return out


def pairwise_min_distance(dipoles: Sequence[Dipole]) -> float:
    if len(dipoles) < 2:
        return math.inf
    return min(
        math.dist(a.center, b.center) for a, b in itertools.combinations(dipoles, 2)
    )
