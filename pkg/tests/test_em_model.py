"""Induced-EMF impedances, scenes, cluster placement and bundle I/O."""

import io
import math
import struct
import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupledris import bundle
from coupledris.em_model import (
    ETA0,
    Dipole,
    ImpedanceSet,
    Scene,
    assemble_impedance_set,
    impedance_matrix,
    linear_array,
    mutual_impedance,
    pairwise_min_distance,
    place_clusters,
)
from coupledris.errors import BundleFormatError, ContractError, PlacementError, ReciprocityError
from coupledris.oracle import random_impedance_set

LAM = 0.1
HALF = LAM / 2

# Half-wave dipole, radius lambda/500, from a 30-digit mpmath quadrature of
# the classical two-term kernel (see ``parallel_oracle``).
SELF_Z_GOLDEN = 73.0766432396085027 + 41.7624141476604341j
MUTUAL_HALF_LAMBDA_GOLDEN = -12.5234074524879860 - 29.9079359346615481j


def parallel_oracle(length, offset, stagger=0.0, wavelength=LAM, dps=20):
    """Mutual impedance of two equal parallel dipoles by direct mpmath quadrature.

    Uses the textbook field of a sinusoidal filament (three spherical-wave
    terms) integrated against the sinusoidal current of the second wire.
    Independent of the package's quadrature and geometry handling.
    """
    with mp.workdps(dps):
        k = 2 * mp.pi / wavelength
        h = mp.mpf(length) / 2
        d, s = mp.mpf(offset), mp.mpf(stagger)

        def kernel(z):
            zz = z + s
            r1 = mp.sqrt(d**2 + (zz - h) ** 2)
            r2 = mp.sqrt(d**2 + (zz + h) ** 2)
            r0 = mp.sqrt(d**2 + zz**2)
            e = (mp.exp(-1j * k * r1) / r1 + mp.exp(-1j * k * r2) / r2
                 - 2 * mp.cos(k * h) * mp.exp(-1j * k * r0) / r0)
            return e * mp.sin(k * (h - abs(z)))

        pts = sorted({-h, h, mp.mpf(0), -s, -s - h, -s + h})
        pts = [p for p in pts if -h <= p <= h]
        val = mp.quad(kernel, pts)
        z = 1j * ETA0 / (4 * mp.pi * mp.sin(k * h) ** 2) * val
        return complex(z)


def dip(x, y=0.0, z=0.0, length=HALF, radius=LAM / 500, axis=(0, 0, 1)):
    return Dipole((x, y, z), axis, length, radius)


class TestSelfImpedance:
    def test_golden_value(self):
        z = mutual_impedance(dip(0), dip(0), LAM)
        assert abs(z - SELF_Z_GOLDEN) / abs(SELF_Z_GOLDEN) < 1e-9

    def test_textbook_range(self):
        z = mutual_impedance(dip(0), dip(0), LAM)
        assert 60 <= z.real <= 90
        assert z.imag > 0

    def test_matches_oracle_on_wire_surface(self):
        z = mutual_impedance(dip(0), dip(0), LAM)
        assert abs(z - parallel_oracle(HALF, LAM / 500)) < 1e-7 * abs(z)

    def test_radius_affects_only_reactance_much(self):
        thin = mutual_impedance(dip(0, radius=LAM / 2000), dip(0, radius=LAM / 2000), LAM)
        thick = mutual_impedance(dip(0, radius=LAM / 200), dip(0, radius=LAM / 200), LAM)
        assert abs(thin.real - thick.real) < 1.0
        assert thin.imag > thick.imag


class TestMutualImpedance:
    def test_golden_half_lambda(self):
        z = mutual_impedance(dip(0), dip(HALF), LAM)
        assert abs(z - MUTUAL_HALF_LAMBDA_GOLDEN) < 1e-8

    @pytest.mark.parametrize(
        "length, offset, stagger",
        [(HALF, 0.2 * LAM, 0.0), (0.4 * LAM, 0.3 * LAM, 0.0),
         (HALF, 0.25 * LAM, 0.3 * LAM), (0.3 * LAM, 1.7 * LAM, 0.1 * LAM),
         (HALF, LAM / 16, 0.0)],
    )
    def test_parallel_against_mpmath(self, length, offset, stagger):
        a = Dipole((0, 0, 0), length=length, radius=LAM / 500)
        b = Dipole((offset, 0, stagger), length=length, radius=LAM / 500)
        ref = parallel_oracle(length, offset, stagger)
        assert abs(mutual_impedance(a, b, LAM) - ref) <= 1e-8 * max(abs(ref), 1.0)

    def test_symmetric_in_arguments(self):
        a = dip(0)
        b = Dipole((0.031, 0.017, 0.004), (0.6, 0, 0.8), 0.04, 3e-4)
        assert mutual_impedance(a, b, LAM) == mutual_impedance(b, a, LAM)

    def test_collinear_pair_is_finite(self):
        z = mutual_impedance(dip(0), dip(0, z=0.06), LAM)
        assert np.isfinite(z)

    def test_orthogonal_coplanar_pair_vanishes(self):
        # broadside-orthogonal wires do not couple
        a = dip(0)
        b = Dipole((0.0, 0.07, 0.0), (1.0, 0.0, 0.0), HALF, LAM / 500)
        assert abs(mutual_impedance(a, b, LAM)) < 1e-8

    def test_decays_at_large_distance(self):
        self_z = abs(mutual_impedance(dip(0), dip(0), LAM))
        far = abs(mutual_impedance(dip(0), dip(100 * LAM), LAM))
        assert far < 0.01 * self_z

    def test_inverse_distance_envelope(self):
        # |Z| * r is nearly constant in the far zone
        rs = np.array([2, 4, 8, 16, 32]) * LAM
        prod = np.array([abs(mutual_impedance(dip(0), dip(r), LAM)) * r for r in rs])
        assert np.ptp(prod) / prod.mean() < 0.1

    def test_deterministic(self):
        a, b = dip(0), dip(0.0371, 0.011)
        assert mutual_impedance(a, b, LAM) == mutual_impedance(a, b, LAM)

    @settings(max_examples=25, deadline=None)
    @given(
        st.floats(0.02, 0.5), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3),
        st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5)),
    )
    def test_translation_invariance(self, dx, dy, dz, shift):
        a = dip(0.0)
        b = dip(dx, dy, dz)
        z0 = mutual_impedance(a, b, LAM)
        z1 = mutual_impedance(a.translated(shift), b.translated(shift), LAM)
        assert abs(z0 - z1) <= 1e-9 * abs(z0)


class TestDipoleValidation:
    def test_rejects_non_unit_axis(self):
        with pytest.raises(ContractError):
            Dipole((0, 0, 0), (0, 0, 2))

    def test_rejects_thick_wire(self):
        with pytest.raises(ContractError, match="thin-wire"):
            Dipole((0, 0, 0), length=0.05, radius=0.01)

    def test_rejects_nan_center(self):
        with pytest.raises(ContractError):
            Dipole((math.nan, 0, 0))


class TestScene:
    def _scene(self, ne=0, spacing=HALF):
        tx = linear_array(2, HALF, (0, 0, 0), LAM)
        rx = linear_array(1, HALF, (1, 1, 0), LAM)
        ris = linear_array(3, spacing, (0, 2, 0), LAM)
        sc = [dip(0.5 + 0.1 * i, 0.5) for i in range(ne)]
        return Scene(LAM, tx, rx, ris, sc, spacing)

    def test_no_scatterers_gives_empty_blocks(self):
        z = assemble_impedance_set(self._scene(0), [50, 50], [50], [])
        assert z.dims == (2, 1, 3, 0)
        assert z.Z_OO.shape == (0, 0)
        assert z.Z_RO.shape == (1, 0)
        assert z.Z_SO.shape == (3, 0)

    def test_matrix_symmetric_and_block_layout(self):
        scene = self._scene(2)
        z = assemble_impedance_set(scene, [50, 50], [50], [0, 0])
        assert z.reciprocity_error() == 0.0
        assert z.Z_RT.shape == (1, 2)
        np.testing.assert_array_equal(z.Z_RT, z.Z_TR.T)
        assert z.Z_SS[0, 1] == mutual_impedance(scene.ris[0], scene.ris[1], LAM)

    def test_translation_invariant_matrix(self):
        scene = self._scene(2)
        a = impedance_matrix(scene.dipoles, LAM)
        b = impedance_matrix(scene.translated((3.0, -2.0, 0.5)).dipoles, LAM)
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9 * np.abs(a).max())

    def test_parallel_assembly_identical(self):
        scene = self._scene(3)
        np.testing.assert_array_equal(
            impedance_matrix(scene.dipoles, LAM, workers=1),
            impedance_matrix(scene.dipoles, LAM, workers=2),
        )

    def test_wide_spacing_warns(self):
        with pytest.warns(UserWarning, match="half a wavelength"):
            self._scene(0, spacing=0.7 * LAM)

    def test_coincident_dipoles_rejected(self):
        with pytest.raises(ContractError, match="coincide"):
            Scene(LAM, [dip(0)], [dip(0)], [dip(1)])

    def test_termination_length_checked(self):
        with pytest.raises(ContractError):
            assemble_impedance_set(self._scene(0), [50], [50], [])

    def test_replace_keeps_reciprocity(self, rng):
        z = random_impedance_set(rng, 2, 1, 3, 2)
        new = np.ones((1, 2))
        z2 = z.replace(RT=new)
        np.testing.assert_array_equal(z2.Z_TR, new.T)
        assert z2.reciprocity_error() == 0.0

    def test_arrays_are_read_only(self, rng):
        z = random_impedance_set(rng, 1, 1, 2, 0)
        with pytest.raises(ValueError):
            z.z[0, 0] = 0


class TestPlaceClusters:
    region = ((0.0, 2.0), (0.0, 2.0), (0.0, 0.0))

    def test_seed_is_deterministic(self):
        a = place_clusters(42, 3, 5, self.region, 0.01)
        b = place_clusters(42, 3, 5, self.region, 0.01)
        assert a == b
        assert a != place_clusters(43, 3, 5, self.region, 0.01)

    def test_empty_clusters(self):
        assert place_clusters(1, 4, 0, self.region, 0.01) == []

    def test_separation_kept(self):
        keep = [(1.0, 1.0, 0.0)]
        out = place_clusters(7, 4, 50, self.region, 0.02, cluster_size=0.5, keep_out=keep)
        assert len(out) == 200
        assert pairwise_min_distance(out) >= 0.02
        assert min(math.dist(d.center, keep[0]) for d in out) >= 0.02
        for d in out:
            assert 0 <= d.center[0] <= 2 and 0 <= d.center[1] <= 2 and d.center[2] == 0

    def test_impossible_density_raises(self):
        with pytest.raises(PlacementError, match="min_separation"):
            place_clusters(0, 1, 20, self.region, 0.5, cluster_size=0.1, max_tries=50)


class TestBundle:
    def _z(self, rng, ne=2):
        return random_impedance_set(rng, 2, 1, 3, ne)

    def test_round_trip_bit_exact(self, rng):
        z = self._z(rng)
        back = bundle.load_impedance_set(bundle.dumps(z))
        assert back.dims == z.dims and back.wavelength == z.wavelength
        assert back.z.tobytes() == z.z.tobytes()
        for name in ("z_g", "z_l", "z_us"):
            np.testing.assert_array_equal(getattr(back, name), getattr(z, name))

    def test_round_trip_file_and_path(self, rng, tmp_path):
        z = self._z(rng, ne=0)
        path = tmp_path / "z.risz"
        bundle.save_impedance_set(z, path)
        a = bundle.load_impedance_set(path)
        b = bundle.load_impedance_set(io.BytesIO(path.read_bytes()))
        assert a.z.tobytes() == b.z.tobytes() == z.z.tobytes()

    def test_reciprocity_violation_names_blocks(self, rng):
        z = self._z(rng)
        data = bytearray(bundle.dumps(z))
        # locate the Z_RT section and scale its first entry by 1.1
        idx = data.index(b"Z_RT") + 4 + 8
        re, im = struct.unpack_from("<dd", data, idx)
        struct.pack_into("<dd", data, idx, re * 1.1, im * 1.1)
        with pytest.raises(ReciprocityError) as info:
            bundle.load_impedance_set(bytes(data))
        assert {info.value.block, info.value.partner} == {"RT", "TR"}
        assert "RT" in str(info.value) and "TR" in str(info.value)

    def test_bad_magic_reports_offset(self, rng):
        data = b"XXXX" + bundle.dumps(self._z(rng))[4:]
        with pytest.raises(BundleFormatError, match="byte offset 0"):
            bundle.load_impedance_set(data)

    def test_truncation_reports_offset(self, rng):
        data = bundle.dumps(self._z(rng))
        with pytest.raises(BundleFormatError) as info:
            bundle.load_impedance_set(data[:-5])
        assert info.value.offset is not None and 0 < info.value.offset < len(data)

    def test_trailing_bytes_rejected(self, rng):
        data = bundle.dumps(self._z(rng))
        with pytest.raises(BundleFormatError, match="trailing"):
            bundle.load_impedance_set(data + b"\0")

    def test_non_diagonal_termination_rejected(self, rng):
        z = self._z(rng)
        data = bytearray(bundle.dumps(z))
        idx = data.index(b"Z_G") + 3 + 8 + 16  # entry (0, 1)
        struct.pack_into("<dd", data, idx, 1.0, 0.0)
        with pytest.raises(BundleFormatError, match="not diagonal"):
            bundle.load_impedance_set(bytes(data))
