"""Binary matrix bundle: serialized :class:`ImpedanceSet` objects.

Layout (all integers unsigned little-endian, floats IEEE-754 binary64 LE)::

    magic        4 bytes   b"RISZ"
    version      u16       currently 1
    M, L, N, Ne  4 x u32   port counts (tx, rx, RIS, scatterers)
    wavelength   f64       meters
    n_sections   u32
    section*     name_len u16, name (ASCII), rows u32, cols u32,
                 rows*cols (re f64, im f64) pairs, row-major

Sections are the sixteen ordered blocks ``Z_TT``, ``Z_TR``, ... ``Z_OO`` and
the terminations ``Z_G``, ``Z_L``, ``Z_US`` stored as full square matrices.
Both members of every reciprocal pair are written, so external tools can
fill either and the loader cross-checks them.
"""

from __future__ import annotations

import io
import struct
from typing import BinaryIO

import numpy as np

from .em_model import GROUPS, ImpedanceSet
from .errors import BundleFormatError, ReciprocityError

MAGIC = b"RISZ"
VERSION = 1
RECIPROCITY_RTOL = 1e-9

_HEADER = struct.Struct("<4sH4IdI")
BLOCK_NAMES = tuple(f"Z_{a}{b}" for a in GROUPS for b in GROUPS)
TERMINATIONS = ("Z_G", "Z_L", "Z_US")


def _write_section(buf, name, mat):
    mat = np.ascontiguousarray(mat, dtype="<c16")
    raw = name.encode("ascii")
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)
    buf.write(struct.pack("<II", *mat.shape))
    buf.write(mat.tobytes(order="C"))


def dumps(z: ImpedanceSet) -> bytes:
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, VERSION, *z.dims, z.wavelength,
                           len(BLOCK_NAMES) + len(TERMINATIONS)))
    for name in BLOCK_NAMES:
        _write_section(buf, name, z.block(name))
    _write_section(buf, "Z_G", np.diag(z.z_g))
    _write_section(buf, "Z_L", np.diag(z.z_l))
    _write_section(buf, "Z_US", np.diag(z.z_us))
    return buf.getvalue()


def save_impedance_set(z: ImpedanceSet, target) -> None:
    """Write ``z`` to a path or binary file object."""
    data = dumps(z)
    if hasattr(target, "write"):
        target.write(data)
    else:
        with open(target, "wb") as fh:
            fh.write(data)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise BundleFormatError(f"truncated {what}: need {n} bytes", offset=self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))


def _rel_mismatch(a, b):
    scale = np.maximum(np.abs(a), np.abs(b))
    diff = np.abs(a - b)
    return np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), 0.0)


def load_impedance_set(source: bytes | BinaryIO | str) -> ImpedanceSet:
    """Parse a matrix bundle and validate its invariants.

    ``source`` may be raw bytes, a binary file object or a path.

    Raises
    ------
    BundleFormatError
        On malformed content; the message carries the byte offset.
    ReciprocityError
        If a block and its reciprocal partner disagree by more than 1e-9
        relative.  The error names the block pair and the entry.
    """
    if isinstance(source, (bytes, bytearray, memoryview)):
        data = bytes(source)
    elif hasattr(source, "read"):
        data = source.read()
    else:
        try:
            with open(source, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise BundleFormatError(f"cannot read bundle {source}: {exc.strerror}") from None
    r = _Reader(data)
    magic, version, m, l, n, ne, wavelength, n_sections = r.unpack(_HEADER.format, "header")
    if magic != MAGIC:
        raise BundleFormatError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise BundleFormatError(f"unsupported format version {version}", offset=4)
    if not wavelength > 0:
        raise BundleFormatError("wavelength must be positive", offset=_HEADER.size - 12)
    sizes = dict(zip(GROUPS, (m, l, n, ne)))
    expected = {name: (sizes[name[2]], sizes[name[3]]) for name in BLOCK_NAMES}
    expected.update(Z_G=(m, m), Z_L=(l, l), Z_US=(ne, ne))

    sections = {}
    for _ in range(n_sections):
        start = r.pos
        (name_len,) = r.unpack("<H", "section name length")
        try:
            name = r.take(name_len, "section name").decode("ascii")
        except UnicodeDecodeError:
            raise BundleFormatError("section name is not ASCII", offset=start + 2) from None
        if name not in expected:
            raise BundleFormatError(f"unknown section {name!r}", offset=start)
        if name in sections:
            raise BundleFormatError(f"duplicate section {name!r}", offset=start)
        rows, cols = r.unpack("<II", f"{name} shape")
        if (rows, cols) != expected[name]:
            raise BundleFormatError(
                f"section {name} has shape {(rows, cols)}, header implies {expected[name]}",
                offset=start,
            )
        raw = r.take(16 * rows * cols, f"{name} data")
        sections[name] = np.frombuffer(raw, dtype="<c16").reshape(rows, cols).astype(complex)
    if r.pos != len(data):
        raise BundleFormatError("trailing bytes after last section", offset=r.pos)
    missing = [k for k in expected if k not in sections]
    if missing:
        raise BundleFormatError(f"missing sections {missing}", offset=len(data))

    for name in TERMINATIONS:
        mat = sections[name]
        off = mat - np.diag(np.diag(mat))
        if np.any(off != 0):
            raise BundleFormatError(f"termination {name} is not diagonal")

    dims = (m, l, n, ne)
    total = sum(dims)
    z = np.zeros((total, total), dtype=complex)
    edges = np.concatenate([[0], np.cumsum(dims)])
    sl = {g: slice(int(edges[i]), int(edges[i + 1])) for i, g in enumerate(GROUPS)}
    for ia, a in enumerate(GROUPS):
        for b in GROUPS[ia:]:
            ab, ba = sections[f"Z_{a}{b}"], sections[f"Z_{b}{a}"]
            err = _rel_mismatch(ab, ba.T)
            if err.size and err.max() > RECIPROCITY_RTOL:
                i, j = np.unravel_index(int(np.argmax(err)), err.shape)
                raise ReciprocityError(f"{a}{b}", f"{b}{a}", int(i), int(j), float(err[i, j]))
            z[sl[a], sl[b]] = ab
            z[sl[b], sl[a]] = ab.T
    return ImpedanceSet(
        wavelength, dims, z,
        np.diag(sections["Z_G"]), np.diag(sections["Z_L"]), np.diag(sections["Z_US"]),
    )
