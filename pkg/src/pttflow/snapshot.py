"""Binary state persistence with bitwise round trips.

Layout (all little-endian):

    bytes 0..3    magic "PTTF"
    bytes 4..7    format version, u32, currently 1
    bytes 8..11   grid size n, u32
    bytes 12..19  time t, f64
    bytes 20..67  parameter block, 6 f64: a, b, slip, mu, mu1, mu2
    bytes 68..    9 scalar coefficient fields, each n^3 complex128 in
                  row-major wavenumber order: velocity (3) then the six
                  stress components (11, 12, 13, 22, 23, 33)

Loading re-validates the state invariants (solenoidal, mean-free
velocity), so a file whose payload was tampered with fails loudly
rather than seeding a corrupt run.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import FlowState, ModelParams
from .spectral import Grid

MAGIC = b"PTTF"
VERSION = 1
_HEADER = struct.Struct("<4sIId6d")


class FileFormatError(ValueError):
    """The file is not a well-formed snapshot."""


class CorruptStateError(ValueError):
    """The payload decodes but violates state invariants."""


@dataclass(frozen=True)
class Snapshot:
    """A loaded state together with the constants it was saved under."""

    state: FlowState
    params: ModelParams


def save_snapshot(state, path, params=None):
    """Write the state (and constants) to ``path``; returns the path."""
    if params is None:
        params = ModelParams()
    n = state.grid.n
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        n,
        state.t,
        params.a,
        params.b,
        params.slip,
        params.mu,
        params.mu1,
        params.mu2,
    )
    u = np.ascontiguousarray(state.uhat, dtype="<c16")
    tau = np.ascontiguousarray(state.tauhat, dtype="<c16")
    path = Path(path)
    with open(path, "wb") as f:
        f.write(header)
        f.write(u.tobytes())
        f.write(tau.tobytes())
    return path


def load_snapshot(path):
    """Read a snapshot back; returns Snapshot(state, params).

    Raises FileFormatError for bad magic, unsupported version, or a
    truncated file, and CorruptStateError when the decoded state fails
    its invariants.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FileFormatError(
            f"file holds {len(data)} bytes, shorter than the {_HEADER.size}-byte header"
        )
    magic, version, n, t, a, b, slip, mu, mu1, mu2 = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FileFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FileFormatError(f"unsupported format version {version}, this build reads {VERSION}")
    try:
        grid = Grid(n)
    except ValueError as exc:
        raise FileFormatError(f"header declares unusable grid size {n}: {exc}") from None
    expected = _HEADER.size + 9 * n**3 * 16
    if len(data) != expected:
        raise FileFormatError(
            f"payload size mismatch: file holds {len(data)} bytes, header implies {expected}"
        )
    fields = np.frombuffer(data, dtype="<c16", offset=_HEADER.size)
    fields = fields.reshape(9, n, n, n).astype(np.complex128)
    state = FlowState(t=t, grid=grid, uhat=fields[:3].copy(), tauhat=fields[3:].copy())
    try:
        params = ModelParams(a=a, b=b, slip=slip, mu=mu, mu1=mu1, mu2=mu2)
        state.validate()
    except ValueError as exc:
        raise CorruptStateError(f"decoded state fails invariants: {exc}") from None
    return Snapshot(state=state, params=params)
