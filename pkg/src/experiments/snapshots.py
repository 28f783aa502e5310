"""
Binary snapshot files.

Layout, all little-endian: magic b"BIWV", u32 version, u32 n, u32 l, n x u64
grid sizes, n x f64 axis lengths, f64 t, f64 epsilon, then u and v as f64
arrays in C order (last spatial axis fastest, components contiguous).
"""

import logging
import struct
from pathlib import Path
from typing import NamedTuple, Tuple, Union

import numpy as np
from pydantic import ValidationError

from src.exceptions import BiwaveError
from src.models.sim_models import GridSpec, State

logger = logging.getLogger("biwave.experiments.snapshots")

MAGIC = b"BIWV"
VERSION = 1
_PREFIX = struct.Struct("<4sIII")


class SnapshotError(BiwaveError):
    """A snapshot file is truncated or not in the expected format."""


class SnapshotHeader(NamedTuple):
    n: int
    l: int
    points: Tuple[int, ...]
    lengths: Tuple[float, ...]
    t: float
    epsilon: float

    @property
    def grid(self) -> GridSpec:
        return GridSpec(n=self.n, points=self.points, lengths=self.lengths)

    @property
    def payload_bytes(self) -> int:
        return 2 * int(np.prod(self.points)) * (self.l + 1) * 8


def _axes_struct(n: int) -> struct.Struct:
    return struct.Struct("<" + "Q" * n + "d" * n + "dd")


def encode_snapshot(state: State, grid: GridSpec, epsilon: float) -> bytes:
    """Serialize a state to the snapshot byte layout."""
    expected = tuple(grid.points)
    if state.u.shape[:-1] != expected:
        raise ValueError(f"state grid {state.u.shape[:-1]} does not match {expected}")
    l = state.u.shape[-1] - 1
    header = _PREFIX.pack(MAGIC, VERSION, grid.n, l) + _axes_struct(grid.n).pack(
        *grid.points, *grid.lengths, state.t, epsilon
    )
    u = np.ascontiguousarray(state.u, dtype="<f8")
    v = np.ascontiguousarray(state.v, dtype="<f8")
    return header + u.tobytes() + v.tobytes()


def decode_snapshot(data: bytes) -> Tuple[SnapshotHeader, State]:
    """
    Parse snapshot bytes.

    Raises:
        SnapshotError: on a bad magic or version, a grid the simulator does not
            support, or a wrong payload length
    """
    if len(data) < _PREFIX.size:
        raise SnapshotError("snapshot shorter than its header")
    magic, version, n, l = _PREFIX.unpack_from(data, 0)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    if n not in (1, 2):
        raise SnapshotError(f"unsupported spatial dimension {n}")
    if l < 1:
        raise SnapshotError(f"target sphere dimension must be at least 1, got {l}")
    axes = _axes_struct(n)
    offset = _PREFIX.size + axes.size
    if len(data) < offset:
        raise SnapshotError("snapshot header truncated")
    values = axes.unpack_from(data, _PREFIX.size)
    header = SnapshotHeader(
        n=n,
        l=l,
        points=tuple(int(size) for size in values[:n]),
        lengths=tuple(values[n : 2 * n]),
        t=values[2 * n],
        epsilon=values[2 * n + 1],
    )
    try:
        header.grid  # runs the GridSpec validators
    except ValidationError as e:
        raise SnapshotError(f"invalid grid in snapshot header: {e.errors()[0]['msg']}") from e
    if len(data) - offset != header.payload_bytes:
        raise SnapshotError(
            f"payload has {len(data) - offset} bytes, expected {header.payload_bytes}"
        )
    shape = header.points + (l + 1,)
    count = int(np.prod(shape))
    payload = np.frombuffer(data, dtype="<f8", offset=offset).astype(np.float64)
    u = payload[:count].reshape(shape)
    v = payload[count:].reshape(shape)
    return header, State(u=u, v=v, t=header.t)


def write_snapshot(path: Union[str, Path], state: State, grid: GridSpec, epsilon: float) -> Path:
    """Write a snapshot file, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_snapshot(state, grid, epsilon))
    logger.info(f"Wrote snapshot t={state.t!r} to {path}")
    return path


def read_snapshot(path: Union[str, Path]) -> Tuple[SnapshotHeader, State]:
    return decode_snapshot(Path(path).read_bytes())
