"""File formats: matrices, trajectory archives, bases, CSV tables, manifests.

Binary layouts (all little-endian):
  matrix     magic ``SPDM`` | u32 dim | f64 entries row-major
  trajectory magic ``SPDT`` | u32 dim | u32 length | matrices in matrix format
  basis      magic ``STFB`` | u32 n | u32 d | f64 entries column-major

Text formats use shortest round-trip float formatting so identical data
produces identical bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .analysis import DistanceMatrix
from .estimation import CovarianceTrajectory, MultivariateTimeSeries
from .reduction import StiefelBasis

_MAGIC_MATRIX = b"SPDM"
_MAGIC_TRAJ = b"SPDT"
_MAGIC_BASIS = b"STFB"


class FormatError(ValueError):
    """File does not conform to the expected layout."""


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# matrices


def save_matrix_csv(path, M: np.ndarray) -> None:
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    lines = [f"n={n}"]
    for row in M:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_matrix_csv(path) -> np.ndarray:
    lines = Path(path).read_text().strip().splitlines()
    if not lines or not lines[0].startswith("n="):
        raise FormatError(f"{path}: missing 'n=<dim>' header")
    n = int(lines[0][2:])
    if len(lines) != n + 1:
        raise FormatError(f"{path}: expected {n} rows, found {len(lines) - 1}")
    M = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    if M.shape != (n, n):
        raise FormatError(f"{path}: expected {n}x{n} entries, got {M.shape}")
    return M


def _pack_matrix(M: np.ndarray) -> bytes:
    M = np.ascontiguousarray(M, dtype="<f8")
    return _MAGIC_MATRIX + struct.pack("<I", M.shape[0]) + M.tobytes()


def _unpack_matrix(buf: bytes, offset: int) -> tuple[np.ndarray, int]:
    if buf[offset : offset + 4] != _MAGIC_MATRIX:
        raise FormatError("bad matrix magic")
    (n,) = struct.unpack_from("<I", buf, offset + 4)
    start = offset + 8
    end = start + 8 * n * n
    M = np.frombuffer(buf[start:end], dtype="<f8").reshape(n, n).astype(float)
    return M, end


def save_matrix_binary(path, M: np.ndarray) -> None:
    Path(path).write_bytes(_pack_matrix(M))


def load_matrix_binary(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    M, end = _unpack_matrix(buf, 0)
    if end != len(buf):
        raise FormatError(f"{path}: trailing bytes after matrix payload")
    return M


# ---------------------------------------------------------------------------
# trajectory archives


def save_trajectory(path, traj: CovarianceTrajectory) -> None:
    parts = [
        _MAGIC_TRAJ,
        struct.pack("<I", traj.dim),
        struct.pack("<I", traj.length),
    ]
    for M in traj.matrices:
        parts.append(_pack_matrix(M))
    Path(path).write_bytes(b"".join(parts))


def load_trajectory(path) -> CovarianceTrajectory:
    buf = Path(path).read_bytes()
    if buf[:4] != _MAGIC_TRAJ:
        raise FormatError(f"{path}: bad trajectory magic")
    dim, length = struct.unpack_from("<II", buf, 4)
    mats = np.empty((length, dim, dim))
    offset = 12
    for k in range(length):
        M, offset = _unpack_matrix(buf, offset)
        if M.shape[0] != dim:
            raise FormatError(f"{path}: matrix {k} has dim {M.shape[0]} != {dim}")
        mats[k] = M
    if offset != len(buf):
        raise FormatError(f"{path}: trailing bytes after trajectory payload")
    return CovarianceTrajectory(matrices=mats)


# ---------------------------------------------------------------------------
# bases


def save_basis(path, basis: StiefelBasis) -> None:
    B = np.asfortranarray(basis.matrix, dtype="<f8")
    payload = (
        _MAGIC_BASIS
        + struct.pack("<II", basis.n, basis.d)
        + B.tobytes(order="F")
    )
    Path(path).write_bytes(payload)


def load_basis(path) -> StiefelBasis:
    buf = Path(path).read_bytes()
    if buf[:4] != _MAGIC_BASIS:
        raise FormatError(f"{path}: bad basis magic")
    n, d = struct.unpack_from("<II", buf, 4)
    expected = 12 + 8 * n * d
    if len(buf) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(buf)}")
    B = np.frombuffer(buf[12:], dtype="<f8").reshape((n, d), order="F").astype(float)
    return StiefelBasis(matrix=B)


# ---------------------------------------------------------------------------
# CSV tables


def save_timeseries_csv(path, ts: MultivariateTimeSeries, header: list[str] | None = None) -> None:
    lines = []
    if header is not None:
        lines.append(",".join(header))
    for row in ts.values:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_timeseries_csv(path) -> MultivariateTimeSeries:
    lines = [ln for ln in Path(path).read_text().strip().splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty time-series file")
    try:
        [float(v) for v in lines[0].split(",")]
    except ValueError:
        lines = lines[1:]  # header row
    values = np.array([[float(v) for v in ln.split(",")] for ln in lines])
    return MultivariateTimeSeries(values=values)


def save_warp_csv(path, warp) -> None:
    lines = ["t,gamma"]
    for x, y in zip(warp.knots_x, warp.knots_y):
        lines.append(f"{_fmt(x)},{_fmt(y)}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_warp_csv(path):
    from .alignment import WarpingFunction

    lines = [ln for ln in Path(path).read_text().strip().splitlines() if ln.strip()]
    if lines and lines[0].startswith("t,"):
        lines = lines[1:]
    xs, ys = [], []
    for ln in lines:
        a, b = ln.split(",")
        xs.append(float(a))
        ys.append(float(b))
    return WarpingFunction(knots_x=np.array(xs), knots_y=np.array(ys))


def save_distance_csv(path, D: DistanceMatrix) -> None:
    lines = [",".join(D.ids)]
    for row in D.values:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_distance_csv(path, metric: str = "unknown") -> DistanceMatrix:
    lines = [ln for ln in Path(path).read_text().strip().splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty distance file")
    ids = lines[0].split(",")
    vals = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if vals.shape != (len(ids), len(ids)):
        raise FormatError(
            f"{path}: expected {len(ids)}x{len(ids)} values, got {vals.shape}"
        )
    return DistanceMatrix(ids=ids, values=vals, metric=metric)


def save_labels_csv(path, ids: list[str], labels) -> None:
    lines = ["id,label"]
    for i, lab in zip(ids, labels):
        lines.append(f"{i},{lab}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_labels_csv(path) -> dict[str, str]:
    lines = [ln for ln in Path(path).read_text().strip().splitlines() if ln.strip()]
    if lines and lines[0] == "id,label":
        lines = lines[1:]
    out = {}
    for ln in lines:
        i, lab = ln.split(",", 1)
        out[i] = lab
    return out


def save_values_csv(path, values, header: str | None = None) -> None:
    lines = [] if header is None else [header]
    lines.extend(_fmt(v) for v in values)
    Path(path).write_text("\n".join(lines) + "\n")


def save_table_csv(path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# manifests


def sha256_file(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def save_manifest(path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
