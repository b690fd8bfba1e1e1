"""File formats: CSV tables, binary snapshot frames, and PPM heatmaps.

CSV floats are printed with 9 significant digits (enough to round-trip
the float32 data that lands in files). Snapshot frames are little-endian
float32 planes behind a 16-byte header: magic "SPNX", then u32 nx, ny and
frame index. Images are binary 8-bit PPM (P6).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

SNAPSHOT_MAGIC = b"SPNX"


def format_float(v) -> str:
    return f"{v:.9g}"


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(format_float(v) if isinstance(v, float) else str(v) for v in row))
            f.write("\n")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def write_matrix_csv(path, matrix: np.ndarray, col_names: list[str]) -> None:
    write_csv(path, col_names, ([float(v) for v in row] for row in np.atleast_2d(matrix)))


def read_matrix_csv(path) -> tuple[list[str], np.ndarray]:
    header, rows = read_csv(path)
    return header, np.array([[float(v) for v in r] for r in rows])


def write_electrodes_csv(path, electrodes) -> None:
    write_csv(path, ["ix", "iy"], electrodes.positions.tolist())


def write_snapshot(path, frame: np.ndarray, frame_index: int) -> None:
    """One s_x plane, row-major (y outer), little-endian float32."""
    frame = np.ascontiguousarray(frame, dtype="<f4")
    ny, nx = frame.shape
    with open(path, "wb") as f:
        f.write(SNAPSHOT_MAGIC)
        f.write(struct.pack("<III", nx, ny, frame_index))
        f.write(frame.tobytes())


def read_snapshot(path) -> tuple[np.ndarray, int]:
    data = Path(path).read_bytes()
    if data[:4] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a snapshot file (bad magic)")
    nx, ny, idx = struct.unpack("<III", data[4:16])
    frame = np.frombuffer(data[16:], dtype="<f4", count=nx * ny).reshape(ny, nx)
    return frame.copy(), idx


def diverging_rgb(values: np.ndarray, vmax: float | None = None) -> np.ndarray:
    """Signed field to an 8-bit red/white/blue image: positive red,
    negative blue, zero white. Symmetric scale; default vmax is the 99th
    percentile of |values| (full range if that is zero)."""
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot render non-finite values")
    if vmax is None:
        vmax = float(np.percentile(np.abs(v), 99.0))
        if vmax == 0.0:
            vmax = float(np.abs(v).max())
    t = np.clip(v / vmax, -1.0, 1.0) if vmax > 0 else np.zeros_like(v)
    rgb = np.empty(v.shape + (3,), dtype=np.uint8)
    fade = np.round(255 * (1.0 - np.abs(t))).astype(np.uint8)
    pos = t >= 0
    rgb[..., 0] = np.where(pos, 255, fade)
    rgb[..., 1] = fade
    rgb[..., 2] = np.where(pos, fade, 255)
    return rgb


def write_ppm(path, rgb: np.ndarray) -> None:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    ny, nx, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{nx} {ny}\n255\n".encode())
        f.write(rgb.tobytes())


def read_ppm_header(path) -> tuple[int, int]:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"P6":
            raise ValueError(f"{path}: not a binary PPM")
        dims = f.readline().split()
        return int(dims[0]), int(dims[1])
