"""Spatio-spectral patch extraction and the .iop container format.

Container layout: magic "IOP1", u32le header length, UTF-8 JSON header
{p, C, record_count, peak_mzs, ppm, dataset_id, labels}, then one record
per cube: u16 label, u32 x, u32 y, p*p*C float32 little-endian values in
(row, col, channel) order.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import DimensionMismatch, EvenPatchSize, HeaderMismatch
from .io import DatasetHandle, SegmentationMask
from .ionimage import extract_ion_images
from .picking import PeakList

MAGIC = b"IOP1"

MIN_RECOMMENDED_PATCH = 11  # smaller patches break the reference downstream model


@dataclass(frozen=True)
class PatchCube:
    data: np.ndarray  # (p, p, C) float32
    label: int
    center: tuple[int, int]  # (x, y), 0-based

    @property
    def p(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def extract_patches(
    handle: DatasetHandle,
    peaks: PeakList,
    mask: SegmentationMask,
    p: int,
    ppm: float,
) -> Iterator[PatchCube]:
    """Yield one p x p x C cube per labeled pixel, row-major over centers.

    Channel values are the per-peak ppm-window sums; neighbors outside the
    grid contribute zeros. Each cube carries the mask label of its center.
    """
    if p < 1 or p % 2 == 0:
        raise EvenPatchSize(f"patch size must be odd and >= 1, got {p}")
    mask.check_dims(handle)
    if len(peaks) == 0:
        raise ValueError("peak list is empty")
    if p < MIN_RECOMMENDED_PATCH:
        warnings.warn(
            f"patch size {p} is below the downstream model's minimum of "
            f"{MIN_RECOMMENDED_PATCH}",
            stacklevel=2,
        )
    images = extract_ion_images(handle, list(peaks.mzs), ppm)
    # (H, W, C) channel stack, zero-padded by the patch radius
    stack = np.stack([img.pixels for img in images], axis=-1).astype(np.float32)
    r = p // 2
    padded = np.pad(stack, ((r, r), (r, r), (0, 0)))
    for y in range(handle.height):
        for x in range(handle.width):
            label = int(mask.labels[y, x])
            if label <= 0:
                continue
            cube = padded[y : y + p, x : x + p, :].copy()
            yield PatchCube(data=cube, label=label, center=(x, y))


_RECORD_PREFIX = struct.Struct("<HII")


def export_patches(
    cubes: Iterable[PatchCube],
    path: str | os.PathLike,
    peak_mzs,
    ppm: float,
    dataset_id: str = "",
    labels: dict[int, str] | None = None,
) -> dict[int, str | int]:
    """Write cubes to a .iop container; returns the per-label cube counts.

    Records are spooled to a temporary file first so a mid-stream error
    leaves no partial output behind.
    """
    path = Path(path)
    counts: dict[int, int] = {}
    p = channels = None
    tmp = tempfile.NamedTemporaryFile(dir=path.parent, delete=False)
    try:
        record_count = 0
        for cube in cubes:
            if p is None:
                p, channels = cube.p, cube.channels
            elif (cube.p, cube.channels) != (p, channels):
                raise HeaderMismatch(
                    f"cube {cube.center} is {cube.p}x{cube.p}x{cube.channels}, "
                    f"expected {p}x{p}x{channels}"
                )
            tmp.write(_RECORD_PREFIX.pack(cube.label, cube.center[0], cube.center[1]))
            tmp.write(np.ascontiguousarray(cube.data, dtype="<f4").tobytes())
            counts[cube.label] = counts.get(cube.label, 0) + 1
            record_count += 1
        tmp.flush()
        header = {
            "p": p if p is not None else 0,
            "C": channels if channels is not None else len(list(peak_mzs)),
            "record_count": record_count,
            "peak_mzs": [float(m) for m in peak_mzs],
            "ppm": float(ppm),
            "dataset_id": dataset_id,
            "labels": {str(k): v for k, v in (labels or {}).items()},
        }
        header_bytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
        with open(path, "wb") as out:
            out.write(MAGIC)
            out.write(struct.pack("<I", len(header_bytes)))
            out.write(header_bytes)
            tmp.seek(0)
            while chunk := tmp.read(1 << 20):
                out.write(chunk)
    except Exception:
        tmp.close()
        os.unlink(tmp.name)
        if path.exists():
            os.unlink(path)
        raise
    tmp.close()
    os.unlink(tmp.name)
    return counts


def read_patches(path: str | os.PathLike) -> tuple[dict, list[PatchCube]]:
    """Read a .iop container back; bit-exact inverse of export_patches."""
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise HeaderMismatch(f"{path} is not an IOP1 container")
        (header_len,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(header_len).decode("utf-8"))
        p, channels = header["p"], header["C"]
        values_per_cube = p * p * channels
        cubes = []
        for _ in range(header["record_count"]):
            label, x, y = _RECORD_PREFIX.unpack(f.read(_RECORD_PREFIX.size))
            buf = f.read(values_per_cube * 4)
            if len(buf) != values_per_cube * 4:
                raise HeaderMismatch(f"truncated record in {path}")
            data = np.frombuffer(buf, dtype="<f4").reshape(p, p, channels)
            cubes.append(PatchCube(data=data, label=label, center=(x, y)))
    return header, cubes
