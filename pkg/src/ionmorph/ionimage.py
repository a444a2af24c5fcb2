"""Ion image extraction and the preprocessing chain.

Preprocessing follows a fixed order: hotspot clipping, 99th-percentile
normalization with clamping to [0,1], then a bilinear resize to 224x224.
Percentiles use linear interpolation between closest ranks throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .io import DatasetHandle

TARGET_SIZE = 224


def ppm_window(mz: float, ppm: float) -> tuple[float, float]:
    return mz * (1.0 - ppm * 1e-6), mz * (1.0 + ppm * 1e-6)


@dataclass(frozen=True)
class IonImage:
    pixels: np.ndarray  # (height, width), non-negative, float64
    target_mz: float
    ppm: float

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def window(self) -> tuple[float, float]:
        return ppm_window(self.target_mz, self.ppm)

    def with_pixels(self, pixels: np.ndarray) -> "IonImage":
        return IonImage(pixels=pixels, target_mz=self.target_mz, ppm=self.ppm)


@dataclass(frozen=True)
class PreprocessedImage:
    pixels: np.ndarray  # (224, 224) in [0, 1]
    target_mz: float
    ppm: float
    dataset_id: str = ""


def extract_ion_image(handle: DatasetHandle, mz: float, ppm: float) -> IonImage:
    """Sum each spectrum's intensities inside the symmetric ppm window.

    Unmeasured pixels stay 0; an empty window yields an all-zero image.
    """
    if mz <= 0 or ppm <= 0:
        raise ValueError("mz and ppm must be positive")
    img = extract_ion_images(handle, [mz], ppm)[0]
    return img


def extract_ion_images(handle: DatasetHandle, mzs, ppm: float) -> list[IonImage]:
    """Extract several ion images in a single pass over the spectra."""
    mzs = [float(m) for m in mzs]
    if any(m <= 0 for m in mzs) or ppm <= 0:
        raise ValueError("mz and ppm must be positive")
    grids = np.zeros((len(mzs), handle.height, handle.width), dtype=np.float64)
    windows = [ppm_window(m, ppm) for m in mzs]

    shared_axis = handle.mz_axis
    if shared_axis is not None:
        # one searchsorted per window, intensity-slice reads only
        bounds = [
            (
                int(np.searchsorted(shared_axis, lo, side="left")),
                int(np.searchsorted(shared_axis, hi, side="right")),
            )
            for lo, hi in windows
        ]
        for i, ref in enumerate(handle.pixel_index):
            for c, (lo_i, hi_i) in enumerate(bounds):
                if hi_i > lo_i:
                    vals = handle.read_intensities(i, lo_i, hi_i)
                    grids[c, ref.y, ref.x] = float(vals.sum(dtype=np.float64))
    else:
        for i in range(handle.spectrum_count):
            s = handle.read_spectrum(i)
            for c, (lo, hi) in enumerate(windows):
                lo_i = int(np.searchsorted(s.mzs, lo, side="left"))
                hi_i = int(np.searchsorted(s.mzs, hi, side="right"))
                if hi_i > lo_i:
                    grids[c, s.y, s.x] = float(
                        s.intensities[lo_i:hi_i].sum(dtype=np.float64)
                    )
    return [
        IonImage(pixels=grids[c], target_mz=mzs[c], ppm=ppm) for c in range(len(mzs))
    ]


def _quantile(values: np.ndarray, q: float) -> float:
    # linear interpolation between closest ranks; the one definition used everywhere
    return float(np.quantile(values, q, method="linear"))


def hotspot_clip(img: IonImage, q: float = 0.99) -> IonImage:
    """Cap values above the q-quantile of the strictly positive pixels."""
    if not 0 < q <= 1:
        raise ValueError("q must be in (0, 1]")
    positives = img.pixels[img.pixels > 0]
    if positives.size == 0:
        return img.with_pixels(img.pixels.copy())
    cap = _quantile(positives, q)
    return img.with_pixels(np.minimum(img.pixels, cap))


def normalize_p99(img: IonImage) -> IonImage:
    """Divide by the image's 99th percentile, then clamp to [0, 1].

    A zero percentile (e.g. an all-zero image) yields an all-zero output.
    """
    p99 = _quantile(img.pixels, 0.99)
    if p99 <= 0:
        return img.with_pixels(np.zeros_like(img.pixels))
    return img.with_pixels(np.clip(img.pixels / p99, 0.0, 1.0))


def resize_224(img: IonImage, dataset_id: str = "") -> PreprocessedImage:
    """Bilinear stretch-resize to 224x224 (half-pixel-centered sampling grid).

    Aspect ratio is not preserved.
    """
    src = np.ascontiguousarray(img.pixels, dtype=np.float64)
    if src.shape == (TARGET_SIZE, TARGET_SIZE):
        out = src.copy()
    else:
        out = cv2.resize(src, (TARGET_SIZE, TARGET_SIZE), interpolation=cv2.INTER_LINEAR)
    return PreprocessedImage(
        pixels=out, target_mz=img.target_mz, ppm=img.ppm, dataset_id=dataset_id
    )


def preprocess(img: IonImage, q: float = 0.99, dataset_id: str = "") -> PreprocessedImage:
    """hotspot_clip -> normalize_p99 -> resize_224, deterministically."""
    out = resize_224(normalize_p99(hotspot_clip(img, q=q)), dataset_id=dataset_id)
    # bilinear interpolation of [0,1] data stays in range up to rounding
    return PreprocessedImage(
        pixels=np.clip(out.pixels, 0.0, 1.0),
        target_mz=out.target_mz,
        ppm=out.ppm,
        dataset_id=out.dataset_id,
    )


# --- structure-preserving augmentations (pixel permutations) ---


def flip_h(pixels: np.ndarray) -> np.ndarray:
    """Mirror left-right."""
    return pixels[:, ::-1].copy()


def flip_v(pixels: np.ndarray) -> np.ndarray:
    """Mirror top-bottom."""
    return pixels[::-1, :].copy()


def rot90(pixels: np.ndarray, k: int = 1) -> np.ndarray:
    """Rotate by k*90 degrees clockwise (k taken mod 4).

    rot90([[1,2],[3,4]], 1) == [[3,1],[4,2]].
    """
    return np.rot90(pixels, k=-(k % 4)).copy()


def to_png_bytes(img: PreprocessedImage) -> bytes:
    """8-bit grayscale PNG; value*255 rounded half-up."""
    from io import BytesIO

    from PIL import Image

    arr = np.floor(np.clip(img.pixels, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    buf = BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()
