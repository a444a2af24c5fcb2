"""Synthetic dataset generation for tests, demos and the acceptance suite."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .io import SegmentationMask, Spectrum, write_dataset, write_mask_csv
from .scoring import pearson

DEFAULT_SEED = 20240


def template_mask(width: int = 16, height: int = 16) -> np.ndarray:
    """A single-region template: a filled off-center rectangle."""
    labels = np.zeros((height, width), dtype=np.int64)
    labels[height // 4 : height - height // 4, width // 4 : width - width // 8] = 1
    return labels


def generate_fixture(
    out_dir: str | Path,
    seed: int = DEFAULT_SEED,
    width: int = 16,
    height: int = 16,
    n_channels: int = 20,
    n_structured: int = 5,
    noise_sigma: float = 0.1,
) -> dict:
    """Write a synthetic continuous dataset with planted structured channels.

    n_structured channels carry the mask template plus Gaussian noise
    (sigma=noise_sigma, clipped at 0); the rest are pure noise. The planted
    channels are verified by brute-force PCC against the template before
    anything is written.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    labels = template_mask(width, height)
    template = labels.astype(np.float64)

    mz_axis = 100.0 + 10.0 * np.arange(n_channels)
    structured_idx = sorted(rng.choice(n_channels, size=n_structured, replace=False).tolist())

    channels = np.empty((n_channels, height, width), dtype=np.float64)
    for c in range(n_channels):
        noise = rng.normal(0.0, noise_sigma, size=(height, width))
        if c in structured_idx:
            channels[c] = np.clip(template + noise, 0.0, None)
        else:
            channels[c] = np.abs(noise)

    # sanity-check the plant with a direct PCC before writing anything
    for c in range(n_channels):
        pcc = pearson(channels[c], template)
        if c in structured_idx:
            assert pcc > 0.8, f"planted channel {c} correlates only {pcc:.3f}"
        else:
            assert abs(pcc) < 0.35, f"noise channel {c} correlates {pcc:.3f}"

    spectra = []
    for y in range(height):
        for x in range(width):
            spectra.append(
                Spectrum(
                    x=x,
                    y=y,
                    mzs=mz_axis,
                    intensities=channels[:, y, x].astype(np.float32),
                )
            )
    dataset_path = out_dir / "fixture.imzML"
    write_dataset(spectra, mode="continuous", path=dataset_path)

    mask_path = out_dir / "mask.csv"
    write_mask_csv(SegmentationMask(labels=labels), mask_path)

    planted_mzs = [float(mz_axis[c]) for c in structured_idx]
    truth_path = out_dir / "truth_mzs.txt"
    truth_path.write_text("".join(f"{mz}\n" for mz in planted_mzs), encoding="utf-8")

    candidates_path = out_dir / "candidates.txt"
    candidates_path.write_text(
        "# all channel centers\n" + "".join(f"{float(m)}\n" for m in mz_axis),
        encoding="utf-8",
    )

    meta = {
        "seed": seed,
        "width": width,
        "height": height,
        "n_channels": n_channels,
        "noise_sigma": noise_sigma,
        "structured_channels": structured_idx,
        "structured_mzs": planted_mzs,
        "dataset": dataset_path.name,
        "mask": mask_path.name,
        "candidates": candidates_path.name,
    }
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    return meta
