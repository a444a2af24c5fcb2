"""Manifest-driven dataset assembly for the structure classifier.

Manifest lines name (dataset_id, m/z, ppm, class, split); this module
resolves each one to a preprocessed 224x224 ion image and groups the
results by split. Splits live at the dataset level, never per image, and
that constraint is asserted before anything is trained.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import Dataset, WeightedRandomSampler

from ionmorph.classes import CLASS_INDEX, STRUCTURAL_CLASSES
from ionmorph.io import (
    ManifestEntry,
    Spectrum,
    append_manifest_entry,
    open_dataset,
    read_manifest,
    validate_split_constancy,
    write_dataset,
)
from ionmorph.ionimage import extract_ion_image, preprocess

from .errors import UnresolvableEntryWarning

SPLITS = ("Train", "Val", "Test")


@dataclass(frozen=True)
class SplitPlan:
    """dataset_id -> split assignment, one split per dataset."""

    assignment: dict[str, str]

    @classmethod
    def from_entries(cls, entries: list[ManifestEntry]) -> "SplitPlan":
        validate_split_constancy(entries)
        return cls(assignment={e.dataset_id: e.split for e in entries})

    def assert_no_leakage(self) -> None:
        by_split: dict[str, set[str]] = {s: set() for s in SPLITS}
        for dataset_id, split in self.assignment.items():
            by_split[split].add(dataset_id)
        for a in SPLITS:
            for b in SPLITS:
                if a < b:
                    shared = by_split[a] & by_split[b]
                    assert not shared, f"datasets {sorted(shared)} leak across {a}/{b}"


@dataclass
class LabeledImages:
    """One split's worth of preprocessed inputs."""

    images: np.ndarray  # (n, 224, 224) float32
    labels: np.ndarray  # (n,) int64, indices into STRUCTURAL_CLASSES
    dataset_ids: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.labels.size)

    def class_histogram(self) -> list[int]:
        return [int((self.labels == i).sum()) for i in range(len(STRUCTURAL_CLASSES))]


def build_training_set(
    manifest_paths: list[str | Path],
    dataset_dir: str | Path,
) -> dict[str, LabeledImages]:
    """Resolve manifest entries to preprocessed images, grouped by split.

    Datasets are looked up as <dataset_dir>/<dataset_id>.imzML. Entries
    whose dataset is missing are listed in a warning and skipped.
    """
    dataset_dir = Path(dataset_dir)
    entries: list[ManifestEntry] = []
    for path in manifest_paths:
        entries.extend(read_manifest(path))
    SplitPlan.from_entries(entries).assert_no_leakage()

    handles = {}
    unresolved = []
    grouped: dict[str, tuple[list, list, list]] = {s: ([], [], []) for s in SPLITS}
    for e in entries:
        if e.dataset_id not in handles:
            path = dataset_dir / f"{e.dataset_id}.imzML"
            handles[e.dataset_id] = open_dataset(path) if path.exists() else None
        handle = handles[e.dataset_id]
        if handle is None:
            unresolved.append(e)
            continue
        img = preprocess(extract_ion_image(handle, e.mz, e.ppm), dataset_id=e.dataset_id)
        images, labels, ids = grouped[e.split]
        images.append(img.pixels.astype(np.float32))
        labels.append(CLASS_INDEX[e.label])
        ids.append(e.dataset_id)
    if unresolved:
        listed = ", ".join(f"{e.dataset_id}@{e.mz:g}" for e in unresolved)
        warnings.warn(
            f"skipped {len(unresolved)} unresolvable manifest entries: {listed}",
            UnresolvableEntryWarning,
        )
    out = {}
    for split, (images, labels, ids) in grouped.items():
        out[split] = LabeledImages(
            images=np.stack(images) if images else np.zeros((0, 224, 224), np.float32),
            labels=np.asarray(labels, dtype=np.int64),
            dataset_ids=ids,
        )
    return out


class IonImageDataset(Dataset):
    """Torch view of a split, with optional flip / k*90 degree rotation.

    Augmentation draws come from a private generator seeded once, so a
    fixed seed reproduces the exact same sequence run to run.
    """

    def __init__(self, data: LabeledImages, augment: bool = False, seed: int = 0):
        self.data = data
        self.augment = augment
        self._gen = torch.Generator().manual_seed(seed)

    def __len__(self) -> int:
        return len(self.data)

    def __getitem__(self, idx: int):
        img = self.data.images[idx]
        if self.augment:
            draws = torch.randint(0, 2, (2,), generator=self._gen)
            k = int(torch.randint(0, 4, (1,), generator=self._gen))
            if int(draws[0]):
                img = img[:, ::-1]
            if int(draws[1]):
                img = img[::-1, :]
            img = np.rot90(img, k)
        x = torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32)).unsqueeze(0)
        return x, int(self.data.labels[idx])


def make_class_weighted_sampler(
    labels: np.ndarray, num_samples: int, seed: int = 0
) -> WeightedRandomSampler:
    """Sampler whose expected per-class frequency is uniform."""
    counts = np.bincount(labels, minlength=len(STRUCTURAL_CLASSES)).astype(np.float64)
    weights = np.where(counts[labels] > 0, 1.0 / counts[labels], 0.0)
    gen = torch.Generator().manual_seed(seed)
    return WeightedRandomSampler(
        weights=torch.as_tensor(weights, dtype=torch.double),
        num_samples=num_samples,
        replacement=True,
        generator=gen,
    )


# --- synthetic corpus with trivially separable per-class patterns ---


def _class_image(label: str, rng: np.random.Generator, size: int = 16) -> np.ndarray:
    img = np.abs(rng.normal(0.0, 0.05, (size, size)))
    if label == "Structured":
        img[3:13, 3:13] = 1.0 + rng.normal(0.0, 0.05, (10, 10))
    elif label == "WeaklyStructured":
        img = np.abs(rng.normal(0.0, 0.25, (size, size)))
        img[3:13, 3:13] += 0.5 + rng.normal(0.0, 0.2, (10, 10))
    elif label == "Localized":
        y, x = rng.integers(2, size - 5, 2)
        img[y : y + 3, x : x + 3] = 1.0 + rng.normal(0.0, 0.05, (3, 3))
    elif label == "Fragmented":
        for _ in range(4):
            y, x = rng.integers(1, size - 3, 2)
            img[y : y + 2, x : x + 2] = 1.0 + rng.normal(0.0, 0.05, (2, 2))
    elif label == "Unstructured":
        img = rng.uniform(0.0, 1.0, (size, size))
    elif label == "Negative":
        img = 1.0 + rng.normal(0.0, 0.05, (size, size))
        img[3:13, 3:13] = np.abs(rng.normal(0.0, 0.05, (10, 10)))
    else:
        raise ValueError(f"unknown class {label!r}")
    return np.clip(img, 0.0, None)


def generate_training_corpus(
    out_dir: str | Path,
    seed: int = 7,
    per_class: dict[str, int] | None = None,
) -> Path:
    """Write synthetic datasets plus a label manifest; returns the manifest path.

    One continuous-mode dataset per split; each channel holds one labeled
    image. Defaults give 60 Train, 12 Val and 6 Test images.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_class = per_class or {"Train": 10, "Val": 2, "Test": 1}
    rng = np.random.default_rng(seed)
    manifest = out_dir / "labels.ndjson"
    if manifest.exists():
        manifest.unlink()
    size = 16
    for split, n_per_class in per_class.items():
        dataset_id = f"synth-{split.lower()}"
        channel_labels = [c for c in STRUCTURAL_CLASSES for _ in range(n_per_class)]
        mzs = np.array([100.0 + 10.0 * k for k in range(len(channel_labels))])
        cube = np.stack(
            [_class_image(label, rng, size) for label in channel_labels], axis=0
        )
        spectra = [
            Spectrum(
                x=p % size,
                y=p // size,
                mzs=mzs,
                intensities=cube[:, p // size, p % size].astype(np.float32),
            )
            for p in range(size * size)
        ]
        write_dataset(spectra, mode="continuous", path=out_dir / f"{dataset_id}.imzML")
        for mz, label in zip(mzs, channel_labels):
            append_manifest_entry(
                manifest,
                ManifestEntry(
                    dataset_id=dataset_id,
                    mz=float(mz),
                    ppm=3.0,
                    label=label,
                    annotator="synthetic",
                    split=split,
                ),
            )
    return manifest
