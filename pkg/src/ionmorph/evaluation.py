"""Mean spatial correlation F1 (mSCF1) evaluation against a segmentation mask."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import AllThresholdsEmpty, ConstantInput, DimensionMismatch
from .io import DatasetHandle, SegmentationMask
from .ionimage import extract_ion_images
from .picking import CandidateList, PeakList
from .scoring import pearson

PER_REGION_MAX = "per_region_max"
WHOLE_FOREGROUND = "whole_foreground"

DEFAULT_THRESHOLDS = (0.4, 0.5, 0.6, 0.7, 0.8)


@dataclass(frozen=True)
class EvalConfig:
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    match_ppm: float = 3.0
    region_mode: str = PER_REGION_MAX

    def __post_init__(self):
        t = tuple(float(v) for v in self.thresholds)
        object.__setattr__(self, "thresholds", t)
        if not t:
            raise ValueError("thresholds must be nonempty")
        if any(not 0 < v < 1 for v in t):
            raise ValueError("thresholds must lie in (0, 1)")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("thresholds must be strictly ascending")
        if self.region_mode not in (PER_REGION_MAX, WHOLE_FOREGROUND):
            raise ValueError(f"unknown region mode {self.region_mode!r}")

    def to_dict(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "match_ppm": self.match_ppm,
            "region_mode": self.region_mode,
        }


@dataclass(frozen=True)
class GroundTruthScores:
    scores: dict[float, float]  # candidate m/z -> max PCC against the mask

    def positives(self, t: float) -> list[float]:
        return sorted(mz for mz, v in self.scores.items() if v >= t)


def ground_truth(
    handle: DatasetHandle,
    mask: SegmentationMask,
    candidates: CandidateList,
    ppm: float,
    region_mode: str = PER_REGION_MAX,
) -> GroundTruthScores:
    """Correlate every candidate's ion image with the mask regions.

    PCC is computed over all grid pixels, background zeros included.
    Constant ion images score -1 and can never become ground-truth positives.
    """
    mask.check_dims(handle)
    if region_mode == WHOLE_FOREGROUND:
        indicators = [(mask.labels > 0).astype(np.float64)]
    else:
        indicators = [
            (mask.labels == k).astype(np.float64) for k in range(1, mask.num_regions + 1)
        ]
    indicators = [ind for ind in indicators if 0 < ind.sum() < ind.size]
    images = extract_ion_images(handle, list(candidates.mzs), ppm)
    scores: dict[float, float] = {}
    for img in images:
        best = -1.0
        for ind in indicators:
            try:
                best = max(best, pearson(img.pixels, ind))
            except ConstantInput:
                pass  # constant ion image keeps the -1 floor
        scores[float(img.target_mz)] = best
    return GroundTruthScores(scores=scores)


def _greedy_match(selected: np.ndarray, positives: list[float], match_ppm: float) -> int:
    """One-to-one nearest-first matching of selected m/z to positives within match_ppm."""
    pairs = []
    for si, s in enumerate(selected):
        for gi, g in enumerate(positives):
            if abs(s - g) <= g * match_ppm * 1e-6:
                pairs.append((abs(s - g), si, gi))
    pairs.sort()
    used_s: set[int] = set()
    used_g: set[int] = set()
    tp = 0
    for _, si, gi in pairs:
        if si in used_s or gi in used_g:
            continue
        used_s.add(si)
        used_g.add(gi)
        tp += 1
    return tp


def f1_at(
    selected: PeakList, gt: GroundTruthScores, t: float, match_ppm: float
) -> tuple[float, float, float, int]:
    """(precision, recall, f1, gt_size) at one correlation threshold."""
    positives = gt.positives(t)
    gt_size = len(positives)
    n_sel = len(selected)
    tp = _greedy_match(np.asarray(selected.mzs), positives, match_ppm) if gt_size else 0
    precision = tp / n_sel if n_sel else 0.0
    recall = tp / gt_size if gt_size else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1, gt_size


@dataclass(frozen=True)
class ThresholdRow:
    threshold: float
    precision: float
    recall: float
    f1: float
    gt_size: int


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[ThresholdRow, ...]
    skipped_thresholds: tuple[float, ...]
    mscf1: float
    config: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "per_threshold": [
                {
                    "threshold": r.threshold,
                    "precision": r.precision,
                    "recall": r.recall,
                    "f1": r.f1,
                    "gt_size": r.gt_size,
                }
                for r in self.rows
            ],
            "skipped_thresholds": list(self.skipped_thresholds),
            "mscf1": self.mscf1,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["threshold", "precision", "recall", "f1", "gt_size"])
            for r in self.rows:
                w.writerow([r.threshold, r.precision, r.recall, r.f1, r.gt_size])
            w.writerow(["mscf1", "", "", self.mscf1, ""])


def mscf1(selected: PeakList, gt: GroundTruthScores, config: EvalConfig) -> EvalReport:
    """Mean F1 over the configured thresholds; empty-GT thresholds are skipped."""
    rows = []
    skipped = []
    for t in config.thresholds:
        precision, recall, f1, gt_size = f1_at(selected, gt, t, config.match_ppm)
        if gt_size == 0:
            skipped.append(t)
            continue
        rows.append(
            ThresholdRow(threshold=t, precision=precision, recall=recall, f1=f1, gt_size=gt_size)
        )
    if not rows:
        raise AllThresholdsEmpty("no threshold produced a nonempty ground truth")
    mean_f1 = sum(r.f1 for r in rows) / len(rows)
    return EvalReport(
        rows=tuple(rows),
        skipped_thresholds=tuple(skipped),
        mscf1=mean_f1,
        config=config,
    )
