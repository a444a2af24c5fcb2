"""Candidate enumeration, structure ranking and peak-list handling."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import numpy as np
from scipy.signal import find_peaks

from .errors import EmptyCandidates, ScorerError, StrategyModeMismatch
from .io import CONTINUOUS, DatasetHandle
from .ionimage import extract_ion_images, preprocess
from .scoring import (
    ClassProbabilities,
    ExternalScorer,
    ScorerSpec,
    aggregate_score,
    morans_i,
    pca_reference_scores,
)


@dataclass(frozen=True)
class Exhaustive:
    stride: int = 1

    def describe(self) -> str:
        return f"exhaustive(stride={self.stride})"


@dataclass(frozen=True)
class MeanSpectrumMaxima:
    min_prominence_fraction: float = 0.01

    def describe(self) -> str:
        return f"maxima(prominence={self.min_prominence_fraction:g})"


@dataclass(frozen=True)
class Explicit:
    path: str

    def describe(self) -> str:
        return f"file({self.path})"


@dataclass(frozen=True)
class CandidateList:
    mzs: np.ndarray  # strictly ascending, nonempty
    strategy: str

    def __post_init__(self):
        arr = np.asarray(self.mzs, dtype=np.float64)
        object.__setattr__(self, "mzs", arr)
        if arr.size == 0:
            raise EmptyCandidates("candidate list is empty")
        if arr.size > 1 and not np.all(np.diff(arr) > 0):
            raise ValueError("candidate m/z values must be strictly ascending")

    def __len__(self) -> int:
        return int(self.mzs.size)


def mean_spectrum(handle: DatasetHandle) -> np.ndarray:
    """Pixel-mean intensity per channel of a continuous dataset."""
    if handle.mode != CONTINUOUS:
        raise StrategyModeMismatch("mean spectrum requires a continuous dataset")
    assert handle.mz_axis is not None
    total = np.zeros(len(handle.mz_axis), dtype=np.float64)
    for i in range(handle.spectrum_count):
        total += handle.read_intensities(i).astype(np.float64)
    return total / handle.spectrum_count


def enumerate_candidates(handle: DatasetHandle, strategy) -> CandidateList:
    if isinstance(strategy, Exhaustive):
        if handle.mode != CONTINUOUS:
            raise StrategyModeMismatch("exhaustive enumeration requires a continuous dataset")
        assert handle.mz_axis is not None
        if strategy.stride < 1:
            raise ValueError("stride must be >= 1")
        mzs = np.asarray(handle.mz_axis[:: strategy.stride], dtype=np.float64)
        return CandidateList(mzs=mzs, strategy=strategy.describe())
    if isinstance(strategy, MeanSpectrumMaxima):
        mean = mean_spectrum(handle)
        span = float(mean.max() - mean.min())
        if span <= 0:
            raise EmptyCandidates("mean spectrum is flat")
        idx, _ = find_peaks(mean, prominence=strategy.min_prominence_fraction * span)
        if idx.size == 0:
            raise EmptyCandidates("no mean-spectrum maxima above the prominence cutoff")
        assert handle.mz_axis is not None
        return CandidateList(
            mzs=np.asarray(handle.mz_axis)[idx].astype(np.float64),
            strategy=strategy.describe(),
        )
    if isinstance(strategy, Explicit):
        mzs = read_candidate_file(strategy.path)
        return CandidateList(mzs=mzs, strategy=strategy.describe())
    raise TypeError(f"unknown strategy {strategy!r}")


def read_candidate_file(path) -> np.ndarray:
    """One m/z per line; '#' starts a comment. Values are sorted and deduplicated."""
    values = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if line:
                values.append(float(line))
    if not values:
        raise EmptyCandidates(f"no m/z values in {path}")
    return np.unique(np.asarray(values, dtype=np.float64))


@dataclass(frozen=True)
class RankedEntry:
    mz: float
    score: float
    rank: int  # 1-based


@dataclass(frozen=True)
class RankedPeaks:
    entries: tuple[RankedEntry, ...]  # scores non-increasing, ties broken by ascending m/z
    scorer: str
    target_set: frozenset[str]

    def __len__(self) -> int:
        return len(self.entries)

    def canonical_bytes(self) -> bytes:
        """A stable byte serialization used for determinism checks."""
        lines = [f"{self.scorer}|{','.join(sorted(self.target_set))}"]
        for e in self.entries:
            lines.append(f"{e.rank}\t{e.mz!r}\t{e.score!r}")
        return "\n".join(lines).encode("utf-8")


@dataclass(frozen=True)
class PeakList:
    mzs: np.ndarray  # ascending
    n: int
    source: str = ""

    def __post_init__(self):
        arr = np.asarray(self.mzs, dtype=np.float64)
        object.__setattr__(self, "mzs", np.sort(arr))

    def __len__(self) -> int:
        return int(self.mzs.size)


def _score_images(images, spec: ScorerSpec, workers: int) -> list[float]:
    if spec.kind == "pca":
        return pca_reference_scores([img.pixels for img in images])
    if spec.kind == "moransi":
        scores = []
        for img in images:
            try:
                scores.append(float(morans_i(img.pixels)))
            except Exception as e:
                raise ScorerError(
                    f"Moran's I failed at m/z {img.target_mz}: {e}", mz=img.target_mz
                ) from e
        return scores
    if spec.kind == "constant":
        probs = ClassProbabilities(p=np.asarray(spec.probs, dtype=np.float64))
        value = aggregate_score(probs, spec.targets).value
        return [value] * len(images)
    if spec.kind == "external":
        def run_chunk(chunk):
            with ExternalScorer(spec.command, timeout=spec.timeout) as scorer:
                out = []
                for img in chunk:
                    try:
                        probs = scorer.score(img)
                    except ScorerError as e:
                        e.mz = img.target_mz
                        raise
                    out.append(aggregate_score(probs, spec.targets).value)
                return out
        if workers <= 1 or len(images) <= 1:
            return run_chunk(images)
        chunks = [images[i::workers] for i in range(workers)]
        chunks = [c for c in chunks if c]
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            results = list(pool.map(run_chunk, chunks))
        # reassemble in original order (chunk i holds items i, i+workers, ...)
        scores: list[float] = [0.0] * len(images)
        for ci, chunk_scores in enumerate(results):
            for j, s in enumerate(chunk_scores):
                scores[ci + j * workers] = s
        return scores
    raise ValueError(f"unknown scorer kind {spec.kind!r}")


def rank_peaks(
    handle: DatasetHandle,
    candidates: CandidateList,
    scorer: ScorerSpec,
    ppm: float,
    workers: int = 1,
) -> RankedPeaks:
    """Extract, preprocess and score every candidate, then sort by score.

    Deterministic: stable sort on (-score, m/z) regardless of worker count.
    """
    mzs = list(candidates.mzs)
    if workers <= 1:
        raw = extract_ion_images(handle, mzs, ppm)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda m: extract_ion_images(handle, [m], ppm), mzs))
        raw = [c[0] for c in chunks]
    images = [preprocess(img, dataset_id=handle.dataset_id) for img in raw]
    scores = _score_images(images, scorer, workers)
    order = sorted(range(len(mzs)), key=lambda i: (-scores[i], mzs[i]))
    entries = tuple(
        RankedEntry(mz=float(mzs[i]), score=float(scores[i]), rank=r + 1)
        for r, i in enumerate(order)
    )
    return RankedPeaks(entries=entries, scorer=scorer.describe(), target_set=scorer.targets)


def select_top_n(ranked: RankedPeaks, n: int) -> PeakList:
    """The n highest-ranked m/z values, returned in ascending m/z order."""
    if n < 0:
        raise ValueError("n must be >= 0")
    chosen = [e.mz for e in ranked.entries[: min(n, len(ranked.entries))]]
    return PeakList(mzs=np.asarray(chosen, dtype=np.float64), n=n, source=ranked.scorer)


def union_peaklists(lists: list[PeakList], merge_ppm: float) -> PeakList:
    """Single-linkage merge of all peak lists within merge_ppm.

    Each cluster is represented by its arithmetic-mean m/z.
    """
    if merge_ppm < 0:
        raise ValueError("merge_ppm must be >= 0")
    all_mzs = np.sort(np.concatenate([np.asarray(pl.mzs) for pl in lists if len(pl)]))
    if all_mzs.size == 0:
        return PeakList(mzs=np.empty(0), n=0, source="union")
    merged = []
    cluster = [float(all_mzs[0])]
    for mz in all_mzs[1:]:
        mz = float(mz)
        if mz - cluster[-1] <= cluster[-1] * merge_ppm * 1e-6:
            cluster.append(mz)
        else:
            merged.append(sum(cluster) / len(cluster))
            cluster = [mz]
    merged.append(sum(cluster) / len(cluster))
    out = np.unique(np.asarray(merged, dtype=np.float64))
    return PeakList(mzs=out, n=len(out), source="union")


# --- peak list CSV I/O (header: mz,score,rank) ---


def write_ranked_csv(ranked: RankedPeaks, path, n: int | None = None) -> None:
    entries = ranked.entries if n is None else ranked.entries[:n]
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["mz", "score", "rank"])
        for e in entries:
            w.writerow([f"{e.mz!r}", f"{e.score!r}", e.rank])


def read_peaklist_csv(path) -> PeakList:
    mzs = []
    with open(path, "r", newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            mzs.append(float(row["mz"]))
    return PeakList(mzs=np.asarray(mzs, dtype=np.float64), n=len(mzs), source=str(path))
