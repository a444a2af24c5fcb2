import json

import numpy as np
import pytest

from ionmorph.errors import AllThresholdsEmpty, DimensionMismatch
from ionmorph.evaluation import (
    EvalConfig,
    GroundTruthScores,
    f1_at,
    ground_truth,
    mscf1,
)
from ionmorph.io import SegmentationMask, load_mask, open_dataset
from ionmorph.ionimage import extract_ion_image
from ionmorph.picking import CandidateList, PeakList
from oracles import pearson_fsum


def gt_of(mapping):
    return GroundTruthScores(scores={float(k): float(v) for k, v in mapping.items()})


def peaks(*mzs):
    return PeakList(mzs=np.asarray(mzs, dtype=np.float64), n=len(mzs))


def test_config_validation():
    with pytest.raises(ValueError):
        EvalConfig(thresholds=())
    with pytest.raises(ValueError):
        EvalConfig(thresholds=(0.5, 0.4))
    with pytest.raises(ValueError):
        EvalConfig(thresholds=(0.0, 0.5))
    with pytest.raises(ValueError):
        EvalConfig(region_mode="bogus")


def test_f1_exact_selection():
    gt = gt_of({100: 0.9, 200: 0.8, 300: 0.1})
    p, r, f1, size = f1_at(peaks(100, 200), gt, 0.5, match_ppm=3.0)
    assert (p, r, f1, size) == (1.0, 1.0, 1.0, 2)


def test_f1_disjoint_selection():
    gt = gt_of({100: 0.9, 200: 0.8})
    p, r, f1, size = f1_at(peaks(300, 400), gt, 0.5, match_ppm=3.0)
    assert f1 == 0.0 and size == 2


def test_f1_hand_computed():
    # 3 of 5 positives plus 1 negative: precision 0.75, recall 0.6, f1 = 2/3
    gt = gt_of({100: 0.9, 200: 0.9, 300: 0.9, 400: 0.9, 500: 0.9, 900: 0.0})
    p, r, f1, size = f1_at(peaks(100, 200, 300, 900), gt, 0.5, match_ppm=3.0)
    assert p == pytest.approx(0.75)
    assert r == pytest.approx(0.6)
    assert f1 == pytest.approx(2 / 3)


def test_greedy_matching_is_one_to_one():
    gt = gt_of({100.0: 0.9})
    # two selected m/z both within tolerance of one positive -> only one TP
    p, r, f1, size = f1_at(peaks(100.0, 100.0001), gt, 0.5, match_ppm=5.0)
    assert p == pytest.approx(0.5)
    assert r == pytest.approx(1.0)


def test_positives_monotone_in_threshold():
    rng = np.random.default_rng(0)
    gt = gt_of({100 + i: rng.uniform(-1, 1) for i in range(30)})
    for t1, t2 in [(0.1, 0.5), (0.3, 0.9)]:
        assert set(gt.positives(t2)) <= set(gt.positives(t1))


def test_adding_true_positive_never_hurts():
    gt = gt_of({100: 0.9, 200: 0.9, 300: 0.9, 900: 0.0})
    base = f1_at(peaks(100, 900), gt, 0.5, 3.0)[2]
    better = f1_at(peaks(100, 200, 900), gt, 0.5, 3.0)[2]
    assert better >= base


def test_mscf1_perfect_and_empty():
    gt = gt_of({100: 0.95, 200: 0.95, 300: 0.0})
    config = EvalConfig(thresholds=(0.4, 0.5, 0.6, 0.7, 0.8))
    report = mscf1(peaks(100, 200), gt, config)
    assert report.mscf1 == 1.0
    report0 = mscf1(peaks(), gt, config)
    assert report0.mscf1 == 0.0


def test_mscf1_mean_consistency_and_skip():
    gt = gt_of({100: 0.55, 200: 0.45})
    config = EvalConfig(thresholds=(0.4, 0.5, 0.6, 0.7))
    report = mscf1(peaks(100), gt, config)
    assert report.skipped_thresholds == (0.6, 0.7)
    assert report.mscf1 == pytest.approx(
        sum(r.f1 for r in report.rows) / len(report.rows)
    )


def test_mscf1_all_thresholds_empty():
    gt = gt_of({100: -1.0})
    with pytest.raises(AllThresholdsEmpty):
        mscf1(peaks(100), gt, EvalConfig(thresholds=(0.5,)))


def test_report_serialization(tmp_path):
    gt = gt_of({100: 0.9, 200: 0.2})
    config = EvalConfig(thresholds=(0.4, 0.8), match_ppm=5.0)
    report = mscf1(peaks(100), gt, config)
    d = json.loads(report.to_json())
    assert d["config"]["match_ppm"] == 5.0
    assert d["mscf1"] == report.mscf1
    csv_path = tmp_path / "r.csv"
    report.write_csv(csv_path)
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "threshold,precision,recall,f1,gt_size"
    assert lines[-1].startswith("mscf1")


# --- ground truth on the synthetic fixture ---


def test_ground_truth_fixture(fixture_dir):
    out, meta = fixture_dir
    handle = open_dataset(out / "fixture.imzML")
    mask = load_mask(out / "mask.csv")
    mzs = 100.0 + 10.0 * np.arange(meta["n_channels"])
    cands = CandidateList(mzs=mzs, strategy="explicit")
    gt = ground_truth(handle, mask, cands, ppm=3.0)
    planted = set(meta["structured_mzs"])
    # brute-force verification of every GT value
    indicator = (mask.labels == 1).astype(float)
    for mz in mzs:
        img = extract_ion_image(handle, float(mz), 3.0)
        expected = pearson_fsum(img.pixels, indicator)
        assert gt.scores[float(mz)] == pytest.approx(expected, rel=1e-10)
    planted_scores = [gt.scores[mz] for mz in planted]
    noise_scores = [gt.scores[float(mz)] for mz in mzs if float(mz) not in planted]
    assert min(planted_scores) > max(noise_scores)
    assert min(planted_scores) > 0.8


def test_ground_truth_constant_image_floor(fixture_dir, tmp_path):
    out, meta = fixture_dir
    handle = open_dataset(out / "fixture.imzML")
    mask = load_mask(out / "mask.csv")
    # a candidate far outside the axis yields an all-zero (constant) ion image
    cands = CandidateList(mzs=np.array([5000.0]), strategy="explicit")
    gt = ground_truth(handle, mask, cands, ppm=3.0)
    assert gt.scores[5000.0] == -1.0


def test_ground_truth_dimension_mismatch(fixture_dir):
    out, _ = fixture_dir
    handle = open_dataset(out / "fixture.imzML")
    bad = SegmentationMask(labels=np.zeros((3, 3), dtype=int))
    with pytest.raises(DimensionMismatch):
        ground_truth(handle, bad, CandidateList(mzs=np.array([100.0]), strategy="x"), ppm=3.0)
