import numpy as np
import pytest

from ionmorph.errors import EmptyCandidates, StrategyModeMismatch
from ionmorph.io import Spectrum, open_dataset, write_dataset
from ionmorph.picking import (
    CandidateList,
    Exhaustive,
    Explicit,
    MeanSpectrumMaxima,
    PeakList,
    enumerate_candidates,
    mean_spectrum,
    rank_peaks,
    read_peaklist_csv,
    select_top_n,
    union_peaklists,
    write_ranked_csv,
)
from ionmorph.scoring import ScorerSpec, parse_scorer_spec
from oracles import local_maxima_with_prominence


def _continuous(tmp_path, channel_values, mz_axis=None, width=None, height=1):
    """Dataset where channel_values is (n_channels, n_pixels)."""
    channel_values = np.asarray(channel_values)
    n_channels, n_pixels = channel_values.shape
    if mz_axis is None:
        mz_axis = 100.0 + 10.0 * np.arange(n_channels)
    if width is None:
        width = n_pixels
    spectra = []
    for i in range(n_pixels):
        spectra.append(
            Spectrum(
                x=i % width,
                y=i // width,
                mzs=np.asarray(mz_axis, dtype=np.float64),
                intensities=channel_values[:, i].astype(np.float32),
            )
        )
    path = tmp_path / "d.imzML"
    write_dataset(spectra, mode="continuous", path=path)
    return open_dataset(path)


def test_exhaustive_all_channels(tmp_path):
    rng = np.random.default_rng(0)
    handle = _continuous(tmp_path, rng.random((100, 4)), mz_axis=100 + np.arange(100.0))
    cands = enumerate_candidates(handle, Exhaustive(stride=1))
    assert len(cands) == 100
    cands3 = enumerate_candidates(handle, Exhaustive(stride=3))
    np.testing.assert_array_equal(cands3.mzs, cands.mzs[::3])


def test_exhaustive_requires_continuous(tmp_path):
    s = Spectrum(x=0, y=0, mzs=np.array([1.0, 2.0]), intensities=np.ones(2, np.float32))
    path = tmp_path / "p.imzML"
    write_dataset([s], mode="processed", path=path)
    with pytest.raises(StrategyModeMismatch):
        enumerate_candidates(open_dataset(path), Exhaustive())


def test_mean_spectrum_maxima_two_bumps(tmp_path):
    axis = np.linspace(100, 200, 101)
    bump = lambda c, w: np.exp(-((axis - c) ** 2) / (2 * w**2))
    mean = 0.05 + bump(130, 3) + 0.7 * bump(170, 3)
    handle = _continuous(tmp_path, np.tile(mean[:, None], (1, 4)), mz_axis=axis)
    cands = enumerate_candidates(handle, MeanSpectrumMaxima(0.1))
    assert len(cands) == 2
    np.testing.assert_allclose(cands.mzs, [130.0, 170.0])
    # oracle agreement
    spectrum = mean_spectrum(handle)
    idx = local_maxima_with_prominence(spectrum, 0.1 * (spectrum.max() - spectrum.min()))
    np.testing.assert_allclose(np.asarray(axis)[idx], cands.mzs)


def test_flat_mean_spectrum_is_empty(tmp_path):
    handle = _continuous(tmp_path, np.ones((10, 4)))
    with pytest.raises(EmptyCandidates):
        enumerate_candidates(handle, MeanSpectrumMaxima(0.1))


def test_explicit_file(tmp_path):
    p = tmp_path / "cands.txt"
    p.write_text("# header comment\n300.5\n100.25\n200.125  # inline\n")
    handle = _continuous(tmp_path, np.random.default_rng(0).random((3, 2)))
    cands = enumerate_candidates(handle, Explicit(path=str(p)))
    np.testing.assert_array_equal(cands.mzs, [100.25, 200.125, 300.5])


def test_candidate_list_invariants():
    with pytest.raises(EmptyCandidates):
        CandidateList(mzs=np.empty(0), strategy="x")
    with pytest.raises(ValueError):
        CandidateList(mzs=np.array([2.0, 1.0]), strategy="x")


# --- ranking ---

CONST = ScorerSpec(kind="constant", probs=(1.0, 0.0, 0.0, 0.0, 0.0, 0.0))


def test_constant_scorer_tie_break_ascending_mz(tmp_path):
    rng = np.random.default_rng(1)
    handle = _continuous(tmp_path, rng.random((5, 6)), width=3, height=2)
    cands = enumerate_candidates(handle, Exhaustive())
    ranked = rank_peaks(handle, cands, CONST, ppm=3.0)
    assert [e.mz for e in ranked.entries] == sorted(e.mz for e in ranked.entries)
    assert [e.rank for e in ranked.entries] == list(range(1, 6))


def test_pca_ranking_recovers_planted(fixture_dir):
    out, meta = fixture_dir
    handle = open_dataset(out / "fixture.imzML")
    cands = enumerate_candidates(handle, Exhaustive())
    ranked = rank_peaks(handle, cands, ScorerSpec(kind="pca"), ppm=3.0)
    top5 = sorted(e.mz for e in ranked.entries[:5])
    assert top5 == pytest.approx(meta["structured_mzs"])


def test_rank_determinism_across_workers(fixture_dir):
    out, _ = fixture_dir
    handle = open_dataset(out / "fixture.imzML")
    cands = enumerate_candidates(handle, Exhaustive())
    spec = ScorerSpec(kind="pca")
    r1 = rank_peaks(handle, cands, spec, ppm=3.0, workers=1)
    r8 = rank_peaks(handle, cands, spec, ppm=3.0, workers=8)
    assert r1.canonical_bytes() == r8.canonical_bytes()
    assert r1.canonical_bytes() == rank_peaks(handle, cands, spec, ppm=3.0).canonical_bytes()


def test_ranking_invariant_under_monotone_transform(fixture_dir):
    out, _ = fixture_dir
    handle = open_dataset(out / "fixture.imzML")
    cands = enumerate_candidates(handle, Exhaustive())
    ranked = rank_peaks(handle, cands, ScorerSpec(kind="pca"), ppm=3.0)
    scores = np.array([e.score for e in ranked.entries])
    transformed = np.exp(3 * scores) + 1  # strictly increasing
    order = sorted(
        range(len(scores)),
        key=lambda i: (-transformed[i], ranked.entries[i].mz),
    )
    assert order == list(range(len(scores)))


def test_moransi_scorer_ranks_structure_first(fixture_dir):
    out, meta = fixture_dir
    handle = open_dataset(out / "fixture.imzML")
    cands = enumerate_candidates(handle, Exhaustive())
    ranked = rank_peaks(handle, cands, ScorerSpec(kind="moransi"), ppm=3.0)
    top5 = sorted(e.mz for e in ranked.entries[:5])
    assert top5 == pytest.approx(meta["structured_mzs"])


# --- selection and merging ---


def _ranked(tmp_path):
    rng = np.random.default_rng(2)
    handle = _continuous(tmp_path, rng.random((5, 8)), width=4, height=2)
    cands = enumerate_candidates(handle, Exhaustive())
    return rank_peaks(handle, cands, ScorerSpec(kind="pca"), ppm=3.0)


def test_select_top_n_edges(tmp_path):
    ranked = _ranked(tmp_path)
    assert len(select_top_n(ranked, 0)) == 0
    assert len(select_top_n(ranked, 99)) == len(ranked)
    top3 = select_top_n(ranked, 3)
    expected = sorted(e.mz for e in sorted(ranked.entries, key=lambda e: e.rank)[:3])
    np.testing.assert_allclose(top3.mzs, expected)


def test_select_top_n_nesting(tmp_path):
    ranked = _ranked(tmp_path)
    for n in range(len(ranked)):
        a = set(select_top_n(ranked, n).mzs.tolist())
        b = set(select_top_n(ranked, n + 1).mzs.tolist())
        assert a <= b


def test_union_disjoint():
    a = PeakList(mzs=np.array([100.0, 200.0]), n=2)
    b = PeakList(mzs=np.array([500.0, 600.0]), n=2)
    out = union_peaklists([a, b], merge_ppm=10.0)
    np.testing.assert_array_equal(out.mzs, [100.0, 200.0, 500.0, 600.0])


def test_union_merges_within_ppm():
    a = PeakList(mzs=np.array([100.000]), n=1)
    b = PeakList(mzs=np.array([100.0005]), n=1)
    out = union_peaklists([a, b], merge_ppm=10.0)  # +-0.001 Da at 100
    np.testing.assert_allclose(out.mzs, [100.00025])


def test_union_zero_ppm_dedups_exact():
    a = PeakList(mzs=np.array([100.0, 100.0005, 200.0]), n=3)
    b = PeakList(mzs=np.array([100.0]), n=1)
    out = union_peaklists([a, b], merge_ppm=0.0)
    np.testing.assert_array_equal(out.mzs, [100.0, 100.0005, 200.0])


def test_union_idempotent():
    rng = np.random.default_rng(3)
    a = PeakList(mzs=np.sort(rng.uniform(100, 1000, 30)), n=30)
    once = union_peaklists([a], merge_ppm=50.0)
    twice = union_peaklists([once, a], merge_ppm=50.0)
    thrice = union_peaklists([twice], merge_ppm=50.0)
    np.testing.assert_allclose(union_peaklists([once], 50.0).mzs, once.mzs)
    # merging the union with its own inputs adds nothing new
    assert len(twice) >= len(once)


def test_csv_roundtrip(tmp_path):
    ranked = _ranked(tmp_path)
    p = tmp_path / "peaks.csv"
    write_ranked_csv(ranked, p, n=3)
    back = read_peaklist_csv(p)
    assert len(back) == 3
    expected = sorted(e.mz for e in ranked.entries[:3])
    np.testing.assert_array_equal(back.mzs, expected)
