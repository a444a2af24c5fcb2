import numpy as np
import pytest

from ionmorph.errors import DimensionMismatch, EvenPatchSize, HeaderMismatch
from ionmorph.io import SegmentationMask, Spectrum, load_mask, open_dataset, write_dataset
from ionmorph.ionimage import extract_ion_image
from ionmorph.patches import PatchCube, export_patches, extract_patches, read_patches
from ionmorph.picking import PeakList


def _grid_dataset(tmp_path, width=2, height=2, values=None):
    """2-channel dataset; values[c][y][x] if given, else constant."""
    mz_axis = np.array([100.0, 200.0])
    spectra = []
    for y in range(height):
        for x in range(width):
            if values is None:
                intens = np.array([1.0, 2.0], dtype=np.float32)
            else:
                intens = np.array([values[c][y][x] for c in range(2)], dtype=np.float32)
            spectra.append(Spectrum(x=x, y=y, mzs=mz_axis, intensities=intens))
    path = tmp_path / "g.imzML"
    write_dataset(spectra, mode="continuous", path=path)
    return open_dataset(path)


PEAKS = PeakList(mzs=np.array([100.0, 200.0]), n=2)


def full_mask(width, height, label=1):
    return SegmentationMask(labels=np.full((height, width), label, dtype=int))


def test_p1_cube_equals_pixel_channels(tmp_path):
    values = [[[1.0, 2.0], [3.0, 4.0]], [[5.0, 6.0], [7.0, 8.0]]]
    handle = _grid_dataset(tmp_path, values=values)
    with pytest.warns(UserWarning):
        cubes = list(extract_patches(handle, PEAKS, full_mask(2, 2), p=1, ppm=3.0))
    assert len(cubes) == 4
    for cube in cubes:
        x, y = cube.center
        np.testing.assert_allclose(cube.data[0, 0], [values[0][y][x], values[1][y][x]])


def test_corner_zero_padding_hand_fixture(tmp_path):
    values = [[[1.0, 2.0], [3.0, 4.0]], [[10.0, 20.0], [30.0, 40.0]]]
    handle = _grid_dataset(tmp_path, values=values)
    with pytest.warns(UserWarning):
        cubes = {c.center: c for c in extract_patches(handle, PEAKS, full_mask(2, 2), p=3, ppm=3.0)}
    corner = cubes[(0, 0)]
    # top row and left column of the 3x3 patch fall outside the grid
    expected_c0 = np.array([[0, 0, 0], [0, 1, 2], [0, 3, 4]], dtype=np.float32)
    expected_c1 = np.array([[0, 0, 0], [0, 10, 20], [0, 30, 40]], dtype=np.float32)
    np.testing.assert_array_equal(corner.data[:, :, 0], expected_c0)
    np.testing.assert_array_equal(corner.data[:, :, 1], expected_c1)
    assert int((corner.data[:, :, 0] == 0).sum()) == 5


def test_constant_dataset_constant_cubes(tmp_path):
    handle = _grid_dataset(tmp_path, width=4, height=4)
    mask = full_mask(4, 4)
    with pytest.warns(UserWarning):
        cubes = {c.center: c for c in extract_patches(handle, PEAKS, mask, p=3, ppm=3.0)}
    interior = cubes[(1, 1)]
    for c in range(2):
        plane = interior.data[:, :, c]
        assert np.all(plane == plane[0, 0])


def test_center_channel_consistency(fixture_dir):
    out, meta = fixture_dir
    handle = open_dataset(out / "fixture.imzML")
    mask = load_mask(out / "mask.csv")
    peaks = PeakList(mzs=np.asarray(meta["structured_mzs"]), n=5)
    images = {mz: extract_ion_image(handle, mz, 3.0) for mz in meta["structured_mzs"]}
    with pytest.warns(UserWarning):
        for cube in extract_patches(handle, peaks, mask, p=3, ppm=3.0):
            x, y = cube.center
            r = cube.p // 2
            for ci, mz in enumerate(meta["structured_mzs"]):
                assert cube.data[r, r, ci] == np.float32(images[mz].pixels[y, x])


def test_even_patch_size_rejected(tmp_path):
    handle = _grid_dataset(tmp_path)
    with pytest.raises(EvenPatchSize):
        list(extract_patches(handle, PEAKS, full_mask(2, 2), p=4, ppm=3.0))


def test_mask_dimension_mismatch(tmp_path):
    handle = _grid_dataset(tmp_path)
    with pytest.raises(DimensionMismatch):
        list(extract_patches(handle, PEAKS, full_mask(5, 5), p=3, ppm=3.0))


def test_translation_consistency(tmp_path):
    rng = np.random.default_rng(6)
    base = rng.random((2, 4, 4))
    shifted = np.zeros((2, 5, 5))
    shifted[:, 1:, 1:] = base  # shift by (1, 1)
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    h1 = _grid_dataset(tmp_path / "a", width=4, height=4, values=base.tolist())
    h2 = _grid_dataset(tmp_path / "b", width=5, height=5, values=shifted.tolist())
    m1 = np.zeros((4, 4), dtype=int)
    m1[1:3, 1:3] = 1
    m2 = np.zeros((5, 5), dtype=int)
    m2[2:4, 2:4] = 1
    with pytest.warns(UserWarning):
        c1 = {c.center: c for c in extract_patches(h1, PEAKS, SegmentationMask(m1), p=3, ppm=3.0)}
        c2 = {c.center: c for c in extract_patches(h2, PEAKS, SegmentationMask(m2), p=3, ppm=3.0)}
    for (x, y), cube in c1.items():
        np.testing.assert_array_equal(cube.data, c2[(x + 1, y + 1)].data)


# --- container round-trip ---


def _random_cubes(n, p=3, channels=2, seed=0):
    rng = np.random.default_rng(seed)
    return [
        PatchCube(
            data=rng.random((p, p, channels)).astype(np.float32),
            label=int(rng.integers(1, 4)),
            center=(int(rng.integers(0, 100)), int(rng.integers(0, 100))),
        )
        for _ in range(n)
    ]


def test_export_empty(tmp_path):
    path = tmp_path / "empty.iop"
    counts = export_patches([], path, peak_mzs=[100.0, 200.0], ppm=3.0)
    assert counts == {}
    header, cubes = read_patches(path)
    assert header["record_count"] == 0 and cubes == []


def test_export_roundtrip_bit_exact(tmp_path):
    cubes = _random_cubes(10)
    path = tmp_path / "p.iop"
    counts = export_patches(
        cubes, path, peak_mzs=[100.0, 200.0], ppm=3.0, dataset_id="d", labels={1: "tumor"}
    )
    assert sum(counts.values()) == 10
    header, back = read_patches(path)
    assert header["p"] == 3 and header["C"] == 2
    assert header["peak_mzs"] == [100.0, 200.0]
    assert header["labels"] == {"1": "tumor"}
    for a, b in zip(cubes, back):
        assert a.label == b.label and a.center == b.center
        assert a.data.tobytes() == b.data.tobytes()
    expected_counts = {}
    for c in cubes:
        expected_counts[c.label] = expected_counts.get(c.label, 0) + 1
    assert counts == expected_counts


def test_header_mismatch_leaves_no_file(tmp_path):
    cubes = _random_cubes(3)
    bad = PatchCube(
        data=np.zeros((3, 3, 5), dtype=np.float32), label=1, center=(0, 0)
    )
    path = tmp_path / "bad.iop"
    with pytest.raises(HeaderMismatch):
        export_patches(cubes + [bad], path, peak_mzs=[100.0, 200.0], ppm=3.0)
    assert not path.exists()
    assert list(tmp_path.iterdir()) == []  # no stray temp file either
