import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ionmorph.io import open_dataset, write_dataset
from spectra_helpers import make_continuous_spectra


@pytest.fixture
def continuous_dataset(tmp_path):
    spectra = make_continuous_spectra()
    path = tmp_path / "cont.imzML"
    write_dataset(spectra, mode="continuous", path=path)
    return open_dataset(path), spectra


@pytest.fixture
def fixture_dir(tmp_path_factory):
    """The synthetic 20-channel fixture with 5 planted structured channels."""
    from ionmorph.fixtures import generate_fixture

    out = tmp_path_factory.mktemp("fixture")
    meta = generate_fixture(out)
    return out, meta
