"""ionmorph: spatially informed peak picking for mass spectrometry imaging."""

from .classes import NUM_CLASSES, STRUCTURAL_CLASSES
from .io import (
    DatasetHandle,
    SegmentationMask,
    Spectrum,
    load_mask,
    open_dataset,
    read_spectrum,
    write_dataset,
)
from .ionimage import (
    IonImage,
    PreprocessedImage,
    extract_ion_image,
    extract_ion_images,
    hotspot_clip,
    normalize_p99,
    preprocess,
    resize_224,
)
from .picking import (
    CandidateList,
    PeakList,
    RankedPeaks,
    enumerate_candidates,
    rank_peaks,
    select_top_n,
    union_peaklists,
)
from .scoring import (
    ClassProbabilities,
    ScorerSpec,
    StructureScore,
    aggregate_score,
    morans_i,
    pca_reference_scores,
    pearson,
    softmax,
)
from .evaluation import EvalConfig, EvalReport, ground_truth, mscf1
from .patches import PatchCube, export_patches, extract_patches, read_patches

__version__ = "0.1.0"
