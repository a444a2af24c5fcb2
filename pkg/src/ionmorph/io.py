"""imzML/ibd dataset I/O, segmentation masks and the label manifest.

Only uncompressed little-endian float32/float64 arrays are supported.
Pixel coordinates are 1-based in the imzML file (file convention) and
0-based everywhere inside this package; the conversion happens exactly
once, at parse/write time.
"""

from __future__ import annotations

import json
import os
import uuid as uuidlib
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .classes import is_valid_class
from .errors import (
    DimensionMismatch,
    InconsistentAxis,
    IndexOutOfRange,
    MalformedXml,
    ManifestError,
    MissingBinary,
    TruncatedBinary,
    UnparsableMask,
    UnsupportedEncoding,
    UuidMismatch,
)

CONTINUOUS = "continuous"
PROCESSED = "processed"

_DTYPES = {
    "32-bit float": np.dtype("<f4"),
    "64-bit float": np.dtype("<f8"),
}
_DTYPE_NAMES = {v: k for k, v in _DTYPES.items()}

_CV_MODE = {"IMS:1000030": CONTINUOUS, "IMS:1000031": PROCESSED}


@dataclass(frozen=True)
class Spectrum:
    """One pixel's spectrum. x/y are 0-based grid coordinates."""

    x: int
    y: int
    mzs: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        if len(self.mzs) != len(self.intensities):
            raise ValueError("mzs and intensities must have equal length")
        if len(self.mzs) > 1 and not np.all(np.diff(self.mzs) > 0):
            raise ValueError("mzs must be strictly ascending")


@dataclass(frozen=True)
class _PixelRef:
    x: int  # 0-based
    y: int  # 0-based
    mz_offset: int
    mz_length: int
    int_offset: int
    int_length: int


@dataclass
class DatasetHandle:
    """An opened imzML dataset. Immutable after open; spectra are read lazily.

    Safe for concurrent read_spectrum calls: every read opens its own
    file descriptor on the binary file.
    """

    source_path: Path
    ibd_path: Path
    mode: str
    width: int
    height: int
    uuid: bytes
    mz_dtype: np.dtype
    int_dtype: np.dtype
    pixel_index: list[_PixelRef] = field(default_factory=list)
    mz_axis: np.ndarray | None = None

    @property
    def spectrum_count(self) -> int:
        return len(self.pixel_index)

    @property
    def dataset_id(self) -> str:
        return self.source_path.stem

    def _read_array(self, f, offset: int, length: int, dtype: np.dtype) -> np.ndarray:
        f.seek(offset)
        nbytes = length * dtype.itemsize
        buf = f.read(nbytes)
        if len(buf) != nbytes:
            raise TruncatedBinary(
                f"expected {nbytes} bytes at offset {offset}, got {len(buf)}"
            )
        return np.frombuffer(buf, dtype=dtype)

    def read_spectrum(self, index: int) -> Spectrum:
        if not 0 <= index < self.spectrum_count:
            raise IndexOutOfRange(
                f"spectrum index {index} out of range [0, {self.spectrum_count})"
            )
        ref = self.pixel_index[index]
        with open(self.ibd_path, "rb") as f:
            mzs = self._read_array(f, ref.mz_offset, ref.mz_length, self.mz_dtype)
            intens = self._read_array(f, ref.int_offset, ref.int_length, self.int_dtype)
        return Spectrum(x=ref.x, y=ref.y, mzs=mzs, intensities=intens)

    def read_intensities(self, index: int, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Read a slice of one spectrum's intensity array without touching m/z bytes."""
        if not 0 <= index < self.spectrum_count:
            raise IndexOutOfRange(f"spectrum index {index} out of range")
        ref = self.pixel_index[index]
        if stop is None:
            stop = ref.int_length
        stop = min(stop, ref.int_length)
        start = max(start, 0)
        if start >= stop:
            return np.empty(0, dtype=self.int_dtype)
        with open(self.ibd_path, "rb") as f:
            return self._read_array(
                f, ref.int_offset + start * self.int_dtype.itemsize, stop - start, self.int_dtype
            )

    def spectrum_mzs(self, index: int) -> np.ndarray:
        """The m/z axis for one spectrum (shared axis in continuous mode)."""
        if self.mode == CONTINUOUS:
            assert self.mz_axis is not None
            return self.mz_axis
        ref = self.pixel_index[index]
        with open(self.ibd_path, "rb") as f:
            return self._read_array(f, ref.mz_offset, ref.mz_length, self.mz_dtype)


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _cv_params(elem) -> list[tuple[str, str, str]]:
    out = []
    for child in elem:
        if _local(child.tag) == "cvParam":
            out.append(
                (
                    child.get("accession", ""),
                    child.get("name", ""),
                    child.get("value", ""),
                )
            )
    return out


def _find_child(elem, name):
    for child in elem:
        if _local(child.tag) == name:
            return child
    return None


def _iter_named(elem, name):
    for child in elem.iter():
        if _local(child.tag) == name:
            yield child


def _parse_uuid(value: str) -> bytes:
    try:
        return uuidlib.UUID(value.strip().strip("{}")).bytes
    except ValueError as e:
        raise MalformedXml(f"unparsable uuid value {value!r}") from e


def open_dataset(path: str | os.PathLike) -> DatasetHandle:
    """Open an imzML file, validate its binary companion and build the pixel index.

    No spectra are loaded eagerly; in continuous mode only the shared
    m/z axis is read.
    """
    path = Path(path)
    try:
        tree = ET.parse(path)
    except (ET.ParseError, OSError) as e:
        raise MalformedXml(f"cannot parse {path}: {e}") from e
    root = tree.getroot()

    ibd_path = path.with_suffix(".ibd")
    if not ibd_path.exists():
        raise MissingBinary(f"no binary file at {ibd_path}")

    mode = None
    xml_uuid = None
    for fc in _iter_named(root, "fileContent"):
        for acc, name, value in _cv_params(fc):
            if acc in _CV_MODE:
                mode = _CV_MODE[acc]
            if acc == "IMS:1000080":
                xml_uuid = _parse_uuid(value)
    if mode is None:
        raise MalformedXml("missing continuous/processed mode cvParam")
    if xml_uuid is None:
        raise MalformedXml("missing universally unique identifier cvParam")

    with open(ibd_path, "rb") as f:
        ibd_uuid = f.read(16)
    if len(ibd_uuid) != 16:
        raise TruncatedBinary("binary file shorter than its 16-byte uuid header")
    if ibd_uuid != xml_uuid:
        raise UuidMismatch(
            f"uuid in XML ({xml_uuid.hex()}) != uuid in binary file ({ibd_uuid.hex()})"
        )

    # referenceable param groups -> array dtypes
    group_dtype: dict[str, np.dtype] = {}
    group_kind: dict[str, str] = {}
    for grp in _iter_named(root, "referenceableParamGroup"):
        gid = grp.get("id", "")
        for acc, name, value in _cv_params(grp):
            if name in _DTYPES:
                group_dtype[gid] = _DTYPES[name]
            elif "compression" in name and name != "no compression":
                raise UnsupportedEncoding(f"compressed arrays are not supported ({name})")
            elif acc == "MS:1000514":
                group_kind[gid] = "mz"
            elif acc == "MS:1000515":
                group_kind[gid] = "intensity"
            elif name.endswith("-bit integer"):
                raise UnsupportedEncoding(f"unsupported array element type {name!r}")

    width = height = 0
    for ss in _iter_named(root, "scanSettings"):
        for acc, name, value in _cv_params(ss):
            if acc == "IMS:1000042":
                width = int(value)
            elif acc == "IMS:1000043":
                height = int(value)

    mz_dtype = int_dtype = None
    pixel_index: list[_PixelRef] = []
    for spec in _iter_named(root, "spectrum"):
        x = y = None
        for scan in _iter_named(spec, "scan"):
            for acc, name, value in _cv_params(scan):
                if acc == "IMS:1000050":
                    x = int(value)
                elif acc == "IMS:1000051":
                    y = int(value)
        if x is None or y is None:
            raise MalformedXml("spectrum without pixel position")
        arrays = {}
        for bda in _iter_named(spec, "binaryDataArray"):
            ref = _find_child(bda, "referenceableParamGroupRef")
            kind = None
            dtype = None
            if ref is not None:
                gid = ref.get("ref", "")
                kind = group_kind.get(gid)
                dtype = group_dtype.get(gid)
            offset = length = None
            for acc, name, value in _cv_params(bda):
                if acc == "IMS:1000102":
                    offset = int(value)
                elif acc == "IMS:1000103":
                    length = int(value)
                elif name in _DTYPES:
                    dtype = _DTYPES[name]
                elif acc == "MS:1000514":
                    kind = "mz"
                elif acc == "MS:1000515":
                    kind = "intensity"
                elif "compression" in name and name != "no compression":
                    raise UnsupportedEncoding(f"compressed arrays are not supported ({name})")
            if kind is None or offset is None or length is None:
                raise MalformedXml("binaryDataArray missing kind/offset/length")
            if dtype is None:
                raise UnsupportedEncoding("binaryDataArray without a supported float dtype")
            arrays[kind] = (offset, length, dtype)
        if "mz" not in arrays or "intensity" not in arrays:
            raise MalformedXml("spectrum missing m/z or intensity array")
        (mo, ml, md) = arrays["mz"]
        (io_, il, idt) = arrays["intensity"]
        mz_dtype, int_dtype = md, idt
        if not (1 <= x and 1 <= y):
            raise MalformedXml(f"pixel position ({x},{y}) is not 1-based")
        pixel_index.append(
            _PixelRef(x=x - 1, y=y - 1, mz_offset=mo, mz_length=ml, int_offset=io_, int_length=il)
        )

    if not pixel_index:
        raise MalformedXml("dataset contains no spectra")
    if width == 0:
        width = max(r.x for r in pixel_index) + 1
    if height == 0:
        height = max(r.y for r in pixel_index) + 1
    for r in pixel_index:
        if not (0 <= r.x < width and 0 <= r.y < height):
            raise MalformedXml(f"pixel ({r.x},{r.y}) outside {width}x{height} grid")

    handle = DatasetHandle(
        source_path=path,
        ibd_path=ibd_path,
        mode=mode,
        width=width,
        height=height,
        uuid=ibd_uuid,
        mz_dtype=mz_dtype,
        int_dtype=int_dtype,
        pixel_index=pixel_index,
    )
    if mode == CONTINUOUS:
        ref = pixel_index[0]
        with open(ibd_path, "rb") as f:
            axis = handle._read_array(f, ref.mz_offset, ref.mz_length, mz_dtype)
        if len(axis) > 1 and not np.all(np.diff(axis) > 0):
            raise MalformedXml("continuous m/z axis is not strictly ascending")
        handle.mz_axis = axis
    return handle


def read_spectrum(handle: DatasetHandle, index: int) -> Spectrum:
    return handle.read_spectrum(index)


_IMZML_NS = "http://psi.hupo.org/ms/mzml"


def write_dataset(
    spectra: list[Spectrum],
    mode: str,
    path: str | os.PathLike,
    mz_dtype=np.dtype("<f8"),
    int_dtype=np.dtype("<f4"),
) -> None:
    """Write spectra as an imzML/ibd pair readable by open_dataset.

    Spectrum coordinates are 0-based and converted to the file's 1-based
    convention. Array round-trips are bit-exact when inputs already carry
    the requested dtypes.
    """
    if mode not in (CONTINUOUS, PROCESSED):
        raise ValueError(f"unknown mode {mode!r}")
    if not spectra:
        raise ValueError("need at least one spectrum")
    mz_dtype = np.dtype(mz_dtype)
    int_dtype = np.dtype(int_dtype)
    if mz_dtype not in _DTYPE_NAMES or int_dtype not in _DTYPE_NAMES:
        raise UnsupportedEncoding("only float32/float64 arrays can be written")

    if mode == CONTINUOUS:
        axis = spectra[0].mzs
        for s in spectra[1:]:
            if len(s.mzs) != len(axis) or not np.array_equal(s.mzs, axis):
                raise InconsistentAxis("continuous mode requires one shared m/z axis")

    path = Path(path)
    ibd_path = path.with_suffix(".ibd")
    file_uuid = uuidlib.uuid4()

    offsets = []
    with open(ibd_path, "wb") as f:
        f.write(file_uuid.bytes)
        shared_mz = None
        for s in spectra:
            mz = np.ascontiguousarray(s.mzs, dtype=mz_dtype)
            if mode == CONTINUOUS and shared_mz is not None:
                mz_off, mz_len = shared_mz
            else:
                mz_off = f.tell()
                f.write(mz.tobytes())
                mz_len = len(mz)
                if mode == CONTINUOUS:
                    shared_mz = (mz_off, mz_len)
            intens = np.ascontiguousarray(s.intensities, dtype=int_dtype)
            int_off = f.tell()
            f.write(intens.tobytes())
            offsets.append((mz_off, mz_len, int_off, len(intens)))

    width = max(s.x for s in spectra) + 1
    height = max(s.y for s in spectra) + 1
    mode_acc = "IMS:1000030" if mode == CONTINUOUS else "IMS:1000031"

    ET.register_namespace("", _IMZML_NS)
    root = ET.Element(f"{{{_IMZML_NS}}}mzML", version="1.1")
    fdesc = ET.SubElement(root, f"{{{_IMZML_NS}}}fileDescription")
    fcontent = ET.SubElement(fdesc, f"{{{_IMZML_NS}}}fileContent")

    def cv(parent, accession, name, value=None, ref="MS"):
        attrs = {"cvRef": ref, "accession": accession, "name": name}
        if value is not None:
            attrs["value"] = str(value)
        ET.SubElement(parent, f"{{{_IMZML_NS}}}cvParam", attrs)

    cv(fcontent, mode_acc, mode, ref="IMS")
    cv(fcontent, "IMS:1000080", "universally unique identifier", f"{{{file_uuid}}}", ref="IMS")

    rpgl = ET.SubElement(root, f"{{{_IMZML_NS}}}referenceableParamGroupList", count="2")
    mz_grp = ET.SubElement(rpgl, f"{{{_IMZML_NS}}}referenceableParamGroup", id="mzArray")
    cv(mz_grp, "MS:1000514", "m/z array")
    cv(mz_grp, "MS:1000523" if mz_dtype.itemsize == 8 else "MS:1000521", _DTYPE_NAMES[mz_dtype])
    cv(mz_grp, "MS:1000576", "no compression")
    cv(mz_grp, "IMS:1000101", "external data", "true", ref="IMS")
    int_grp = ET.SubElement(rpgl, f"{{{_IMZML_NS}}}referenceableParamGroup", id="intensityArray")
    cv(int_grp, "MS:1000515", "intensity array")
    cv(int_grp, "MS:1000523" if int_dtype.itemsize == 8 else "MS:1000521", _DTYPE_NAMES[int_dtype])
    cv(int_grp, "MS:1000576", "no compression")
    cv(int_grp, "IMS:1000101", "external data", "true", ref="IMS")

    ssl = ET.SubElement(root, f"{{{_IMZML_NS}}}scanSettingsList", count="1")
    ss = ET.SubElement(ssl, f"{{{_IMZML_NS}}}scanSettings", id="scanSettings1")
    cv(ss, "IMS:1000042", "max count of pixels x", width, ref="IMS")
    cv(ss, "IMS:1000043", "max count of pixels y", height, ref="IMS")

    run = ET.SubElement(root, f"{{{_IMZML_NS}}}run", id="run1")
    slist = ET.SubElement(run, f"{{{_IMZML_NS}}}spectrumList", count=str(len(spectra)))
    for i, (s, (mz_off, mz_len, int_off, int_len)) in enumerate(zip(spectra, offsets)):
        spec = ET.SubElement(
            slist, f"{{{_IMZML_NS}}}spectrum", id=f"spectrum={i + 1}", index=str(i)
        )
        scan_list = ET.SubElement(spec, f"{{{_IMZML_NS}}}scanList", count="1")
        scan = ET.SubElement(scan_list, f"{{{_IMZML_NS}}}scan")
        cv(scan, "IMS:1000050", "position x", s.x + 1, ref="IMS")
        cv(scan, "IMS:1000051", "position y", s.y + 1, ref="IMS")
        bdal = ET.SubElement(spec, f"{{{_IMZML_NS}}}binaryDataArrayList", count="2")
        for gid, off, length, itemsize in (
            ("mzArray", mz_off, mz_len, mz_dtype.itemsize),
            ("intensityArray", int_off, int_len, int_dtype.itemsize),
        ):
            bda = ET.SubElement(bdal, f"{{{_IMZML_NS}}}binaryDataArray", encodedLength="0")
            ET.SubElement(bda, f"{{{_IMZML_NS}}}referenceableParamGroupRef", ref=gid)
            cv(bda, "IMS:1000102", "external offset", off, ref="IMS")
            cv(bda, "IMS:1000103", "external array length", length, ref="IMS")
            cv(bda, "IMS:1000104", "external encoded length", length * itemsize, ref="IMS")
            ET.SubElement(bda, f"{{{_IMZML_NS}}}binary")

    tree = ET.ElementTree(root)
    ET.indent(tree)
    tree.write(path, xml_declaration=True, encoding="utf-8")


# --- segmentation masks ---


@dataclass(frozen=True)
class SegmentationMask:
    labels: np.ndarray  # (height, width) int array, 0 = background

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def num_regions(self) -> int:
        return int(self.labels.max())

    def check_dims(self, handle: DatasetHandle) -> None:
        if (self.width, self.height) != (handle.width, handle.height):
            raise DimensionMismatch(
                f"mask is {self.width}x{self.height}, dataset is "
                f"{handle.width}x{handle.height}"
            )


def load_mask(path: str | os.PathLike) -> SegmentationMask:
    """Load a segmentation mask from an integer CSV or an 8-bit PGM/PNG."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".csv":
        rows = []
        try:
            with open(path, "r", encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    rows.append([int(v) for v in line.split(",")])
        except ValueError as e:
            raise UnparsableMask(f"non-integer value in {path}: {e}") from e
        if not rows:
            raise UnparsableMask(f"empty mask file {path}")
        if len({len(r) for r in rows}) != 1:
            raise UnparsableMask(f"rows of {path} have differing lengths")
        labels = np.array(rows, dtype=np.int64)
    elif suffix in (".pgm", ".png"):
        from PIL import Image, UnidentifiedImageError

        try:
            with Image.open(path) as im:
                if im.mode not in ("L", "P", "I", "1"):
                    raise UnparsableMask(f"{path}: expected 8-bit grayscale, got mode {im.mode}")
                labels = np.asarray(im.convert("I"), dtype=np.int64)
        except UnidentifiedImageError as e:
            raise UnparsableMask(f"cannot decode {path}") from e
    else:
        raise UnparsableMask(f"unsupported mask format {suffix!r}")
    if labels.min() < 0:
        raise UnparsableMask("mask labels must be non-negative")
    return SegmentationMask(labels=labels)


def write_mask_csv(mask: SegmentationMask, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in mask.labels:
            f.write(",".join(str(int(v)) for v in row) + "\n")


# --- label manifest (newline-delimited JSON, append-only) ---

MANIFEST_FIELDS = ("dataset_id", "mz", "ppm", "class", "annotator", "split", "timestamp")
SPLITS = ("Train", "Val", "Test")


@dataclass(frozen=True)
class ManifestEntry:
    dataset_id: str
    mz: float
    ppm: float
    label: str  # one of the six structural classes
    annotator: str
    split: str
    timestamp: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "dataset_id": self.dataset_id,
                "mz": self.mz,
                "ppm": self.ppm,
                "class": self.label,
                "annotator": self.annotator,
                "split": self.split,
                "timestamp": self.timestamp or datetime.now(timezone.utc).isoformat(),
            },
            separators=(",", ":"),
        )

    @staticmethod
    def from_json(line: str) -> "ManifestEntry":
        d = json.loads(line)
        return ManifestEntry(
            dataset_id=d["dataset_id"],
            mz=float(d["mz"]),
            ppm=float(d["ppm"]),
            label=d["class"],
            annotator=d.get("annotator", ""),
            split=d.get("split", "Train"),
            timestamp=d.get("timestamp", ""),
        )


def append_manifest_entry(path: str | os.PathLike, entry: ManifestEntry) -> None:
    """Durably append one manifest line (write + flush + fsync)."""
    if not is_valid_class(entry.label):
        raise ManifestError(f"unknown structural class {entry.label!r}")
    with open(path, "a", encoding="utf-8") as f:
        f.write(entry.to_json() + "\n")
        f.flush()
        os.fsync(f.fileno())


def read_manifest(path: str | os.PathLike) -> list[ManifestEntry]:
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = ManifestEntry.from_json(line)
            except (json.JSONDecodeError, KeyError) as e:
                raise ManifestError(f"{path}:{n}: bad manifest line: {e}") from e
            if not is_valid_class(entry.label):
                raise ManifestError(f"{path}:{n}: unknown class {entry.label!r}")
            if entry.split not in SPLITS:
                raise ManifestError(f"{path}:{n}: unknown split {entry.split!r}")
            entries.append(entry)
    validate_split_constancy(entries)
    return entries


def validate_split_constancy(entries: list[ManifestEntry]) -> None:
    """Splits are assigned per dataset, never per image."""
    seen: dict[str, str] = {}
    for e in entries:
        prev = seen.setdefault(e.dataset_id, e.split)
        if prev != e.split:
            raise ManifestError(
                f"dataset {e.dataset_id!r} appears with splits {prev} and {e.split}"
            )
