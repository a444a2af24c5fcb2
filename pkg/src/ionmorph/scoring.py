"""Degree-of-structure scoring.

Two families of scorers feed the ranking:
  * probabilistic scorers (external process, constant test doubles) return
    six class probabilities that are aggregated over a target-class subset;
  * classical baselines (PCA reference correlation, Moran's I) return raw
    ranking scores directly and never pass through the aggregation.
Scores are comparable within one scorer only.
"""

from __future__ import annotations

import base64
import json
import shlex
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .classes import CLASS_INDEX, NUM_CLASSES, STRUCTURAL_CLASSES, canonical_class
from .errors import (
    ConstantImage,
    ConstantInput,
    DegenerateStack,
    NonFiniteLogit,
    ProtocolViolation,
    ScorerCrashed,
    ScorerTimeout,
    ShapeMismatch,
)
from .ionimage import PreprocessedImage

DEFAULT_TARGETS = frozenset({"Structured", "Negative", "Localized"})

PROB_SUM_TOL = 1e-6


@dataclass(frozen=True)
class ClassProbabilities:
    p: np.ndarray  # six probabilities in STRUCTURAL_CLASSES order

    def __post_init__(self):
        arr = np.asarray(self.p, dtype=np.float64)
        object.__setattr__(self, "p", arr)
        if arr.shape != (NUM_CLASSES,):
            raise ValueError(f"expected {NUM_CLASSES} probabilities, got shape {arr.shape}")
        if np.any(arr < -PROB_SUM_TOL) or np.any(arr > 1 + PROB_SUM_TOL):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(float(arr.sum()) - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {arr.sum()}, not 1")

    def __getitem__(self, cls: str) -> float:
        return float(self.p[CLASS_INDEX[cls]])

    @property
    def argmax_class(self) -> str:
        return STRUCTURAL_CLASSES[int(np.argmax(self.p))]


@dataclass(frozen=True)
class StructureScore:
    value: float
    target_set: frozenset[str]


def softmax(logits) -> ClassProbabilities:
    """Max-shifted softmax over the six class logits."""
    z = np.asarray(logits, dtype=np.float64)
    if z.shape != (NUM_CLASSES,):
        raise ValueError(f"expected {NUM_CLASSES} logits, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise NonFiniteLogit(f"non-finite logit in {z!r}")
    e = np.exp(z - z.max())
    return ClassProbabilities(p=e / e.sum())


def aggregate_score(probs: ClassProbabilities, targets=DEFAULT_TARGETS) -> StructureScore:
    """Cumulative probability mass over the target-class subset.

    An empty target set is allowed and scores 0.
    """
    targets = frozenset(targets)
    unknown = targets - set(STRUCTURAL_CLASSES)
    if unknown:
        raise ValueError(f"unknown classes in target set: {sorted(unknown)}")
    value = float(sum(probs.p[CLASS_INDEX[c]] for c in targets))
    return StructureScore(value=value, target_set=targets)


def parse_targets(spec: str) -> frozenset[str]:
    """Parse a comma-separated, case-insensitive target-class list."""
    names = [n for n in (part.strip() for part in spec.split(",")) if n]
    try:
        return frozenset(canonical_class(n) for n in names)
    except KeyError as e:
        raise ValueError(f"unknown structural class {e.args[0]!r}") from e


# --- classical numeric scorers ---


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Product-moment correlation over the flattened grids."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes {a.shape} and {b.shape} differ")
    a = a.ravel()
    b = b.ravel()
    da = a - a.mean()
    db = b - b.mean()
    na = float(np.sqrt(np.dot(da, da)))
    nb = float(np.sqrt(np.dot(db, db)))
    if na == 0.0 or nb == 0.0:
        raise ConstantInput("pearson correlation is undefined for constant input")
    return float(np.dot(da, db) / (na * nb))


def morans_i(pixels: np.ndarray) -> float:
    """Global Moran's I with rook (4-neighbor) adjacency and binary weights."""
    x = np.asarray(pixels, dtype=np.float64)
    if x.ndim != 2 or x.size < 2:
        raise ValueError("need a 2D image with at least 2 pixels")
    z = x - x.mean()
    denom = float((z * z).sum())
    if denom == 0.0:
        raise ConstantImage("Moran's I is undefined for a constant image")
    h, w = x.shape
    # each undirected neighbor pair contributes twice (w_ij = w_ji = 1)
    cross = 0.0
    if w > 1:
        cross += float((z[:, :-1] * z[:, 1:]).sum())
    if h > 1:
        cross += float((z[:-1, :] * z[1:, :]).sum())
    num = 2.0 * cross
    w_sum = 2.0 * (h * (w - 1) + (h - 1) * w)
    n = x.size
    return float(n / w_sum * num / denom)


def pca_reference_scores(images: list[np.ndarray]) -> list[float]:
    """Score each image by |PCC| against the stack's first-principal-component image.

    The pixels x channels matrix is column-centered; the reference is the
    first left-singular direction scaled by its singular value, sign-flipped
    so its correlation with the mean image is non-negative. Constant images
    in a non-degenerate stack score 0.
    """
    if len(images) < 2:
        raise ValueError("need at least 2 images")
    shape = np.asarray(images[0]).shape
    for img in images[1:]:
        if np.asarray(img).shape != shape:
            raise ShapeMismatch("all images must share one shape")
    X = np.stack([np.asarray(img, dtype=np.float64).ravel() for img in images], axis=1)
    Xc = X - X.mean(axis=0, keepdims=True)
    if not np.any(np.abs(Xc) > 1e-300):
        raise DegenerateStack("all images are constant")
    U, S, Vt = np.linalg.svd(Xc, full_matrices=False)
    ref = U[:, 0] * S[0]
    mean_img = X.mean(axis=1)
    # deterministic sign: align reference with the mean image when possible
    try:
        if pearson(ref, mean_img) < 0:
            ref = -ref
    except ConstantInput:
        if float(Vt[0].sum()) < 0:
            ref = -ref
    scores = []
    for col in range(X.shape[1]):
        try:
            scores.append(abs(pearson(X[:, col], ref)))
        except ConstantInput:
            scores.append(0.0)
    return scores


# --- scorer specification and the external-process protocol ---


@dataclass(frozen=True)
class ScorerSpec:
    kind: str  # "pca" | "moransi" | "external" | "constant"
    command: str = ""
    probs: tuple[float, ...] = ()
    targets: frozenset[str] = DEFAULT_TARGETS
    timeout: float = 30.0

    def __post_init__(self):
        if self.kind not in ("pca", "moransi", "external", "constant"):
            raise ValueError(f"unknown scorer kind {self.kind!r}")
        if self.kind == "external" and not self.command.strip():
            raise ValueError("external scorer needs a nonempty command")
        if self.kind == "constant":
            ClassProbabilities(p=np.asarray(self.probs))

    def describe(self) -> str:
        if self.kind == "external":
            return f"external:{self.command}"
        if self.kind == "constant":
            return "const:" + ",".join(f"{v:g}" for v in self.probs)
        return self.kind


def parse_scorer_spec(text: str, targets=DEFAULT_TARGETS, timeout: float = 30.0) -> ScorerSpec:
    """Parse CLI scorer syntax: pca | moransi | external:<cmd> | const:<p0,...,p5>."""
    text = text.strip()
    if text == "pca":
        return ScorerSpec(kind="pca", targets=targets, timeout=timeout)
    if text == "moransi":
        return ScorerSpec(kind="moransi", targets=targets, timeout=timeout)
    if text.startswith("external:"):
        return ScorerSpec(
            kind="external", command=text[len("external:"):], targets=targets, timeout=timeout
        )
    if text.startswith("const:"):
        probs = tuple(float(v) for v in text[len("const:"):].split(","))
        return ScorerSpec(kind="constant", probs=probs, targets=targets, timeout=timeout)
    raise ValueError(f"unknown scorer {text!r}")


class ExternalScorer:
    """Client for the newline-delimited JSON scorer protocol.

    Writes are serialized; responses are demultiplexed by request id, so
    requests may be pipelined. One instance drives one scorer process.
    """

    def __init__(self, command: str, timeout: float = 30.0):
        self.command = command
        self.timeout = timeout
        self._proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._next_id = 0
        self._lock = threading.Lock()
        self._responses: dict[int, dict] = {}
        self._cond = threading.Condition()
        self._reader_error: Exception | None = None
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self):
        try:
            assert self._proc.stdout is not None
            for line in self._proc.stdout:
                line = line.strip()
                if not line:
                    continue
                try:
                    msg = json.loads(line)
                    rid = int(msg["id"])
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                    with self._cond:
                        self._reader_error = ProtocolViolation(f"unparsable response {line!r}")
                        self._cond.notify_all()
                    return
                with self._cond:
                    self._responses[rid] = msg
                    self._cond.notify_all()
        except Exception as e:  # pragma: no cover - defensive
            with self._cond:
                self._reader_error = e
                self._cond.notify_all()
        else:
            with self._cond:
                self._cond.notify_all()

    def _send(self, img: PreprocessedImage) -> int:
        data = np.ascontiguousarray(img.pixels, dtype="<f4").tobytes()
        with self._lock:
            rid = self._next_id
            self._next_id += 1
            req = {
                "id": rid,
                "shape": list(img.pixels.shape),
                "dtype": "f32le",
                "data": base64.b64encode(data).decode("ascii"),
            }
            try:
                assert self._proc.stdin is not None
                self._proc.stdin.write(json.dumps(req) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as e:
                raise ScorerCrashed(f"scorer process died: {e}") from e
        return rid

    def _wait(self, rid: int) -> ClassProbabilities:
        with self._cond:
            ok = self._cond.wait_for(
                lambda: rid in self._responses
                or self._reader_error is not None
                or self._proc.poll() is not None,
                timeout=self.timeout,
            )
            if rid in self._responses:
                msg = self._responses.pop(rid)
            elif self._reader_error is not None:
                raise self._reader_error
            elif self._proc.poll() is not None:
                raise ScorerCrashed(
                    f"scorer exited with code {self._proc.returncode} before answering"
                )
            elif not ok:
                raise ScorerTimeout(f"no response for request {rid} within {self.timeout}s")
            else:  # pragma: no cover
                raise ScorerCrashed("scorer stream closed unexpectedly")
        if "error" in msg:
            raise ProtocolViolation(f"scorer error: {msg['error']}")
        probs = msg.get("probs")
        if not isinstance(probs, list) or len(probs) != NUM_CLASSES:
            raise ProtocolViolation(f"response without 6 probabilities: {msg!r}")
        try:
            return ClassProbabilities(p=np.asarray(probs, dtype=np.float64))
        except ValueError as e:
            raise ProtocolViolation(str(e)) from e

    def score(self, img: PreprocessedImage) -> ClassProbabilities:
        return self._wait(self._send(img))

    def score_batch(self, images: list[PreprocessedImage]) -> list[ClassProbabilities]:
        rids = [self._send(img) for img in images]
        return [self._wait(rid) for rid in rids]

    def close(self):
        if self._proc.poll() is None:
            try:
                if self._proc.stdin is not None:
                    self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def score_external(img: PreprocessedImage, spec: ScorerSpec) -> ClassProbabilities:
    """One-shot scoring through a freshly started external scorer process."""
    if spec.kind != "external":
        raise ValueError("score_external requires an external scorer spec")
    with ExternalScorer(spec.command, timeout=spec.timeout) as scorer:
        return scorer.score(img)
