"""Feature-file I/O and a synthetic long-tailed dataset generator.

File formats:
  CSV     header ``label,f0,...,f{P-1}``; labels are non-negative integers,
          feature values written in shortest round-trip decimal.
  binary  magic ``FGEO``, version u32=1, N u64, P u32, C u32, then N u32
          labels, then N*P float32 features row-major; all little-endian.

Features are stored as float32 so the binary format round-trips bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionInconsistent, InvalidConfig, ParseError, ShapeMismatch

MAGIC = b"FGEO"
VERSION = 1


@dataclass(frozen=True)
class FeatureSet:
    """Labeled collection of P-dimensional feature vectors."""

    features: np.ndarray  # (N, P) float32
    labels: np.ndarray  # (N,) int32

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.int32)
        if feats.ndim != 2:
            raise ShapeMismatch(f"features must be (N, P), got shape {feats.shape}")
        if labels.ndim != 1 or labels.shape[0] != feats.shape[0]:
            raise ShapeMismatch(f"{labels.shape[0]} labels for {feats.shape[0]} rows")
        if labels.size and labels.min() < 0:
            raise ShapeMismatch("labels must be non-negative")
        if not np.all(np.isfinite(feats)):
            raise ShapeMismatch("features contain NaN or Inf")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def class_counts(self) -> dict[int, int]:
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def class_rows(self, c: int) -> np.ndarray:
        return self.features[self.labels == c]


def head_tail_split(counts: dict[int, int], threshold: int = 100) -> tuple[set[int], set[int]]:
    """Classes with at least `threshold` samples are head, the rest tail."""
    head = {c for c, n in counts.items() if n >= threshold}
    tail = set(counts) - head
    return head, tail


def evaluation_groups(counts: dict[int, int], scale: float = 1.0) -> dict[str, set[int]]:
    """Head/middle/tail report buckets: >100, 20..100, <20 samples, scaled."""
    hi, lo = 100 * scale, 20 * scale
    groups = {
        "head": {c for c, n in counts.items() if n > hi},
        "middle": {c for c, n in counts.items() if lo <= n <= hi},
        "tail": {c for c, n in counts.items() if n < lo},
    }
    return {name: members for name, members in groups.items() if members}


# ---------------------------------------------------------------------------
# Synthetic long-tailed generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Configuration of the synthetic long-tailed Gaussian generator.

    Class c draws from N(mu_c, Q_c diag(spectrum) Q_c^T), where Q_c is a
    random orthonormal basis shared within `basis_sharing` groups. Class
    means sit on a scaled simplex of group centers with a small within-group
    offset, so classes are separable but group neighbours overlap.
    """

    classes: int
    dim: int
    imbalance_factor: float
    max_count: int
    spectrum: tuple[float, ...] | None = None
    basis_sharing: dict[int, int] | None = None  # class -> group id
    mean_scale: float = 3.0
    within_group_spread: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2 or self.dim < 2:
            raise InvalidConfig("need at least 2 classes and 2 dimensions")
        if self.imbalance_factor < 1.0:
            raise InvalidConfig("imbalance factor must be >= 1")
        if self.max_count < 1:
            raise InvalidConfig("max_count must be >= 1")
        if self.spectrum is not None and len(self.spectrum) != self.dim:
            raise InvalidConfig(f"spectrum must have length {self.dim}")

    def class_spectrum(self) -> np.ndarray:
        if self.spectrum is not None:
            return np.asarray(self.spectrum, dtype=np.float64)
        # Default: geometric decay so the top-5 directions dominate.
        return 4.0 * 0.55 ** np.arange(self.dim)

    def group_of(self, c: int) -> int:
        if self.basis_sharing is None:
            return c
        return self.basis_sharing.get(c, c)


@dataclass(frozen=True)
class GroundTruth:
    """Generator parameters recorded for oracle checks."""

    counts: np.ndarray
    means: np.ndarray  # (C, P)
    bases: np.ndarray  # (C, P, P), columns are eigen-directions
    spectrum: np.ndarray  # (P,)
    groups: dict[int, int] = field(default_factory=dict)


def longtailed_counts(classes: int, max_count: int, imbalance_factor: float) -> np.ndarray:
    """Exponential count profile n_c = round(max_count * IF^(-c/(C-1)))."""
    c = np.arange(classes)
    return np.maximum(1, np.rint(max_count * imbalance_factor ** (-c / (classes - 1)))).astype(int)


def _random_orthonormal(p: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((p, p)))
    return q * np.sign(np.diag(r))


def _ground_truth(cfg: SynthConfig, rng: np.random.Generator) -> GroundTruth:
    counts = longtailed_counts(cfg.classes, cfg.max_count, cfg.imbalance_factor)
    spectrum = cfg.class_spectrum()
    groups = {c: cfg.group_of(c) for c in range(cfg.classes)}
    group_ids = sorted(set(groups.values()))
    centers = {}
    for g in group_ids:
        direction = np.zeros(cfg.dim)
        direction[g % cfg.dim] = 1.0
        # Rotate centers slightly off the axes so they are not eigen-aligned.
        direction += 0.2 * rng.standard_normal(cfg.dim)
        centers[g] = cfg.mean_scale * direction / np.linalg.norm(direction) * np.sqrt(cfg.dim)
    group_basis = {g: _random_orthonormal(cfg.dim, rng) for g in group_ids}
    means = np.zeros((cfg.classes, cfg.dim))
    bases = np.zeros((cfg.classes, cfg.dim, cfg.dim))
    for c in range(cfg.classes):
        offset = cfg.within_group_spread * rng.standard_normal(cfg.dim)
        means[c] = centers[groups[c]] + offset
        bases[c] = group_basis[groups[c]]
    return GroundTruth(counts, means, bases, spectrum, groups)


def sample_from_truth(truth: GroundTruth, counts: np.ndarray, rng: np.random.Generator) -> FeatureSet:
    """Draw per-class Gaussian samples from recorded generator parameters."""
    scale = np.sqrt(truth.spectrum)
    blocks, labels = [], []
    for c, n in enumerate(np.asarray(counts, dtype=int)):
        g = rng.standard_normal((int(n), truth.spectrum.shape[0]))
        blocks.append(truth.means[c] + (g * scale) @ truth.bases[c].T)
        labels.append(np.full(int(n), c, dtype=np.int32))
    return FeatureSet(np.vstack(blocks).astype(np.float32), np.concatenate(labels))


def generate_longtailed(cfg: SynthConfig, rng: np.random.Generator | None = None) -> tuple[FeatureSet, GroundTruth]:
    """Generate a long-tailed synthetic dataset plus its ground-truth record."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    truth = _ground_truth(cfg, rng)
    return sample_from_truth(truth, truth.counts, rng), truth


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def save_features(fs: FeatureSet, path, fmt: str = "binary") -> None:
    path = Path(path)
    if fmt == "csv":
        _save_csv(fs, path)
    elif fmt == "binary":
        _save_binary(fs, path)
    else:
        raise InvalidConfig(f"unknown format {fmt!r}")


def load_features(path, fmt: str | None = None) -> FeatureSet:
    path = Path(path)
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "binary"
    if fmt == "csv":
        return _load_csv(path)
    if fmt == "binary":
        return _load_binary(path)
    raise InvalidConfig(f"unknown format {fmt!r}")


def _format_value(x: np.float32) -> str:
    return np.format_float_positional(x, unique=True, trim="0")


def _save_csv(fs: FeatureSet, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("label," + ",".join(f"f{i}" for i in range(fs.dim)) + "\n")
        for label, row in zip(fs.labels, fs.features):
            fh.write(str(int(label)) + "," + ",".join(_format_value(v) for v in row) + "\n")


def _load_csv(path: Path) -> FeatureSet:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[0] != "label":
        raise ParseError(f"{path}: line 1: expected header starting with 'label'")
    dim = len(header) - 1
    features, labels = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != dim + 1:
            raise ParseError(f"{path}: line {lineno}: expected {dim + 1} fields, got {len(parts)}")
        try:
            labels.append(int(parts[0]))
            features.append([np.float32(v) for v in parts[1:]])
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from exc
    feats = np.array(features, dtype=np.float32).reshape(len(labels), dim)
    return FeatureSet(feats, np.array(labels, dtype=np.int32))


def _save_binary(fs: FeatureSet, path: Path) -> None:
    n_classes = fs.n_classes
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQII", VERSION, fs.n_samples, fs.dim, n_classes))
        fh.write(fs.labels.astype("<u4").tobytes())
        fh.write(fs.features.astype("<f4").tobytes())


def _load_binary(path: Path) -> FeatureSet:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ParseError(f"{path}: offset 0: bad magic {blob[:4]!r}")
    try:
        version, n, p, _ = struct.unpack_from("<IQII", blob, 4)
    except struct.error as exc:
        raise ParseError(f"{path}: offset 4: truncated header") from exc
    if version != VERSION:
        raise ParseError(f"{path}: unsupported version {version}")
    off = 4 + struct.calcsize("<IQII")
    expected = off + 4 * n + 4 * n * p
    if len(blob) != expected:
        raise DimensionInconsistent(f"{path}: expected {expected} bytes, found {len(blob)}")
    labels = np.frombuffer(blob, dtype="<u4", count=n, offset=off).astype(np.int32)
    feats = np.frombuffer(blob, dtype="<f4", count=n * p, offset=off + 4 * n).reshape(n, p)
    return FeatureSet(feats.copy(), labels)
