"""Per-class covariance eigen-geometries and similarity measures.

A class geometry is the descending eigen-spectrum of its feature covariance;
geometry similarity between two classes sums the absolute inner products of
rank-paired eigenvectors. Class similarity ranks other classes by a class's
averaged prediction score.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import (
    DimensionMismatch,
    EmptyClass,
    MissingClass,
    NoHeadClass,
    ShapeMismatch,
    UnknownClass,
    ZeroSpectrum,
)

DEFAULT_TOP_P = 5


@dataclass(frozen=True)
class GeometryBasis:
    """Eigen-geometry of one class's feature distribution."""

    class_id: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sample_count: int

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]


def geometry_from_matrix(
    features: np.ndarray, class_id: int, sample_count: int | None = None, centered: bool = False
) -> GeometryBasis:
    """Geometry of an (n, P) feature matrix: eigendecomposition of its covariance.

    Eigenvalues within 1e-9 * trace of zero are clamped to exactly zero so
    rank-deficient covariances report clean trailing zeros.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ShapeMismatch(f"expected (n, P) features, got shape {features.shape}")
    cov = linalg.covariance(features.T, centered=centered)
    eig = linalg.sym_eigen(cov)
    values = linalg.clamp_small_eigenvalues(eig.eigenvalues, float(np.trace(cov)))
    n = features.shape[0] if sample_count is None else sample_count
    return GeometryBasis(class_id, values, eig.eigenvectors, n)


def geometry_of(features, class_id: int, centered: bool = False) -> GeometryBasis:
    """Geometry of one class from a labeled FeatureSet."""
    labels = np.asarray(features.labels)
    if class_id not in labels:
        raise UnknownClass(f"class {class_id} has no samples")
    rows = np.asarray(features.features)[labels == class_id]
    if rows.shape[0] == 0:
        raise EmptyClass(f"class {class_id} is empty")
    return geometry_from_matrix(rows, class_id, centered=centered)


def _check_same_dim(a: GeometryBasis, b: GeometryBasis) -> None:
    if a.dim != b.dim:
        raise DimensionMismatch(f"geometry dimensions differ: {a.dim} vs {b.dim}")


def geometry_similarity(a: GeometryBasis, b: GeometryBasis, top_p: int = DEFAULT_TOP_P) -> float:
    """Sum over the first top_p rank-paired eigenvector pairs of |<xi_a, xi_b>|.

    Bounded by [0, top_p]; symmetric in (a, b); invariant to sign flips.
    """
    _check_same_dim(a, b)
    if not 1 <= top_p <= a.dim:
        raise DimensionMismatch(f"top_p={top_p} outside [1, {a.dim}]")
    dots = np.einsum("ij,ij->j", a.eigenvectors[:, :top_p], b.eigenvectors[:, :top_p])
    return float(np.abs(dots).sum())


def alignment_matrix(a: GeometryBasis, b: GeometryBasis) -> np.ndarray:
    """Full matrix of inner products M[i, j] = <xi_a^i, xi_b^j>."""
    _check_same_dim(a, b)
    return a.eigenvectors.T @ b.eigenvectors


def diagonal_mass(m: np.ndarray, k: int) -> float:
    """Sum of the first k absolute diagonal entries of an alignment matrix."""
    return float(np.abs(np.diagonal(m)[:k]).sum())


def top_k_eigenvalue_ratio(g: GeometryBasis, k: int) -> float:
    """Fraction of total eigenvalue mass carried by the k largest eigenvalues."""
    if not 1 <= k <= g.dim:
        raise DimensionMismatch(f"k={k} outside [1, {g.dim}]")
    total = float(g.eigenvalues.sum())
    if total <= 0.0:
        raise ZeroSpectrum("eigenvalue sum is zero")
    return float(g.eigenvalues[:k].sum()) / total


@dataclass(frozen=True)
class ClassSimilarityTable:
    """Per class: other classes ranked by averaged prediction score, descending.

    Ties are broken by lower class index so the ranking is deterministic.
    """

    ranking: dict[int, list[tuple[int, float]]] = field(default_factory=dict)

    def row(self, c: int) -> list[tuple[int, float]]:
        if c not in self.ranking:
            raise UnknownClass(f"class {c} not in similarity table")
        return self.ranking[c]

    def most_similar(self, c: int) -> int:
        row = self.row(c)
        if not row:
            raise MissingClass(f"class {c} has no ranked peers")
        return row[0][0]


def class_similarity_table(scores: np.ndarray, labels: np.ndarray) -> ClassSimilarityTable:
    """Rank, for every class, the other classes by its averaged score vector.

    `scores` is (N, C): one prediction-score vector per sample. Whether the
    scores are softmax probabilities or raw logits is the caller's choice;
    the ranking logic is identical.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise ShapeMismatch(f"scores shape {scores.shape} does not match {labels.shape[0]} labels")
    n_classes = scores.shape[1]
    present = np.unique(labels)
    if present.size and (present.min() < 0 or present.max() >= n_classes):
        raise MissingClass(f"labels outside [0, {n_classes})")
    ranking: dict[int, list[tuple[int, float]]] = {}
    for c in present:
        mean = scores[labels == c].mean(axis=0)
        others = [k for k in range(n_classes) if k != c]
        # Stable sort on descending score keeps the lower index first on ties.
        others.sort(key=lambda k: -mean[k])
        ranking[int(c)] = [(k, float(mean[k])) for k in others]
    return ClassSimilarityTable(ranking)


def most_similar_head(c: int, table: ClassSimilarityTable, head_set: set[int]) -> int:
    """Highest-ranked member of head_set in class c's similarity row."""
    if not head_set:
        raise NoHeadClass("head set is empty")
    for k, _ in table.row(c):
        if k in head_set:
            return k
    raise NoHeadClass(f"no head class appears in the ranking of class {c}")


def pairwise_similarity_matrix(geometries: list[GeometryBasis], top_p: int = DEFAULT_TOP_P) -> np.ndarray:
    """Symmetric matrix of geometry similarities between all given classes."""
    n = len(geometries)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            s = geometry_similarity(geometries[i], geometries[j], top_p)
            out[i, j] = out[j, i] = s
    return out
