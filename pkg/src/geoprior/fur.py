"""Feature Uncertainty Representation and balanced-batch composition.

A tail feature z is perturbed along the matched head class's eigen-geometry:
z + scale * sum_j eps_j * w_j * xi_j with eps_j ~ N(0, 1) i.i.d., where w_j
is the j-th head eigenvalue (or its square root in sqrt mode). The balanced
batch pairs N_T real tail features and their N_A perturbations each with
N_T * (1 + N_A) real head features, 2 * N_T * (1 + N_A) rows in total.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import FeatureSet
from .errors import DimensionMismatch, InsufficientHeadData, InvalidConfig, UnmatchedTail
from .geometry import GeometryBasis

REAL_TAIL = "real-tail"
SYNTHETIC_TAIL = "synthetic-tail"
REAL_HEAD = "real-head"


@dataclass(frozen=True)
class FurConfig:
    """Perturbation and batch-composition parameters.

    k_top limits the perturbation to the leading eigenvectors (None = all);
    sqrt_weights switches the per-direction weight from lambda_j to
    sqrt(lambda_j).
    """

    n_t: int = 32
    n_a: int = 3
    k_top: int | None = None
    scale: float = 1.0
    sqrt_weights: bool = False

    def __post_init__(self):
        if self.n_t < 1:
            raise InvalidConfig(f"n_t must be >= 1, got {self.n_t}")
        if self.n_a < 0:
            raise InvalidConfig(f"n_a must be >= 0, got {self.n_a}")
        if self.k_top is not None and self.k_top < 1:
            raise InvalidConfig(f"k_top must be >= 1, got {self.k_top}")
        if self.scale < 0:
            raise InvalidConfig(f"scale must be >= 0, got {self.scale}")

    @property
    def batch_size(self) -> int:
        return 2 * self.n_t * (1 + self.n_a)

    def direction_weights(self, geometry: GeometryBasis) -> np.ndarray:
        k = geometry.dim if self.k_top is None else min(self.k_top, geometry.dim)
        w = geometry.eigenvalues[:k]
        if self.sqrt_weights:
            w = np.sqrt(np.maximum(w, 0.0))
        return self.scale * w


def fur_perturb(
    z: np.ndarray,
    head_geometry: GeometryBasis,
    cfg: FurConfig,
    rng: np.random.Generator,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """One uncertainty draw of a tail feature along the head eigen-geometry.

    `noise` overrides the standard-normal draw (test hook); it must have one
    entry per perturbed eigendirection.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (head_geometry.dim,):
        raise DimensionMismatch(f"feature shape {z.shape} vs geometry dim {head_geometry.dim}")
    weights = cfg.direction_weights(head_geometry)
    k = weights.shape[0]
    eps = rng.standard_normal(k) if noise is None else np.asarray(noise, dtype=np.float64)
    if eps.shape != (k,):
        raise DimensionMismatch(f"noise shape {eps.shape}, expected ({k},)")
    return z + head_geometry.eigenvectors[:, :k] @ (eps * weights)


@dataclass(frozen=True)
class AugmentedBatch:
    """Balanced batch of real tail, synthetic tail and real head rows.

    `source_rows` points each row at the real-tail row index it perturbs
    (-1 for real rows).
    """

    features: np.ndarray
    labels: np.ndarray
    provenance: tuple[str, ...]
    source_rows: np.ndarray

    def provenance_counts(self) -> dict[str, int]:
        counts = {REAL_TAIL: 0, SYNTHETIC_TAIL: 0, REAL_HEAD: 0}
        for tag in self.provenance:
            counts[tag] += 1
        return counts


def compose_balanced_batch(
    dataset: FeatureSet,
    tail_classes: set[int],
    head_classes: set[int],
    match: dict[int, int],
    geometries: dict[int, GeometryBasis],
    cfg: FurConfig,
    rng: np.random.Generator,
) -> AugmentedBatch:
    """One balanced mini-batch of 2 * N_T * (1 + N_A) feature rows.

    N_T tail rows are sampled uniformly over all tail samples, each expanded
    with N_A perturbations along its class's matched head geometry; head rows
    are sampled uniformly over the pooled head samples. Row order is shuffled.
    """
    if not tail_classes or not head_classes:
        raise InvalidConfig("head and tail class sets must both be non-empty")
    if tail_classes & head_classes:
        raise InvalidConfig("head and tail class sets overlap")
    labels = dataset.labels
    tail_pool = np.flatnonzero(np.isin(labels, sorted(tail_classes)))
    head_pool = np.flatnonzero(np.isin(labels, sorted(head_classes)))
    if tail_pool.size == 0:
        raise UnmatchedTail("no samples belong to a tail class")
    if head_pool.size == 0:
        raise InsufficientHeadData("no samples belong to a head class")

    tail_rows = rng.choice(tail_pool, size=cfg.n_t, replace=cfg.n_t > tail_pool.size)
    head_rows = rng.choice(head_pool, size=cfg.n_t * (1 + cfg.n_a), replace=True)

    features = [dataset.features[tail_rows].astype(np.float64)]
    out_labels = [labels[tail_rows]]
    provenance = [REAL_TAIL] * cfg.n_t
    sources = list(range(cfg.n_t))
    for slot, row in enumerate(tail_rows):
        t = int(labels[row])
        if t not in match:
            raise UnmatchedTail(f"tail class {t} has no matched head class")
        head = match[t]
        if head not in geometries:
            raise UnmatchedTail(f"matched head class {head} has no geometry")
        geom = geometries[head]
        z = dataset.features[row].astype(np.float64)
        synth = np.stack([fur_perturb(z, geom, cfg, rng) for _ in range(cfg.n_a)]) if cfg.n_a else np.empty((0, z.size))
        features.append(synth)
        out_labels.append(np.full(cfg.n_a, t, dtype=labels.dtype))
        provenance += [SYNTHETIC_TAIL] * cfg.n_a
        sources += [slot] * cfg.n_a
    features.append(dataset.features[head_rows].astype(np.float64))
    out_labels.append(labels[head_rows])
    provenance += [REAL_HEAD] * head_rows.size
    sources += [-1] * head_rows.size

    all_features = np.vstack(features)
    all_labels = np.concatenate(out_labels)
    sources_arr = np.array(sources)
    sources_arr[np.array(provenance) == REAL_TAIL] = -1

    order = rng.permutation(all_features.shape[0])
    slot_to_row = {slot: int(np.flatnonzero(order == slot)[0]) for slot in range(cfg.n_t)}
    remapped = np.array([slot_to_row[s] if s >= 0 else -1 for s in sources_arr[order]])
    return AugmentedBatch(
        all_features[order],
        all_labels[order],
        tuple(provenance[i] for i in order),
        remapped,
    )
