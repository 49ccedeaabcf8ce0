"""Three-stage training orchestration and the phenomena validation suite.

Phase 1 trains the whole model on the long-tailed data with no rebalancing.
The class-similarity table, tail-to-head matching and head geometries are
then computed once and frozen. Phase 2 freezes the feature sub-network and
fine-tunes the classifier on balanced batches of real and perturbed tail
features plus real head features. Phase 3 freezes the classifier and
fine-tunes the feature sub-network on the original long-tailed data.

Each phase consumes an independent child RNG stream, so a run stopped after
phase 1 or phase 2 is bit-identical to the corresponding prefix of a full
run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dataio, fur, geometry, model as model_mod
from .dataio import FeatureSet
from .errors import ConfigError, InsufficientModels
from .fur import FurConfig
from .geometry import GeometryBasis
from .model import CLASSIFIER, FEATURES, Model, TrainConfig


@dataclass
class ModelConfig:
    hidden_sizes: tuple[int, ...] = (32,)
    feature_dim: int = 16


@dataclass
class RunReport:
    """Everything a three-stage run produces, reproducible from (config, seed)."""

    config: dict
    seed: int
    loss_curves: dict[str, list[float]] = field(default_factory=dict)
    accuracy: dict[str, dict] = field(default_factory=dict)  # per stage snapshot
    similarity_table: dict[int, list[tuple[int, float]]] = field(default_factory=dict)
    matched_heads: dict[int, int] = field(default_factory=dict)
    top5_ratios: dict[int, float] = field(default_factory=dict)
    similarity_matrix: list[list[float]] | None = None
    tail_geometry_shift: dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "loss_curves": self.loss_curves,
            "accuracy": self.accuracy,
            "similarity_table": {str(c): row for c, row in self.similarity_table.items()},
            "matched_heads": {str(c): h for c, h in self.matched_heads.items()},
            "top5_ratios": {str(c): r for c, r in self.top5_ratios.items()},
            "similarity_matrix": self.similarity_matrix,
            "tail_geometry_shift": {str(c): s for c, s in self.tail_geometry_shift.items()},
        }


def _train_epochs(
    mdl: Model,
    x: np.ndarray,
    y: np.ndarray,
    epochs: int,
    base_lr: float,
    cfg: TrainConfig,
    rng: np.random.Generator,
    frozen: frozenset,
) -> list[float]:
    losses = []
    n = x.shape[0]
    for epoch in range(epochs):
        lr = cfg.lr_at(base_lr, epoch, epochs)
        order = rng.permutation(n)
        total, batches = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            total += model_mod.train_step(mdl, x[idx], y[idx], lr, cfg.momentum, frozen)
            batches += 1
        losses.append(total / max(batches, 1))
    return losses


def _class_geometries(mdl: Model, data: FeatureSet, classes, centered: bool = False) -> dict[int, GeometryBasis]:
    z = model_mod.features_of(mdl, data.features)
    out = {}
    for c in sorted(classes):
        rows = z[data.labels == c]
        out[c] = geometry.geometry_from_matrix(rows, c, centered=centered)
    return out


def run_three_stage(
    data: FeatureSet,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    fur_cfg: FurConfig,
    eval_set: FeatureSet | None = None,
    head_threshold: int = 100,
    group_scale: float = 1.0,
) -> tuple[Model, RunReport]:
    """Run Phase 1-3 end to end and return the model plus its report.

    With m2 = m3 = 0 this degenerates to a plain ERM run; with m3 = 0 it is
    the decoupled variant. Accuracy snapshots after each phase are recorded
    under "phase1" / "phase2" / "phase3".
    """
    counts = data.class_counts()
    head, tail = dataio.head_tail_split(counts, head_threshold)
    if train_cfg.m2 > 0 and (not head or not tail):
        raise ConfigError(f"head/tail split is degenerate: {len(head)} head, {len(tail)} tail classes")
    groups = dataio.evaluation_groups(counts, group_scale)
    eval_set = eval_set if eval_set is not None else data

    seeds = np.random.SeedSequence(train_cfg.seed).spawn(4)
    init_rng, phase1_rng, phase2_rng, phase3_rng = (np.random.default_rng(s) for s in seeds)

    sizes = [data.dim, *model_cfg.hidden_sizes, model_cfg.feature_dim]
    mdl = Model.create(sizes, data.n_classes, init_rng)
    report = RunReport(
        config={
            "model": {"hidden_sizes": list(model_cfg.hidden_sizes), "feature_dim": model_cfg.feature_dim},
            "train": vars(train_cfg).copy(),
            "fur": {k: getattr(fur_cfg, k) for k in ("n_t", "n_a", "k_top", "scale", "sqrt_weights")},
            "head_threshold": head_threshold,
        },
        seed=train_cfg.seed,
    )

    x = data.features.astype(np.float64)
    y = data.labels.astype(np.int64)

    # Phase 1: representation + classifier on the long-tailed data.
    report.loss_curves["phase1"] = _train_epochs(
        mdl, x, y, train_cfg.m1, train_cfg.lr1, train_cfg, phase1_rng, frozenset()
    )
    report.accuracy["phase1"] = model_mod.evaluate(mdl, eval_set.features, eval_set.labels, groups).to_dict()

    # Frozen after phase 1: similarity table, matching, head geometries.
    _, probs = model_mod.forward(mdl, x)
    table = geometry.class_similarity_table(probs, data.labels)
    report.similarity_table = {c: row for c, row in table.ranking.items()}
    matched = {t: geometry.most_similar_head(t, table, head) for t in sorted(tail)} if head and tail else {}
    report.matched_heads = matched
    head_geoms = _class_geometries(mdl, data, head)

    # Phase 2: frozen features, balanced FUR batches for the classifier.
    if train_cfg.m2 > 0:
        z_cache = model_mod.features_of(mdl, x)
        feature_set = FeatureSet(z_cache.astype(np.float32), data.labels)
        theta1_before = mdl.theta1_bytes()
        losses = []
        iterations = max(1, data.n_samples // fur_cfg.batch_size)
        for epoch in range(train_cfg.m2):
            lr = train_cfg.lr_at(train_cfg.lr2, epoch, train_cfg.m2)
            total = 0.0
            for _ in range(iterations):
                batch = fur.compose_balanced_batch(
                    feature_set, tail, head, matched, head_geoms, fur_cfg, phase2_rng
                )
                total += model_mod.train_step(
                    mdl, batch.features, batch.labels, lr, train_cfg.momentum,
                    frozenset({FEATURES}), from_features=True,
                )
            losses.append(total / iterations)
        report.loss_curves["phase2"] = losses
        assert mdl.theta1_bytes() == theta1_before
        report.accuracy["phase2"] = model_mod.evaluate(mdl, eval_set.features, eval_set.labels, groups).to_dict()

    # Phase 3: frozen classifier, fine-tune features on long-tailed data.
    if train_cfg.m3 > 0:
        tail_before = _class_geometries(mdl, data, tail) if tail else {}
        theta2_before = mdl.theta2_bytes()
        report.loss_curves["phase3"] = _train_epochs(
            mdl, x, y, train_cfg.m3, train_cfg.lr3, train_cfg, phase3_rng, frozenset({CLASSIFIER})
        )
        assert mdl.theta2_bytes() == theta2_before
        report.accuracy["phase3"] = model_mod.evaluate(mdl, eval_set.features, eval_set.labels, groups).to_dict()
        tail_after = _class_geometries(mdl, data, tail) if tail else {}
        report.tail_geometry_shift = {
            c: geometry.geometry_similarity(tail_before[c], tail_after[c], min(5, data.dim))
            for c in tail_before
        }

    all_geoms = _class_geometries(mdl, data, sorted(counts))
    k = min(5, model_cfg.feature_dim)
    report.top5_ratios = {c: geometry.top_k_eigenvalue_ratio(g, k) for c, g in all_geoms.items()}
    ordered = [all_geoms[c] for c in sorted(all_geoms)]
    report.similarity_matrix = geometry.pairwise_similarity_matrix(ordered, k).tolist()
    return mdl, report


# ---------------------------------------------------------------------------
# Phenomena validation
# ---------------------------------------------------------------------------


def random_basis_similarity(p: int, top_p: int, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Monte-Carlo draws of the geometry similarity of independent random bases."""
    out = np.empty(trials)
    for i in range(trials):
        a = _random_basis(p, rng)
        b = _random_basis(p, rng)
        out[i] = np.abs(np.einsum("ij,ij->j", a[:, :top_p], b[:, :top_p])).sum()
    return out


def _random_basis(p: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((p, p)))
    return q * np.sign(np.diag(r))


@dataclass
class PhenomenaReport:
    """Results of the four named geometry phenomena checks."""

    top5_ratios: dict[int, float] = field(default_factory=dict)
    isotropic_control: float | None = None
    rank_correlation: float | None = None
    cross_model_similarity: float | None = None
    random_baseline_mean: float | None = None
    random_baseline_std: float | None = None
    tail_matched_to_head_fraction: float | None = None
    lt_balanced_rank_agreement: float | None = None

    def to_dict(self) -> dict:
        d = vars(self).copy()
        d["top5_ratios"] = {str(k): v for k, v in self.top5_ratios.items()}
        return d


def spectral_concentration_check(features: FeatureSet, k: int = 5) -> dict[int, float]:
    """Check 1: top-k eigenvalue ratio per class."""
    out = {}
    for c in sorted(features.class_counts()):
        g = geometry.geometry_from_matrix(features.class_rows(c), c)
        out[c] = geometry.top_k_eigenvalue_ratio(g, min(k, features.dim))
    return out


def _spearman(a: np.ndarray, b: np.ndarray) -> float:
    ra = np.argsort(np.argsort(a)).astype(float)
    rb = np.argsort(np.argsort(b)).astype(float)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra * ra).sum() * (rb * rb).sum())
    return float((ra * rb).sum() / denom) if denom > 0 else 0.0


def similarity_rank_correlation(
    table: geometry.ClassSimilarityTable, geoms: dict[int, GeometryBasis], top_p: int = 5
) -> float:
    """Check 2: mean Spearman correlation, per class, between class-similarity
    scores and geometry similarities over the other classes."""
    correlations = []
    for c, row in table.ranking.items():
        others = [k for k, _ in row]
        scores = np.array([s for _, s in row])
        geo = np.array([geometry.geometry_similarity(geoms[c], geoms[k], top_p) for k in others])
        correlations.append(_spearman(scores, geo))
    return float(np.mean(correlations))


def cross_model_similarity(
    geom_sets: list[dict[int, GeometryBasis]], top_p: int = 5
) -> float:
    """Check 3: mean same-class geometry similarity across model pairs."""
    if len(geom_sets) < 2:
        raise InsufficientModels("need at least two models' geometries")
    sims = []
    for i in range(len(geom_sets)):
        for j in range(i + 1, len(geom_sets)):
            shared = set(geom_sets[i]) & set(geom_sets[j])
            for c in sorted(shared):
                sims.append(geometry.geometry_similarity(geom_sets[i][c], geom_sets[j][c], top_p))
    return float(np.mean(sims))


def tail_head_affinity(table: geometry.ClassSimilarityTable, head: set[int], tail: set[int]) -> float:
    """Check 4: fraction of tail classes whose most similar class is a head class."""
    if not tail:
        return 0.0
    hits = sum(1 for t in sorted(tail) if table.most_similar(t) in head)
    return hits / len(tail)


def table_rank_agreement(a: geometry.ClassSimilarityTable, b: geometry.ClassSimilarityTable) -> float:
    """Mean Spearman correlation between matching rows of two similarity tables."""
    correlations = []
    for c in sorted(set(a.ranking) & set(b.ranking)):
        others = sorted(k for k, _ in a.ranking[c])
        sa = {k: s for k, s in a.ranking[c]}
        sb = {k: s for k, s in b.ranking[c]}
        if not all(k in sb for k in others):
            continue
        correlations.append(_spearman(np.array([sa[k] for k in others]), np.array([sb[k] for k in others])))
    return float(np.mean(correlations)) if correlations else 0.0
