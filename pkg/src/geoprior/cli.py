"""Command-line front end.

Subcommands: synth, analyze, similarity, randvec, augment, train, phenomena,
project. All tabular output is CSV, all structured output JSON; reruns with
the same seed produce byte-identical files. The effective configuration is
echoed into the JSON outputs (feature files keep their fixed formats, so
their configuration lands in the accompanying manifest/config JSON instead).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, dataio, fur, geometry, model as model_mod, pipeline, randvec
from .errors import ConfigError, DataError, GeopriorError, NumericError
from .fur import FurConfig
from .model import TrainConfig
from .pipeline import ModelConfig

SEED_ENV = "GEOPRIOR_SEED"


def _default_seed() -> int:
    return int(os.environ.get(SEED_ENV, "0"))


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _sig6(x: float) -> str:
    return f"{x:.6g}"


def _write_matrix_csv(path: Path, matrix: np.ndarray, labels: list) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("class," + ",".join(str(l) for l in labels) + "\n")
        for label, row in zip(labels, matrix):
            fh.write(str(label) + "," + ",".join(_sig6(v) for v in row) + "\n")


def _parse_groups(spec: str | None) -> dict[int, int] | None:
    if not spec:
        return None
    groups = {}
    for part in spec.split(","):
        cls, grp = part.split(":")
        groups[int(cls)] = int(grp)
    return groups


def cmd_synth(args) -> int:
    out = _out_dir(args.out)
    cfg = dataio.SynthConfig(
        classes=args.classes,
        dim=args.dim,
        imbalance_factor=args.imbalance_factor,
        max_count=args.max_count,
        basis_sharing=_parse_groups(args.groups),
        mean_scale=args.mean_scale,
        within_group_spread=args.spread,
        seed=args.seed,
    )
    data, truth = dataio.generate_longtailed(cfg)
    dataio.save_features(data, out / "dataset.fgeo", "binary")
    dataio.save_features(data, out / "dataset.csv", "csv")
    manifest = {
        "config": {
            "classes": cfg.classes,
            "dim": cfg.dim,
            "imbalance_factor": cfg.imbalance_factor,
            "max_count": cfg.max_count,
            "basis_sharing": {str(k): v for k, v in (cfg.basis_sharing or {}).items()},
            "mean_scale": cfg.mean_scale,
            "within_group_spread": cfg.within_group_spread,
        },
        "seed": cfg.seed,
        "counts": truth.counts.tolist(),
        "means": truth.means.tolist(),
        "spectrum": truth.spectrum.tolist(),
        "basis_groups": {str(k): v for k, v in truth.groups.items()},
    }
    _write_json(out / "manifest.json", manifest)
    return 0


def _load(args) -> dataio.FeatureSet:
    return dataio.load_features(args.features)


def cmd_analyze(args) -> int:
    out = _out_dir(args.out)
    data = _load(args)
    classes = sorted(data.class_counts())
    geoms = [geometry.geometry_of(data, c, centered=args.centered) for c in classes]
    k = min(args.top, data.dim)

    with open(out / "eigenvalues.csv", "w", newline="") as fh:
        fh.write("class," + ",".join(f"lambda{i}" for i in range(data.dim)) + "\n")
        for g in geoms:
            fh.write(str(g.class_id) + "," + ",".join(_sig6(v) for v in g.eigenvalues) + "\n")
    with open(out / "topk_ratios.csv", "w", newline="") as fh:
        fh.write(f"class,top{k}_ratio\n")
        for g in geoms:
            fh.write(f"{g.class_id},{_sig6(geometry.top_k_eigenvalue_ratio(g, k))}\n")
    sim = geometry.pairwise_similarity_matrix(geoms, k)
    _write_matrix_csv(out / "similarity_matrix.csv", sim, classes)
    _write_json(
        out / "analysis.json",
        {
            "config": {"features": str(args.features), "top": k, "centered": args.centered},
            "seed": args.seed,
            "classes": classes,
            "similarity_matrix": [[round(v, 10) for v in row] for row in sim.tolist()],
            "topk_ratios": {str(g.class_id): geometry.top_k_eigenvalue_ratio(g, k) for g in geoms},
        },
    )
    for pair in args.pair or []:
        a, b = (int(v) for v in pair.split(":"))
        m = geometry.alignment_matrix(geoms[classes.index(a)], geoms[classes.index(b)])
        _write_matrix_csv(out / f"alignment_{a}_{b}.csv", m, list(range(data.dim)))
    return 0


def cmd_similarity(args) -> int:
    out = _out_dir(args.out)
    data = _load(args)
    classes = sorted(data.class_counts())
    geoms = [geometry.geometry_of(data, c, centered=args.centered) for c in classes]
    k = min(args.top, data.dim)
    sim = geometry.pairwise_similarity_matrix(geoms, k)
    _write_matrix_csv(out / "similarity_matrix.csv", sim, classes)
    _write_json(
        out / "similarity.json",
        {
            "config": {"features": str(args.features), "top": k, "centered": args.centered},
            "seed": args.seed,
            "classes": classes,
            "matrix": [[round(v, 10) for v in row] for row in sim.tolist()],
        },
    )
    return 0


def cmd_randvec(args) -> int:
    out = _out_dir(args.out)
    p = args.dim
    grid = args.grid
    with open(out / "inner_product_pdf.csv", "w", newline="") as fh:
        fh.write("delta,analytic\n")
        for i in range(grid):
            d = -1.0 + 2.0 * i / (grid - 1)
            fh.write(f"{d:.12g},{randvec.inner_product_pdf(p, d):.12g}\n")
    with open(out / "angle_pdf_cdf.csv", "w", newline="") as fh:
        fh.write("theta,pdf,cdf\n")
        for i in range(grid):
            t = math.pi * i / (grid - 1)
            fh.write(f"{t:.12g},{randvec.angle_pdf(p, t):.12g},{randvec.angle_cdf(p, t):.12g}\n")
    payload = {
        "config": {"dim": p, "grid": grid, "draws": args.draws, "bins": args.bins},
        "seed": args.seed,
        "sphere_surface_area": randvec.sphere_surface_area(p),
    }
    if args.draws:
        rng = np.random.default_rng(args.seed)
        report = randvec.mc_validate_pdf(p, args.draws, args.bins, rng)
        mid = (report.bin_edges[:-1] + report.bin_edges[1:]) / 2
        with open(out / "mc_histogram.csv", "w", newline="") as fh:
            fh.write("x,analytic,empirical\n")
            for x, a, e in zip(mid, report.analytic, report.empirical):
                fh.write(f"{x:.12g},{a:.12g},{e:.12g}\n")
        payload["mc_max_abs_deviation"] = report.max_abs_deviation
    _write_json(out / "randvec.json", payload)
    return 0


def cmd_augment(args) -> int:
    data = _load(args)
    counts = data.class_counts()
    head, tail = dataio.head_tail_split(counts, args.head_threshold)
    if not head or not tail:
        raise ConfigError(f"head/tail split is degenerate at threshold {args.head_threshold}")
    geoms = {c: geometry.geometry_of(data, c) for c in sorted(counts)}
    # Match each tail class to the head class with the most similar geometry.
    match = {}
    for t in sorted(tail):
        best = max(sorted(head), key=lambda h: geometry.geometry_similarity(geoms[t], geoms[h], min(5, data.dim)))
        match[t] = best
    cfg = FurConfig(n_t=1, n_a=args.n_a, k_top=args.k_top, scale=args.scale, sqrt_weights=args.sqrt)
    rng = np.random.default_rng(args.seed)

    out_path = Path(args.out_file)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        fh.write("label," + ",".join(f"f{i}" for i in range(data.dim)) + ",provenance\n")
        for label, row in zip(data.labels, data.features):
            tag = fur.REAL_TAIL if int(label) in tail else fur.REAL_HEAD
            fh.write(f"{int(label)}," + ",".join(f"{v:.9g}" for v in row) + f",{tag}\n")
            if int(label) in tail:
                for _ in range(args.n_a):
                    z = fur.fur_perturb(row.astype(np.float64), geoms[match[int(label)]], cfg, rng)
                    fh.write(f"{int(label)}," + ",".join(f"{v:.9g}" for v in z) + f",{fur.SYNTHETIC_TAIL}\n")
    return 0


def cmd_train(args) -> int:
    out = _out_dir(args.out)
    data = dataio.load_features(args.data)
    eval_set = dataio.load_features(args.eval) if args.eval else None
    m2, m3 = args.m2, args.m3
    if args.erm:
        m2 = m3 = 0
    if args.no_phase3:
        m3 = 0
    train_cfg = TrainConfig(
        m1=args.m1, m2=m2, m3=m3,
        lr1=args.lr1, lr2=args.lr2, lr3=args.lr3,
        momentum=args.momentum, batch_size=args.batch_size,
        lr_decay=args.lr_decay, seed=args.seed,
    )
    model_cfg = ModelConfig(hidden_sizes=tuple(args.hidden), feature_dim=args.feature_dim)
    fur_cfg = FurConfig(n_t=args.n_t, n_a=args.n_a, k_top=args.k_top, scale=args.scale, sqrt_weights=args.sqrt)
    mdl, report = pipeline.run_three_stage(
        data, model_cfg, train_cfg, fur_cfg, eval_set=eval_set,
        head_threshold=args.head_threshold, group_scale=args.group_scale,
    )
    _write_json(out / "report.json", report.to_dict())
    model_mod.save_model(mdl, out / "model.gpmd")
    with open(out / "loss_curves.csv", "w", newline="") as fh:
        fh.write("phase,epoch,loss\n")
        for phase, losses in report.loss_curves.items():
            for epoch, loss in enumerate(losses):
                fh.write(f"{phase},{epoch},{loss:.12g}\n")
    with open(out / "accuracy.csv", "w", newline="") as fh:
        fh.write("phase,group,accuracy\n")
        for phase, acc in report.accuracy.items():
            fh.write(f"{phase},overall,{_sig6(acc['overall'])}\n")
            for group, value in acc["per_group"].items():
                fh.write(f"{phase},{group},{_sig6(value)}\n")
    return 0


def cmd_phenomena(args) -> int:
    out = _out_dir(args.out)
    data = dataio.load_features(args.data)
    counts = data.class_counts()
    head, tail = dataio.head_tail_split(counts, args.head_threshold)
    report = pipeline.PhenomenaReport()
    report.top5_ratios = pipeline.spectral_concentration_check(data, args.top)
    report.isotropic_control = min(args.top, data.dim) / data.dim

    models = [model_mod.load_model(p) for p in args.models or []]
    if models:
        x = data.features.astype(np.float64)
        _, probs = model_mod.forward(models[0], x)
        table = geometry.class_similarity_table(probs, data.labels)
        geom_sets = []
        for mdl in models:
            z = model_mod.features_of(mdl, x)
            geom_sets.append(
                {c: geometry.geometry_from_matrix(z[data.labels == c], c) for c in sorted(counts)}
            )
        report.rank_correlation = pipeline.similarity_rank_correlation(table, geom_sets[0], args.top)
        if head and tail:
            report.tail_matched_to_head_fraction = pipeline.tail_head_affinity(table, head, tail)
        if len(models) >= 2:
            report.cross_model_similarity = pipeline.cross_model_similarity(geom_sets, args.top)
            rng = np.random.default_rng(args.seed)
            p = models[0].feature_dim
            baseline = pipeline.random_basis_similarity(p, min(args.top, p), 2000, rng)
            report.random_baseline_mean = float(baseline.mean())
            report.random_baseline_std = float(baseline.std())
        if args.balanced:
            balanced = dataio.load_features(args.balanced)
            _, probs_b = model_mod.forward(models[0], balanced.features.astype(np.float64))
            table_b = geometry.class_similarity_table(probs_b, balanced.labels)
            report.lt_balanced_rank_agreement = pipeline.table_rank_agreement(table, table_b)
    payload = report.to_dict()
    payload["config"] = {
        "data": str(args.data),
        "models": list(args.models or []),
        "top": args.top,
        "head_threshold": args.head_threshold,
    }
    payload["seed"] = args.seed
    _write_json(out / "phenomena.json", payload)
    return 0


def cmd_project(args) -> int:
    data = _load(args)
    x = data.features.astype(np.float64)
    g = geometry.geometry_from_matrix(x, -1, centered=True)
    coords = (x - x.mean(axis=0)) @ g.eigenvectors[:, :2]
    out_path = Path(args.out_file)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        fh.write("label,x,y\n")
        for label, (cx, cy) in zip(data.labels, coords):
            fh.write(f"{int(label)},{cx:.9g},{cy:.9g}\n")
    return 0


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    # Config-file values become parser defaults; explicit flags override them.
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    cfg = json.loads(Path(argv[i + 1]).read_text())
    defaults = {k.replace("-", "_"): v for k, v in cfg.items()}
    parser.set_defaults(**defaults)
    for action in parser._subparsers._group_actions:  # noqa: SLF001 - argparse offers no API
        for sub in action.choices.values():
            sub.set_defaults(**{k: v for k, v in defaults.items() if any(k == a.dest for a in sub._actions)})
    return argv[:i] + argv[i + 2 :]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geoprior", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=_default_seed())
        p.add_argument("--config", help="JSON config file; flags override its values")

    p = sub.add_parser("synth", help="generate a synthetic long-tailed dataset")
    common(p)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--if", dest="imbalance_factor", type=float, default=100.0)
    p.add_argument("--max", dest="max_count", type=int, default=1000)
    p.add_argument(
        "--groups",
        default="0:0,9:0,1:1,8:1,2:2,7:2,3:3,6:3,4:4,5:4",
        help="basis sharing, e.g. '0:0,9:0,1:1,8:1'; '' disables sharing",
    )
    p.add_argument("--mean-scale", type=float, default=1.0)
    p.add_argument("--spread", type=float, default=0.2)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="per-class geometry diagnostics of a feature file")
    common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--centered", action="store_true")
    p.add_argument("--pair", action="append", help="emit alignment matrix for 'a:b'")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("similarity", help="pairwise geometry-similarity matrix")
    common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--centered", action="store_true")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("randvec", help="angle / inner-product distribution tables")
    common(p)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--draws", type=int, default=0, help="Monte-Carlo draws (0 = skip)")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_randvec)

    p = sub.add_parser("augment", help="write a feature file with FUR-augmented tail rows")
    common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--na", dest="n_a", type=int, default=3)
    p.add_argument("--k-top", type=int)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--sqrt", action="store_true", help="weight directions by sqrt(lambda)")
    p.add_argument("--head-threshold", type=int, default=100)
    p.add_argument("--out-file", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="three-stage training on a feature file")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--eval", help="evaluation feature file (default: train data)")
    p.add_argument("--m1", type=int, default=30)
    p.add_argument("--m2", type=int, default=10)
    p.add_argument("--m3", type=int, default=5)
    p.add_argument("--lr1", type=float, default=0.05)
    p.add_argument("--lr2", type=float, default=0.02)
    p.add_argument("--lr3", type=float, default=0.0001)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr-decay", choices=["cosine", "linear", "none"], default="cosine")
    p.add_argument("--hidden", type=int, nargs="*", default=[32])
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--n-t", type=int, default=8)
    p.add_argument("--n-a", type=int, default=3)
    p.add_argument("--k-top", type=int)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--sqrt", action=argparse.BooleanOptionalAction, default=True,
                   help="weight directions by sqrt(lambda) instead of lambda")
    p.add_argument("--head-threshold", type=int, default=100)
    p.add_argument("--group-scale", type=float, default=1.0)
    p.add_argument("--erm", action="store_true", help="plain ERM: m2 = m3 = 0")
    p.add_argument("--no-phase3", action="store_true", help="decoupled variant: m3 = 0")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("phenomena", help="run the geometry phenomena checks")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--models", nargs="*", help="GPMD checkpoints (>=2 for cross-model check)")
    p.add_argument("--balanced", help="balanced counterpart feature file")
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--head-threshold", type=int, default=100)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_phenomena)

    p = sub.add_parser("project", help="PCA 2-D coordinates of a feature file")
    common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--out-file", required=True)
    p.set_defaults(func=cmd_project)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except GeopriorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
