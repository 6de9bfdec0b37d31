"""Command line: ``n2n {taps,train,probe,metrics,export-embeddings}``.

Exit codes: 0 success, 2 usage or validation error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .datasets import load_dataset, make_citation_like
from .encoder import EncoderParams
from .graph import GraphFormatError, load_edge_list, load_features, load_labels, load_split, \
    make_split, write_id_map, write_split
from .metrics import collapse_report
from .objectives import feature_smoothness, gtv
from .taps import build_positive_table, label_smoothness, taps_partition
from .tensor import DimensionError, load_matrix, save_matrix
from .trainer import CONSTRAINTS, ConfigError, TrainConfig, encode, linear_probe, run, substream

logger = logging.getLogger("n2n")

# ValueError covers malformed numbers, labels and splits in input files
USAGE_ERRORS = (ConfigError, GraphFormatError, DimensionError, FileNotFoundError,
                IsADirectoryError, ValueError)


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _labels_aligned(path, graph):
    """Labels are stored per original id; reorder them to compacted ids."""
    y = load_labels(path)
    ids = graph.original_ids if graph.original_ids is not None else np.arange(graph.num_nodes)
    if ids.max() >= y.size:
        raise DimensionError(f"{path}: {y.size} labels but node ids reach {ids.max()}")
    return y[ids]


# ---------------------------------------------------------------------------
# taps


def cmd_taps(args) -> int:
    g = load_edge_list(args.graph)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = build_positive_table(g, args.k)
    table.to_csv(out / "positives.csv")
    part = taps_partition(g)
    part.to_csv(out / "partition.csv")
    write_id_map(g, out / "id_map.csv")
    stats = {
        "num_nodes": g.num_nodes,
        "num_edges": g.num_edges,
        "isolated_nodes": int(g.isolated.sum()),
        "k": args.k,
        "components": part.n_components,
        "component_size_histogram": [[s, c] for s, c in part.size_histogram().items()],
    }
    if args.labels:
        y = _labels_aligned(args.labels, g)
        stats["label_smoothness"] = {"all": label_smoothness(g.edges(), y)}
        for k in range(1, 6):
            stats["label_smoothness"][f"taps_{k}"] = label_smoothness(
                build_positive_table(g, k).edges(), y)
        purity = part.label_purity(y)
        order = np.argsort(-part.sizes, kind="stable")[:10]
        stats["largest_components"] = [
            {"component": int(c), "size": int(part.sizes[c]), "label_purity": float(purity[c])}
            for c in order]
    _write_json(out / "stats.json", stats)
    print(f"taps k={args.k} nodes={g.num_nodes} components={part.n_components}")
    return 0


# ---------------------------------------------------------------------------
# train


def _load_for_config(cfg: TrainConfig):
    if cfg.dataset == "citation-like":
        ds = make_citation_like(seed=0)
    else:
        p = Path(cfg.dataset)
        ds = load_dataset(p.name, p.parent) if p.is_dir() else load_dataset(cfg.dataset)
    split = None
    if ds.labels is not None:
        if cfg.split_file:
            split = load_split(cfg.split_file)
            split.check_nodes(ds.graph.num_nodes)
        else:
            seed = int(substream(cfg.seed, "split").integers(2 ** 31))
            split = make_split(ds.labels, "stratified", seed, cfg.train_frac, cfg.val_frac)
    return ds, split


def _train_one(cfg: TrainConfig, out: Path, config_path: str) -> str:
    ds, split = _load_for_config(cfg)
    params, emb, report = run(cfg, ds.graph, ds.features, ds.labels, split)
    out.mkdir(parents=True, exist_ok=True)
    report.write(out, include_timing=False)
    _write_json(out / "timing.json", {"wall_clock_seconds": report.wall_clock})
    params.save(out / "checkpoint")
    _write_json(out / "checkpoint" / "config.json", cfg.to_dict())
    save_matrix(out / "embeddings.csv", emb)
    if split is not None:
        write_split(split, out / "split.txt")
    sources = list(ds.sources) + ([Path(cfg.split_file)] if cfg.split_file else [])
    _write_json(out / "manifest.json", {
        "config_path": config_path,
        "config": cfg.to_dict(),
        "inputs": {str(p): _digest(p) for p in sources},
        "output_dir": str(out),
        "seed": cfg.seed,
    })
    test = "nan" if report.test_f1 is None else f"{report.test_f1:.4f}"
    return f"{cfg.pipeline} {cfg.constraint} {ds.name} {cfg.seed} {test}"


def cmd_train(args) -> int:
    cfg = TrainConfig.from_json(args.config)
    seeds = args.seed if args.seed else [cfg.seed]
    out = Path(args.out)
    configs = [cfg.replace(seed=s) for s in seeds]
    dirs = [out if len(seeds) == 1 else out / f"seed-{s}" for s in seeds]
    if args.jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            lines = list(pool.map(_train_one, configs, dirs, [args.config] * len(configs)))
    else:
        lines = [_train_one(c, d, args.config) for c, d in zip(configs, dirs)]
    for line in lines:
        print(line)
    return 0


# ---------------------------------------------------------------------------
# probe, metrics, export


def cmd_probe(args) -> int:
    emb = load_matrix(args.embeddings)
    y = load_labels(args.labels)
    if y.size != emb.shape[0]:
        raise DimensionError(f"{emb.shape[0]} embedding rows for {y.size} labels")
    seed = args.seed[0] if args.seed else 0
    split = load_split(args.split) if args.split else make_split(y, seed=seed)
    split.check_nodes(y.size)
    res = linear_probe(emb, y, split, args.epochs, args.lr, args.l2, seed)
    out = Path(args.out)
    _write_json(out / "probe.json", {"val_f1": res.val_f1, "test_f1": res.test_f1,
                                     "best_epoch": res.best_epoch, "seed": seed})
    save_matrix(out / "probe_weight.csv", res.weight)
    print(f"probe val_f1={res.val_f1:.4f} test_f1={res.test_f1:.4f}")
    return 0


def cmd_metrics(args) -> int:
    emb = load_matrix(args.embeddings)
    g = load_edge_list(args.graph)
    if emb.shape[0] != g.num_nodes:
        raise DimensionError(f"{emb.shape[0]} embedding rows for {g.num_nodes} graph nodes")
    rep = collapse_report(emb, g)
    result = {
        "gtv": gtv(emb, g),
        "feature_smoothness": feature_smoothness(emb, g),
        "collapse": rep.to_dict(),
    }
    if args.labels:
        result["label_smoothness"] = label_smoothness(g.edges(), _labels_aligned(args.labels, g))
    out = Path(args.out)
    _write_json(out if out.suffix == ".json" else out / "metrics.json", result)
    print(f"metrics gtv={result['gtv']:.6g} effective_rank={rep.effective_rank:.3f} "
          f"degenerate={rep.degenerate}")
    return 0


def cmd_export(args) -> int:
    ckpt = Path(args.checkpoint)
    params = EncoderParams.load(ckpt)
    cfg = TrainConfig.from_json(ckpt / "config.json")
    x = load_features(args.features)
    norm = CONSTRAINTS[cfg.constraint][0] if cfg.pipeline == "nf-n2n" else None
    emb = encode(x, params, cfg, norm=norm, activate_last=cfg.pipeline not in ("n2n-jl", "n2n-url"))
    save_matrix(args.out, emb)
    print(f"exported {emb.shape[0]}x{emb.shape[1]} embeddings")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output directory (or file)")
    common.add_argument("--seed", type=int, nargs="+", help="run seed(s)")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers over seeds")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="n2n", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("taps", parents=[common], help="rank positives and partition the graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--labels")
    p.set_defaults(func=cmd_taps)

    p = sub.add_parser("train", parents=[common], help="run a training pipeline")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("probe", parents=[common], help="linear probe on saved embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--l2", type=float, default=0.01)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("metrics", parents=[common], help="smoothness and collapse diagnostics")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--labels")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("export-embeddings", parents=[common], help="encode features with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    if args.command == "taps" and args.k < 0:
        parser.error("--k must be >= 0")
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"n2n {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and signal runtime failure
        logger.debug("failure", exc_info=True)
        print(f"n2n {args.command}: runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
