"""Command-line pipeline: each subcommand produces one inspectable artifact.

    synth   write a planted-hierarchy synthetic dataset CSV
    probe   train a flat probe classifier, emit its test confusion CSV
    cluster build the dendrogram and cut (optionally overlap) clusters
    train   train the hierarchical model, report HC/FC accuracy
    adapt   per-cluster candidate selection plus hierarchical training
    infer   run a saved model over a dataset, emit predictions CSV
    memory  per-layer memory report for built-in or JSON network specs

All randomness derives from --seed: each stage hashes its name with the seed
(see util.derive_seed), so re-running any subcommand with identical flags
rewrites its outputs byte for byte.

Exit codes: 0 success, 1 validation error (bad flags, malformed content,
contract violations), 2 I/O error (missing or unreadable files).
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import confmat, datagen, hiernet, linkage, memcost, mlp, netselect, overlap
from .util import derive_seed

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so usage errors map to code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ValueError(message)


def _hidden_layers(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    try:
        widths = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ValueError(f"invalid hidden layer list {text!r}; expected e.g. 25,10") from None
    return widths


def _train_spec(args: argparse.Namespace, seed: int) -> mlp.TrainSpec:
    return mlp.TrainSpec(
        learning_rate=args.lr,
        momentum=args.momentum,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=seed,
    )


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="base seed for all stages")
    parser.add_argument("--epochs", type=int, default=40)
    parser.add_argument("--lr", type=float, default=0.01, help="learning rate")
    parser.add_argument("--momentum", type=float, default=0.9)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument(
        "--holdout", type=float, default=0.2, help="held-out fraction for evaluation"
    )


def cmd_synth(args: argparse.Namespace) -> int:
    spec = datagen.SynthSpec(
        coarse_groups=args.groups,
        classes_per_group=args.classes_per_group,
        samples_per_class=args.samples_per_class,
        dim=args.dim,
        coarse_separation=args.coarse_sep,
        fine_separation=args.fine_sep,
        seed=args.seed,
    )
    ds = datagen.generate(spec)
    datagen.save_dataset_csv(ds, args.output)
    print(f"wrote {ds.n} samples, {ds.k} classes, dim {ds.dim} -> {args.output}")
    return 0


def cmd_probe(args: argparse.Namespace) -> int:
    ds = datagen.load_dataset_csv(args.input)
    train_ds, test_ds = datagen.split(ds, 1.0 - args.holdout, seed=derive_seed(args.seed, "probe-split"))
    config = mlp.MLPConfig(input_dim=ds.dim, hidden_layers=args.hidden, output_dim=ds.k)
    spec = _train_spec(args, derive_seed(args.seed, "probe"))
    model = mlp.train(train_ds.features, train_ds.labels, config, spec)
    predicted = np.argmax(mlp.predict_proba(model, test_ds.features), axis=1)
    accuracy = float(np.mean(predicted == test_ds.labels))
    cm = confmat.build_confusion(test_ds.labels, predicted, ds.k)
    confmat.save_confusion_csv(cm, args.output)
    print(f"probe accuracy {accuracy:.4f} on {test_ds.n} held-out samples -> {args.output}")
    return 0


def cmd_cluster(args: argparse.Namespace) -> int:
    cm = confmat.load_confusion_csv(args.input)
    d = confmat.to_dissimilarity(cm)
    dendrogram = linkage.upgma_linkage(d)
    clustering = linkage.cut_clusters(dendrogram, args.theta)
    if args.gamma is not None:
        dcn = confmat.column_normalize(cm)
        clustering = overlap.expand_overlap(clustering, dcn, args.gamma)
    linkage.save_clustering_json(clustering, args.output)
    dot_path = args.dot or str(Path(args.output).with_suffix(".dot"))
    Path(dot_path).write_text(linkage.export_dot(dendrogram, clustering), encoding="utf-8")
    sizes = [len(cl) for cl in clustering.clusters]
    print(
        f"{clustering.n_clusters} clusters (sizes {sizes}), "
        f"overlapping={clustering.overlapping} -> {args.output}, {dot_path}"
    )
    return 0


def _write_report(path: str, clustering: linkage.Clustering, hc: float, fc: float) -> None:
    method = "Overlap" if clustering.overlapping else "Non-Overlap"
    gamma = "" if clustering.gamma is None else repr(clustering.gamma)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["C", "method", "gamma", "HC", "FC"])
        writer.writerow([clustering.n_clusters, method, gamma, repr(hc), repr(fc)])


def cmd_train(args: argparse.Namespace) -> int:
    ds = datagen.load_dataset_csv(args.input)
    clustering = linkage.load_clustering_json(args.clustering)
    train_ds, test_ds = datagen.split(ds, 1.0 - args.holdout, seed=derive_seed(args.seed, "train-split"))
    spec = _train_spec(args, derive_seed(args.seed, "train"))
    assign_hidden = args.assign_hidden if args.assign_hidden is not None else args.hidden
    hier_config = mlp.MLPConfig(
        input_dim=ds.dim, hidden_layers=args.hidden, output_dim=clustering.n_clusters
    )
    assign_configs = [
        mlp.MLPConfig(input_dim=ds.dim, hidden_layers=assign_hidden, output_dim=len(cl))
        for cl in clustering.clusters
    ]
    model = hiernet.train_hierarchical(
        train_ds.features,
        train_ds.labels,
        clustering,
        hier_config,
        assign_configs,
        spec,
        top_k=args.top_k,
    )
    hc, fc = hiernet.evaluate_hierarchical(model, test_ds.features, test_ds.labels)
    hiernet.save_bundle(model, args.output)
    _write_report(str(Path(args.output) / "report.csv"), clustering, hc, fc)
    print(f"HC {hc:.4f}  FC {fc:.4f}  (k={model.top_k}) -> {args.output}")
    return 0


def cmd_adapt(args: argparse.Namespace) -> int:
    ds = datagen.load_dataset_csv(args.input)
    clustering = linkage.load_clustering_json(args.clustering)
    candidates = netselect.load_candidates_json(args.candidates)
    train_ds, test_ds = datagen.split(ds, 1.0 - args.holdout, seed=derive_seed(args.seed, "adapt-split"))
    spec = _train_spec(args, derive_seed(args.seed, "adapt"))
    model, meta = netselect.build_adaptive_hierarchical(
        train_ds.features,
        train_ds.labels,
        clustering,
        candidates,
        spec,
        holdout=args.holdout,
    )
    hc, fc = hiernet.evaluate_hierarchical(model, test_ds.features, test_ds.labels)
    hiernet.save_bundle(model, args.output)
    out = Path(args.output)
    netselect.save_meta_csv(meta, out / "meta.csv")
    with open(out / "selection_report.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cluster", "candidate_id", "accuracy", "selected"])
        for i, row in enumerate(meta.rows):
            for cand_id, acc in row.accuracies:
                writer.writerow([i, cand_id, repr(acc), int(cand_id == row.best_id)])
    _write_report(str(out / "report.csv"), clustering, hc, fc)
    chosen = [row.best_id for row in meta.rows]
    print(f"HC {hc:.4f}  FC {fc:.4f}  selections {chosen} -> {args.output}")
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    model = hiernet.load_bundle(args.model)
    ds = datagen.load_dataset_csv(args.input)
    predictions = hiernet.infer_batch(model, ds.features)
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "class_id", "confidence", "cluster", "local_index", "alternatives"])
        for i, pred in enumerate(predictions):
            alts = ";".join(f"{cid}:{repr(conf)}" for cid, conf in pred.alternatives)
            writer.writerow(
                [i, pred.class_id, repr(pred.confidence), pred.path[0], pred.path[1], alts]
            )
    predicted = np.array([p.class_id for p in predictions], dtype=np.int64)
    accuracy = float(np.mean(predicted == ds.labels))
    print(f"wrote {len(predictions)} predictions (accuracy {accuracy:.4f}) -> {args.output}")
    return 0


def _load_network(name_or_path: str) -> memcost.NetworkSpec:
    if name_or_path in memcost.builtin_names():
        return memcost.builtin_network(name_or_path)
    return memcost.network_from_json(name_or_path)


def cmd_memory(args: argparse.Namespace) -> int:
    if args.hier or args.assign:
        if not (args.hier and args.assign):
            raise ValueError("--hier and --assign must be given together")
        hier = _load_network(args.hier)
        assign = _load_network(args.assign)
        total = memcost.hierarchical_memory(hier, assign, batch=args.batch)
        hier_rep = memcost.network_memory(hier, batch=args.batch)
        assign_rep = memcost.network_memory(assign, batch=args.batch)
        shared = max(hier_rep.data_total, assign_rep.data_total)
        print(
            f"hierarchical {hier.name} + {assign.name} @ batch {args.batch}: "
            f"{memcost.format_mb(hier_rep.params_total)} + "
            f"{memcost.format_mb(assign_rep.params_total)} + "
            f"{memcost.format_mb(shared)} = {memcost.format_mb(total)} MB"
        )
        return 0
    if not args.network:
        raise ValueError("give --network, or --hier with --assign")
    spec = _load_network(args.network)
    report = memcost.network_memory(spec, batch=args.batch)
    print(memcost.report_to_text(report), end="")
    if args.output:
        Path(args.output).write_text(memcost.report_to_csv(report), encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hierdecomp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    p.add_argument("--output", required=True)
    p.add_argument("--groups", type=int, default=6)
    p.add_argument("--classes-per-group", type=int, default=5)
    p.add_argument("--samples-per-class", type=int, default=200)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--coarse-sep", type=float, default=8.0)
    p.add_argument("--fine-sep", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("probe", help="train a flat probe, emit its confusion CSV")
    p.add_argument("--input", required=True, help="dataset CSV")
    p.add_argument("--output", required=True, help="confusion CSV")
    p.add_argument("--hidden", type=_hidden_layers, default=(200, 150))
    _add_train_flags(p)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("cluster", help="cluster classes from a confusion CSV")
    p.add_argument("--input", required=True, help="confusion CSV")
    p.add_argument("--output", required=True, help="clustering JSON")
    p.add_argument("--dot", default=None, help="dendrogram DOT path (default: output with .dot)")
    p.add_argument("--theta", type=int, required=True, help="max classes per cluster")
    p.add_argument("--gamma", type=float, default=None, help="overlap factor (omit for none)")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("train", help="train the hierarchical model")
    p.add_argument("--input", required=True, help="dataset CSV")
    p.add_argument("--clustering", required=True, help="clustering JSON")
    p.add_argument("--output", required=True, help="model bundle directory")
    p.add_argument("--hidden", type=_hidden_layers, default=(25, 10), help="routing net widths")
    p.add_argument(
        "--assign-hidden", type=_hidden_layers, default=None,
        help="assignment net widths (default: same as --hidden)",
    )
    p.add_argument("--top-k", type=int, default=None)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("adapt", help="adaptive per-cluster network selection")
    p.add_argument("--input", required=True, help="dataset CSV")
    p.add_argument("--clustering", required=True, help="clustering JSON")
    p.add_argument("--candidates", required=True, help="candidate set JSON")
    p.add_argument("--output", required=True, help="model bundle directory")
    _add_train_flags(p)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("infer", help="predict a dataset with a saved model bundle")
    p.add_argument("--model", required=True, help="model bundle directory")
    p.add_argument("--input", required=True, help="dataset CSV")
    p.add_argument("--output", required=True, help="predictions CSV")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("memory", help="memory footprint of network specs")
    p.add_argument("--network", default=None, help="built-in name or spec JSON path")
    p.add_argument("--hier", default=None, help="routing-stage spec for a hierarchical pair")
    p.add_argument("--assign", default=None, help="assignment-stage spec for a hierarchical pair")
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--output", default=None, help="also write the per-layer CSV here")
    p.set_defaults(func=cmd_memory)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
