"""Command-line interface: train, eval, predict, gen-synthetic, grad-check,
and the mix-ratio / data-scale sweeps.

Exit codes: 0 success, 1 validation or usage error, 2 runtime failure
(divergence, I/O). Log level comes from the GRAPHERE_LOG environment variable.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .classifier import PairPrediction
from .corpus import CorpusValidationError, LabelScheme, REL_TYPES, corpus_stats
from .evaluator import evaluate, format_report_table
from .gradcheck import format_suite, run_gradient_suite
from .synthetic import PRESETS, SynthConfig, generate
from .trainer import (
    TrainConfig, TrainingDiverged, build_model, fit, load_bundle,
)

logger = logging.getLogger("graphere")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


EPSILON_ORDER = REL_TYPES  # coreference, temporal, causal, subevent


def _parse_four(value: str, flag: str) -> dict[str, float]:
    parts = value.split(",")
    if len(parts) != 4:
        raise UsageError(f"{flag} needs 4 comma-separated values "
                         f"(coreference,temporal,causal,subevent), got '{value}'")
    return {rel: float(v) for rel, v in zip(EPSILON_ORDER, parts)}


def _add_shared_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file mirroring the training config fields")
    p.add_argument("--mode", help="joint or split:<rel_type>")
    p.add_argument("--beta", type=float, help="static graph mix ratio in [0,1]")
    p.add_argument("--epsilons", help="sparsification thresholds c,t,ca,s")
    p.add_argument("--lambdas", help="task loss weights c,t,ca,s")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--seed", type=int)
    p.add_argument("--d-h", type=int, dest="d_h", help="embedding dimension")
    p.add_argument("--ablate", action="append", default=None,
                   choices=["static", "dynamic", "transformer"],
                   help="disable a module (repeatable)")


def _add_data_flags(p: argparse.ArgumentParser, need_corpus=True) -> None:
    p.add_argument("--corpus", required=need_corpus,
                   help="corpus JSONL, or a directory holding corpus.jsonl, "
                        "graphs.jsonl and embeddings/")
    p.add_argument("--graphs", help="static graphs JSONL")
    p.add_argument("--embeddings", help="frozen embeddings directory")
    p.add_argument("--scheme", help="label scheme JSON file")


def build_parser() -> _Parser:
    parser = _Parser(prog="graphere",
                     description="Joint event-event relation extraction with "
                                 "graph-enhanced event embeddings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[], help="train a model")
    _add_data_flags(p)
    _add_shared_train_flags(p)
    p.add_argument("--out", default="graphere-run", help="output directory")

    p = sub.add_parser("eval", help="score predictions against gold relations")
    _add_data_flags(p)
    p.add_argument("--predictions", help="predictions JSONL to score")
    p.add_argument("--checkpoint", help="checkpoint to predict with (instead of --predictions)")
    _add_shared_train_flags(p)
    p.add_argument("--out", help="write the report JSON here (default: stdout)")

    p = sub.add_parser("predict", help="emit predictions for a corpus")
    _add_data_flags(p)
    p.add_argument("--checkpoint", required=True)
    _add_shared_train_flags(p)
    p.add_argument("--out", default="predictions.jsonl")
    p.add_argument("--dump-dynamic-edges", action="store_true", dest="dump_dynamic_edges",
                   help="also write retained dynamic-graph edges per document")

    p = sub.add_parser("gen-synthetic", help="generate a synthetic corpus bundle")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--num-docs", type=int, default=50, dest="num_docs")
    p.add_argument("--events-min", type=int, default=4, dest="events_min")
    p.add_argument("--events-max", type=int, default=8, dest="events_max")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--preset", choices=list(PRESETS), default="standard")
    p.add_argument("--strength", type=float, default=1.0,
                   help="argument-overlap strength in [0,1]")
    p.add_argument("--subevent-fraction", type=float, default=1.0,
                   dest="subevent_fraction",
                   help="fraction of documents with subevent structure")
    p.add_argument("--doc-prefix", default="doc", dest="doc_prefix")

    p = sub.add_parser("grad-check", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip-end-to-end", action="store_true", dest="skip_end_to_end")

    p = sub.add_parser("sweep", help="mix-ratio or data-scale sweep")
    _add_data_flags(p)
    _add_shared_train_flags(p)
    p.add_argument("--sweep-kind", choices=["beta", "data"], default="beta",
                   dest="sweep_kind")
    p.add_argument("--grid", help="comma-separated sweep points "
                                  "(default: 0.0..1.0 step 0.1, or 10%%..100%% for data)")
    p.add_argument("--dev-corpus", dest="dev_corpus",
                   help="bundle directory to evaluate each point on "
                        "(default: seeded held-out split)")
    p.add_argument("--out", default="sweep.csv")

    return parser


def _resolve_bundle_paths(args) -> tuple[Path, Path | None, Path | None]:
    corpus = Path(args.corpus)
    graphs = Path(args.graphs) if args.graphs else None
    embeddings = Path(args.embeddings) if args.embeddings else None
    if corpus.is_dir():
        root = corpus
        corpus = root / "corpus.jsonl"
        if graphs is None and (root / "graphs.jsonl").exists():
            graphs = root / "graphs.jsonl"
        if embeddings is None and (root / "embeddings").is_dir():
            embeddings = root / "embeddings"
    return corpus, graphs, embeddings


def _train_config(args) -> TrainConfig:
    overrides = {}
    for field in ("mode", "beta", "epochs", "batch_size", "seed", "d_h"):
        value = getattr(args, field, None)
        if value is not None:
            overrides[field] = value
    if getattr(args, "epsilons", None):
        overrides["epsilons"] = _parse_four(args.epsilons, "--epsilons")
    if getattr(args, "lambdas", None):
        overrides["lambdas"] = _parse_four(args.lambdas, "--lambdas")
    if getattr(args, "ablate", None):
        overrides["ablations"] = tuple(dict.fromkeys(args.ablate))
    try:
        if getattr(args, "config", None):
            return TrainConfig.from_file(args.config, overrides)
        return TrainConfig(**overrides)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _load_bundle_from_args(args, config: TrainConfig, need_graphs: bool | None = None):
    corpus, graphs, embeddings = _resolve_bundle_paths(args)
    scheme = LabelScheme.from_file(args.scheme) if getattr(args, "scheme", None) else None
    if need_graphs is None:
        need_graphs = "static" not in config.ablations
    return load_bundle(corpus, graphs, embeddings, scheme=scheme,
                       d_h=config.d_h, seed=config.seed, need_graphs=need_graphs)


def _cmd_train(args) -> int:
    config = _train_config(args)
    bundle = _load_bundle_from_args(args, config)
    report = fit(bundle, config, args.out)
    print(json.dumps(corpus_stats(bundle.documents)))
    best = report.epochs[report.best_epoch - 1] if report.best_epoch else None
    if best and best.dev_metrics:
        print(format_report_table(best.dev_metrics, label=f"dev (epoch {report.best_epoch})"))
    print(f"checkpoint: {report.checkpoint_path}")
    print(f"report: {Path(args.out) / 'train_report.json'}")
    return 0


def _load_predictions(path) -> list[PairPrediction]:
    preds = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                preds.append(PairPrediction(
                    doc_id=rec["doc_id"], rel_type=rec["type"], source=rec["source"],
                    target=rec["target"], subtype=rec["subtype"],
                    prob=float(rec.get("prob", 1.0))))
            except (json.JSONDecodeError, KeyError) as exc:
                raise CorpusValidationError(f"{path}:{lineno}: bad prediction record: {exc!r}")
    return preds


def _cmd_eval(args) -> int:
    config = _train_config(args)
    need_graphs = None if args.checkpoint else False
    bundle = _load_bundle_from_args(args, config, need_graphs=need_graphs)
    if args.predictions:
        preds = _load_predictions(args.predictions)
    elif args.checkpoint:
        model = build_model(bundle, config, checkpoint_dir=args.checkpoint)
        preds = []
        for doc in bundle.documents:
            preds.extend(model.predict_document(doc, bundle.graphs_for(doc)))
    else:
        raise UsageError("eval needs --predictions or --checkpoint")
    report = evaluate(bundle.documents, preds)
    print(format_report_table(report, label="eval"))
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=1))
    else:
        print(json.dumps(report, indent=1))
    return 0


def _cmd_predict(args) -> int:
    config = _train_config(args)
    bundle = _load_bundle_from_args(args, config)
    model = build_model(bundle, config, checkpoint_dir=args.checkpoint)
    out_path = Path(args.out)
    edges_path = out_path.with_name(out_path.stem + "-dynamic-edges.jsonl")
    n = 0
    edge_fh = open(edges_path, "w") if args.dump_dynamic_edges else None
    try:
        with open(out_path, "w") as fh:
            for doc in bundle.documents:
                for p in model.predict_document(doc, bundle.graphs_for(doc)):
                    fh.write(json.dumps({
                        "doc_id": p.doc_id, "type": p.rel_type, "source": p.source,
                        "target": p.target, "subtype": p.subtype, "prob": p.prob,
                    }) + "\n")
                    n += 1
                if edge_fh is not None:
                    for rec in model.dump_dynamic_edges(doc, bundle.graphs_for(doc)):
                        edge_fh.write(json.dumps(rec) + "\n")
    finally:
        if edge_fh is not None:
            edge_fh.close()
    print(f"wrote {n} predictions to {out_path}")
    if edge_fh is not None:
        print(f"wrote dynamic edges to {edges_path}")
    return 0


def _cmd_gen_synthetic(args) -> int:
    cfg = SynthConfig(seed=args.seed, num_docs=args.num_docs,
                      events_min=args.events_min, events_max=args.events_max,
                      dim=args.dim, preset=args.preset,
                      argument_overlap_strength=args.strength,
                      subevent_doc_fraction=args.subevent_fraction,
                      doc_prefix=args.doc_prefix)
    if args.preset == "argument-overlap":
        cfg = replace(cfg, timexes_min=0, timexes_max=0)
    paths = generate(cfg, args.out)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def _cmd_grad_check(args) -> int:
    rows = run_gradient_suite(seed=args.seed,
                              include_end_to_end=not args.skip_end_to_end)
    print(format_suite(rows))
    return 0 if all(r.passed for r in rows) else 1


def _cmd_sweep(args) -> int:
    config = _train_config(args)
    bundle = _load_bundle_from_args(args, config)
    dev_docs = None
    if args.dev_corpus:
        dev_args = argparse.Namespace(corpus=args.dev_corpus, graphs=None,
                                      embeddings=None, scheme=getattr(args, "scheme", None))
        dev_bundle = load_bundle(*_resolve_bundle_paths(dev_args),
                                 scheme=bundle.scheme, d_h=config.d_h,
                                 need_graphs="static" not in config.ablations)
        from .trainer import merge_bundles
        merged = merge_bundles(bundle, dev_bundle)
        merged.documents = bundle.documents
        bundle = merged
        dev_docs = dev_bundle.documents

    if args.grid:
        grid = [float(v) for v in args.grid.split(",")]
    elif args.sweep_kind == "beta":
        grid = [round(0.1 * i, 1) for i in range(11)]
    else:
        grid = [round(0.1 * i, 1) for i in range(1, 11)]

    out_dir = Path(args.out).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 5150]))
    all_docs = list(bundle.documents)
    for point in grid:
        if args.sweep_kind == "beta":
            point_config = replace(config, beta=point)
            docs = all_docs
        else:
            if not 0.0 < point <= 1.0:
                raise UsageError(f"data fractions must be in (0, 1], got {point}")
            point_config = config
            n = max(1, int(round(point * len(all_docs))))
            idx = sorted(map(int, rng.choice(len(all_docs), size=n, replace=False)))
            docs = [all_docs[i] for i in idx]
        point_bundle = replace_documents(bundle, docs)
        run_dir = Path(args.out).parent / f"sweep-{args.sweep_kind}-{point:g}"
        report = fit(point_bundle, point_config, run_dir, dev_documents=dev_docs)
        best = report.epochs[report.best_epoch - 1].dev_metrics if report.best_epoch else None
        f1s = {rel: (best["tasks"][rel]["F1"] if best else 0.0) for rel in REL_TYPES}
        mean = best["mean_f1"] if best else 0.0
        rows.append((point, f1s, mean))
        print(f"{args.sweep_kind}={point:g}: mean_f1={mean:.4f}")

    with open(args.out, "w") as fh:
        fh.write(args.sweep_kind + "," + ",".join(REL_TYPES) + ",mean_f1\n")
        for point, f1s, mean in rows:
            fh.write(f"{point:g}," + ",".join(f"{f1s[rel]:.6f}" for rel in REL_TYPES)
                     + f",{mean:.6f}\n")
    print(f"wrote {args.out}")
    return 0


def replace_documents(bundle, docs):
    from .trainer import CorpusBundle
    return CorpusBundle(docs, bundle.graphs, bundle.backend, bundle.scheme)


COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "gen-synthetic": _cmd_gen_synthetic,
    "grad-check": _cmd_grad_check,
    "sweep": _cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("GRAPHERE_LOG", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CorpusValidationError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
