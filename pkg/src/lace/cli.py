"""Command-line entry point: ``lace <command> [options]``.

Exit codes: 0 on success, 1 on runtime failure (including a failed gradient
check), 2 on usage errors such as bad flags or missing input files.

Training options can come from a JSON file given with ``--config``; flags
given on the command line override it. Relative input paths that do not exist
in the working directory are looked up under ``$LACE_DATA_DIR``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import MISSING, fields
from pathlib import Path

import numpy as np

from . import pipeline
from .docred import CorpusError, build_label_vocab, dump_corpus, load_rel_info, multi_label_stats, parse_corpus
from .graph import DEFAULT_DELTA, DEFAULT_P, DEFAULT_TAU, CorrelationGraph, export_graph
from .pipeline import ABLATIONS, ConfigError, TrainConfig

DATA_ENV = "LACE_DATA_DIR"
DEFAULT_TRAIN_FILE = "train_annotated.json"

log = logging.getLogger("lace")


class UsageError(Exception):
    """Bad or inconsistent command-line input; maps to exit code 2."""


# ---------------------------------------------------------------------------
# paths and config
# ---------------------------------------------------------------------------


def resolve_input(path: str | None, what: str, default_name: str | None = None) -> Path:
    data_dir = os.environ.get(DATA_ENV)
    if path is None:
        if default_name and data_dir:
            path = str(Path(data_dir) / default_name)
        else:
            raise UsageError(f"--{what} is required (or set {DATA_ENV})")
    candidate = Path(path)
    if not candidate.exists() and data_dir and not candidate.is_absolute():
        candidate = Path(data_dir) / path
    if not candidate.exists():
        raise UsageError(f"{what} file not found: {path}")
    return candidate


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


TRAIN_FIELD_HELP = {
    "seed": "random seed",
    "epochs": "training epochs",
    "batch_size": "documents per update",
    "lr": "Adam learning rate",
    "lr_encoder": "learning rate for embeddings and BiLSTM (default: same as --lr)",
    "beta1": "Adam first-moment decay",
    "beta2": "Adam second-moment decay",
    "adam_eps": "Adam epsilon",
    "clip_norm": "global gradient-norm clip",
    "na_keep": "fraction of NA pairs kept per document during training",
    "tau": "co-occurrence count filter",
    "delta": "edge threshold on conditional probabilities",
    "p": "neighbour weight in the re-weighted adjacency",
    "theta": "decision margin: predict c when P(c) >= (1 + theta) P(TH)",
    "alpha": "weight of the positive loss term",
    "loss": "training objective (mat or at)",
    "groups": "block-diagonal groups in each bilinear form",
    "d_word": "word embedding width",
    "d_type": "entity type embedding width",
    "d_hidden": "BiLSTM hidden width per direction",
    "lstm_layers": "stacked BiLSTM layers",
    "lowercase": "lowercase tokens before lookup",
    "use_graph": "propagate relation features over the correlation graph",
    "gat_layers": "GAT layers",
    "gat_heads": "attention heads per GAT layer",
    "d_rel": "initial relation feature width",
    "d_head": "features per attention head",
    "gat_mode": "attention weighting (reweight or mask)",
}


def add_train_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("training configuration")
    group.add_argument("--config", help="JSON file of training options; flags override it")
    for f in fields(TrainConfig):
        default = f.default if f.default is not MISSING else None
        text = TRAIN_FIELD_HELP.get(f.name, f.name)
        if f.name != "lr_encoder":
            text += f" (default: {default})"
        kwargs = {"default": None, "dest": f"cfg_{f.name}", "help": text}
        if isinstance(default, bool):
            group.add_argument(_flag(f.name), action=argparse.BooleanOptionalAction, **kwargs)
        elif f.name == "loss":
            group.add_argument(_flag(f.name), choices=("mat", "at"), **kwargs)
        elif f.name == "gat_mode":
            group.add_argument(_flag(f.name), choices=("reweight", "mask"), **kwargs)
        else:
            kind = int if isinstance(default, int) and f.name not in ("tau",) else float
            group.add_argument(_flag(f.name), type=kind, metavar=f.name.upper(), **kwargs)


def train_config_from_args(args: argparse.Namespace) -> TrainConfig:
    raw = {}
    if args.config:
        path = resolve_input(args.config, "config")
        try:
            raw = json.loads(path.read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise UsageError(f"config {path} must hold a JSON object")
    for f in fields(TrainConfig):
        value = getattr(args, f"cfg_{f.name}")
        if value is not None:
            raw[f.name] = value
    return TrainConfig.from_dict(raw)


def load_corpus(path: str | None, what: str, default_name: str | None = None):
    return parse_corpus(resolve_input(path, what, default_name))


def write_json(obj, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", "utf-8")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_build_graph(args) -> int:
    corpus = load_corpus(args.train, "train", DEFAULT_TRAIN_FILE)
    names = load_rel_info(resolve_input(args.rel_info, "rel-info")) if args.rel_info else None
    graph = CorrelationGraph.build(corpus, build_label_vocab(corpus), args.tau, args.delta, args.p)
    export_graph(graph, args.out, "json")
    if args.dot:
        export_graph(graph, args.dot, "dot", names)
    if args.tsv:
        export_graph(graph, args.tsv, "tsv")
    print(f"relations\t{graph.r}")
    print(f"edges\t{graph.edge_count}")
    print(f"density\t{graph.density:.6f}")
    return 0


def stats_report(corpus, top_k: int = 10, names: dict[str, str] | None = None) -> dict:
    stats = multi_label_stats(corpus)
    relations = build_label_vocab(corpus)
    graph = CorrelationGraph.build(corpus, relations, tau=0, delta=1.0, p=0.5)
    label = (lambda code: names.get(code, code)) if names else (lambda code: code)
    docs, entities, facts = corpus.counts
    return {
        "documents": docs,
        "entities": entities,
        "facts": facts,
        "relations": len(relations),
        "labeled_pairs": stats.pairs,
        "multi_label_fraction": stats.multi_label_fraction,
        "max_label_set_size": stats.max_size,
        "histogram": {str(k): v for k, v in sorted(stats.histogram.items())},
        "no_pairs": stats.no_pairs,
        "asymmetric_pairs": [
            {"given": label(a), "then": label(b), "p_then_given": pab, "p_given_then": pba}
            for a, b, pab, pba in graph.top_asymmetric_pairs(top_k)
        ],
    }


def cmd_stats(args) -> int:
    corpus = load_corpus(args.train, "train", DEFAULT_TRAIN_FILE)
    names = load_rel_info(resolve_input(args.rel_info, "rel-info")) if args.rel_info else None
    report = stats_report(corpus, args.top_k, names)
    print(f"documents\t{report['documents']}")
    print(f"entities\t{report['entities']}")
    print(f"facts\t{report['facts']}")
    print(f"relations\t{report['relations']}")
    print(f"labeled pairs\t{report['labeled_pairs']}")
    if report["no_pairs"]:
        print("no pairs")
    print(f"multi-label fraction\t{report['multi_label_fraction']:.4f}")
    print(f"max label-set size\t{report['max_label_set_size']}")
    for size, count in report["histogram"].items():
        print(f"  size {size}\t{count}")
    if report["asymmetric_pairs"]:
        print("most asymmetric pairs: P(then | given)  P(given | then)")
        for row in report["asymmetric_pairs"]:
            print(f"  {row['given']} -> {row['then']}\t{row['p_then_given']:.3f}\t{row['p_given_then']:.3f}")
    if args.json:
        write_json(report, args.json)
    return 0


def cmd_train(args) -> int:
    cfg = train_config_from_args(args)
    corpus = load_corpus(args.train, "train", DEFAULT_TRAIN_FILE)
    dev = load_corpus(args.dev, "dev") if args.dev else None
    if args.graph:
        graph = CorrelationGraph.load(resolve_input(args.graph, "graph"))
    elif cfg.use_graph:
        graph = CorrelationGraph.build(corpus, build_label_vocab(corpus), cfg.tau, cfg.delta, cfg.p)
    else:
        graph = None
    ckpt, trace = pipeline.train(corpus, graph, cfg, dev=dev)
    pipeline.save_checkpoint(ckpt, args.out)
    if args.trace:
        pipeline.write_trace(trace, args.trace)
    if trace:
        print(f"final mean loss\t{trace[-1].mean_loss:.6f}")
    print(f"checkpoint\t{args.out}")
    return 0


def _load_checkpoint(path: str) -> pipeline.Checkpoint:
    root = Path(path)
    if not (root / "manifest.json").exists():
        raise UsageError(f"checkpoint not found: {path}")
    return pipeline.load_checkpoint(root)


def cmd_predict(args) -> int:
    ckpt = _load_checkpoint(args.checkpoint)
    corpus = load_corpus(args.input, "input")
    preds = pipeline.predict_corpus(ckpt, corpus, args.theta)
    pipeline.save_predictions(preds, args.out, with_scores=not args.submission)
    print(f"predictions\t{len(preds)}")
    return 0


def parse_sweep(text: str) -> list[float]:
    """``a:b:step`` (inclusive) or a comma-separated list of thetas."""
    try:
        if ":" in text:
            lo, hi, step = (float(x) for x in text.split(":"))
            if step <= 0 or hi < lo:
                raise ValueError
            n = int(np.floor((hi - lo) / step + 1e-9)) + 1
            return [round(lo + i * step, 10) for i in range(n)]
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"bad --theta-sweep {text!r}; use START:STOP:STEP or a comma list") from None


def _print_scores(scores: dict) -> None:
    for key in ("precision", "recall", "f1", "ign_precision", "ign_f1"):
        if key in scores:
            print(f"{key}\t{scores[key]:.6f}")


def cmd_eval(args) -> int:
    if (args.pred is None) == (args.checkpoint is None):
        raise UsageError("give exactly one of --pred or --checkpoint")
    if args.theta_sweep and args.checkpoint is None:
        raise UsageError("--theta-sweep needs --checkpoint")
    gold = load_corpus(args.gold, "gold")
    train = load_corpus(args.train, "train") if args.train else None
    report: dict = {}
    if args.pred:
        preds = pipeline.load_predictions(resolve_input(args.pred, "pred"))
    else:
        ckpt = _load_checkpoint(args.checkpoint)
        if args.theta_sweep:
            sweep = []
            for theta in parse_sweep(args.theta_sweep):
                f1 = pipeline.evaluate(pipeline.predict_corpus(ckpt, gold, theta), gold)["f1"]
                sweep.append({"theta": theta, "f1": f1})
                print(f"theta {theta:.4f}\tF1 {f1:.6f}")
            best = max(sweep, key=lambda row: (row["f1"], -row["theta"]))
            print(f"best theta\t{best['theta']:.4f}")
            report["sweep"] = sweep
            args.theta = best["theta"]
        preds = pipeline.predict_corpus(ckpt, gold, args.theta)
    scores = pipeline.evaluate(preds, gold, train)
    _print_scores(scores)
    report["scores"] = scores
    multi = {}
    for label, kw in (("1-Rel", {"k": 1}), ("2-Rel", {"k": 2}), ("3-Rel", {"k": 3}), ("Overall", {"min_size": 2})):
        score = pipeline.multi_label_f1(preds, gold, **kw)
        multi[label] = None if score is None else score.f1
        print(f"{label} F1\t" + ("absent" if score is None else f"{score.f1:.6f}"))
    report["multi_label"] = multi
    if args.json:
        write_json(report, args.json)
    return 0


def cmd_ablate(args) -> int:
    cfg = train_config_from_args(args)
    corpus = load_corpus(args.train, "train", DEFAULT_TRAIN_FILE)
    held_out = load_corpus(args.eval, "eval") if args.eval else None
    for switch in args.switch:
        pipeline.variant_config(cfg, switch)
    rows = pipeline.run_ablation(corpus, cfg, args.switch, held_out)
    fmt = lambda x: "absent" if x is None else f"{x:.4f}"  # noqa: E731
    print("variant\tF1\tdelta_F1\tOverall_multi_F1\tdelta_multi_F1")
    for row in rows:
        print(
            f"{row['variant']}\t{fmt(row['f1'])}\t{fmt(row['delta_f1'])}"
            f"\t{fmt(row['multi_f1'])}\t{fmt(row['delta_multi_f1'])}"
        )
    if args.out:
        write_json(rows, args.out)
    return 0


def cmd_gradcheck(args) -> int:
    from . import gradcheck

    failed = False
    total = 0.0
    for name, check in gradcheck.CHECKS.items():
        result = check(seed=args.seed)
        total += result.seconds
        status = "ok" if result.ok else "FAIL"
        print(f"{name}\tmax_rel_err={result.max_error:.3e}\tworst={result.worst_param}\t{result.seconds:.2f}s\t{status}")
        failed |= not result.ok
    print(f"total\t{total:.2f}s")
    return 1 if failed else 0


def cmd_synth(args) -> int:
    from .synthetic import make_corpus, make_world

    world = make_world(args.relations, args.vocab, seed=args.world_seed)
    corpus = make_corpus(world, args.docs, seed=args.seed, n_entities=args.entities, prefix=args.prefix)
    dump_corpus(corpus, args.out)
    docs, entities, facts = corpus.counts
    print(f"documents\t{docs}\nentities\t{entities}\nfacts\t{facts}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lace", description="Document-level relation extraction with a relation correlation graph.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", help="build the relation correlation graph from a training corpus")
    p.add_argument("--train", help=f"DocRED-format training file (default: ${DATA_ENV}/{DEFAULT_TRAIN_FILE})")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU, help="co-occurrence count filter (default: %(default)s)")
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="edge threshold (default: %(default)s)")
    p.add_argument("--p", type=float, default=DEFAULT_P, help="neighbour weight (default: %(default)s)")
    p.add_argument("--out", required=True, help="graph JSON output path")
    p.add_argument("--dot", help="also write a Graphviz DOT file")
    p.add_argument("--tsv", help="also write an edge list")
    p.add_argument("--rel-info", help="JSON map of relation codes to names, for DOT labels")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("stats", help="multi-label statistics and asymmetric relation pairs")
    p.add_argument("--train", help=f"DocRED-format file (default: ${DATA_ENV}/{DEFAULT_TRAIN_FILE})")
    p.add_argument("--top-k", type=int, default=10, help="asymmetric pairs to list (default: %(default)s)")
    p.add_argument("--rel-info", help="JSON map of relation codes to names")
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train a model and write a checkpoint directory")
    p.add_argument("--train", help=f"training file (default: ${DATA_ENV}/{DEFAULT_TRAIN_FILE})")
    p.add_argument("--dev", help="development file for per-epoch F1")
    p.add_argument("--graph", help="prebuilt graph JSON (default: build from --train)")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--trace", help="CSV loss trace (epoch, mean_loss, dev_F1)")
    add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write predictions for a corpus")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--input", required=True, help="DocRED-format file to label")
    p.add_argument("--out", required=True, help="prediction JSON output path")
    p.add_argument("--theta", type=float, default=0.85, help="decision margin (default: %(default)s)")
    p.add_argument("--submission", action="store_true", help="omit the score field")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="precision, recall, F1, Ign F1 and multi-relation F1")
    p.add_argument("--gold", required=True, help="gold DocRED-format file")
    p.add_argument("--pred", help="prediction JSON file")
    p.add_argument("--checkpoint", help="score a checkpoint directly instead of --pred")
    p.add_argument("--train", help="training file; enables Ign F1")
    p.add_argument("--theta", type=float, default=0.85, help="decision margin with --checkpoint (default: %(default)s)")
    p.add_argument("--theta-sweep", help="with --checkpoint: try START:STOP:STEP or a comma list and keep the best")
    p.add_argument("--json", help="also write the scores as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train the baseline and ablated variants under one seed")
    p.add_argument("--train", help=f"training file (default: ${DATA_ENV}/{DEFAULT_TRAIN_FILE})")
    p.add_argument("--eval", help="held-out file to score (default: the training file)")
    p.add_argument("--switch", action="append", default=[], choices=ABLATIONS, help="variant to add; repeatable")
    p.add_argument("--out", help="write the comparison rows as JSON")
    add_train_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference checks of every component")
    p.add_argument("--seed", type=int, default=0, help="fixture seed (default: %(default)s)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write a synthetic corpus with planted relation correlations")
    p.add_argument("--out", required=True, help="output JSON path")
    p.add_argument("--docs", type=int, default=50, help="documents (default: %(default)s)")
    p.add_argument("--relations", type=int, default=6, help="relation types (default: %(default)s)")
    p.add_argument("--vocab", type=int, default=100, help="vocabulary size (default: %(default)s)")
    p.add_argument("--entities", type=int, default=4, help="entities per document (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="document seed (default: %(default)s)")
    p.add_argument("--world-seed", type=int, default=0, help="seed of the shared label table (default: %(default)s)")
    p.add_argument("--prefix", default="doc", help="title prefix (default: %(default)s)")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"lace: error: {exc}", file=sys.stderr)
        return 2
    except (CorpusError, ValueError, OSError) as exc:
        print(f"lace: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
