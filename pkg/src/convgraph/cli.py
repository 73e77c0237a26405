"""``convgraph`` command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .augment import MfsConfig, downsample, duplicate_dialogues, mfs_augment, oracle_augment
from .dialogue import Vocabulary, build_vocabulary, load_corpus, validate_lines
from .errors import ConvGraphError
from .experiment import ExperimentManifest, StageError, run_experiment
from .graph import STATS_HEADER, ConvGraph, build_graph, graph_stats, to_dot
from .instances import InstanceSet, dedupe, extract_instances, unique_count
from .metrics import PredictionRecord, evaluate, welch_ttest
from .policy import PolicyModel, TrainConfig, predict_proba, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _paths(value: str) -> list[Path]:
    return [Path(p) for p in value.split(",") if p]


def _emit(args, text: str, obj=None) -> None:
    if args.json and obj is not None:
        print(json.dumps(obj, indent=1, sort_keys=True))
    elif not args.quiet:
        print(text)


def _require_vocab(args) -> Vocabulary:
    if not args.vocab:
        raise UsageError("--vocab is required")
    return Vocabulary.load(args.vocab)


# -- subcommands --------------------------------------------------------------


def cmd_validate(args) -> int:
    dirty = False
    for path in args.paths:
        with open(path, encoding="utf-8") as fh:
            diags = list(validate_lines(fh))
        for d in diags:
            print(f"{path}: {d}", file=sys.stderr)
        dirty |= bool(diags)
        if not diags and not args.quiet:
            print(f"{path}: OK")
    return EXIT_DATA if dirty else EXIT_OK


def cmd_build_vocab(args) -> int:
    vocab = build_vocabulary([load_corpus(p) for p in args.inputs])
    vocab.save(args.out)
    _emit(args, f"{vocab.n_act} act labels, {vocab.n_belief} belief slots, hash {vocab.hash}",
          vocab.to_dict())
    return EXIT_OK


def cmd_build_graph(args) -> int:
    corpora = [load_corpus(p) for p in args.inputs]
    if args.vocab and Path(args.vocab).exists():
        vocab = Vocabulary.load(args.vocab)
    else:
        vocab = build_vocabulary(corpora)
        if args.vocab:
            vocab.save(args.vocab)
    g = build_graph(corpora, vocab, append_final=not args.no_final_state)
    g.save(args.out)
    _emit(args, repr(g), {"nodes": g.n_nodes, "edges": g.n_edges})
    return EXIT_OK


def cmd_stats(args) -> int:
    g = ConvGraph.load(args.graph)
    stats = graph_stats(g)
    instances = unique = None
    if args.inputs:
        vocab = _require_vocab(args)
        corpora = [load_corpus(p) for p in args.inputs]
        stats = graph_stats(g, corpora)
        extracted = [extract_instances(c, vocab, args.n) for c in corpora]
        merged = InstanceSet([i for s in extracted for i in s], args.n, vocab.hash)
        instances, unique = len(merged), unique_count(merged)
    obj = {**vars(stats), "instances": instances, "unique": unique}
    row = stats.row(args.name or Path(args.graph).stem, instances, unique)
    _emit(args, f"{STATS_HEADER}\n{row}", obj)
    return EXIT_OK


def cmd_extract(args) -> int:
    vocab = _require_vocab(args)
    s = extract_instances(load_corpus(args.input), vocab, args.n)
    if args.dedupe:
        s = dedupe(s)
    s.save(args.out)
    _emit(args, f"{len(s)} instances ({unique_count(s)} unique)",
          {"instances": len(s), "unique": unique_count(s)})
    return EXIT_OK


def cmd_augment(args) -> int:
    strategy = args.strategy
    if strategy == "duplicate":
        vocab = _require_vocab(args)
        corpus = duplicate_dialogues(load_corpus(args.input), args.factor, args.seed)
        out = extract_instances(corpus, vocab, args.n)
        out.meta.update(strategy="duplicate", factor=args.factor, seed=args.seed)
    elif strategy == "downsample":
        out = downsample(InstanceSet.load(args.input))
    else:
        if not args.graph:
            raise UsageError(f"--graph is required for strategy {strategy}")
        g = ConvGraph.load(args.graph)
        base = InstanceSet.load(args.input) if args.input else None
        if strategy == "mfs":
            cfg = MfsConfig(args.n, args.cap, combine_with_base=args.combine_base)
            out = mfs_augment(g, cfg, base=base)
        else:
            if not (args.dev and args.test):
                raise UsageError("oracle needs --dev and --test")
            mfs = mfs_augment(g, MfsConfig(args.n, args.cap))
            out = oracle_augment(mfs, InstanceSet.load(args.dev), InstanceSet.load(args.test), base=base)
            if args.combine_base:
                if base is None:
                    raise UsageError("--combine-base needs --in")
                out = out.replace(base.instances + out.instances, combine_base=True)
    out.save(args.out)
    _emit(args, f"{strategy}: {len(out)} instances", {"strategy": strategy, "instances": len(out)})
    return EXIT_OK


def cmd_train(args) -> int:
    base = InstanceSet.load(args.train)
    dev = InstanceSet.load(args.dev) if args.dev else None
    g = ConvGraph.load(args.graph) if args.graph else None
    cfg = TrainConfig(loss=args.loss, batch_size=args.batch, patience=args.patience,
                      learning_rate=args.lr, max_epochs=args.max_epochs, seed=args.seed,
                      threshold=args.threshold, hidden=args.hidden)
    model, log = train(base, dev, g, cfg)
    model.save(args.out)
    if args.log:
        log.save(args.log)
    _emit(args, f"trained {len(log.epochs)} epochs, best epoch {log.best_epoch}", log.to_dict())
    return EXIT_OK


def cmd_predict(args) -> int:
    model = PolicyModel.load(args.model)
    s = InstanceSet.load(args.input)
    X, _ = s.arrays()
    P = predict_proba(model, X) > args.threshold if len(s) else []
    with open(args.out, "w", encoding="utf-8") as fh:
        for inst, p in zip(s.instances, P):
            y_hat = "".join("1" if b else "0" for b in p)
            fh.write(json.dumps({"history": list(inst.history), "y_gold": inst.target,
                                 "y_hat": y_hat}) + "\n")
    _emit(args, f"{len(s)} predictions", {"predictions": len(s)})
    return EXIT_OK


def cmd_evaluate(args) -> int:
    g = ConvGraph.load(args.eval_graph)
    records = []
    with open(args.preds, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                records.append(PredictionRecord(g.agent_node_for(obj["history"][0]),
                                                obj["y_hat"], obj["y_gold"]))
    report = {"schema": 1, **evaluate(records, g).to_dict()}
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    _emit(args, "hard_f1\tsoft_f1\tn_records\tunresolved\n"
          f"{report['hard_f1']:.4f}\t{report['soft_f1']:.4f}\t{report['n_records']}\t{report['unresolved']}",
          report)
    return EXIT_OK


def _load_scores(path) -> list[float]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(obj, dict):
        obj = obj["scores"]
    return [float(x) for x in obj]


def cmd_ttest(args) -> int:
    res = welch_ttest(_load_scores(args.a), _load_scores(args.b), alpha=args.alpha)
    obj = {"t": res.t, "p": res.p, "df": res.df, "significant": res.significant}
    _emit(args, f"t={res.t:.6g}\tp={res.p:.6g}\tdf={res.df:.6g}\tsignificant={res.significant}",
          {k: (v if v == v else None) for k, v in obj.items()})
    return EXIT_OK


def cmd_experiment(args) -> int:
    manifest = ExperimentManifest.load(args.manifest)
    report = run_experiment(manifest)
    text = (manifest.output / "report.txt").read_text()
    _emit(args, text.rstrip("\n"), report)
    return EXIT_OK


def cmd_export_dot(args) -> int:
    g = ConvGraph.load(args.graph)
    vocab = Vocabulary.load(args.vocab) if args.vocab else None
    dot = to_dot(g, vocab)
    if args.out:
        Path(args.out).write_text(dot)
    else:
        sys.stdout.write(dot)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--vocab", help="vocabulary JSON")
    common.add_argument("--seed", type=int, default=13)
    common.add_argument("--quiet", action="store_true")
    common.add_argument("--json", action="store_true", help="machine-readable stdout")

    p = _Parser(prog="convgraph", description="Conversation graph toolkit", parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, parents=[common])
        sp.set_defaults(func=func)
        return sp

    sp = add("validate", cmd_validate, "check corpus JSONL files")
    sp.add_argument("paths", nargs="+")

    sp = add("build-vocab", cmd_build_vocab, "build a vocabulary from corpora")
    sp.add_argument("--in", dest="inputs", type=_paths, required=True)
    sp.add_argument("--out", required=True)

    sp = add("build-graph", cmd_build_graph, "build a conversation graph")
    sp.add_argument("--in", dest="inputs", type=_paths, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-final-state", action="store_true")

    sp = add("stats", cmd_stats, "graph statistics row")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--in", dest="inputs", type=_paths, help="corpora for instance counts")
    sp.add_argument("--n", type=int, default=4)
    sp.add_argument("--name")

    sp = add("extract", cmd_extract, "extract training instances")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--n", type=int, default=4)
    sp.add_argument("--out", required=True)
    sp.add_argument("--dedupe", action="store_true")

    sp = add("augment", cmd_augment, "apply a data strategy")
    sp.add_argument("--strategy", choices=["mfs", "oracle", "downsample", "duplicate"], required=True)
    sp.add_argument("--graph")
    sp.add_argument("--in", dest="input")
    sp.add_argument("--dev")
    sp.add_argument("--test")
    sp.add_argument("--n", type=int, default=4)
    sp.add_argument("--cap", type=int, default=64)
    sp.add_argument("--factor", type=int, default=2)
    sp.add_argument("--out", required=True)
    sp.add_argument("--combine-base", action="store_true")

    sp = add("train", cmd_train, "train a policy")
    sp.add_argument("--train", required=True)
    sp.add_argument("--dev")
    sp.add_argument("--graph")
    sp.add_argument("--loss", choices=["bce", "sbce"], default="bce")
    sp.add_argument("--hidden", type=int, default=256)
    sp.add_argument("--batch", type=int, default=32)
    sp.add_argument("--patience", type=int, default=5)
    sp.add_argument("--lr", type=float, default=0.05)
    sp.add_argument("--max-epochs", type=int, default=100)
    sp.add_argument("--threshold", type=float, default=0.5)
    sp.add_argument("--out", required=True)
    sp.add_argument("--log")

    sp = add("predict", cmd_predict, "predict agent acts")
    sp.add_argument("--model", required=True)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--threshold", type=float, default=0.5)

    sp = add("evaluate", cmd_evaluate, "HardF1 / SoftF1 of predictions")
    sp.add_argument("--preds", required=True)
    sp.add_argument("--eval-graph", required=True)
    sp.add_argument("--out")

    sp = add("ttest", cmd_ttest, "Welch's two-tailed t-test")
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    sp.add_argument("--alpha", type=float, default=0.05)

    sp = add("experiment", cmd_experiment, "run a manifest-driven experiment")
    sp.add_argument("manifest", nargs="?")
    sp.add_argument("--manifest", dest="manifest_flag")

    sp = add("export-dot", cmd_export_dot, "export a graph as DOT")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--out")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "experiment":
        args.manifest = args.manifest_flag or args.manifest
        if not args.manifest:
            parser.error("experiment needs a manifest path")
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"convgraph: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"convgraph: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConvGraphError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"convgraph: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"convgraph: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
