"""Manifest-driven experiment runner.

One run = (strategy, loss, seed). Every run trains a policy on the strategy's
training set and scores it on the development set, the deduplicated test set
and the original test set. Strategies other than BASE are compared with the
BASE runs of the same loss by Welch's t-test.
"""
from __future__ import annotations

import json
import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .augment import MfsConfig, duplicate_dialogues, downsample, mfs_augment, oracle_augment
from .dialogue import Split, build_vocabulary, load_corpus
from .errors import ConfigMismatch, ConvGraphError, DataError
from .graph import build_graph, graph_stats
from .instances import InstanceSet, dedupe, extract_instances, unique_count
from .metrics import PredictionRecord, evaluate, welch_ttest
from .policy import Loss, PolicyModel, TrainConfig, predict_proba, train

log = logging.getLogger(__name__)

SCHEMA = 1
DEFAULT_SEEDS = (13, 17, 19, 23, 29, 31, 37, 41, 43, 47)
BLOCKS = ("dev", "test_dedup", "test")


class Strategy(str, Enum):
    BASE = "BASE"
    DSAMPLE = "DSAMPLE"
    DUPL = "DUPL"
    MFS = "MFS"
    MFS_PLUS_BASE = "MFS_PLUS_BASE"
    ORACLE_PLUS_BASE = "ORACLE_PLUS_BASE"


class StageError(ConvGraphError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


@contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except (ConvGraphError, OSError, ValueError, KeyError) as exc:
        raise StageError(name, exc) from exc


def _as_list(value, default):
    if value is None:
        return list(default)
    return [value] if isinstance(value, str) else list(value)


@dataclass
class ExperimentManifest:
    train: Path
    dev: Path
    test: Path
    output: Path
    strategies: list[Strategy] = field(default_factory=lambda: [Strategy.BASE])
    losses: list[Loss] = field(default_factory=lambda: [Loss.BCE])
    n: int = 4
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    hidden: int = 256
    batch_size: int = 32
    patience: int = 5
    learning_rate: float = 0.05
    max_epochs: int = 100
    threshold: float = 0.5
    cap: int = 64
    dupl_factor: int = 2
    data_seed: int = 13
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, obj: dict, base_dir: Path | str = ".") -> "ExperimentManifest":
        base_dir = Path(base_dir)
        try:
            paths = {k: base_dir / obj[k] for k in ("train", "dev", "test", "output")}
        except KeyError as exc:
            raise ConfigMismatch(f"manifest missing field {exc}") from None
        strategies = _as_list(obj.get("strategies", obj.get("strategy")), ["BASE"])
        losses = _as_list(obj.get("losses", obj.get("loss")), ["bce"])
        m = cls(
            **paths,
            strategies=[Strategy(str(s).upper()) for s in strategies],
            losses=[Loss(str(s).lower()) for s in losses],
            seeds=[int(s) for s in obj.get("seeds", DEFAULT_SEEDS)],
            raw=dict(obj),
            **{k: obj[k] for k in ("n", "hidden", "batch_size", "patience", "learning_rate",
                                   "max_epochs", "threshold", "cap", "dupl_factor", "data_seed")
               if k in obj},
        )
        m.validate()
        return m

    @classmethod
    def load(cls, path) -> "ExperimentManifest":
        path = Path(path)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"manifest is not valid JSON: {exc}") from None
        return cls.from_dict(obj, path.parent)

    def validate(self) -> None:
        for split in ("train", "dev", "test"):
            p = getattr(self, split)
            if not p.is_file():
                raise ConfigMismatch(f"{split} corpus not found: {p}")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigMismatch("seeds must be non-empty and distinct")
        if len(set(self.strategies)) != len(self.strategies):
            raise ConfigMismatch("strategies must be distinct")

    def train_config(self, loss: Loss, seed: int) -> TrainConfig:
        return TrainConfig(loss=loss, batch_size=self.batch_size, patience=self.patience,
                           learning_rate=self.learning_rate, max_epochs=self.max_epochs,
                           seed=seed, threshold=self.threshold, hidden=self.hidden)


def _num(x: float):
    """JSON-safe float: non-finite values become strings."""
    return x if math.isfinite(x) else str(x)


def _mean_std(values):
    n = len(values)
    mean = math.fsum(values) / n
    std = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1)) if n > 1 else 0.0
    return mean, std


def score_block(model: PolicyModel, s: InstanceSet, eval_graph, threshold: float) -> dict:
    X, _ = s.arrays()
    P = predict_proba(model, X) > threshold
    records = [
        PredictionRecord(eval_graph.agent_node_for(inst.history[0]),
                         "".join("1" if b else "0" for b in p), inst.target)
        for inst, p in zip(s.instances, P)
    ]
    return evaluate(records, eval_graph).to_dict()


def build_training_set(strategy: Strategy, m: ExperimentManifest, ctx: dict) -> InstanceSet:
    base, g_train = ctx["base"], ctx["g_train"]
    if strategy is Strategy.BASE:
        return base
    if strategy is Strategy.DSAMPLE:
        return downsample(base)
    if strategy is Strategy.DUPL:
        doubled = duplicate_dialogues(ctx["train_corpus"], m.dupl_factor, m.data_seed)
        return extract_instances(doubled, ctx["vocab"], m.n)
    mfs = mfs_augment(g_train, MfsConfig(m.n, m.cap))
    if strategy is Strategy.MFS:
        return mfs
    if strategy is Strategy.MFS_PLUS_BASE:
        return mfs_augment(g_train, MfsConfig(m.n, m.cap, combine_with_base=True), base=base)
    oracle = oracle_augment(mfs, ctx["dev"], ctx["test"], base=base)
    return base.replace(base.instances + oracle.instances, strategy="oracle+base")


def run_experiment(m: ExperimentManifest) -> dict:
    out = m.output
    for sub in ("graphs", "instances", "models", "logs"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(m.raw, indent=1, sort_keys=True) + "\n")

    with stage("load"):
        corpora = {
            "train": load_corpus(m.train, Split.TRAIN),
            "dev": load_corpus(m.dev, Split.DEV),
            "test": load_corpus(m.test, Split.TEST),
        }
    with stage("vocabulary"):
        vocab = build_vocabulary(corpora.values())
        vocab.save(out / "vocab.json")
    with stage("graph"):
        g_train = build_graph(corpora["train"], vocab)
        g_eval = build_graph(corpora.values(), vocab)
        g_train.save(out / "graphs" / "train.json")
        g_eval.save(out / "graphs" / "eval.json")
    with stage("extract"):
        base = extract_instances(corpora["train"], vocab, m.n)
        dev = extract_instances(corpora["dev"], vocab, m.n)
        test = extract_instances(corpora["test"], vocab, m.n)
        test_dedup = dedupe(test)
        for name, s in (("base", base), ("dev", dev), ("test", test), ("test_dedup", test_dedup)):
            s.save(out / "instances" / f"{name}.inst")
    eval_sets = {"dev": dev, "test_dedup": test_dedup, "test": test}
    ctx = {"base": base, "dev": dev, "test": test, "g_train": g_train, "vocab": vocab,
           "train_corpus": corpora["train"]}

    data = {
        "vocab_hash": vocab.hash,
        "state_width": vocab.width,
        "act_width": vocab.n_act,
        "dialogues": {k: len(c) for k, c in corpora.items()},
        "instances": {"base": len(base), "base_unique": unique_count(base), "dev": len(dev),
                      "test": len(test), "test_dedup": len(test_dedup)},
        "graph_train": vars(graph_stats(g_train, corpora["train"])),
        "graph_eval": vars(graph_stats(g_eval, corpora.values())),
    }

    experiments = []
    for strategy in m.strategies:
        with stage(f"augment:{strategy.value}"):
            train_set = build_training_set(strategy, m, ctx)
            train_set.save(out / "instances" / f"train_{strategy.value}.inst")
        for loss in m.losses:
            runs = []
            for seed in m.seeds:
                tag = f"{strategy.value}_{loss.value}_seed{seed}"
                log.info("training %s on %d instances", tag, len(train_set))
                with stage(f"train:{tag}"):
                    model, tlog = train(train_set, dev, g_train, m.train_config(loss, seed))
                    model.save(out / "models" / f"{tag}.json")
                    tlog.save(out / "logs" / f"{tag}.json")
                with stage(f"evaluate:{tag}"):
                    blocks = {b: score_block(model, s, g_eval, m.threshold) for b, s in eval_sets.items()}
                runs.append({"seed": seed, "epochs": len(tlog.epochs), "best_epoch": tlog.best_epoch,
                             "model": f"models/{tag}.json", "blocks": blocks})
            summary = {}
            for b in BLOCKS:
                hard_mean, hard_std = _mean_std([r["blocks"][b]["hard_f1"] for r in runs])
                soft_mean, soft_std = _mean_std([r["blocks"][b]["soft_f1"] for r in runs])
                summary[b] = {"hard_f1_mean": hard_mean, "hard_f1_std": hard_std,
                              "soft_f1_mean": soft_mean, "soft_f1_std": soft_std}
            experiments.append({"strategy": strategy.value, "loss": loss.value,
                                "train_size": len(train_set), "runs": runs, "summary": summary})

    _attach_ttests(experiments)
    report = {"schema": SCHEMA, "manifest": m.raw, "data": data, "experiments": experiments}
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    (out / "report.txt").write_text(render_table(report))
    return report


def _attach_ttests(experiments: list[dict]) -> None:
    base = {e["loss"]: e for e in experiments if e["strategy"] == Strategy.BASE.value}
    for e in experiments:
        ref = base.get(e["loss"])
        if ref is None or ref is e:
            continue
        tests = {}
        for b in BLOCKS:
            tests[b] = {}
            for metric in ("hard_f1", "soft_f1"):
                a = [r["blocks"][b][metric] for r in e["runs"]]
                r_ = [r["blocks"][b][metric] for r in ref["runs"]]
                if len(a) < 2 or len(r_) < 2:
                    continue
                res = welch_ttest(a, r_)
                tests[b][metric] = {"t": _num(res.t), "p": _num(res.p), "significant": res.significant}
        e["ttest_vs_base"] = tests


def render_table(report: dict) -> str:
    """Tab-delimited rendering: one row per evaluation block, H-F1/S-F1 per column.

    ``*`` marks a significant difference from BASE with the same loss.
    """
    exps = report["experiments"]
    header = ["block"]
    for e in exps:
        col = f"{e['strategy']}/{e['loss']}"
        header += [f"{col} H-F1", f"{col} S-F1"]
    lines = ["\t".join(header)]
    for b in BLOCKS:
        row = [b]
        for e in exps:
            for metric in ("hard_f1", "soft_f1"):
                value = 100.0 * e["summary"][b][f"{metric}_mean"]
                sig = e.get("ttest_vs_base", {}).get(b, {}).get(metric, {}).get("significant")
                row.append(f"{value:.1f}{'*' if sig else ''}")
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"
