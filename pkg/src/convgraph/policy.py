"""Multi-label dialogue policy: one ReLU hidden layer, sigmoid outputs.

The network reads the concatenated history window and predicts the agent's
dialogue-act bits. Gradients are derived by hand; ``grad_check`` compares them
with central finite differences. Training uses plain mini-batch SGD with
either BCE against the gold target or SBCE, which backpropagates only the
lowest-loss reference among the graph's valid actions.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .dialogue import as_bits, bits_to_str
from .errors import ConfigMismatch, DataError, DivergenceDetected, EmptyReferenceSet, ShapeMismatch, WidthMismatch
from .graph import ConvGraph
from .instances import InstanceSet, check_compatible
from .metrics import f1, reference_set

EPS = 1e-12
MODEL_FORMAT = "convgraph-policy/1"


class Loss(str, Enum):
    BCE = "bce"
    SBCE = "sbce"


@dataclass
class PolicyModel:
    w1: np.ndarray  # (hidden, n * width)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (n_act, hidden)
    b2: np.ndarray  # (n_act,)
    n: int = 1
    seed: int = 0

    PARAMS = ("w1", "b1", "w2", "b2")

    @classmethod
    def init(cls, n: int, width: int, n_act: int, hidden: int = 256, seed: int = 13,
             rng: np.random.Generator | None = None) -> "PolicyModel":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
        rng = np.random.default_rng(seed) if rng is None else rng
        fan1, fan2 = n * width, hidden
        k1, k2 = 1.0 / math.sqrt(max(fan1, 1)), 1.0 / math.sqrt(fan2)
        return cls(
            w1=rng.uniform(-k1, k1, (hidden, fan1)),
            b1=rng.uniform(-k1, k1, hidden),
            w2=rng.uniform(-k2, k2, (n_act, hidden)),
            b2=rng.uniform(-k2, k2, n_act),
            n=n,
            seed=seed,
        )

    @property
    def input_size(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def n_act(self) -> int:
        return self.w2.shape[0]

    @property
    def width(self) -> int:
        return self.input_size // self.n

    def params(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in self.PARAMS}

    def copy(self) -> "PolicyModel":
        return copy.deepcopy(self)

    def is_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params().values())

    def __eq__(self, other):
        if not isinstance(other, PolicyModel):
            return NotImplemented
        return (self.n, self.seed) == (other.n, other.seed) and all(
            np.array_equal(a, b) for a, b in zip(self.params().values(), other.params().values())
        )

    # -- io -----------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "n": self.n,
            "width": self.width,
            "n_act": self.n_act,
            "hidden": self.hidden,
            "seed": self.seed,
            **{k: v.tolist() for k, v in self.params().items()},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict()) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def from_dict(cls, obj: dict) -> "PolicyModel":
        if obj.get("format") != MODEL_FORMAT:
            raise DataError(f"unsupported model format {obj.get('format')!r}")
        m = cls(**{k: np.asarray(obj[k], dtype=np.float64) for k in cls.PARAMS},
                n=obj["n"], seed=obj["seed"])
        expected = {
            "w1": (obj["hidden"], obj["n"] * obj["width"]),
            "b1": (obj["hidden"],),
            "w2": (obj["n_act"], obj["hidden"]),
            "b2": (obj["n_act"],),
        }
        for k, shape in expected.items():
            if getattr(m, k).shape != shape:
                raise DataError(f"model parameter {k} has shape {getattr(m, k).shape}, expected {shape}")
        return m

    @classmethod
    def load(cls, path) -> "PolicyModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _as_input(m: PolicyModel, history) -> np.ndarray:
    if isinstance(history, np.ndarray):
        x = history.astype(np.float64).ravel()
    else:
        x = np.concatenate([as_bits(h) for h in history]).astype(np.float64)
    if x.shape[0] != m.input_size:
        raise ShapeMismatch(f"history width {x.shape[0]} != model input {m.input_size}")
    return x


def _forward(m: PolicyModel, X: np.ndarray):
    z1 = X @ m.w1.T + m.b1
    h = np.maximum(z1, 0.0)
    p = expit(h @ m.w2.T + m.b2)
    return z1, h, p


def forward(m: PolicyModel, history) -> np.ndarray:
    """Action probabilities for one history (bitstrings or a flat vector)."""
    return _forward(m, _as_input(m, history)[None, :])[2][0]


def predict_proba(m: PolicyModel, X: np.ndarray) -> np.ndarray:
    if X.ndim != 2 or X.shape[1] != m.input_size:
        raise ShapeMismatch(f"input shape {X.shape} incompatible with model input {m.input_size}")
    return _forward(m, X)[2]


def predict(m: PolicyModel, history, threshold: float = 0.5) -> np.ndarray:
    return (forward(m, history) > threshold).astype(np.uint8)


# -- losses -----------------------------------------------------------------


def _bce_terms(y: np.ndarray, p: np.ndarray) -> np.ndarray:
    pc = np.clip(p, EPS, 1.0 - EPS)
    return -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))


def bce_loss(y, p) -> float:
    y = np.asarray(as_bits(y) if isinstance(y, str) else y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if y.shape != p.shape:
        raise WidthMismatch(f"widths differ: {y.shape} vs {p.shape}")
    return float(_bce_terms(y, p).sum())


def _canonical(y) -> str:
    return y if isinstance(y, str) else bits_to_str(y)


def sbce_loss(p, references: Sequence) -> tuple[float, int]:
    """Minimum BCE over ``references`` and the index of the reference chosen.

    Exact ties go to the reference with the smallest bitstring.
    """
    if len(references) == 0:
        raise EmptyReferenceSet("sbce_loss needs at least one reference")
    losses = [bce_loss(y, p) for y in references]
    best = min(range(len(references)), key=lambda i: (losses[i], _canonical(references[i])))
    return losses[best], best


# -- gradients --------------------------------------------------------------


def _batch_loss_and_grads(m: PolicyModel, X: np.ndarray, refs: Sequence[np.ndarray]):
    """Mean per-instance loss over the batch and parameter gradients.

    ``refs[i]`` is a (k_i, n_act) array of candidate targets for instance i,
    sorted canonically; k_i == 1 reduces to BCE.
    """
    z1, h, p = _forward(m, X)
    counts = np.fromiter((r.shape[0] for r in refs), dtype=np.intp, count=len(refs))
    owner = np.repeat(np.arange(len(refs)), counts)
    Yall = np.concatenate(refs, axis=0)
    per_ref = _bce_terms(Yall, p[owner]).sum(axis=1)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    chosen = np.empty(len(refs), dtype=np.intp)
    for i, (s, c) in enumerate(zip(starts, counts)):
        chosen[i] = s + int(np.argmin(per_ref[s:s + c]))  # first minimum = canonical tie-break
    Y = Yall[chosen]
    losses = per_ref[chosen]
    B = X.shape[0]
    unclamped = (p > EPS) & (p < 1.0 - EPS)
    dz2 = (p - Y) * unclamped / B
    dh = dz2 @ m.w2
    dz1 = dh * (z1 > 0)
    grads = {
        "w1": dz1.T @ X,
        "b1": dz1.sum(axis=0),
        "w2": dz2.T @ h,
        "b2": dz2.sum(axis=0),
    }
    return float(losses.mean()), grads, losses


def _loss_only(m: PolicyModel, X: np.ndarray, refs) -> float:
    _, _, p = _forward(m, X)
    return float(np.mean([_bce_terms(r, p[i]).sum(axis=1).min() for i, r in enumerate(refs)]))


def _sorted_refs(references: Sequence) -> np.ndarray:
    uniq = sorted({_canonical(y) for y in references})
    return np.stack([as_bits(y) for y in uniq]).astype(np.float64)


def grad_check(m: PolicyModel, history, references: Sequence, loss: Loss | str = Loss.BCE,
               epsilon: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    For BCE only the first reference is used.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ConfigMismatch("epsilon must lie in [1e-7, 1e-3]")
    loss = Loss(loss)
    X = _as_input(m, history)[None, :]
    refs = [_sorted_refs(references if loss is Loss.SBCE else references[:1])]
    _, grads, _ = _batch_loss_and_grads(m, X, refs)
    worst = 0.0
    probe = m.copy()
    for name, param in probe.params().items():
        g = grads[name]
        it = np.nditer(param, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = param[idx]
            param[idx] = orig + epsilon
            up = _loss_only(probe, X, refs)
            param[idx] = orig - epsilon
            down = _loss_only(probe, X, refs)
            param[idx] = orig
            numeric = (up - down) / (2.0 * epsilon)
            analytic = g[idx]
            denom = max(abs(numeric), abs(analytic))
            if denom > 1e-8:
                worst = max(worst, abs(numeric - analytic) / denom)
            else:
                worst = max(worst, abs(numeric - analytic))
    return worst


# -- training ---------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    loss: Loss = Loss.BCE
    batch_size: int = 32
    patience: int = 5
    learning_rate: float = 0.05
    max_epochs: int = 100
    seed: int = 13
    threshold: float = 0.5
    hidden: int = 256

    def __post_init__(self):
        object.__setattr__(self, "loss", Loss(self.loss))
        if self.patience < 1:
            raise ConfigMismatch("patience must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigMismatch("threshold must lie strictly between 0 and 1")
        if self.batch_size < 1 or self.max_epochs < 1 or self.hidden < 1:
            raise ConfigMismatch("batch_size, max_epochs and hidden must be positive")


@dataclass
class TrainLog:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_hard_f1: float | None = None
    stopped_early: bool = False
    n_train: int = 0
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def build_references(s: InstanceSet, g: ConvGraph | None, loss: Loss) -> list[np.ndarray]:
    """Candidate targets per instance: gold only for BCE, valid actions for SBCE."""
    out = []
    for inst in s.instances:
        if loss is Loss.SBCE and g is not None:
            refs, _ = reference_set(g, g.agent_node_for(inst.history[0]), inst.target)
        else:
            refs = [inst.target]
        out.append(_sorted_refs(refs))
    return out


def dataset_loss(m: PolicyModel, s: InstanceSet, g: ConvGraph | None = None,
                 loss: Loss | str = Loss.BCE) -> float:
    X, _ = s.arrays()
    return _loss_only(m, X, build_references(s, g, Loss(loss)))


def hard_f1_score(m: PolicyModel, s: InstanceSet, threshold: float = 0.5) -> float:
    X, Y = s.arrays()
    P = predict_proba(m, X) > threshold
    return math.fsum(f1(y, p) for y, p in zip(Y, P)) / len(Y)


def train(base: InstanceSet, dev: InstanceSet | None, g_train: ConvGraph | None,
          cfg: TrainConfig = TrainConfig()) -> tuple[PolicyModel, TrainLog]:
    """Mini-batch SGD with early stopping on development HardF1.

    The snapshot returned is the latest epoch that reached the best dev score;
    patience counts epochs without strict improvement.
    """
    if len(base) == 0:
        raise ConfigMismatch("no training instances")
    if dev is not None and len(dev):
        check_compatible(base, dev)
    if cfg.loss is Loss.SBCE and g_train is None:
        raise ConfigMismatch("SBCE training needs the training graph")
    X, _ = base.arrays()
    refs = build_references(base, g_train, cfg.loss)
    width = len(base.instances[0].history[0])
    n_act = len(base.instances[0].target)
    rng = np.random.default_rng(cfg.seed)
    model = PolicyModel.init(base.n, width, n_act, cfg.hidden, cfg.seed, rng=rng)
    log = TrainLog(n_train=len(base), config={**asdict(cfg), "loss": cfg.loss.value})

    best = model.copy()
    best_score = -math.inf
    stale = 0
    N = X.shape[0]
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(N)
        batch_losses = []
        for start in range(0, N, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, grads, losses = _batch_loss_and_grads(model, X[idx], [refs[i] for i in idx])
            batch_losses.append(losses)
            for name, param in model.params().items():
                param -= cfg.learning_rate * grads[name]
            if not model.is_finite():
                raise DivergenceDetected(epoch, best)
        train_loss = math.fsum(np.concatenate(batch_losses)) / N
        entry = {"epoch": epoch, "train_loss": train_loss}
        if dev is not None and len(dev):
            score = hard_f1_score(model, dev, cfg.threshold)
            entry["dev_hard_f1"] = score
        else:
            score = 0.0
        log.epochs.append(entry)
        if score >= best_score:
            if score > best_score:
                stale = 0
            else:
                stale += 1
            best_score = score
            best = model.copy()
            log.best_epoch = epoch
        else:
            stale += 1
        if dev is not None and len(dev) and stale >= cfg.patience:
            log.stopped_early = epoch < cfg.max_epochs
            break
    log.best_dev_hard_f1 = best_score if dev is not None and len(dev) else None
    return best, log
