"""Training loop, evaluation metrics, checkpointing, and hyperparameter sweeps.

Everything is deterministic given the config seed: shuffling, dropout, and
parameter initialization draw from independent child streams of one seed
sequence, so two runs with the same config produce bit-identical histories
and checkpoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import NumericError, Value
from .corpus import (
    IndexedSample, Label, LABEL_NAMES, Sample, SplitSpec, Vocab, index_corpus, split,
)
from .encoders import EmbeddingTable
from .fusion import cross_entropy_logits
from .model import AntNetModel, Hyper, VariantSpec


@dataclass
class TrainConfig:
    learning_rate: float = 5e-4
    dropout: float = 0.2
    max_epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int | None = 10
    target_train_acc: float | None = None

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0,1), got {self.dropout}")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("max_epochs and batch_size must be >= 1")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "learning_rate", "dropout", "max_epochs", "batch_size", "seed",
            "beta1", "beta2", "eps", "patience", "target_train_acc")}


class Adam:
    """Adaptive-moment optimizer over a named parameter dict."""

    def __init__(self, params: dict, lr: float = 5e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            m_hat = self.m[k] / bias1
            v_hat = self.v[k] / bias2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# metrics


@dataclass
class EvalReport:
    accuracy: float
    macro_f1: float
    per_class: dict
    confusion: np.ndarray  # rows gold, columns predicted
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class": self.per_class,
            "confusion": self.confusion.tolist(),
            "n_samples": self.n_samples,
        }


def metrics_from_confusion(cm: np.ndarray) -> EvalReport:
    """Accuracy, per-class precision/recall/F1, and macro-F1 (0/0 counts as 0)."""
    total = int(cm.sum())
    accuracy = float(np.trace(cm) / total) if total else 0.0

    def ratio(num: float, den: float) -> float:
        return float(num / den) if den else 0.0

    per_class = {}
    f1s = []
    for i, name in enumerate(LABEL_NAMES):
        precision = ratio(cm[i, i], cm[:, i].sum())
        recall = ratio(cm[i, i], cm[i, :].sum())
        f1 = ratio(2 * precision * recall, precision + recall)
        per_class[name] = {"precision": precision, "recall": recall, "f1": f1}
        f1s.append(f1)
    return EvalReport(accuracy=accuracy, macro_f1=float(np.mean(f1s)),
                      per_class=per_class, confusion=cm, n_samples=total)


def build_skeleton_cache(train_set: list, embeddings: EmbeddingTable) -> dict:
    """Per-question mean answer embedding over the training answers.

    Each distinct answer counts once even when it appears in several
    option-conditioned samples of the same question.
    """
    table = embeddings.value.data
    sums: dict = {}
    for s in train_set:
        per_q = sums.setdefault(s.question_id, {})
        if s.answer_id not in per_q:
            per_q[s.answer_id] = table[s.answer_idx].mean(axis=0)
    return {qid: np.mean(list(answers.values()), axis=0) for qid, answers in sums.items()}


def evaluate(model: AntNetModel, samples: list, skeleton_cache: dict | None = None) -> EvalReport:
    """Deterministic evaluation (dropout off, no graph recording)."""
    if not samples:
        raise ValueError("evaluate needs at least one sample")
    cache = skeleton_cache or {}
    cm = np.zeros((3, 3), dtype=np.int64)
    with ad.no_grad():
        for s in samples:
            logits = model.forward(s, cache.get(s.question_id)).logits.data
            cm[int(s.label), int(np.argmax(logits))] += 1
    return metrics_from_confusion(cm)


def _dataset_loss_acc(model: AntNetModel, samples: list, cache: dict) -> tuple:
    """Mean cross-entropy and accuracy without building a gradient graph."""
    total, correct = 0.0, 0
    with ad.no_grad():
        for s in samples:
            logits = model.forward(s, cache.get(s.question_id)).logits.data
            z = logits - logits.max()
            total += float(np.log(np.exp(z).sum()) - z[int(s.label)])
            correct += int(np.argmax(logits)) == int(s.label)
    n = len(samples)
    return total / n, correct / n


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    history: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False
    reached_target: bool = False
    final_train_accuracy: float | None = None


def _param_norm_diagnostic(params: dict, top: int = 3) -> str:
    norms = sorted(((float(np.abs(v.data).max()), k) for k, v in params.items()),
                   reverse=True)
    return ", ".join(f"{k}={n:.3e}" for n, k in norms[:top])


def train(model: AntNetModel, train_set: list, val_set: list, config: TrainConfig,
          skeleton_cache: dict | None = None) -> TrainResult:
    """Optimize the model in place; the best-on-validation weights are restored.

    `skeleton_cache` defaults to the per-question answer contexts built from
    the training set.  History rows carry per-epoch train loss/accuracy
    (measured on the fly, dropout active) and clean validation metrics.
    """
    config.validate()
    if not train_set:
        raise ValueError("training set is empty")
    cache = skeleton_cache
    if cache is None:
        cache = (build_skeleton_cache(train_set, model.embeddings)
                 if model.variant.baseline is None and model.variant.use_sa else {})

    params = model.named_params()
    opt = Adam(params, lr=config.learning_rate, beta1=config.beta1,
               beta2=config.beta2, eps=config.eps)
    seq = np.random.SeedSequence([config.seed, 0x7123])
    shuffle_rng, dropout_rng = (np.random.default_rng(s) for s in seq.spawn(2))

    result = TrainResult()
    best_val = -1.0
    best_snapshot = None
    since_best = 0

    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(train_set))
        epoch_loss, correct = 0.0, 0
        for b0 in range(0, len(order), config.batch_size):
            batch = [train_set[i] for i in order[b0:b0 + config.batch_size]]
            diag = (f"epoch {epoch}, batch {b0 // config.batch_size}; "
                    f"largest parameters: {_param_norm_diagnostic(params)}")
            try:
                losses = []
                for s in batch:
                    res = model.forward(s, cache.get(s.question_id),
                                        dropout=config.dropout, rng=dropout_rng)
                    losses.append(cross_entropy_logits(res.logits, s.label))
                    correct += int(np.argmax(res.logits.data)) == int(s.label)
                loss = ad.mean_(ad.stack(losses))
            except NumericError as e:
                raise NumericError(f"{e} (at {diag})") from None
            if not np.isfinite(loss.data):
                raise NumericError(f"non-finite loss at {diag}")
            epoch_loss += float(loss.data) * len(batch)
            opt.zero_grad()
            loss.backward()
            opt.step()

        train_loss = epoch_loss / len(train_set)
        train_acc = correct / len(train_set)
        row = {"epoch": epoch, "train_loss": train_loss, "train_acc": train_acc,
               "val_loss": None, "val_acc": None}

        if val_set:
            val_loss, val_acc = _dataset_loss_acc(model, val_set, cache)
            row["val_loss"], row["val_acc"] = val_loss, val_acc
            if val_acc > best_val:
                best_val = val_acc
                result.best_epoch = epoch
                best_snapshot = {k: v.data.copy() for k, v in params.items()}
                since_best = 0
            else:
                since_best += 1
        result.history.append(row)

        if config.target_train_acc is not None and train_acc >= config.target_train_acc:
            _, clean_acc = _dataset_loss_acc(model, train_set, cache)
            result.final_train_accuracy = clean_acc
            if clean_acc >= config.target_train_acc:
                result.reached_target = True
                if not val_set:
                    result.best_epoch = epoch
                break
        if val_set and config.patience is not None and since_best >= config.patience:
            result.stopped_early = True
            break

    if best_snapshot is not None:
        for k, v in params.items():
            v.data[...] = best_snapshot[k]
    elif not val_set:
        result.best_epoch = len(result.history)
    if result.final_train_accuracy is None:
        _, result.final_train_accuracy = _dataset_loss_acc(model, train_set, cache)
    return result


# ---------------------------------------------------------------------------
# checkpoint container: magic, length-prefixed JSON header, raw float64 arrays


_MAGIC = b"RQANET01"


def save_checkpoint(path, model: AntNetModel, skeleton_cache: dict | None = None) -> None:
    """Versioned binary container; writes are byte-reproducible."""
    arrays: list = [("embeddings", model.embeddings.value.data)]
    arrays += [(name, v.data) for name, v in model.named_params().items()
               if name != "embeddings"]
    cache = skeleton_cache or {}
    for qid in sorted(cache):
        arrays.append((f"ctx/{qid}", np.asarray(cache[qid], dtype=np.float64)))
    header = {
        "format": 1,
        "variant": model.variant.id,
        "hyper": model.hyper.to_dict(),
        "seed": model.seed,
        "frozen_embeddings": model.embeddings.frozen,
        "vocab": model.vocab.to_list(),
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple:
    """Rebuild (model, skeleton_cache) from a checkpoint file."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"not a checkpoint file (magic {magic!r})")
        n = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(n).decode("utf-8"))
        if header.get("format") != 1:
            raise ValueError(f"unsupported checkpoint version {header.get('format')!r}")
        loaded = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"checkpoint truncated while reading {spec['name']!r}")
            loaded[spec["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()

    vocab = Vocab.from_list(header["vocab"])
    table = EmbeddingTable(loaded["embeddings"], frozen=header["frozen_embeddings"])
    model = AntNetModel(VariantSpec.parse(header["variant"]), Hyper(**header["hyper"]),
                        vocab, seed=header["seed"], embeddings=table)
    for name, value in model.named_params().items():
        if name != "embeddings":
            value.data[...] = loaded[name]
    cache = {name[4:]: arr for name, arr in loaded.items() if name.startswith("ctx/")}
    return model, cache


# ---------------------------------------------------------------------------
# orchestration: corpus -> splits -> trained model -> test report


@dataclass
class ExperimentResult:
    model: AntNetModel
    vocab: Vocab
    skeleton_cache: dict
    train_result: TrainResult
    train_set: list
    val_set: list
    test_set: list
    test_report: EvalReport


def run_experiment(variant_name: str, samples: list, hyper: Hyper,
                   config: TrainConfig, split_spec: SplitSpec | None = None,
                   embeddings: EmbeddingTable | None = None) -> ExperimentResult:
    """Split, index, train, and evaluate one variant end to end."""
    spec = split_spec or SplitSpec(seed=config.seed)
    train_samples, val_samples, test_samples = split(samples, spec)
    vocab = Vocab.from_samples(train_samples)
    train_set = index_corpus(train_samples, vocab, hyper.max_len)
    val_set = index_corpus(val_samples, vocab, hyper.max_len)
    test_set = index_corpus(test_samples, vocab, hyper.max_len)

    model = AntNetModel(VariantSpec.parse(variant_name), hyper, vocab,
                        seed=config.seed, embeddings=embeddings)
    cache = (build_skeleton_cache(train_set, model.embeddings)
             if model.variant.baseline is None and model.variant.use_sa else {})
    train_result = train(model, train_set, val_set, config, skeleton_cache=cache)
    test_report = evaluate(model, test_set, cache) if test_set else None
    return ExperimentResult(model=model, vocab=vocab, skeleton_cache=cache,
                            train_result=train_result, train_set=train_set,
                            val_set=val_set, test_set=test_set,
                            test_report=test_report)


def sweep(param: str, values: list, variant_name: str, samples: list,
          hyper: Hyper, config: TrainConfig,
          split_spec: SplitSpec | None = None) -> list:
    """Train once per value of `param` ('ne' or 'hops') under a shared seed."""
    if param not in ("ne", "hops"):
        raise ValueError(f"sweep parameter must be 'ne' or 'hops', got {param!r}")
    if not values:
        raise ValueError("sweep needs at least one value")
    rows = []
    for value in values:
        h = replace(hyper, **{param: int(value)})
        outcome = run_experiment(variant_name, samples, h, config, split_spec)
        rows.append({
            "param": param,
            "value": int(value),
            "test_accuracy": outcome.test_report.accuracy,
            "test_macro_f1": outcome.test_report.macro_f1,
            "best_epoch": outcome.train_result.best_epoch,
        })
    return rows
