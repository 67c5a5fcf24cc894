"""Data model, I/O, splitting, indexing, and synthetic generation for reverse-QA corpora.

A sample is one classification unit: machine question tokens, human answer
tokens, an optional option term (multi-choice questions carry their option
terms verbatim in the question text), and a gold label from
{true, false, uncertain}.  T/F questions have no option field; their
indicator is all-zero.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

UNK_TOKEN = "<unk>"
UNK_INDEX = 0


class CorpusError(ValueError):
    """Malformed corpus file or invariant-violating sample."""


class Label(enum.IntEnum):
    """Gold categories, in canonical (argmax tie-break) order."""

    TRUE = 0
    FALSE = 1
    UNCERTAIN = 2

    @classmethod
    def from_string(cls, s: str) -> "Label":
        try:
            return _LABELS_BY_NAME[s]
        except KeyError:
            raise CorpusError(f"unknown label {s!r} (expected one of {LABEL_NAMES})") from None

    def to_string(self) -> str:
        return LABEL_NAMES[self]


LABEL_NAMES = ("true", "false", "uncertain")
_LABELS_BY_NAME = {"true": Label.TRUE, "false": Label.FALSE, "uncertain": Label.UNCERTAIN}


@dataclass
class Sample:
    """One {question, answer, option} triplet with its gold label."""

    question_id: str
    question: list[str]
    answer_id: str
    answer: list[str]
    option: list[str] | None
    label: Label

    @property
    def question_type(self) -> str:
        return "TF" if self.option is None else "MC"

    def validate(self) -> None:
        where = f"sample {self.question_id}/{self.answer_id}"
        if not self.question or not all(isinstance(t, str) and t for t in self.question):
            raise CorpusError(f"{where}: question tokens must be non-empty strings")
        if not self.answer or not all(isinstance(t, str) and t for t in self.answer):
            raise CorpusError(f"{where}: answer tokens must be non-empty strings")
        if self.option is not None:
            if not self.option or not all(isinstance(t, str) and t for t in self.option):
                raise CorpusError(f"{where}: option tokens must be non-empty strings")
            missing = [t for t in self.option if t not in self.question]
            if missing:
                raise CorpusError(
                    f"{where}: option tokens {missing} do not occur in the question "
                    "(multi-choice questions must contain their option terms)"
                )


@dataclass
class CorpusStats:
    n_questions: int = 0
    n_tf_questions: int = 0
    n_mc_questions: int = 0
    n_answers: int = 0
    n_samples: int = 0
    label_counts: dict = field(default_factory=lambda: {name: 0 for name in LABEL_NAMES})

    def format_table(self) -> str:
        lines = [
            f"questions   {self.n_questions:>8}  ({self.n_tf_questions} TF, {self.n_mc_questions} MC)",
            f"answers     {self.n_answers:>8}",
            f"samples     {self.n_samples:>8}",
        ]
        for name in LABEL_NAMES:
            lines.append(f"  {name:<10}{self.label_counts[name]:>8}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "n_questions": self.n_questions,
            "n_tf_questions": self.n_tf_questions,
            "n_mc_questions": self.n_mc_questions,
            "n_answers": self.n_answers,
            "n_samples": self.n_samples,
            "label_counts": dict(self.label_counts),
        }


def corpus_stats(samples: list[Sample]) -> CorpusStats:
    stats = CorpusStats()
    qtypes: dict[str, str] = {}
    answers = set()
    for s in samples:
        qtypes.setdefault(s.question_id, s.question_type)
        answers.add((s.question_id, s.answer_id))
        stats.n_samples += 1
        stats.label_counts[s.label.to_string()] += 1
    stats.n_questions = len(qtypes)
    stats.n_tf_questions = sum(1 for t in qtypes.values() if t == "TF")
    stats.n_mc_questions = stats.n_questions - stats.n_tf_questions
    stats.n_answers = len(answers)
    return stats


# ---------------------------------------------------------------------------
# file I/O: UTF-8 line-delimited JSON records


_FIELDS = ("question_id", "question", "answer_id", "answer", "option", "label")


def _sample_to_record(s: Sample) -> str:
    rec = {
        "question_id": s.question_id,
        "question": s.question,
        "answer_id": s.answer_id,
        "answer": s.answer,
        "option": s.option,
        "label": s.label.to_string(),
    }
    return json.dumps(rec, ensure_ascii=False, sort_keys=True)


def _record_to_sample(rec: dict, where: str) -> Sample:
    missing = [k for k in _FIELDS if k not in rec]
    if missing:
        raise CorpusError(f"{where}: missing fields {missing}")
    for key in ("question", "answer"):
        if not isinstance(rec[key], list):
            raise CorpusError(f"{where}: {key!r} must be an array of tokens")
    if rec["option"] is not None and not isinstance(rec["option"], list):
        raise CorpusError(f"{where}: 'option' must be an array of tokens or null")
    if not isinstance(rec["label"], str):
        raise CorpusError(f"{where}: 'label' must be a string")
    sample = Sample(
        question_id=str(rec["question_id"]),
        question=list(rec["question"]),
        answer_id=str(rec["answer_id"]),
        answer=list(rec["answer"]),
        option=list(rec["option"]) if rec["option"] is not None else None,
        label=Label.from_string(rec["label"]),
    )
    sample.validate()
    return sample


def load_corpus(path) -> tuple[list[Sample], CorpusStats]:
    """Read a line-delimited corpus file; every sample is validated."""
    samples: list[Sample] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"{where}: invalid record: {e}") from None
            if not isinstance(rec, dict):
                raise CorpusError(f"{where}: expected an object, got {type(rec).__name__}")
            try:
                samples.append(_record_to_sample(rec, where))
            except CorpusError:
                raise
    return samples, corpus_stats(samples)


def save_corpus(samples: list[Sample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(_sample_to_record(s) + "\n")


def corpus_fingerprint(samples: list[Sample]) -> str:
    """Content hash of the canonical serialization (order-sensitive)."""
    h = hashlib.sha256()
    for s in samples:
        h.update(_sample_to_record(s).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


# ---------------------------------------------------------------------------
# splitting


@dataclass
class SplitSpec:
    """Train/test partition plus a validation share carved out of train.

    `by_question` keeps every sample of one question_id on the same side,
    preventing question leakage; `by_sample` splits at the sample level.
    """

    train_fraction: float = 0.8
    val_fraction: float = 0.1
    granularity: str = "by_question"
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0,1), got {self.train_fraction}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in (0,1), got {self.val_fraction}")
        if self.granularity not in ("by_question", "by_sample"):
            raise ValueError(f"granularity must be by_question or by_sample, got {self.granularity!r}")


def _partition_counts(n: int, train_fraction: float, val_fraction: float) -> tuple[int, int, int]:
    pool = min(max(int(round(n * train_fraction)), 1), n - 1)
    val = min(int(round(pool * val_fraction)), pool - 1)
    return pool - val, val, n - pool


def split(samples: list[Sample], spec: SplitSpec) -> tuple[list[Sample], list[Sample], list[Sample]]:
    """Deterministic (train, validation, test) partition of a corpus."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    if spec.granularity == "by_question":
        qids = list(dict.fromkeys(s.question_id for s in samples))
        if len(qids) < 3:
            raise ValueError(f"by_question split needs at least 3 questions, got {len(qids)}")
        order = rng.permutation(len(qids))
        n_train, n_val, _ = _partition_counts(len(qids), spec.train_fraction, spec.val_fraction)
        side = {}
        for rank, i in enumerate(order):
            side[qids[i]] = 0 if rank < n_train else (1 if rank < n_train + n_val else 2)
        parts: tuple[list, list, list] = ([], [], [])
        for s in samples:
            parts[side[s.question_id]].append(s)
        return parts
    else:
        n = len(samples)
        if n < 3:
            raise ValueError(f"by_sample split needs at least 3 samples, got {n}")
        order = rng.permutation(n)
        n_train, n_val, _ = _partition_counts(n, spec.train_fraction, spec.val_fraction)
        side = np.empty(n, dtype=np.intp)
        side[order[:n_train]] = 0
        side[order[n_train:n_train + n_val]] = 1
        side[order[n_train + n_val:]] = 2
        parts = ([], [], [])
        for i, s in enumerate(samples):
            parts[side[i]].append(s)
        return parts


# ---------------------------------------------------------------------------
# vocabulary and indexing


class Vocab:
    """Sorted-unique token table with index 0 reserved for out-of-vocabulary."""

    def __init__(self, tokens):
        uniq = sorted(set(tokens) - {UNK_TOKEN})
        self.tokens: list[str] = [UNK_TOKEN] + uniq
        self._index = {t: i for i, t in enumerate(self.tokens)}

    @classmethod
    def from_samples(cls, samples: list[Sample]) -> "Vocab":
        toks: list[str] = []
        for s in samples:
            toks.extend(s.question)
            toks.extend(s.answer)
            if s.option is not None:
                toks.extend(s.option)
        return cls(toks)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        return self._index.get(token, UNK_INDEX)

    def encode(self, tokens) -> np.ndarray:
        return np.array([self.index(t) for t in tokens], dtype=np.intp)

    def to_list(self) -> list[str]:
        return list(self.tokens)

    @classmethod
    def from_list(cls, tokens: list[str]) -> "Vocab":
        if not tokens or tokens[0] != UNK_TOKEN:
            raise ValueError("vocabulary list must start with the UNK token")
        v = cls.__new__(cls)
        v.tokens = list(tokens)
        v._index = {t: i for i, t in enumerate(v.tokens)}
        return v


@dataclass
class IndexedSample:
    """A Sample truncated and mapped to vocabulary indices, ready to encode."""

    question_id: str
    answer_id: str
    question_idx: np.ndarray
    indicator: np.ndarray
    answer_idx: np.ndarray
    option_idx: np.ndarray | None
    option_tokens: tuple | None
    label: Label
    option_lost: bool = False

    @property
    def question_type(self) -> str:
        return "TF" if self.option_idx is None else "MC"


def truncate_and_index(sample: Sample, vocab: Vocab, max_len: int = 33) -> IndexedSample:
    """Truncate to the first `max_len` tokens, map to indices, recompute indicator.

    The indicator is recomputed after truncation, so an option term that was
    truncated away yields an all-zero indicator and `option_lost=True`.
    """
    q_tokens = sample.question[:max_len]
    a_tokens = sample.answer[:max_len]
    if sample.option is not None:
        opt_set = set(sample.option)
        indicator = np.array([1.0 if t in opt_set else 0.0 for t in q_tokens])
        option_idx = vocab.encode(sample.option)
        option_tokens = tuple(sample.option)
        option_lost = not indicator.any()
    else:
        indicator = np.zeros(len(q_tokens))
        option_idx = None
        option_tokens = None
        option_lost = False
    return IndexedSample(
        question_id=sample.question_id,
        answer_id=sample.answer_id,
        question_idx=vocab.encode(q_tokens),
        indicator=indicator,
        answer_idx=vocab.encode(a_tokens),
        option_idx=option_idx,
        option_tokens=option_tokens,
        label=sample.label,
        option_lost=option_lost,
    )


def index_corpus(samples: list[Sample], vocab: Vocab, max_len: int = 33) -> list[IndexedSample]:
    return [truncate_and_index(s, vocab, max_len) for s in samples]


# ---------------------------------------------------------------------------
# synthetic corpus generation


@dataclass
class SynthConfig:
    """Knobs for the templated generator; labels are recoverable by construction."""

    n_tf_questions: int = 20
    n_mc_questions: int = 20
    answers_per_question: int = 8
    n_options_range: tuple = (2, 3)
    vocab_size: int = 60
    irrelevant_span_prob: float = 0.0
    uncertain_prob: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        for name in ("n_tf_questions", "n_mc_questions", "answers_per_question"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        lo, hi = self.n_options_range
        if not 2 <= lo <= hi:
            raise ValueError(f"n_options_range must satisfy 2 <= lo <= hi, got {self.n_options_range}")
        for name in ("irrelevant_span_prob", "uncertain_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {p}")
        if self.vocab_size < 3 * hi:
            raise ValueError(
                f"vocab_size {self.vocab_size} too small to embed up to {hi} option terms "
                f"(need at least {3 * hi})"
            )


_TF_TRUE = (
    ("yes", "it", "does"),
    ("yes", "i", "think", "so"),
    ("sure", "it", "does"),
)
_TF_FALSE = (
    ("no", "it", "does", "not"),
    ("no", "i", "do", "not", "think", "so"),
    ("never", "it", "does", "not"),
)
_UNCERTAIN = (
    ("hard", "to", "say"),
    ("i", "am", "not", "sure"),
    ("maybe", "maybe", "not"),
    ("no", "idea"),
)
_MC_PICK = (
    ("i", "choose", None),
    ("the", "best", "is", None),
    (None, "is", "right"),
    ("i", "prefer", None, "over", "others"),
)


def _fill(template: tuple, value: str) -> list[str]:
    return [value if t is None else t for t in template]


def generate_synthetic(config: SynthConfig) -> list[Sample]:
    """Templated T/F and option-contained MC samples, deterministic per seed.

    Decisive answers affirm or negate (TF) or mention the chosen option term
    (MC); hedged answers get the uncertain label for every option.  With
    probability `irrelevant_span_prob` an answer is padded with a distractor
    span of filler words.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    third = config.vocab_size // 3
    entities = [f"e{i}" for i in range(third)]
    options_pool = [f"o{i}" for i in range(third)]
    fillers = [f"w{i}" for i in range(config.vocab_size - 2 * third)]

    def maybe_noise(tokens: list[str]) -> list[str]:
        if rng.random() < config.irrelevant_span_prob:
            span = rng.integers(2, 6)
            tokens = tokens + [fillers[rng.integers(len(fillers))] for _ in range(span)]
        return tokens

    samples: list[Sample] = []

    for qi in range(config.n_tf_questions):
        qid = f"tf{qi:04d}"
        ent = entities[rng.integers(len(entities))]
        prop = fillers[rng.integers(len(fillers))]
        question = ["does", ent, "have", prop]
        for aj in range(config.answers_per_question):
            aid = f"{qid}-a{aj}"
            if rng.random() < config.uncertain_prob:
                answer = list(_UNCERTAIN[rng.integers(len(_UNCERTAIN))])
                label = Label.UNCERTAIN
            elif rng.random() < 0.5:
                answer = list(_TF_TRUE[rng.integers(len(_TF_TRUE))])
                label = Label.TRUE
            else:
                answer = list(_TF_FALSE[rng.integers(len(_TF_FALSE))])
                label = Label.FALSE
            samples.append(Sample(qid, question, aid, maybe_noise(answer), None, label))

    lo, hi = config.n_options_range
    for qi in range(config.n_mc_questions):
        qid = f"mc{qi:04d}"
        ent = entities[rng.integers(len(entities))]
        k = int(rng.integers(lo, hi + 1))
        opts = [options_pool[i] for i in rng.choice(len(options_pool), size=k, replace=False)]
        question = ["which", "of"] + opts + ["suits", ent]
        for aj in range(config.answers_per_question):
            aid = f"{qid}-a{aj}"
            if rng.random() < config.uncertain_prob:
                answer = maybe_noise(list(_UNCERTAIN[rng.integers(len(_UNCERTAIN))]))
                for opt in opts:
                    samples.append(Sample(qid, question, aid, answer, [opt], Label.UNCERTAIN))
            else:
                chosen = int(rng.integers(k))
                template = _MC_PICK[rng.integers(len(_MC_PICK))]
                answer = maybe_noise(_fill(template, opts[chosen]))
                for oi, opt in enumerate(opts):
                    label = Label.TRUE if oi == chosen else Label.FALSE
                    samples.append(Sample(qid, question, aid, answer, [opt], label))

    for s in samples:
        s.validate()
    return samples
