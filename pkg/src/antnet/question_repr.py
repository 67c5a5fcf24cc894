"""Question-side representations.

Skeleton words are the question words that drive how people answer.  They
are found without supervision: each question word is scored by its average
bilinear similarity (through a learned matrix W_s) to the words of the
question's answers, computed on raw embeddings.  The skeleton vector u is
the score-weighted average of hidden states over the skeleton set, and the
full vector v re-attends over all question words conditioned on u.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Value

# normalized scores at or above uniform (1/M) mark skeleton membership;
# the slack absorbs float noise in the exactly-uniform case
_MEMBER_SLACK = 1e-12

# |sum of member scores| below this fraction of sum(|score|) counts as
# degenerate cancellation and falls back to uniform averaging
_CANCEL_GUARD = 1e-9


@dataclass
class SkeletonWeights:
    """Per-question-word attention scores and the derived skeleton set."""

    raw: Value          # (M,) unnormalized scores
    normalized: Value   # (M,) softmax over question words
    members: np.ndarray  # (M,) bool mask, at least one True

    def member_indices(self) -> np.ndarray:
        return np.flatnonzero(self.members)


def answer_context(answer_embs: list) -> np.ndarray:
    """Mean answer-word embedding: per-answer mean, then mean over answers.

    This is the constant factor of the skeleton score; caching it per
    question lets training reuse all of a question's answers while W_s
    stays inside the gradient path.
    """
    if not answer_embs:
        raise ValueError("answer_context needs at least one answer")
    means = []
    for emb in answer_embs:
        a = emb.data if isinstance(emb, Value) else np.asarray(emb, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] == 0:
            raise ad.ShapeError(f"answer embedding block must be (n>=1, emb), got {a.shape}")
        means.append(a.mean(axis=0))
    return np.mean(means, axis=0)


def skeleton_scores(q_emb: Value, answer_embs: list, w_s: Value) -> SkeletonWeights:
    """Score each question word against the answers through W_s.

    `q_emb` is the (M, emb) raw-embedding block; `answer_embs` is a
    non-empty list of (N_j, emb) blocks (or a precomputed context vector).
    """
    if isinstance(answer_embs, np.ndarray) and answer_embs.ndim == 1:
        ctx = Value(answer_embs)
    else:
        ctx = Value(answer_context(answer_embs))
    raw = ad.matvec(ad.matmul(q_emb, w_s), ctx)
    normalized = ad.softmax(raw)
    m = raw.data.shape[0]
    members = normalized.data >= (1.0 / m) - _MEMBER_SLACK
    if not members.any():
        members = np.zeros(m, dtype=bool)
        members[int(np.argmax(normalized.data))] = True
    return SkeletonWeights(raw=raw, normalized=normalized, members=members)


def skeleton_repr(hq: Value, weights: SkeletonWeights) -> Value:
    """Skeleton vector u: score-weighted average of member hidden states.

    Falls back to a uniform average when the member scores sum to (nearly)
    zero, which would otherwise divide by zero.
    """
    idx = weights.member_indices()
    if idx.size == 0:
        raise ValueError("skeleton set is empty")
    h_mem = ad.take(hq, idx)
    if idx.size == 1:
        return ad.take_row(hq, int(idx[0]))
    w_mem = ad.take(weights.raw, idx)
    denom = float(w_mem.data.sum())
    scale = np.abs(w_mem.data).sum()
    if scale == 0.0 or abs(denom) < _CANCEL_GUARD * scale:
        return ad.mean_rows(h_mem)
    total = ad.sum_(w_mem)
    return ad.mul(ad.matvec(ad.transpose(h_mem), w_mem), ad.reciprocal(total))


def uniform_repr(hq: Value) -> Value:
    """Skeleton-attention-free stand-in for u: plain average of hidden states."""
    return ad.mean_rows(hq)


def full_repr(hq: Value, u: Value, w_a: Value) -> tuple:
    """Full vector v: attention over all question words conditioned on u.

    Returns (v, att) where att is the softmax-normalized attention.
    """
    scores = ad.matvec(ad.matmul(hq, w_a), u)
    att = ad.softmax(scores)
    v = ad.matvec(ad.transpose(hq), att)
    return v, att


@dataclass
class QuestionRepr:
    """Everything the downstream modules need from the question side."""

    hq: Value
    u: Value
    v: Value
    att: Value
    weights: SkeletonWeights | None  # None when skeleton attention is ablated


def attention_record(question_id: str, tokens: list, repr_: QuestionRepr) -> dict:
    """Inspection record: per-token skeleton scores and full-attention weights."""
    rec = {
        "question_id": question_id,
        "tokens": list(tokens),
        "attention": [float(x) for x in repr_.att.data],
    }
    if repr_.weights is not None:
        rec["skeleton_scores"] = [float(x) for x in repr_.weights.normalized.data]
        rec["skeleton_members"] = [bool(b) for b in repr_.weights.members]
    return rec
