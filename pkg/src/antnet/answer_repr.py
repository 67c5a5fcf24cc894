"""Answer-side representations: relevance scoring and dimension enlarging.

Each answer word gets a scalar relevance score in (0,1) — a sigmoid gate on
[hidden state; skeleton vector] — which is then replicated into an
N_e-vector and concatenated onto the word's hidden state.  Replication (not
a learned projection) deliberately amplifies the one-dimensional signal so
the downstream fusion attention can feel it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Value


@dataclass
class RelevanceParams:
    """Gate parameters: a 2d-weight row, a scalar bias, and the enlargement length."""

    w_p: Value  # (2d,)
    b_p: Value  # scalar
    ne: int = 13

    def __post_init__(self):
        if self.ne < 1:
            raise ad.ShapeError(f"enlargement length must be >= 1, got {self.ne}")

    @classmethod
    def init(cls, d: int, ne: int, rng) -> "RelevanceParams":
        scale = 1.0 / np.sqrt(2 * d)
        return cls(
            w_p=Value(rng.uniform(-scale, scale, size=2 * d), requires_grad=True),
            b_p=Value(0.0, requires_grad=True),
            ne=ne,
        )

    def named(self, prefix: str = "relevance") -> dict:
        return {f"{prefix}.w_p": self.w_p, f"{prefix}.b_p": self.b_p}


def relevance_scores(ha: Value, u: Value, params: RelevanceParams) -> Value:
    """Per-word gate p_n = sigmoid(w_p . [h^A_n; u] + b_p), shape (N,)."""
    n = ha.data.shape[0]
    if params.w_p.data.shape[0] != ha.data.shape[1] + u.data.shape[0]:
        raise ad.ShapeError(
            f"relevance weights expect {params.w_p.data.shape[0]} inputs, "
            f"got {ha.data.shape[1]} + {u.data.shape[0]}"
        )
    x = ad.concat(ha, ad.tile_row(u, n), axis=1)
    return ad.sigmoid(ad.add(ad.matvec(x, params.w_p), params.b_p))


def enlarge(p: Value, ne: int) -> Value:
    """Replicate scores: a scalar becomes an ne-vector, an (N,) vector an (N, ne) block."""
    if ne < 1:
        raise ad.ShapeError(f"enlargement length must be >= 1, got {ne}")
    if p.data.ndim == 0:
        return ad.replicate(p, ne)
    return ad.replicate_cols(p, ne)


def augment(ha: Value, e: Value) -> Value:
    """Concatenate each hidden state with its enlarged score: (N, d+ne)."""
    return ad.concat(ha, e, axis=1)


@dataclass
class AnswerRepr:
    """Answer hidden states plus the relevance-augmented view used by fusion."""

    ha: Value
    p: Value | None        # None when the relevance block is ablated
    h_prime: Value         # equals ha under ablation

    @property
    def width(self) -> int:
        return self.h_prime.data.shape[1]


def build_answer_repr(ha: Value, u: Value, params: RelevanceParams | None) -> AnswerRepr:
    """Full pipeline; pass params=None to bypass the relevance block."""
    if params is None:
        return AnswerRepr(ha=ha, p=None, h_prime=ha)
    p = relevance_scores(ha, u, params)
    return AnswerRepr(ha=ha, p=p, h_prime=augment(ha, enlarge(p, params.ne)))


def relevance_record(answer_id: str, tokens: list, repr_: AnswerRepr) -> dict:
    """Inspection record: per-token relevance scores."""
    rec = {"answer_id": answer_id, "tokens": list(tokens)}
    if repr_.p is not None:
        rec["relevance"] = [float(x) for x in repr_.p.data]
    return rec
