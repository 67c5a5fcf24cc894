"""Embedding table and bidirectional LSTM encoders.

Questions are encoded with a per-word binary indicator appended to the
embedding (1 on words belonging to the option term, 0 elsewhere; all-zero
for T/F questions).  Answers use a second BiLSTM with its own parameters
and no indicator.  Sequences are processed unpadded, one sample at a time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Value


class EmbeddingTable:
    """vocab_size x emb_dim lookup table; frozen by default.

    A frozen table takes no gradient and is bit-identical before and after
    training.  Unfrozen tables participate in the optimizer like any other
    parameter.
    """

    def __init__(self, matrix: np.ndarray, frozen: bool = True):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise ad.ShapeError(f"embedding matrix must be rank 2, got shape {matrix.shape}")
        self.value = Value(matrix, requires_grad=not frozen, op="embeddings")
        self.frozen = frozen

    @property
    def vocab_size(self) -> int:
        return self.value.data.shape[0]

    @property
    def emb_dim(self) -> int:
        return self.value.data.shape[1]

    @classmethod
    def random(cls, vocab_size: int, emb_dim: int = 256, rng=None, frozen: bool = True):
        rng = rng or np.random.default_rng(0)
        return cls(rng.uniform(-0.1, 0.1, size=(vocab_size, emb_dim)), frozen=frozen)

    @classmethod
    def from_pretrained(cls, path, vocab, emb_dim: int = 256, rng=None, frozen: bool = True):
        """Load line-delimited "token v1 ... vN" vectors; unseen tokens stay random."""
        table = cls.random(len(vocab), emb_dim, rng=rng, frozen=frozen)
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts:
                    continue
                token, vec = parts[0], parts[1:]
                if len(vec) != emb_dim:
                    raise ValueError(
                        f"{path}:{lineno}: expected {emb_dim} components, got {len(vec)}"
                    )
                if token in vocab:
                    table.value.data[vocab.index(token)] = [float(x) for x in vec]
        return table

    def lookup(self, indices) -> Value:
        idx = np.asarray(indices, dtype=np.intp)
        if idx.size and (idx.min() < 0 or idx.max() >= self.vocab_size):
            raise IndexError(
                f"token index out of range [0, {self.vocab_size}): "
                f"min {idx.min()}, max {idx.max()}"
            )
        return ad.take(self.value, idx)


@dataclass
class LstmDirection:
    """One direction's gate parameters, gates stacked [input, forget, cell, output]."""

    w_x: Value  # (4h, in_dim)
    w_h: Value  # (4h, h)
    b: Value    # (4h,)

    @property
    def hidden(self) -> int:
        return self.w_h.data.shape[1]


@dataclass
class BiLstmParams:
    fwd: LstmDirection
    bwd: LstmDirection

    @property
    def in_dim(self) -> int:
        return self.fwd.w_x.data.shape[1]

    @property
    def out_dim(self) -> int:
        return 2 * self.fwd.hidden

    @classmethod
    def init(cls, in_dim: int, d: int, rng) -> "BiLstmParams":
        """Random init with forget-gate biases at 1.0; d is the total (two-direction) size."""
        if d % 2 != 0 or d < 2:
            raise ValueError(f"bidirectional hidden size must be even and >= 2, got {d}")
        h = d // 2
        scale = 1.0 / np.sqrt(h + in_dim)

        def direction():
            b = np.zeros(4 * h)
            b[h:2 * h] = 1.0
            return LstmDirection(
                w_x=Value(rng.uniform(-scale, scale, size=(4 * h, in_dim)), requires_grad=True),
                w_h=Value(rng.uniform(-scale, scale, size=(4 * h, h)), requires_grad=True),
                b=Value(b, requires_grad=True),
            )

        return cls(fwd=direction(), bwd=direction())

    def named(self, prefix: str) -> dict:
        out = {}
        for tag, d in (("fwd", self.fwd), ("bwd", self.bwd)):
            out[f"{prefix}.{tag}.w_x"] = d.w_x
            out[f"{prefix}.{tag}.w_h"] = d.w_h
            out[f"{prefix}.{tag}.b"] = d.b
        return out


def _run_direction(p: LstmDirection, xs: Value, reverse: bool) -> list:
    """Hidden states of one LSTM direction, returned in original position order."""
    h = p.hidden
    n = xs.data.shape[0]
    state = Value(np.zeros(h))
    cell = Value(np.zeros(h))
    states = [None] * n
    positions = range(n - 1, -1, -1) if reverse else range(n)
    for t in positions:
        x_t = ad.take_row(xs, t)
        z = ad.add(ad.add(ad.matvec(p.w_x, x_t), ad.matvec(p.w_h, state)), p.b)
        gate_i = ad.sigmoid(ad.slice1d(z, 0, h))
        gate_f = ad.sigmoid(ad.slice1d(z, h, 2 * h))
        gate_g = ad.tanh(ad.slice1d(z, 2 * h, 3 * h))
        gate_o = ad.sigmoid(ad.slice1d(z, 3 * h, 4 * h))
        cell = ad.add(ad.mul(gate_f, cell), ad.mul(gate_i, gate_g))
        state = ad.mul(gate_o, ad.tanh(cell))
        states[t] = state
    return states


def bilstm_encode(params: BiLstmParams, xs: Value) -> Value:
    """Per-word states of both directions, concatenated: (n, in_dim) -> (n, d)."""
    if xs.data.ndim != 2 or xs.data.shape[1] != params.in_dim:
        raise ad.ShapeError(
            f"encoder expects (n, {params.in_dim}) inputs, got shape {xs.data.shape}"
        )
    fwd = ad.stack_rows(_run_direction(params.fwd, xs, reverse=False))
    bwd = ad.stack_rows(_run_direction(params.bwd, xs, reverse=True))
    return ad.concat(fwd, bwd, axis=1)


def encode_question(q_emb: Value, indicator: np.ndarray, params: BiLstmParams) -> Value:
    """Encode question words from [embedding; indicator] inputs.

    `q_emb` is the (n, emb_dim) embedding block (kept as an input so the raw
    embeddings can be shared with the skeleton-attention path); `indicator`
    is the per-word 0/1 option-membership flag.
    """
    ind = np.asarray(indicator, dtype=np.float64)
    if ind.shape != (q_emb.data.shape[0],):
        raise ad.ShapeError(
            f"indicator length {ind.shape} does not match question length "
            f"({q_emb.data.shape[0]},)"
        )
    xs = ad.concat(q_emb, Value(ind.reshape(-1, 1)), axis=1)
    return bilstm_encode(params, xs)


def encode_answer(a_emb: Value, params: BiLstmParams) -> Value:
    """Encode answer words from plain embeddings (no indicator)."""
    return bilstm_encode(params, a_emb)
