"""Model assembly: hyperparameters, variant plumbing, and the forward pass.

A variant toggles three blocks of the full network — skeleton attention
(SA), relevance-augmented answer states (RR), and multi-hop fusion (MF) —
or swaps in one of two baselines: a BiLSTM over the answer alone, or a
BiLSTM over the concatenated question+answer token sequence, both
mean-pooled and classified directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Value
from .answer_repr import AnswerRepr, RelevanceParams, build_answer_repr
from .corpus import IndexedSample, Vocab
from .encoders import BiLstmParams, EmbeddingTable, encode_answer, encode_question
from .fusion import ClassifierParams, FusionParams, FusionState, classify_logits, fuse
from .question_repr import (
    QuestionRepr, SkeletonWeights, answer_context, full_repr, skeleton_repr,
    skeleton_scores, uniform_repr,
)

ABLATION_FLAGS = ("sa", "rr", "mf")
ALL_VARIANTS = (
    "antnet", "antnet-sa", "antnet-rr", "antnet-mf",
    "antnet-sa-rr", "antnet-sa-mf", "antnet-rr-mf",
)
BASELINES = ("bilstm-a", "bilstm-qa")


@dataclass(frozen=True)
class VariantSpec:
    """Which blocks are active; ablation names read as 'without <block>'."""

    use_sa: bool = True
    use_rr: bool = True
    use_mf: bool = True
    baseline: str | None = None

    @classmethod
    def parse(cls, name: str) -> "VariantSpec":
        key = name.strip().lower().replace("_", "-")
        if key in BASELINES:
            return cls(baseline=key)
        parts = key.split("-")
        if parts[0] != "antnet":
            raise ValueError(f"unknown variant {name!r} (expected one of "
                             f"{ALL_VARIANTS + BASELINES})")
        removed = parts[1:]
        if len(set(removed)) != len(removed) or any(f not in ABLATION_FLAGS for f in removed):
            raise ValueError(f"unknown variant {name!r}: bad ablation flags {removed}")
        return cls(use_sa="sa" not in removed, use_rr="rr" not in removed,
                   use_mf="mf" not in removed)

    @property
    def id(self) -> str:
        if self.baseline:
            return self.baseline
        suffix = "".join(
            f"-{flag}" for flag, used in
            (("sa", self.use_sa), ("rr", self.use_rr), ("mf", self.use_mf)) if not used
        )
        return "antnet" + suffix

    @property
    def display_name(self) -> str:
        if self.baseline == "bilstm-a":
            return "BiLSTM(A)"
        if self.baseline == "bilstm-qa":
            return "BiLSTM(Q+A)"
        parts = [f"-{f.upper()}" for f, used in
                 (("sa", self.use_sa), ("rr", self.use_rr), ("mf", self.use_mf)) if not used]
        return "AntNet" + "".join(parts)


@dataclass
class Hyper:
    """Structural sizes; defaults follow the reference training settings."""

    emb_dim: int = 256
    hidden_dim: int = 256
    ne: int = 13
    hops: int = 3
    r: int | None = None
    max_len: int = 33

    @property
    def r_eff(self) -> int:
        return self.hidden_dim if self.r is None else self.r

    def validate(self) -> None:
        if self.hidden_dim % 2 != 0 or self.hidden_dim < 2:
            raise ValueError(f"hidden_dim must be even and >= 2, got {self.hidden_dim}")
        if self.ne < 1:
            raise ValueError(f"ne must be >= 1, got {self.ne}")
        if self.hops < 0:
            raise ValueError(f"hops must be >= 0, got {self.hops}")
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ForwardResult:
    """Graph outputs of one sample's forward pass, for loss and inspection."""

    logits: Value
    question: QuestionRepr | None = None
    answer: AnswerRepr | None = None
    fusion: FusionState | None = None


class AntNetModel:
    """One variant's parameters plus its forward pass."""

    def __init__(self, variant: VariantSpec, hyper: Hyper, vocab: Vocab,
                 seed: int = 0, embeddings: EmbeddingTable | None = None):
        hyper.validate()
        self.variant = variant
        self.hyper = hyper
        self.vocab = vocab
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA17]))
        d, emb = hyper.hidden_dim, hyper.emb_dim
        self.embeddings = embeddings or EmbeddingTable.random(len(vocab), emb, rng=rng)
        if self.embeddings.emb_dim != emb:
            raise ValueError(
                f"embedding table width {self.embeddings.emb_dim} != emb_dim {emb}"
            )

        self.bilstm_q = None
        self.bilstm_a = None
        self.w_s = None
        self.w_a = None
        self.relevance = None
        self.fusion_params = None

        if variant.baseline:
            self.bilstm_a = BiLstmParams.init(emb, d, rng)
            self.classifier = ClassifierParams.init(d, rng)
            return

        self.bilstm_q = BiLstmParams.init(emb + 1, d, rng)
        self.bilstm_a = BiLstmParams.init(emb, d, rng)
        if variant.use_sa:
            scale = 1.0 / np.sqrt(emb)
            self.w_s = Value(rng.uniform(-scale, scale, size=(emb, emb)), requires_grad=True)
        self.w_a = Value(rng.uniform(-1.0 / np.sqrt(d), 1.0 / np.sqrt(d), size=(d, d)),
                         requires_grad=True)
        if variant.use_rr:
            self.relevance = RelevanceParams.init(d, hyper.ne, rng)
        self.effective_hops = hyper.hops if variant.use_mf else 0
        if self.effective_hops > 0:
            in_dim = d + hyper.ne if variant.use_rr else d
            self.fusion_params = FusionParams.init(d, in_dim, hyper.r_eff,
                                                   self.effective_hops, rng)
        self.classifier = ClassifierParams.init(2 * d, rng)

    # -- parameters ---------------------------------------------------------

    def named_params(self) -> dict:
        """Trainable parameters in a fixed, deterministic order."""
        out: dict = {}
        if not self.embeddings.frozen:
            out["embeddings"] = self.embeddings.value
        if self.bilstm_q is not None:
            out.update(self.bilstm_q.named("bilstm_q"))
        if self.bilstm_a is not None:
            out.update(self.bilstm_a.named("bilstm_a"))
        if self.w_s is not None:
            out["w_s"] = self.w_s
        if self.w_a is not None:
            out["w_a"] = self.w_a
        if self.relevance is not None:
            out.update(self.relevance.named())
        if self.fusion_params is not None:
            out.update(self.fusion_params.named())
        out.update(self.classifier.named())
        return out

    def n_params(self) -> int:
        return sum(v.data.size for v in self.named_params().values())

    # -- forward ------------------------------------------------------------

    def forward(self, sample: IndexedSample, skeleton_ctx: np.ndarray | None = None,
                dropout: float = 0.0, rng=None) -> ForwardResult:
        """Build the loss-ready graph for one sample.

        `skeleton_ctx` is the cached mean answer embedding for this sample's
        question; when absent (unseen question at inference) the sample's
        own answer serves as context.
        """
        if self.variant.baseline == "bilstm-a":
            return self._forward_bilstm(sample.answer_idx, dropout, rng)
        if self.variant.baseline == "bilstm-qa":
            tokens = np.concatenate([sample.question_idx, sample.answer_idx])
            return self._forward_bilstm(tokens, dropout, rng)
        return self._forward_antnet(sample, skeleton_ctx, dropout, rng)

    def _forward_bilstm(self, token_idx: np.ndarray, dropout: float, rng) -> ForwardResult:
        h = encode_answer(self.embeddings.lookup(token_idx), self.bilstm_a)
        if dropout > 0.0:
            h = ad.dropout(h, dropout, rng)
        pooled = ad.mean_rows(h)
        if dropout > 0.0:
            pooled = ad.dropout(pooled, dropout, rng)
        return ForwardResult(logits=classify_logits(pooled, self.classifier))

    def _forward_antnet(self, sample: IndexedSample, skeleton_ctx, dropout, rng) -> ForwardResult:
        q_emb = self.embeddings.lookup(sample.question_idx)
        a_emb = self.embeddings.lookup(sample.answer_idx)
        hq = encode_question(q_emb, sample.indicator, self.bilstm_q)
        ha = encode_answer(a_emb, self.bilstm_a)
        if dropout > 0.0:
            hq = ad.dropout(hq, dropout, rng)
            ha = ad.dropout(ha, dropout, rng)

        weights: SkeletonWeights | None = None
        if self.variant.use_sa:
            ctx = skeleton_ctx
            if ctx is None:
                ctx = answer_context([a_emb])
            weights = skeleton_scores(q_emb, ctx, self.w_s)
            u = skeleton_repr(hq, weights)
        else:
            u = uniform_repr(hq)
        v, att = full_repr(hq, u, self.w_a)

        arep = build_answer_repr(ha, u, self.relevance)
        v_final, fstate = fuse(v, u, arep.h_prime, self.fusion_params,
                               self.effective_hops)
        if dropout > 0.0:
            v_final = ad.dropout(v_final, dropout, rng)
        logits = classify_logits(v_final, self.classifier)
        return ForwardResult(
            logits=logits,
            question=QuestionRepr(hq=hq, u=u, v=v, att=att, weights=weights),
            answer=arep,
            fusion=fstate,
        )

    def predict_probs(self, sample: IndexedSample,
                      skeleton_ctx: np.ndarray | None = None) -> np.ndarray:
        """Inference-only probability vector (no graph, no dropout)."""
        with ad.no_grad():
            logits = self.forward(sample, skeleton_ctx).logits.data
        z = logits - logits.max()
        e = np.exp(z)
        return e / e.sum()


def build_model(variant_name: str, hyper: Hyper, vocab: Vocab, seed: int = 0,
                embeddings: EmbeddingTable | None = None) -> AntNetModel:
    return AntNetModel(VariantSpec.parse(variant_name), hyper, vocab,
                       seed=seed, embeddings=embeddings)
