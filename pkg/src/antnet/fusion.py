"""Multi-hop fusion of question-side vectors with answer states, and the classifier.

Two independent hop stacks run in parallel: one seeded with the full
question vector v, one with the skeleton vector u.  Each hop attends over
the (optionally relevance-augmented) answer states, pools them, and updates
its running state through a tanh unit plus a linear carry.  The final
states of both stacks are concatenated and classified into
{true, false, uncertain} by a softmax layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Value
from .corpus import Label


@dataclass
class HopParams:
    """One hop's parameters; `in_dim` is the answer-state width (d or d+N_e)."""

    w_m: Value   # (r,)
    w_h: Value   # (r, in_dim)
    w_x: Value   # (r, d)
    b: Value     # (r,)
    w_f1: Value  # (d, in_dim)
    w_f2: Value  # (d, d)
    b_f: Value   # (d,)

    @classmethod
    def init(cls, d: int, in_dim: int, r: int, rng) -> "HopParams":
        s1 = 1.0 / np.sqrt(in_dim + d)
        s2 = 1.0 / np.sqrt(r)
        return cls(
            w_m=Value(rng.uniform(-s2, s2, size=r), requires_grad=True),
            w_h=Value(rng.uniform(-s1, s1, size=(r, in_dim)), requires_grad=True),
            w_x=Value(rng.uniform(-s1, s1, size=(r, d)), requires_grad=True),
            b=Value(np.zeros(r), requires_grad=True),
            w_f1=Value(rng.uniform(-s1, s1, size=(d, in_dim)), requires_grad=True),
            w_f2=Value(rng.uniform(-s1, s1, size=(d, d)), requires_grad=True),
            b_f=Value(np.zeros(d), requires_grad=True),
        )

    def named(self, prefix: str) -> dict:
        return {
            f"{prefix}.w_m": self.w_m, f"{prefix}.w_h": self.w_h,
            f"{prefix}.w_x": self.w_x, f"{prefix}.b": self.b,
            f"{prefix}.w_f1": self.w_f1, f"{prefix}.w_f2": self.w_f2,
            f"{prefix}.b_f": self.b_f,
        }

    def n_params(self) -> int:
        return sum(v.data.size for v in self.named("x").values())


def hop_param_count(d: int, in_dim: int, r: int) -> int:
    """Analytic size of one hop: |w_m|+|W_h|+|W_x|+|b|+|W_f1|+|W_f2|+|b_f|."""
    return r + r * in_dim + r * d + r + d * in_dim + d * d + d


@dataclass
class FusionParams:
    """Hop stacks for the full-vector side and the skeleton-vector side."""

    full_hops: list
    skeleton_hops: list

    @classmethod
    def init(cls, d: int, in_dim: int, r: int, hops: int, rng,
             share_across_hops: bool = False) -> "FusionParams":
        def stack():
            if share_across_hops and hops > 0:
                shared = HopParams.init(d, in_dim, r, rng)
                return [shared] * hops
            return [HopParams.init(d, in_dim, r, rng) for _ in range(hops)]

        return cls(full_hops=stack(), skeleton_hops=stack())

    def named(self, prefix: str = "fusion") -> dict:
        out = {}
        for tag, stack in (("full", self.full_hops), ("skel", self.skeleton_hops)):
            seen = set()
            for t, hp in enumerate(stack):
                if id(hp) in seen:  # shared-parameter stacks list one copy
                    continue
                seen.add(id(hp))
                out.update(hp.named(f"{prefix}.{tag}.hop{t}"))
        return out


@dataclass
class FusionState:
    """Intermediate states for inspection: per-stack vectors and attentions."""

    full_states: list = field(default_factory=list)      # F(0..T)
    skeleton_states: list = field(default_factory=list)  # S(0..T)
    full_attentions: list = field(default_factory=list)
    skeleton_attentions: list = field(default_factory=list)


def hop(f_prev: Value, h_prime: Value, p: HopParams) -> tuple:
    """One fusion hop: attend over answer states, pool, update the running state.

    Returns (next state, attention over answer positions).
    """
    n = h_prime.data.shape[0]
    proj = ad.matmul(h_prime, ad.transpose(p.w_h))
    bias = ad.add(ad.matvec(p.w_x, f_prev), p.b)
    m = ad.matvec(ad.tanh(ad.add(proj, ad.tile_row(bias, n))), p.w_m)
    att = ad.softmax(m)
    pooled = ad.matvec(ad.transpose(h_prime), att)
    f_next = ad.add(ad.tanh(ad.add(ad.matvec(p.w_f1, pooled), p.b_f)),
                    ad.matvec(p.w_f2, f_prev))
    return f_next, att


def fuse(v: Value, u: Value, h_prime: Value, params: FusionParams | None,
         hops: int) -> tuple:
    """Run both hop stacks and concatenate their final states.

    With hops == 0 the answer states are bypassed entirely and the result
    is exactly [v; u].
    """
    state = FusionState(full_states=[v], skeleton_states=[u])
    if hops > 0:
        if params is None or len(params.full_hops) < hops or len(params.skeleton_hops) < hops:
            raise ValueError(f"fusion parameters missing for {hops} hops")
        f, s = v, u
        for t in range(hops):
            f, att_f = hop(f, h_prime, params.full_hops[t])
            s, att_s = hop(s, h_prime, params.skeleton_hops[t])
            state.full_states.append(f)
            state.skeleton_states.append(s)
            state.full_attentions.append(att_f)
            state.skeleton_attentions.append(att_s)
    v_final = ad.concat(state.full_states[-1], state.skeleton_states[-1], axis=0)
    return v_final, state


@dataclass
class ClassifierParams:
    w: Value  # (3, 2d)
    b: Value  # (3,)

    @classmethod
    def init(cls, in_dim: int, rng) -> "ClassifierParams":
        scale = 1.0 / np.sqrt(in_dim)
        return cls(
            w=Value(rng.uniform(-scale, scale, size=(3, in_dim)), requires_grad=True),
            b=Value(np.zeros(3), requires_grad=True),
        )

    def named(self, prefix: str = "classifier") -> dict:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}


def classify_logits(v_final: Value, params: ClassifierParams) -> Value:
    return ad.add(ad.matvec(params.w, v_final), params.b)


def classify(v_final: Value, params: ClassifierParams) -> Value:
    """Probability 3-vector over (true, false, uncertain)."""
    return ad.softmax(classify_logits(v_final, params))


def predicted_label(probs: np.ndarray) -> Label:
    """Argmax with ties broken by label order (true < false < uncertain)."""
    return Label(int(np.argmax(probs)))


def nll(probs: Value, gold: Label) -> Value:
    """Definitional cross-entropy -log p[gold] of an explicit probability vector."""
    return ad.neg(ad.log(ad.pick(probs, int(gold))))


def cross_entropy_logits(logits: Value, gold: Label) -> Value:
    """Stable cross-entropy straight from logits (log-sum-exp path)."""
    return ad.neg(ad.pick(ad.log_softmax(logits), int(gold)))


def batch_loss(losses: list) -> Value:
    """Mean reduction, so the learning rate is batch-size independent."""
    if not losses:
        raise ValueError("batch_loss needs at least one sample loss")
    return ad.mean_(ad.stack(losses))
