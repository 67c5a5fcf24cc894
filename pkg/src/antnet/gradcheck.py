"""Whole-model gradient verification on a fixed miniature fixture.

Each variant's mean batch loss is differentiated analytically and compared
against central finite differences, parameter element by parameter element.
The fixture is deliberately tiny (vocabulary of 20, 8-dim embeddings,
hidden size 8, sequences of at most 5 tokens) so the check stays fast while
still routing gradients through every block a variant owns.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import GradCheckReport, finite_diff_report, probe_coordinate
from .corpus import Label, Sample, Vocab, index_corpus
from .fusion import cross_entropy_logits
from .model import ALL_VARIANTS, AntNetModel, Hyper, VariantSpec
from .question_repr import skeleton_scores
from .training import build_skeleton_cache

TOY_HYPER = Hyper(emb_dim=8, hidden_dim=8, ne=3, hops=2, r=6, max_len=5)
DEFAULT_SEED = 1
# Central differences trade truncation error (grows with epsilon) against
# roundoff in the loss difference (shrinks with epsilon).  Through two
# encoders and two hop stacks some parameters see gradients near 1e-8,
# where roundoff ~ulp(loss)/2eps dominates; the top of the allowed epsilon
# range keeps both error sources well under the 1e-4 acceptance bar.
DEFAULT_EPSILON = 1e-3
DEFAULT_TOLERANCE = 1e-4

_FILLER = ("ash", "bay", "cod", "dew", "elm", "fig", "gum", "hay")


def fixture_vocab() -> Vocab:
    """Twenty entries: the fixture's own tokens padded with unused fillers."""
    used = sorted({t for s in fixture_samples() for t in s.question + s.answer})
    return Vocab(used + list(_FILLER))


def fixture_samples() -> list[Sample]:
    """One yes/no question and one option-conditioned question.

    Two samples cover both question types and two gold labels while keeping
    probe passes cheap; every trainable block sits on both loss paths.
    """
    return [
        Sample("q-tf", ["does", "rex", "bark"], "a0", ["yes", "loudly"],
               None, Label.TRUE),
        Sample("q-mc", ["pick", "red", "or", "blue"], "a1",
               ["red", "wins", "here"], ["blue"], Label.FALSE),
    ]


def build_fixture(variant: str = "antnet", seed: int = DEFAULT_SEED):
    """Model, indexed batch, and skeleton cache for one variant."""
    vocab = fixture_vocab()
    batch = index_corpus(fixture_samples(), vocab, TOY_HYPER.max_len)
    model = AntNetModel(VariantSpec.parse(variant), TOY_HYPER, vocab, seed=seed)
    cache = {}
    if model.variant.baseline is None and model.variant.use_sa:
        # At init scale the skeleton scores are ~1e-3, leaving every
        # normalized weight glued to the 1/M membership cutoff.  Evaluate
        # at a scaled-up W_s instead so no probe can flip membership.
        model.w_s.data *= 50.0
        cache = build_skeleton_cache(batch, model.embeddings)
        _guard_membership_margins(model, batch, cache)
    return model, batch, cache


def _guard_membership_margins(model, batch, cache, floor: float = 1e-3) -> None:
    """Refuse fixtures where a skeleton weight sits on the membership cutoff.

    Membership is a hard threshold on the normalized weights; a probe that
    flips it would make the loss discontinuous and the check meaningless.
    """
    with ad.no_grad():
        for s in batch:
            q_emb = model.embeddings.lookup(s.question_idx)
            w = skeleton_scores(q_emb, cache[s.question_id], model.w_s)
            scores = w.normalized.data
            margin = float(np.min(np.abs(scores - 1.0 / scores.shape[0])))
            if margin < floor:
                raise RuntimeError(
                    f"fixture seed leaves a skeleton weight within {margin:.1e} "
                    f"of the membership cutoff on {s.question_id}; pick another seed"
                )


def batch_loss_fn(model: AntNetModel, batch, cache):
    """Closure rebuilding the mean cross-entropy over the fixture batch."""

    def f():
        losses = [
            cross_entropy_logits(
                model.forward(s, cache.get(s.question_id)).logits, s.label)
            for s in batch
        ]
        return ad.mean_(ad.stack(losses))

    return f


# A single step size cannot satisfy every coordinate: elements with tiny
# gradients need a small epsilon (their O(eps^2) truncation term dwarfs the
# gradient itself) while the rest need a large one (roundoff ~ulp/2eps).
# Coordinates that look bad at the base epsilon are re-probed down this
# ladder and judged by their best agreement.
_REFINE_EPSILONS = (1e-4, 3e-5, 1e-5)


def _refine_noisy_coordinates(detail: GradCheckReport, f, params: dict,
                              threshold: float) -> int:
    flagged = [(name, int(i)) for name, errs in detail.coordinates.items()
               for i in np.flatnonzero(errs > threshold)]
    for name, i in flagged:
        ana = float(detail.analytic[name].reshape(-1)[i])
        best = float(detail.coordinates[name][i])
        for eps in _REFINE_EPSILONS:
            best = min(best, probe_coordinate(f, params[name], i, ana, eps))
        detail.coordinates[name][i] = best
    if flagged:
        detail.rebuild_summary()
    return len(flagged)


@dataclass
class VariantGradReport:
    """Outcome of checking one variant's gradients end to end."""

    variant: str
    detail: GradCheckReport
    per_module: dict
    n_scalars: int
    elapsed_s: float
    n_refined: int = 0
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def max_rel_error(self) -> float:
        return self.detail.max_rel_error

    @property
    def worst_param(self) -> str:
        return self.detail.worst_param

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def _group_by_module(per_param: dict) -> dict:
    grouped: dict = {}
    for name, err in per_param.items():
        module = name.split(".", 1)[0]
        grouped[module] = max(grouped.get(module, 0.0), err)
    return grouped


def check_variant(variant: str, seed: int = DEFAULT_SEED,
                  epsilon: float = DEFAULT_EPSILON,
                  tolerance: float = DEFAULT_TOLERANCE) -> VariantGradReport:
    """Finite-difference check of every trainable scalar of one variant."""
    model, batch, cache = build_fixture(variant, seed)
    params = model.named_params()
    f = batch_loss_fn(model, batch, cache)
    start = time.perf_counter()
    detail = finite_diff_report(f, params, epsilon, keep_coordinates=True)
    n_refined = _refine_noisy_coordinates(detail, f, params, tolerance / 2.0)
    elapsed = time.perf_counter() - start
    return VariantGradReport(
        variant=model.variant.id,
        detail=detail,
        per_module=_group_by_module(detail.per_param),
        n_scalars=sum(v.data.size for v in params.values()),
        elapsed_s=elapsed,
        n_refined=n_refined,
        tolerance=tolerance,
    )


def check_all_variants(variants=None, seed: int = DEFAULT_SEED,
                       epsilon: float = DEFAULT_EPSILON,
                       tolerance: float = DEFAULT_TOLERANCE) -> list:
    """Check the full model and every ablation variant (default: all seven)."""
    return [check_variant(v, seed, epsilon, tolerance)
            for v in (variants or ALL_VARIANTS)]


def format_reports(reports, per_module: bool = False) -> str:
    """Plain-text table, one row per variant, optionally one per module."""
    lines = [f"{'variant':<16} {'params':>7} {'max rel err':>12} "
             f"{'worst parameter':<24} {'time':>7}  status"]
    for r in reports:
        status = "ok" if r.passed else f"FAIL (tol {r.tolerance:g})"
        lines.append(f"{r.variant:<16} {r.n_scalars:>7} {r.max_rel_error:>12.3e} "
                     f"{r.worst_param:<24} {r.elapsed_s:>6.1f}s  {status}")
        if per_module:
            for module, err in sorted(r.per_module.items()):
                lines.append(f"    {module:<28} {err:.3e}")
    return "\n".join(lines)
