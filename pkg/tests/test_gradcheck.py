"""Whole-model gradient checking: fixture sanity, pass/fail, negative control."""

import numpy as np
import pytest

import antnet.autodiff as ad
from antnet.autodiff import Value, finite_diff_report
from antnet.gradcheck import (
    TOY_HYPER, VariantGradReport, _guard_membership_margins,
    _refine_noisy_coordinates, batch_loss_fn, build_fixture, check_variant,
    fixture_samples, fixture_vocab, format_reports,
)


class TestFixture:
    def test_vocab_has_twenty_entries(self):
        assert len(fixture_vocab()) == 20

    def test_sequences_fit_the_toy_budget(self):
        for s in fixture_samples():
            assert len(s.question) <= 5 and len(s.answer) <= 5

    def test_both_question_types_and_labels_present(self):
        samples = fixture_samples()
        assert {s.question_type for s in samples} == {"TF", "MC"}
        assert len({s.label for s in samples}) == 2

    def test_every_parameter_receives_gradient(self):
        model, batch, cache = build_fixture("antnet")
        loss = batch_loss_fn(model, batch, cache)()
        loss.backward()
        for name, v in model.named_params().items():
            assert np.abs(v.grad).max() > 0, name

    def test_hopless_variants_ignore_the_answer_encoder(self):
        """Without fusion hops nothing consumes the answer states, so the
        answer encoder and relevance block sit off the loss path."""
        model, batch, cache = build_fixture("antnet-sa-mf")
        loss = batch_loss_fn(model, batch, cache)()
        loss.backward()
        grads = {k: np.abs(v.grad).max() for k, v in model.named_params().items()}
        assert all(g == 0 for k, g in grads.items()
                   if k.startswith(("bilstm_a", "relevance")))
        assert all(g > 0 for k, g in grads.items()
                   if k.startswith(("bilstm_q", "classifier")))

    def test_membership_guard_rejects_degenerate_scores(self):
        model, batch, cache = build_fixture("antnet")
        model.w_s.data *= 0.0  # uniform weights sit exactly on the cutoff
        with pytest.raises(RuntimeError, match="membership cutoff"):
            _guard_membership_margins(model, batch, cache)


class TestCheckVariant:
    def test_cheapest_variant_passes(self):
        report = check_variant("antnet-sa-mf")
        assert report.passed
        assert report.max_rel_error <= 1e-4
        assert report.variant == "antnet-sa-mf"

    def test_modules_match_the_variant_blocks(self):
        report = check_variant("antnet-sa-mf")
        assert set(report.per_module) == {
            "bilstm_q", "bilstm_a", "w_a", "relevance", "classifier"}

    def test_scalar_count_matches_model(self):
        report = check_variant("antnet-rr-mf")
        assert report.n_scalars == 1043
        assert report.passed

    def test_corrupted_backward_is_caught(self):
        """Negative control: a 5% error injected into tanh's backward rule
        must blow past the tolerance for a parameter upstream of a tanh."""
        model, batch, cache = build_fixture("antnet-sa-mf")
        sub = {"bilstm_q.fwd.b": model.named_params()["bilstm_q.fwd.b"]}
        with ad.corrupted_backward():
            report = finite_diff_report(batch_loss_fn(model, batch, cache),
                                        sub, epsilon=1e-4)
        assert report.max_rel_error > 1e-3


class TestRefinement:
    def test_refine_never_worsens_a_coordinate(self):
        p = Value(np.array([0.3, -0.7, 1.1]), requires_grad=True)

        def f():
            return ad.sum_(ad.mul(p, p))

        detail = finite_diff_report(f, {"p": p}, epsilon=1e-3,
                                    keep_coordinates=True)
        before = detail.coordinates["p"].copy()
        n = _refine_noisy_coordinates(detail, f, {"p": p}, threshold=0.0)
        assert n == 3
        assert np.all(detail.coordinates["p"] <= before)
        assert detail.max_rel_error == detail.coordinates["p"].max()

    def test_coordinates_absent_without_opt_in(self):
        p = Value(np.array([1.0, 2.0]), requires_grad=True)

        def f():
            return ad.sum_(ad.mul(p, 3.0))

        detail = finite_diff_report(f, {"p": p}, epsilon=1e-4)
        assert detail.coordinates == {} and detail.analytic == {}


class TestReportFormatting:
    def test_table_lists_variants_and_status(self):
        report = check_variant("antnet-rr-mf")
        text = format_reports([report], per_module=True)
        assert "antnet-rr-mf" in text and "ok" in text
        assert "classifier" in text  # per-module breakdown requested

    def test_failing_report_is_labelled(self):
        detail = ad.GradCheckReport(max_rel_error=0.5, worst_param="w")
        bad = VariantGradReport(variant="antnet", detail=detail,
                                per_module={"w": 0.5}, n_scalars=1,
                                elapsed_s=0.0)
        assert not bad.passed
        assert "FAIL" in format_reports([bad])
