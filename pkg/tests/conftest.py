"""Shared helpers for the test suite."""

import numpy as np

import antnet.autodiff as ad
from antnet.autodiff import Value


def fixed_readout(build, rng):
    """Scalar readout of `build()` under weights drawn once.

    Safe to hand to the finite-difference checker: repeated calls evaluate
    the same function, and non-uniform weights exercise every output slot.
    """
    with ad.no_grad():
        shape = build().data.shape
    c = Value(rng.normal(size=shape))
    return lambda: ad.sum_(ad.mul(build(), c))


def zero_bilstm(params):
    """Zero every gate weight and bias in-place (kills the forget-bias init)."""
    for d in (params.fwd, params.bwd):
        d.w_x.data[...] = 0.0
        d.w_h.data[...] = 0.0
        d.b.data[...] = 0.0
    return params


def tiny_corpus():
    """A handful of short TF and MC samples with a vocabulary built over them."""
    from antnet.corpus import Label, Sample, Vocab, index_corpus

    samples = [
        Sample("tf0", ["does", "e1", "have", "w2"], "a0", ["yes", "it", "does"], None, Label.TRUE),
        Sample("tf0", ["does", "e1", "have", "w2"], "a1", ["no", "idea"], None, Label.UNCERTAIN),
        Sample("mc0", ["which", "of", "o1", "o2", "suits", "e3"], "a0",
               ["i", "choose", "o1"], ["o1"], Label.TRUE),
        Sample("mc0", ["which", "of", "o1", "o2", "suits", "e3"], "a0",
               ["i", "choose", "o1"], ["o2"], Label.FALSE),
    ]
    vocab = Vocab.from_samples(samples)
    return samples, vocab, index_corpus(samples, vocab, max_len=33)
