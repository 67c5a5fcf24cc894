"""Answer-understanding network for reverse QA.

A from-scratch stack: a small reverse-mode autodiff engine, BiLSTM encoders,
skeleton-attended question summaries, relevance-gated answer representations,
multi-hop fusion, a three-way answer classifier (true / false / uncertain),
plus a synthetic corpus generator, a training harness, and a CLI.
"""

__version__ = "0.1.0"
