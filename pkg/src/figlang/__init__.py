"""Figurative-language classification: a recurrent-convolutional head over a
transformer encoder, built on a small numpy autodiff core, with a byte-level
BPE tokenizer, masked-LM pretraining, and an n-gram logistic baseline.
"""

from importlib import resources

__version__ = "0.1.0"


def toy_corpus() -> list[str]:
    """The bundled 100-sentence corpus used for pretraining smoke runs."""
    text = resources.files("figlang").joinpath("assets/toy_corpus.txt").read_text("utf-8")
    return [line for line in text.splitlines() if line]
