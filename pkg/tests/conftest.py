import numpy as np
import pytest

import figlang
from figlang.bpe import bpe_train
from figlang.config import toy_scale


@pytest.fixture(scope="session")
def corpus_lines():
    return figlang.toy_corpus()


@pytest.fixture(scope="session")
def toy_tok(corpus_lines):
    # shared across the suite; training is deterministic so this is safe
    return bpe_train(corpus_lines, 280)


@pytest.fixture(scope="session")
def toy_cfg(toy_tok):
    return toy_scale(vocab_size=toy_tok.size, max_seq_len=16, dropout=0.0)
