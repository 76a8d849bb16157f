"""Recurrent-convolutional classification head over encoder hidden states.

A BiLSTM contextualizes the final hidden states; its output is concatenated
per position with those states, pushed through a shared position-wise affine
+ tanh (a width-1 "convolution" over the full feature stack), max-pooled
over unmasked time steps, and mapped to two logits (binary head) or one
linear unit (regression head, clamped to the score range at predict time).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .bpe import TokenizerModel, encode
from .config import ModelConfig, BINARY, SCORE_MAX, SCORE_MIN
from .encoder import INIT_STD, encoder_forward, init_encoder_params


def init_head_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    p: dict[str, Tensor] = {}
    d, u = cfg.d_model, cfg.lstm_units
    for direction in ("fw", "bw"):
        p[f"lstm.{direction}.w_in.weight"] = Tensor(
            rng.normal(0.0, INIT_STD, size=(d, 4 * u)), requires_grad=True)
        p[f"lstm.{direction}.w_rec.weight"] = Tensor(
            rng.normal(0.0, INIT_STD, size=(u, 4 * u)), requires_grad=True)
        bias = np.zeros(4 * u)
        bias[u:2 * u] = 1.0       # forget gate starts open
        p[f"lstm.{direction}.bias"] = Tensor(bias, requires_grad=True)
    width = d + 2 * u
    p["proj.weight"] = Tensor(rng.normal(0.0, INIT_STD, size=(width, cfg.d_proj)),
                              requires_grad=True)
    p["proj.bias"] = Tensor(np.zeros(cfg.d_proj), requires_grad=True)
    p["out.weight"] = Tensor(rng.normal(0.0, INIT_STD, size=(cfg.d_proj, cfg.n_outputs)),
                             requires_grad=True)
    p["out.bias"] = Tensor(np.zeros(cfg.n_outputs), requires_grad=True)
    return p


def init_model_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """Encoder and head parameters in one flat, stably ordered dict."""
    params = init_encoder_params(cfg, rng)
    params.update(init_head_params(cfg, rng))
    return params


HEAD_PREFIXES = ("lstm.", "proj.", "out.")


def is_head_param(name: str) -> bool:
    return name.startswith(HEAD_PREFIXES)


def _lstm_direction(params, prefix: str, hidden: Tensor, mask: np.ndarray,
                    units: int, reverse: bool) -> list:
    """One LSTM sweep. Mask gating freezes the state across padded steps and
    zeroes their outputs, so pad content cannot reach any unmasked position."""
    B, T, _ = hidden.shape
    w_in = params[f"{prefix}.w_in.weight"]
    w_rec = params[f"{prefix}.w_rec.weight"]
    bias = params[f"{prefix}.bias"]
    h = Tensor(np.zeros((B, units)))
    c = Tensor(np.zeros((B, units)))
    outs: list = [None] * T
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        m = mask[:, t:t + 1].astype(np.float64)
        m_t = Tensor(m)
        keep_t = Tensor(1.0 - m)
        x_t = ad.time_slice(hidden, t)
        z = ad.add(ad.add(ad.matmul(x_t, w_in), ad.matmul(h, w_rec)), bias)
        gi = ad.sigmoid(ad.slice_last(z, 0, units))
        gf = ad.sigmoid(ad.slice_last(z, units, 2 * units))
        gg = ad.tanh(ad.slice_last(z, 2 * units, 3 * units))
        go = ad.sigmoid(ad.slice_last(z, 3 * units, 4 * units))
        c_new = ad.add(ad.mul(gf, c), ad.mul(gi, gg))
        h_new = ad.mul(go, ad.tanh(c_new))
        c = ad.add(ad.mul(m_t, c_new), ad.mul(keep_t, c))
        h = ad.add(ad.mul(m_t, h_new), ad.mul(keep_t, h))
        outs[t] = ad.mul(h, m_t)
    return outs


def bilstm_forward(params, hidden: Tensor, mask, units: int) -> Tensor:
    """(B, T, d_model) -> (B, T, 2*units): forward and backward sweeps,
    concatenated per position; padded positions output zeros."""
    mask = np.asarray(mask, dtype=bool)
    fw = ad.stack_time(_lstm_direction(params, "lstm.fw", hidden, mask, units, reverse=False))
    bw = ad.stack_time(_lstm_direction(params, "lstm.bw", hidden, mask, units, reverse=True))
    return ad.concat([fw, bw], axis=-1)


def rcnn_forward(params, cfg: ModelConfig, hidden: Tensor, lstm_out: Tensor,
                 mask) -> Tensor:
    """Concat -> position-wise affine + tanh -> max over time -> output layer."""
    feats = ad.concat([hidden, lstm_out], axis=-1)
    z = ad.tanh(ad.add(ad.matmul(feats, params["proj.weight"]), params["proj.bias"]))
    pooled = ad.max_over_time(z, np.asarray(mask, dtype=bool))
    return ad.add(ad.matmul(pooled, params["out.weight"]), params["out.bias"])


def full_forward(params, cfg: ModelConfig, ids, mask, *, train=False,
                 rng=None) -> Tensor:
    """Encoder -> BiLSTM -> RCNN head; logits (B, 2) or scores (B, 1).

    LSTM dropout is applied to the BiLSTM's input and output during
    training; the concat keeps the raw encoder states.
    """
    h = encoder_forward(params, cfg, ids, mask, train=train, rng=rng)
    drop = cfg.dropout if train else 0.0
    lstm_in = ad.dropout(h, drop, rng) if drop else h
    lstm_out = bilstm_forward(params, lstm_in, mask, cfg.lstm_units)
    if drop:
        lstm_out = ad.dropout(lstm_out, drop, rng)
    return rcnn_forward(params, cfg, h, lstm_out, mask)


def predict(params, cfg: ModelConfig, tokenizer: TokenizerModel,
            texts: list[str], batch_size: int = 32) -> list[dict]:
    """Per-text prediction records: {"text", "label", "probs"} for the binary
    head, {"text", "score"} (clamped to the score range) for regression."""
    results = []
    for start in range(0, len(texts), batch_size):
        chunk = texts[start:start + batch_size]
        seqs = [encode(tokenizer, t, cfg.max_seq_len) for t in chunk]
        ids = np.stack([s.ids for s in seqs])
        mask = np.stack([s.mask for s in seqs])
        out = full_forward(params, cfg, ids, mask, train=False)
        if cfg.task_head == BINARY:
            probs = ad.softmax(out, axis=-1).data
            labels = probs.argmax(axis=1)          # ties resolve to class 0
            for text, lab, pr in zip(chunk, labels, probs):
                results.append({"text": text, "label": int(lab),
                                "probs": [float(pr[0]), float(pr[1])]})
        else:
            scores = np.clip(out.data[:, 0], SCORE_MIN, SCORE_MAX)
            for text, s in zip(chunk, scores):
                results.append({"text": text, "score": float(s)})
    return results
