"""Transformer encoder with a tied-projection masked-language-model head.

Post-norm blocks: self-attention -> residual -> layer norm -> GELU
feed-forward -> residual -> layer norm. Attention logits at padded keys get
a large negative bias before softmax, so padded positions receive exactly
zero attention weight and padding can never leak into unmasked outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .bpe import EncodedSequence, MASK_ID, N_SPECIALS
from .config import ModelConfig
from .errors import ConfigError, ContractError, MaskingError

INIT_STD = 0.02
MASK_RATE = 0.15


def init_encoder_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """Weights ~ normal(0, 0.02), biases zero, layer-norm gain one."""
    p: dict[str, Tensor] = {}

    def w(name, *shape):
        p[name] = Tensor(rng.normal(0.0, INIT_STD, size=shape), requires_grad=True)

    def zeros(name, *shape):
        p[name] = Tensor(np.zeros(shape), requires_grad=True)

    def ones(name, *shape):
        p[name] = Tensor(np.ones(shape), requires_grad=True)

    d, dk = cfg.d_model, cfg.d_model // cfg.n_heads
    w("embed.token.weight", cfg.vocab_size, d)
    w("embed.position.weight", cfg.max_seq_len, d)
    for i in range(cfg.n_layers):
        for proj in ("q", "k", "v", "o"):
            w(f"layer{i}.attn.{proj}.weight", d, d)
            zeros(f"layer{i}.attn.{proj}.bias", d)
        ones(f"layer{i}.ln1.gain", d)
        zeros(f"layer{i}.ln1.bias", d)
        w(f"layer{i}.ff.fc1.weight", d, cfg.d_ff)
        zeros(f"layer{i}.ff.fc1.bias", cfg.d_ff)
        w(f"layer{i}.ff.fc2.weight", cfg.d_ff, d)
        zeros(f"layer{i}.ff.fc2.bias", d)
        ones(f"layer{i}.ln2.gain", d)
        zeros(f"layer{i}.ln2.bias", d)
    zeros("mlm.bias", cfg.vocab_size)
    return p


def _attention(p, i, h, key_bias, cfg, collect=None):
    B, T, d = h.shape
    H = cfg.n_heads
    dk = d // H

    def heads(x):
        return ad.swap_axes(ad.reshape(x, (B, T, H, dk)), 1, 2)   # (B, H, T, dk)

    q = heads(ad.add(ad.matmul(h, p[f"layer{i}.attn.q.weight"]), p[f"layer{i}.attn.q.bias"]))
    k = heads(ad.add(ad.matmul(h, p[f"layer{i}.attn.k.weight"]), p[f"layer{i}.attn.k.bias"]))
    v = heads(ad.add(ad.matmul(h, p[f"layer{i}.attn.v.weight"]), p[f"layer{i}.attn.v.bias"]))
    scores = ad.mul(ad.matmul(q, ad.swap_axes(k, -1, -2)), 1.0 / np.sqrt(dk))
    scores = ad.add(scores, key_bias)
    probs = ad.softmax(scores, axis=-1)                            # (B, H, T, T)
    if collect is not None:
        collect.append(probs)
    ctx = ad.reshape(ad.swap_axes(ad.matmul(probs, v), 1, 2), (B, T, d))
    return ad.add(ad.matmul(ctx, p[f"layer{i}.attn.o.weight"]), p[f"layer{i}.attn.o.bias"])


def encoder_forward(params, cfg: ModelConfig, ids, attn_mask, *,
                    train=False, rng=None, collect_attn=None,
                    collect_hidden=None) -> Tensor:
    """Hidden states (B, T, d_model) for right-padded batches.

    `collect_attn`, when a list, receives the per-layer attention
    probability tensors (B, H, T, T); `collect_hidden` the per-layer
    block outputs (B, T, d_model).
    """
    ids = np.asarray(ids, dtype=np.int64)
    attn_mask = np.asarray(attn_mask, dtype=bool)
    B, T = ids.shape
    if T > cfg.max_seq_len:
        raise ConfigError(f"sequence length {T} exceeds max_seq_len {cfg.max_seq_len}")

    tok = ad.embedding(params["embed.token.weight"], ids)
    pos = ad.embedding(params["embed.position.weight"], np.broadcast_to(np.arange(T), (B, T)))
    h = ad.add(tok, pos)
    drop = cfg.dropout if train else 0.0
    if drop:
        h = ad.dropout(h, drop, rng)

    key_bias = Tensor(np.where(attn_mask, 0.0, ad.MASK_BIAS)[:, None, None, :])
    for i in range(cfg.n_layers):
        a = _attention(params, i, h, key_bias, cfg, collect=collect_attn)
        if drop:
            a = ad.dropout(a, drop, rng)
        h = ad.layer_norm(ad.add(h, a), params[f"layer{i}.ln1.gain"], params[f"layer{i}.ln1.bias"])
        f = ad.gelu(ad.add(ad.matmul(h, params[f"layer{i}.ff.fc1.weight"]),
                           params[f"layer{i}.ff.fc1.bias"]))
        f = ad.add(ad.matmul(f, params[f"layer{i}.ff.fc2.weight"]), params[f"layer{i}.ff.fc2.bias"])
        if drop:
            f = ad.dropout(f, drop, rng)
        h = ad.layer_norm(ad.add(h, f), params[f"layer{i}.ln2.gain"], params[f"layer{i}.ln2.bias"])
        if collect_hidden is not None:
            collect_hidden.append(h)
    return h


# ---------------------------------------------------------------------------
# dynamic masking


@dataclass
class MaskingOutcome:
    """One fresh masking draw: where, what was there, what replaced it."""

    positions: np.ndarray        # sorted indices into the padded sequence
    original_ids: np.ndarray
    replacement_ids: np.ndarray
    categories: list[str]        # "mask" | "random" | "unchanged", parallel


def _mask_count(n_content: int) -> int:
    # Half-up rounding of the 15% rate, at least one position.
    return max(1, int(np.floor(MASK_RATE * n_content + 0.5)))


def dynamic_mask(seq: EncodedSequence, rng: np.random.Generator,
                 vocab_size: int) -> MaskingOutcome:
    """Sample a fresh mask: 80% mask token, 10% random token, 10% unchanged.

    Only content positions are candidates; cls/sep/pad are never masked.
    """
    n_content = seq.length - 2
    if n_content < 1:
        raise MaskingError("sequence has no maskable content position")
    candidates = np.arange(1, seq.length - 1)
    count = _mask_count(n_content)
    positions = np.sort(rng.choice(candidates, size=count, replace=False))
    original = seq.ids[positions].copy()
    replacement = original.copy()
    categories = []
    for j in range(count):
        roll = rng.random()
        if roll < 0.8:
            replacement[j] = MASK_ID
            categories.append("mask")
        elif roll < 0.9:
            replacement[j] = int(rng.integers(N_SPECIALS, vocab_size))
            categories.append("random")
        else:
            categories.append("unchanged")
    return MaskingOutcome(positions=positions, original_ids=original,
                          replacement_ids=replacement, categories=categories)


@dataclass
class MlmBatch:
    ids: np.ndarray         # (B, T) with replacements applied
    mask: np.ndarray        # (B, T) attention mask
    flat_positions: np.ndarray  # masked positions flattened to b*T + t
    targets: np.ndarray     # original ids at the masked positions


def collate_mlm(sequences: list[EncodedSequence],
                outcomes: list[MaskingOutcome]) -> MlmBatch:
    T = len(sequences[0].ids)
    ids = np.stack([s.ids for s in sequences]).copy()
    mask = np.stack([s.mask for s in sequences])
    flat, targets = [], []
    for b, (s, o) in enumerate(zip(sequences, outcomes)):
        ids[b, o.positions] = o.replacement_ids
        flat.extend(b * T + o.positions)
        targets.extend(o.original_ids)
    return MlmBatch(ids=ids, mask=mask,
                    flat_positions=np.array(flat, dtype=np.int64),
                    targets=np.array(targets, dtype=np.int64))


def mlm_forward(params, cfg: ModelConfig, batch: MlmBatch, *,
                train=False, rng=None) -> tuple[Tensor, Tensor]:
    """Logits at masked positions plus cross-entropy over those positions.

    The output projection is tied to the token embedding matrix.
    """
    if batch.flat_positions.size == 0:
        raise ContractError("mlm_forward requires at least one masked position in the batch")
    h = encoder_forward(params, cfg, batch.ids, batch.mask, train=train, rng=rng)
    B, T, d = h.shape
    sel = ad.gather_rows(ad.reshape(h, (B * T, d)), batch.flat_positions)
    logits = ad.add(ad.matmul(sel, ad.swap_axes(params["embed.token.weight"], 0, 1)),
                    params["mlm.bias"])
    loss = ad.cross_entropy(logits, batch.targets)
    return logits, loss
