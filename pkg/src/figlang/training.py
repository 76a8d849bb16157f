"""Optimization and the two training loops (masked-LM pretraining, task
fine-tuning).

Adam uses decoupled weight decay: the decay term is added to the update
after the moment step, never folded into the gradient. Biases and layer-norm
parameters are excluded from decay. All randomness flows from one seed
through named sub-streams so reruns are bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, backward, zero_grads
from .bpe import TokenizerModel, encode
from .config import BINARY, ModelConfig, TrainConfig
from .encoder import collate_mlm, dynamic_mask, mlm_forward
from .errors import DataError, NumericError
from .rcnn import full_forward, init_model_params, is_head_param

STREAMS = ("init", "shuffle", "mask", "dropout")


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent named generators derived from one seed. Consumption in one
    stream never perturbs another."""
    return {name: np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, i))))
            for i, name in enumerate(STREAMS)}


def no_weight_decay(name: str) -> bool:
    return name.endswith(".bias") or ".ln" in name


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(params: dict[str, Tensor], state: AdamState, cfg: TrainConfig) -> None:
    """One update over every parameter that has a gradient."""
    state.step += 1
    t = state.step
    b1, b2 = cfg.beta1, cfg.beta2
    lr, eps, wd = cfg.learning_rate, cfg.adam_eps, cfg.weight_decay
    for name, p in params.items():
        if p.grad is None or not p.requires_grad:
            continue
        g = p.grad
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient in {name}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        update = lr * m_hat / (np.sqrt(v_hat) + eps)
        if wd and not no_weight_decay(name):
            update = update + lr * wd * p.data
        p.data -= update


def clip_grad_norm(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm.
    Returns the pre-clip norm."""
    total = 0.0
    grads = [p.grad for p in params.values() if p.grad is not None and p.requires_grad]
    for g in grads:
        total += float((g * g).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


def _optim_step(params, state, cfg: TrainConfig, loss: Tensor) -> float:
    val = loss.item()
    if not np.isfinite(val):
        raise NumericError(f"non-finite training loss: {val!r}")
    backward(loss)
    if cfg.grad_clip_norm is not None:
        clip_grad_norm(params, cfg.grad_clip_norm)
    adam_step(params, state, cfg)
    zero_grads(params.values())
    return val


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    """Seeded shuffle; the trailing partial batch is kept."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


class TrainLog:
    """Collects {"step", "epoch", "loss"} records; optionally mirrors them to
    a JSONL file."""

    def __init__(self, path=None):
        self.records: list[dict] = []
        self._fh = open(path, "w", encoding="utf-8") if path else None

    def add(self, step: int, epoch: int, loss: float) -> None:
        rec = {"step": step, "epoch": epoch, "loss": loss}
        self.records.append(rec)
        if self._fh:
            self._fh.write(json.dumps(rec) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None


def _check_vocab(tokenizer: TokenizerModel, cfg: ModelConfig) -> None:
    if tokenizer.size != cfg.vocab_size:
        raise DataError(f"tokenizer has {tokenizer.size} ids but the model "
                        f"expects vocab_size={cfg.vocab_size}")


def pretrain_mlm(lines: list[str], tokenizer: TokenizerModel, model_cfg: ModelConfig,
                 train_cfg: TrainConfig, *, params: dict[str, Tensor] | None = None,
                 log: TrainLog | None = None):
    """Masked-LM pretraining over raw lines. Masks are resampled every epoch.

    Returns (params, log). Lines that tokenize to zero content tokens are
    skipped (nothing to mask).
    """
    _check_vocab(tokenizer, model_cfg)
    streams = rng_streams(train_cfg.seed)
    seqs = [encode(tokenizer, line, model_cfg.max_seq_len) for line in lines]
    seqs = [s for s in seqs if s.length > 2]
    if not seqs:
        raise DataError("pretraining corpus has no usable lines")

    if params is None:
        params = init_model_params(model_cfg, streams["init"])
    log = log or TrainLog()
    state = AdamState()
    step = 0
    done = False
    for epoch in range(train_cfg.epochs):
        if done:
            break
        for idx in _batches(len(seqs), train_cfg.batch_size, streams["shuffle"]):
            batch_seqs = [seqs[i] for i in idx]
            outcomes = [dynamic_mask(s, streams["mask"], model_cfg.vocab_size)
                        for s in batch_seqs]
            batch = collate_mlm(batch_seqs, outcomes)
            _, loss = mlm_forward(params, model_cfg, batch,
                                  train=True, rng=streams["dropout"])
            val = _optim_step(params, state, train_cfg, loss)
            step += 1
            log.add(step, epoch, val)
            if train_cfg.max_steps is not None and step >= train_cfg.max_steps:
                done = True
                break
    log.close()
    return params, log


def _encode_labeled(examples, tokenizer, model_cfg, task: str):
    ids, mask, targets = [], [], []
    for ex in examples:
        seq = encode(tokenizer, ex.text, model_cfg.max_seq_len)
        ids.append(seq.ids)
        mask.append(seq.mask)
        targets.append(ex.target)
    ids = np.stack(ids)
    mask = np.stack(mask)
    if task == BINARY:
        targets = np.asarray(targets, dtype=np.int64)
    else:
        targets = np.asarray(targets, dtype=np.float64)
    return ids, mask, targets


def finetune(examples, tokenizer: TokenizerModel, model_cfg: ModelConfig,
             train_cfg: TrainConfig, *, params: dict[str, Tensor] | None = None,
             log: TrainLog | None = None):
    """Supervised training of the full stack (or the head alone when
    train_cfg.freeze_encoder is set). Returns (params, log)."""
    _check_vocab(tokenizer, model_cfg)
    if not examples:
        raise DataError("empty training set")
    streams = rng_streams(train_cfg.seed)
    if params is None:
        params = init_model_params(model_cfg, streams["init"])
    if train_cfg.freeze_encoder:
        for name, p in params.items():
            if not is_head_param(name):
                p.requires_grad = False

    task = model_cfg.task_head
    all_ids, all_mask, all_targets = _encode_labeled(examples, tokenizer, model_cfg, task)
    log = log or TrainLog()
    state = AdamState()
    step = 0
    done = False
    for epoch in range(train_cfg.epochs):
        if done:
            break
        for idx in _batches(len(examples), train_cfg.batch_size, streams["shuffle"]):
            ids = all_ids[idx]
            mask = all_mask[idx]
            out = full_forward(params, model_cfg, ids, mask,
                               train=True, rng=streams["dropout"])
            if task == BINARY:
                loss = ad.cross_entropy(out, all_targets[idx])
            else:
                pred = ad.reshape(out, (len(idx),))
                loss = ad.mse_loss(pred, Tensor(all_targets[idx]))
            val = _optim_step(params, state, train_cfg, loss)
            step += 1
            log.add(step, epoch, val)
            if train_cfg.max_steps is not None and step >= train_cfg.max_steps:
                done = True
                break
    log.close()
    return params, log
