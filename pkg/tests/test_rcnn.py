"""BiLSTM + recurrent-convolutional head: hand recurrences, mask gating,
pooling semantics, an independent end-to-end forward oracle, and the
prediction API."""

import numpy as np
import pytest

from figlang import autodiff as ad
from figlang.autodiff import Tensor
from figlang.bpe import CLS_ID, N_SPECIALS, PAD_ID, SEP_ID, bpe_train, encode
from figlang.config import BINARY, REGRESSION, ModelConfig, TrainConfig
from figlang.encoder import init_encoder_params
from figlang.rcnn import (HEAD_PREFIXES, bilstm_forward, full_forward,
                          init_head_params, init_model_params, is_head_param,
                          predict, rcnn_forward)

V = 290


def head_cfg(**kw):
    base = dict(n_layers=1, n_heads=2, d_model=8, d_ff=16, max_seq_len=10,
                vocab_size=V, dropout=0.0, lstm_units=3, d_proj=4)
    base.update(kw)
    return ModelConfig(**base)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def test_param_inventory_and_split():
    cfg = head_cfg()
    rng = np.random.default_rng(0)
    head = init_head_params(cfg, rng)
    d, u = cfg.d_model, cfg.lstm_units
    assert head["lstm.fw.w_in.weight"].shape == (d, 4 * u)
    assert head["lstm.bw.w_rec.weight"].shape == (u, 4 * u)
    assert head["proj.weight"].shape == (d + 2 * u, cfg.d_proj)
    assert head["out.weight"].shape == (cfg.d_proj, 2)
    assert all(is_head_param(k) for k in head)

    full = init_model_params(cfg, np.random.default_rng(0))
    enc = init_encoder_params(cfg, np.random.default_rng(0))
    assert set(full) == set(enc) | set(head)
    assert not any(is_head_param(k) for k in enc)
    assert HEAD_PREFIXES == ("lstm.", "proj.", "out.")


def test_forget_gate_bias_starts_open():
    cfg = head_cfg()
    head = init_head_params(cfg, np.random.default_rng(1))
    u = cfg.lstm_units
    for direction in ("fw", "bw"):
        b = head[f"lstm.{direction}.bias"].data
        np.testing.assert_array_equal(b[u:2 * u], 1.0)
        np.testing.assert_array_equal(b[:u], 0.0)
        np.testing.assert_array_equal(b[2 * u:], 0.0)


def test_scalar_lstm_matches_hand_recurrence():
    # units=1, d=1, T=2: run the gate equations by hand in both directions
    cfg = head_cfg(d_model=1, n_heads=1, lstm_units=1)
    rng = np.random.default_rng(2)
    params = {}
    for direction in ("fw", "bw"):
        params[f"lstm.{direction}.w_in.weight"] = Tensor(rng.normal(size=(1, 4)), requires_grad=True)
        params[f"lstm.{direction}.w_rec.weight"] = Tensor(rng.normal(size=(1, 4)), requires_grad=True)
        params[f"lstm.{direction}.bias"] = Tensor(rng.normal(size=4), requires_grad=True)
    x = rng.normal(size=(1, 2, 1))
    mask = np.ones((1, 2), dtype=bool)
    out = bilstm_forward(params, Tensor(x), mask, 1).data  # (1, 2, 2)

    def sweep(direction, order):
        w_in = params[f"lstm.{direction}.w_in.weight"].data
        w_rec = params[f"lstm.{direction}.w_rec.weight"].data
        bias = params[f"lstm.{direction}.bias"].data
        h = c = 0.0
        res = {}
        for t in order:
            z = x[0, t, 0] * w_in[0] + h * w_rec[0] + bias
            i, f, g, o = sigmoid(z[0]), sigmoid(z[1]), np.tanh(z[2]), sigmoid(z[3])
            c = f * c + i * g
            h = o * np.tanh(c)
            res[t] = h
        return res

    fw, bw = sweep("fw", [0, 1]), sweep("bw", [1, 0])
    for t in (0, 1):
        assert abs(out[0, t, 0] - fw[t]) < 1e-12
        assert abs(out[0, t, 1] - bw[t]) < 1e-12


def test_zero_weights_give_zero_lstm_output():
    cfg = head_cfg()
    params = init_head_params(cfg, np.random.default_rng(3))
    for k in params:
        if k.startswith("lstm."):
            params[k].data[:] = 0.0
    x = Tensor(np.random.default_rng(4).normal(size=(2, 5, cfg.d_model)))
    mask = np.ones((2, 5), dtype=bool)
    out = bilstm_forward(params, x, mask, cfg.lstm_units)
    # all gates at sigmoid(0)=0.5, candidate tanh(0)=0 -> c=0 -> h=0
    np.testing.assert_array_equal(out.data, 0.0)


def test_single_step_width():
    cfg = head_cfg()
    params = init_head_params(cfg, np.random.default_rng(5))
    # tie the sweeps: with one step both directions see the same input and
    # zero state, so their halves must coincide
    for n in ("w_in.weight", "w_rec.weight", "bias"):
        params[f"lstm.bw.{n}"].data[:] = params[f"lstm.fw.{n}"].data
    x = Tensor(np.random.default_rng(6).normal(size=(3, 1, cfg.d_model)))
    out = bilstm_forward(params, x, np.ones((3, 1), dtype=bool), cfg.lstm_units)
    assert out.shape == (3, 1, 2 * cfg.lstm_units)
    half = cfg.lstm_units
    np.testing.assert_array_equal(out.data[..., :half], out.data[..., half:])


def test_mask_gating_zeroes_pad_outputs():
    cfg = head_cfg()
    params = init_head_params(cfg, np.random.default_rng(7))
    rng = np.random.default_rng(8)
    x = Tensor(rng.normal(size=(2, 6, cfg.d_model)))
    mask = np.array([[1, 1, 1, 1, 0, 0], [1, 1, 0, 0, 0, 0]], dtype=bool)
    out = bilstm_forward(params, x, mask, cfg.lstm_units).data
    assert np.abs(out[0, 4:]).max() == 0.0
    assert np.abs(out[1, 2:]).max() == 0.0
    assert np.abs(out[0, :4]).min() >= 0.0 and np.abs(out[0, :4]).sum() > 0


def test_mask_gating_blocks_pad_content():
    # garbage parked behind the mask must not change any unmasked output,
    # in either sweep direction
    cfg = head_cfg()
    params = init_head_params(cfg, np.random.default_rng(9))
    rng = np.random.default_rng(10)
    x = rng.normal(size=(1, 6, cfg.d_model))
    mask = np.array([[1, 1, 1, 1, 0, 0]], dtype=bool)
    a = bilstm_forward(params, Tensor(x), mask, cfg.lstm_units).data
    x2 = x.copy()
    x2[0, 4:] = rng.normal(size=(2, cfg.d_model)) * 50
    b = bilstm_forward(params, Tensor(x2), mask, cfg.lstm_units).data
    np.testing.assert_array_equal(a, b)


def test_zero_proj_pools_to_tanh_bias():
    cfg = head_cfg()
    params = init_head_params(cfg, np.random.default_rng(11))
    params["proj.weight"].data[:] = 0.0
    params["proj.bias"].data[:] = np.array([0.3, -0.2, 1.5, 0.0])
    rng = np.random.default_rng(12)
    hidden = Tensor(rng.normal(size=(2, 4, cfg.d_model)))
    lstm_out = Tensor(rng.normal(size=(2, 4, 2 * cfg.lstm_units)))
    mask = np.ones((2, 4), dtype=bool)
    out = rcnn_forward(params, cfg, hidden, lstm_out, mask).data
    want = np.tanh(params["proj.bias"].data) @ params["out.weight"].data \
        + params["out.bias"].data
    np.testing.assert_allclose(out, np.broadcast_to(want, (2, 2)), atol=1e-12)


def test_duplicated_timestep_is_pool_idempotent():
    # max over time ignores multiplicity: repeating a column of features
    # cannot change the pooled vector
    cfg = head_cfg()
    params = init_head_params(cfg, np.random.default_rng(13))
    rng = np.random.default_rng(14)
    h1 = rng.normal(size=(1, 3, cfg.d_model))
    l1 = rng.normal(size=(1, 3, 2 * cfg.lstm_units))
    h2 = np.concatenate([h1, h1[:, -1:]], axis=1)
    l2 = np.concatenate([l1, l1[:, -1:]], axis=1)
    m1 = np.ones((1, 3), dtype=bool)
    m2 = np.ones((1, 4), dtype=bool)
    a = rcnn_forward(params, cfg, Tensor(h1), Tensor(l1), m1).data
    b = rcnn_forward(params, cfg, Tensor(h2), Tensor(l2), m2).data
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------------------
# end-to-end forward


def make_batch(rng, cfg, lengths):
    B, T = len(lengths), max(lengths) + 2
    ids = np.full((B, T), PAD_ID, dtype=np.int64)
    mask = np.zeros((B, T), dtype=bool)
    for b, n in enumerate(lengths):
        ids[b, 0] = CLS_ID
        ids[b, 1:1 + n] = rng.integers(N_SPECIALS, cfg.vocab_size, size=n)
        ids[b, 1 + n] = SEP_ID
        mask[b, :n + 2] = True
    return ids, mask


def numpy_reference_forward(params, cfg, ids, mask):
    """Straight-line float64 forward pass sharing no code with the package."""
    P = {k: t.data for k, t in params.items()}
    B, T = ids.shape
    h = P["embed.token.weight"][ids] + P["embed.position.weight"][:T]

    def layernorm(x, g, b):
        mu = x.mean(-1, keepdims=True)
        var = x.var(-1, keepdims=True)
        return (x - mu) / np.sqrt(var + 1e-5) * g + b

    def gelu(x):
        return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x ** 3)))

    dk = cfg.d_model // cfg.n_heads
    for i in range(cfg.n_layers):
        q = h @ P[f"layer{i}.attn.q.weight"] + P[f"layer{i}.attn.q.bias"]
        k = h @ P[f"layer{i}.attn.k.weight"] + P[f"layer{i}.attn.k.bias"]
        v = h @ P[f"layer{i}.attn.v.weight"] + P[f"layer{i}.attn.v.bias"]
        ctx = np.zeros_like(h)
        for b in range(B):
            for head in range(cfg.n_heads):
                sl = slice(head * dk, (head + 1) * dk)
                s = q[b][:, sl] @ k[b][:, sl].T / np.sqrt(dk)
                s[:, ~mask[b]] = -np.inf
                e = np.exp(s - s.max(-1, keepdims=True))
                p = e / e.sum(-1, keepdims=True)
                ctx[b][:, sl] = p @ v[b][:, sl]
        a = ctx @ P[f"layer{i}.attn.o.weight"] + P[f"layer{i}.attn.o.bias"]
        h = layernorm(h + a, P[f"layer{i}.ln1.gain"], P[f"layer{i}.ln1.bias"])
        f = gelu(h @ P[f"layer{i}.ff.fc1.weight"] + P[f"layer{i}.ff.fc1.bias"])
        f = f @ P[f"layer{i}.ff.fc2.weight"] + P[f"layer{i}.ff.fc2.bias"]
        h = layernorm(h + f, P[f"layer{i}.ln2.gain"], P[f"layer{i}.ln2.bias"])

    u = cfg.lstm_units
    lstm = np.zeros((B, T, 2 * u))
    for col, (direction, order) in enumerate(
            [("fw", range(T)), ("bw", range(T - 1, -1, -1))]):
        w_in = P[f"lstm.{direction}.w_in.weight"]
        w_rec = P[f"lstm.{direction}.w_rec.weight"]
        bias = P[f"lstm.{direction}.bias"]
        hs = np.zeros((B, u))
        cs = np.zeros((B, u))
        for t in order:
            m = mask[:, t:t + 1].astype(float)
            z = h[:, t] @ w_in + hs @ w_rec + bias
            gi, gf = sigmoid(z[:, :u]), sigmoid(z[:, u:2 * u])
            gg, go = np.tanh(z[:, 2 * u:3 * u]), sigmoid(z[:, 3 * u:])
            c_new = gf * cs + gi * gg
            h_new = go * np.tanh(c_new)
            cs = m * c_new + (1 - m) * cs
            hs = m * h_new + (1 - m) * hs
            lstm[:, t, col * u:(col + 1) * u] = hs * m

    feats = np.concatenate([h, lstm], axis=-1)
    z = np.tanh(feats @ P["proj.weight"] + P["proj.bias"])
    z = np.where(mask[:, :, None], z, -np.inf)
    pooled = z.max(axis=1)
    return pooled @ P["out.weight"] + P["out.bias"]


def test_full_forward_matches_independent_reference():
    cfg = head_cfg()
    rng = np.random.default_rng(15)
    params = init_model_params(cfg, rng)
    ids, mask = make_batch(rng, cfg, [4, 6, 2])
    got = full_forward(params, cfg, ids, mask).data
    want = numpy_reference_forward(params, cfg, ids, mask)
    np.testing.assert_allclose(got, want, atol=1e-10)
    assert got.shape == (3, 2)


def test_full_forward_padding_invariance():
    cfg = head_cfg()
    rng = np.random.default_rng(16)
    params = init_model_params(cfg, rng)
    ids, mask = make_batch(rng, cfg, [5, 2])
    mutated = ids.copy()
    mutated[~mask] = rng.integers(N_SPECIALS, V, size=(~mask).sum())
    a = full_forward(params, cfg, ids, mask).data
    b = full_forward(params, cfg, mutated, mask).data
    np.testing.assert_array_equal(a, b)


def test_batch_equals_one_by_one():
    cfg = head_cfg()
    rng = np.random.default_rng(17)
    params = init_model_params(cfg, rng)
    ids, mask = make_batch(rng, cfg, [4, 4, 4])
    together = full_forward(params, cfg, ids, mask).data
    singles = np.concatenate([
        full_forward(params, cfg, ids[b:b + 1], mask[b:b + 1]).data
        for b in range(3)])
    np.testing.assert_allclose(together, singles, atol=1e-9)


def test_word_order_reaches_the_logits():
    # frozen random model: swapping two content tokens changes the output
    # (position embeddings + recurrence make the head order-aware)
    cfg = head_cfg()
    rng = np.random.default_rng(18)
    params = init_model_params(cfg, rng)
    ids, mask = make_batch(rng, cfg, [5])
    swapped = ids.copy()
    swapped[0, 1], swapped[0, 2] = ids[0, 2], ids[0, 1]
    assert ids[0, 1] != ids[0, 2]
    a = full_forward(params, cfg, ids, mask).data
    b = full_forward(params, cfg, swapped, mask).data
    assert np.abs(a - b).max() > 1e-9


def test_order_blindness_without_positions_or_recurrence():
    # kill position embeddings and both LSTM sweeps: the remaining pipeline
    # (per-position affines + max pool) cannot see token order
    cfg = head_cfg()
    rng = np.random.default_rng(19)
    params = init_model_params(cfg, rng)
    params["embed.position.weight"].data[:] = 0.0
    for k in params:
        if k.startswith("lstm."):
            params[k].data[:] = 0.0
    ids, mask = make_batch(rng, cfg, [5])
    perm = ids.copy()
    perm[0, 1:6] = ids[0, [3, 1, 5, 2, 4]]
    a = full_forward(params, cfg, ids, mask).data
    b = full_forward(params, cfg, perm, mask).data
    np.testing.assert_allclose(a, b, atol=1e-10)


# ---------------------------------------------------------------------------
# predict


@pytest.fixture(scope="module")
def tok():
    lines = ["the cat sees the ball .", "a dry remark about rain .",
             "what a lovely day to be stuck inside ."]
    return bpe_train(lines, 280)


def test_predict_binary_records(tok):
    cfg = head_cfg(vocab_size=tok.size, max_seq_len=16)
    params = init_model_params(cfg, np.random.default_rng(20))
    texts = ["the cat sees the ball .", "what a lovely day ."]
    recs = predict(params, cfg, tok, texts, batch_size=1)
    assert [r["text"] for r in recs] == texts
    for r in recs:
        assert r["label"] in (0, 1)
        assert abs(sum(r["probs"]) - 1.0) < 1e-9
        assert all(0.0 <= p <= 1.0 for p in r["probs"])
        assert r["label"] == int(np.argmax(r["probs"]))


def test_predict_batching_is_transparent(tok):
    cfg = head_cfg(vocab_size=tok.size, max_seq_len=16)
    params = init_model_params(cfg, np.random.default_rng(21))
    texts = ["the cat", "a dry remark", "lovely day", "rain", "ball"]
    one = predict(params, cfg, tok, texts, batch_size=1)
    five = predict(params, cfg, tok, texts, batch_size=5)
    for a, b in zip(one, five):
        np.testing.assert_allclose(a["probs"], b["probs"], atol=1e-9)
        assert a["label"] == b["label"]


def test_predict_regression_clamps(tok):
    cfg = head_cfg(vocab_size=tok.size, max_seq_len=16, task_head=REGRESSION)
    params = init_model_params(cfg, np.random.default_rng(22))
    assert params["out.weight"].shape == (cfg.d_proj, 1)
    params["out.bias"].data[:] = 1000.0
    high = predict(params, cfg, tok, ["the cat"])
    assert high[0]["score"] == 5.0
    params["out.bias"].data[:] = -1000.0
    low = predict(params, cfg, tok, ["the cat"])
    assert low[0]["score"] == -5.0
    assert "label" not in low[0] and "probs" not in low[0]


def test_trained_model_separates_order_sensitive_classes(tok):
    # same bag of words, label decided purely by order: "cat sees ball" vs
    # "ball sees cat" style pairs. A few epochs must fit the training set.
    from figlang.data import LabeledExample
    from figlang.training import finetune

    a = ["the cat sees the ball .", "the cat wants the ball .",
         "the cat finds the ball ."]
    b = ["the ball sees the cat .", "the ball wants the cat .",
         "the ball finds the cat ."]
    lines = a + b
    tok2 = bpe_train(lines * 2, 280)
    cfg = ModelConfig(n_layers=1, n_heads=2, d_model=32, d_ff=64,
                      max_seq_len=16, vocab_size=tok2.size, dropout=0.0,
                      lstm_units=8, d_proj=16)
    examples = ([LabeledExample(id=f"a{i}", text=t, target=0) for i, t in enumerate(a)]
                + [LabeledExample(id=f"b{i}", text=t, target=1) for i, t in enumerate(b)])
    tc = TrainConfig(batch_size=6, epochs=80, learning_rate=1e-3, seed=0)
    params, _ = finetune(examples, tok2, cfg, tc)
    recs = predict(params, cfg, tok2, lines)
    preds = [r["label"] for r in recs]
    assert preds == [0, 0, 0, 1, 1, 1]
