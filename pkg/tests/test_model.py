import numpy as np
import pytest

from prunesearch.model import (
    ModelConfig,
    final_hidden_batch,
    forward,
    init_model,
    rmsnorm,
    softmax_rows,
    sub_module_key,
)
from prunesearch.objective import CalibrationSet


def _weight_bytes(weights):
    parts = [weights.token_embedding.tobytes(), weights.position_embedding.tobytes()]
    for layer in weights.layers:
        for name in ("q", "k", "v", "o", "gate", "up", "down", "attn_norm", "mlp_norm"):
            parts.append(getattr(layer, name).tobytes())
    parts.append(weights.final_norm.tobytes())
    return b"".join(parts)


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(vocab_size=8, d_model=30, n_layers=1, n_heads=4, d_ff=8, max_seq_len=8)
    with pytest.raises(ValueError):
        ModelConfig(vocab_size=0, d_model=8, n_layers=1, n_heads=2, d_ff=8, max_seq_len=8)


def test_head_dim(mini_config):
    config = ModelConfig(vocab_size=8, d_model=32, n_layers=1, n_heads=4, d_ff=8, max_seq_len=8)
    assert config.head_dim == 8
    assert mini_config.head_dim * mini_config.n_heads == mini_config.d_model


def test_init_deterministic(mini_config):
    a = init_model(mini_config, 42)
    b = init_model(mini_config, 42)
    assert _weight_bytes(a) == _weight_bytes(b)


def test_init_seed_changes_weights(mini_config):
    a = init_model(mini_config, 42)
    b = init_model(mini_config, 43)
    assert _weight_bytes(a) != _weight_bytes(b)


def test_init_norm_gains_are_ones(mini_weights):
    assert np.array_equal(mini_weights.final_norm, np.ones(mini_weights.config.d_model))
    for layer in mini_weights.layers:
        assert np.array_equal(layer.attn_norm, np.ones_like(layer.attn_norm))


def test_forward_deterministic(mini_weights, mini_calib):
    seq = mini_calib.sequences[0]
    a = forward(mini_weights, seq).final_hidden
    b = forward(mini_weights, seq).final_hidden
    assert a.tobytes() == b.tobytes()


def test_forward_validates_tokens(mini_weights):
    vocab = mini_weights.config.vocab_size
    with pytest.raises(ValueError):
        forward(mini_weights, [vocab])
    with pytest.raises(ValueError):
        forward(mini_weights, [-1])
    with pytest.raises(ValueError):
        forward(mini_weights, [])
    with pytest.raises(ValueError):
        forward(mini_weights, [0] * (mini_weights.config.max_seq_len + 1))


def test_capture_counts(mini_weights, mini_calib):
    trace = forward(mini_weights, mini_calib.sequences[0], capture=True)
    assert len(trace.captured_inputs) == 7 * mini_weights.config.n_layers
    t = len(mini_calib.sequences[0])
    assert trace.captured_inputs[sub_module_key(0, "q")].shape == (t, mini_weights.config.d_model)
    assert trace.captured_inputs[sub_module_key(0, "down")].shape == (t, mini_weights.config.d_ff)


def test_capture_does_not_change_output(mini_weights, mini_calib):
    seq = mini_calib.sequences[0]
    plain = forward(mini_weights, seq, capture=False)
    captured = forward(mini_weights, seq, capture=True)
    assert plain.captured_inputs is None
    assert plain.final_hidden.tobytes() == captured.final_hidden.tobytes()


def test_attention_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(3, 6, 6))
    future = np.triu(np.ones((6, 6), dtype=bool), k=1)
    masked = np.where(future, -np.inf, logits)
    probs = softmax_rows(masked)
    np.testing.assert_allclose(probs.sum(axis=-1), np.ones((3, 6)), atol=1e-9)
    assert (probs[:, 0, 1:] == 0.0).all()  # masked positions get zero weight


def test_rmsnorm_unit_gain_property():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(10, 16))
    y = rmsnorm(x, np.ones(16))
    rms = np.sqrt((y * y).mean(axis=-1))
    np.testing.assert_allclose(rms, np.ones(10), atol=1e-6)


def test_causal_masking_exact(mini_weights):
    rng = np.random.default_rng(4)
    vocab = mini_weights.config.vocab_size
    tokens = rng.integers(0, vocab, size=12)
    altered = tokens.copy()
    altered[8:] = (altered[8:] + 1) % vocab
    a = forward(mini_weights, tokens).final_hidden
    b = forward(mini_weights, altered).final_hidden
    assert np.array_equal(a[:8], b[:8])
    assert not np.array_equal(a[8:], b[8:])


def test_final_hidden_batch_order(mini_weights, mini_calib):
    hidden = final_hidden_batch(mini_weights, mini_calib)
    assert len(hidden) == len(mini_calib.sequences)
    reordered = CalibrationSet(sequences=tuple(reversed(mini_calib.sequences)))
    flipped = final_hidden_batch(mini_weights, reordered)
    for a, b in zip(hidden, reversed(flipped)):
        assert np.array_equal(a, b)


def test_final_hidden_batch_rejects_empty(mini_weights):
    class Empty:
        sequences = ()

    with pytest.raises(ValueError):
        final_hidden_batch(mini_weights, Empty())
