"""Minimal decoder-only transformer with per-sub-module input capture.

Each block computes x <- x + Attn(RMSNorm(x)); x <- x + MLP(RMSNorm(x)) with
causal softmax attention and a SwiGLU MLP. Positions use learned absolute
embeddings. The seven linear maps per block (q, k, v, o, gate, up, down) are
the prunable sub-modules; embeddings, norm gains, and the tied output head are
never pruned. Weight matrices are stored input x output and applied as x @ W.

Forward passes are pure functions of (weights, tokens); weights are treated as
immutable after construction, so concurrent forwards may share them.
"""

from dataclasses import dataclass

import numpy as np

RMSNORM_EPS = 1e-6
INIT_STD = 0.02

# Prunable linear maps inside one block, in canonical order.
SUB_MODULES = ("q", "k", "v", "o", "gate", "up", "down")


def sub_module_key(layer: int, name: str) -> str:
    return f"layer.{layer}.{name}"


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int
    n_layers: int
    n_heads: int
    d_ff: int
    max_seq_len: int

    def __post_init__(self):
        for name in ("vocab_size", "d_model", "n_layers", "n_heads", "d_ff", "max_seq_len"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


@dataclass(eq=False)
class LayerWeights:
    q: np.ndarray  # d_model x d_model
    k: np.ndarray  # d_model x d_model
    v: np.ndarray  # d_model x d_model
    o: np.ndarray  # d_model x d_model
    gate: np.ndarray  # d_model x d_ff
    up: np.ndarray  # d_model x d_ff
    down: np.ndarray  # d_ff x d_model
    attn_norm: np.ndarray  # d_model
    mlp_norm: np.ndarray  # d_model


@dataclass(eq=False)
class ModelWeights:
    config: ModelConfig
    token_embedding: np.ndarray  # vocab_size x d_model; also the tied output head
    position_embedding: np.ndarray  # max_seq_len x d_model
    layers: list[LayerWeights]
    final_norm: np.ndarray  # d_model

    def sub_module(self, layer: int, name: str) -> np.ndarray:
        if name not in SUB_MODULES:
            raise ValueError(f"unknown sub-module name: {name!r}")
        return getattr(self.layers[layer], name)

    def sub_module_keys(self) -> list[str]:
        return [
            sub_module_key(i, name)
            for i in range(self.config.n_layers)
            for name in SUB_MODULES
        ]


@dataclass(eq=False)
class ForwardTrace:
    final_hidden: np.ndarray  # T x d_model, taken after the final norm, before the head
    captured_inputs: dict[str, np.ndarray] | None  # sub-module key -> T x in_features


def init_model(config: ModelConfig, seed: int) -> ModelWeights:
    """Draw every embedding/linear weight i.i.d. from N(0, 0.02^2), seeded.

    Norm gains start at 1. Identical (config, seed) pairs produce bit-identical
    weights; tensors are drawn in a fixed canonical order.
    """
    rng = np.random.default_rng(seed)

    def normal(rows: int, cols: int) -> np.ndarray:
        return rng.normal(0.0, INIT_STD, size=(rows, cols))

    token_embedding = normal(config.vocab_size, config.d_model)
    position_embedding = normal(config.max_seq_len, config.d_model)
    layers = []
    for _ in range(config.n_layers):
        layers.append(
            LayerWeights(
                q=normal(config.d_model, config.d_model),
                k=normal(config.d_model, config.d_model),
                v=normal(config.d_model, config.d_model),
                o=normal(config.d_model, config.d_model),
                gate=normal(config.d_model, config.d_ff),
                up=normal(config.d_model, config.d_ff),
                down=normal(config.d_ff, config.d_model),
                attn_norm=np.ones(config.d_model),
                mlp_norm=np.ones(config.d_model),
            )
        )
    return ModelWeights(
        config=config,
        token_embedding=token_embedding,
        position_embedding=position_embedding,
        layers=layers,
        final_norm=np.ones(config.d_model),
    )


def rmsnorm(x: np.ndarray, gain: np.ndarray) -> np.ndarray:
    return x / np.sqrt((x * x).mean(axis=-1, keepdims=True) + RMSNORM_EPS) * gain


def silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the last axis, max-subtracted for stability.

    Rows may contain -inf (masked positions); those get probability zero.
    """
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _causal_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, n_heads: int) -> np.ndarray:
    t, d = q.shape
    hd = d // n_heads
    # (T, d) -> (H, T, hd)
    qh = q.reshape(t, n_heads, hd).transpose(1, 0, 2)
    kh = k.reshape(t, n_heads, hd).transpose(1, 0, 2)
    vh = v.reshape(t, n_heads, hd).transpose(1, 0, 2)
    logits = qh @ kh.transpose(0, 2, 1) / np.sqrt(hd)
    future = np.triu(np.ones((t, t), dtype=bool), k=1)
    logits = np.where(future, -np.inf, logits)
    probs = softmax_rows(logits)
    mixed = probs @ vh  # (H, T, hd)
    return mixed.transpose(1, 0, 2).reshape(t, d)


def forward(weights: ModelWeights, tokens, capture: bool = False) -> ForwardTrace:
    """Run one sequence through the model.

    With capture=True the exact input matrix fed to each prunable sub-module is
    recorded under its "layer.L.name" key (q, k and v share one input block, as
    do gate and up). Capturing does not change the computation.
    """
    cfg = weights.config
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("tokens must be a non-empty 1-D sequence of ids")
    if ids.size > cfg.max_seq_len:
        raise ValueError(f"sequence length {ids.size} exceeds max_seq_len {cfg.max_seq_len}")
    if (ids < 0).any() or (ids >= cfg.vocab_size).any():
        raise ValueError(f"token id out of range [0, {cfg.vocab_size})")

    t = ids.size
    x = weights.token_embedding[ids] + weights.position_embedding[:t]
    captured: dict[str, np.ndarray] | None = {} if capture else None

    for i, layer in enumerate(weights.layers):
        h = rmsnorm(x, layer.attn_norm)
        if captured is not None:
            for name in ("q", "k", "v"):
                captured[sub_module_key(i, name)] = h
        mixed = _causal_attention(h @ layer.q, h @ layer.k, h @ layer.v, cfg.n_heads)
        if captured is not None:
            captured[sub_module_key(i, "o")] = mixed
        x = x + mixed @ layer.o

        h = rmsnorm(x, layer.mlp_norm)
        if captured is not None:
            captured[sub_module_key(i, "gate")] = h
            captured[sub_module_key(i, "up")] = h
        inner = silu(h @ layer.gate) * (h @ layer.up)
        if captured is not None:
            captured[sub_module_key(i, "down")] = inner
        x = x + inner @ layer.down

    return ForwardTrace(final_hidden=rmsnorm(x, weights.final_norm), captured_inputs=captured)


def final_hidden_batch(weights: ModelWeights, calib) -> list[np.ndarray]:
    """Final hidden states for every calibration sequence, in input order."""
    sequences = list(calib.sequences)
    if not sequences:
        raise ValueError("empty calibration set")
    return [forward(weights, seq).final_hidden for seq in sequences]
