"""Calibration data, activation statistics, and the divergence fitness.

The fitness of a pruned model is the mean over calibration sequences of the
per-token-averaged squared L2 distance between dense and pruned final hidden
states. Any positive normalization preserves the ranking of configs; this one
keeps values comparable across calibration sizes.
"""

import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .metric import MetricKind, SubModuleStats
from .model import ModelWeights, final_hidden_batch, forward
from .prune import SparsitySpec, prune_model

ActivationStats = dict[str, SubModuleStats]


@dataclass(frozen=True)
class CalibrationSet:
    sequences: tuple[tuple[int, ...], ...]
    seed: int | None = None
    source: str | None = None

    def __post_init__(self):
        normalized = tuple(tuple(int(t) for t in seq) for seq in self.sequences)
        object.__setattr__(self, "sequences", normalized)
        if not self.sequences:
            raise ValueError("empty calibration set")
        if any(len(seq) == 0 for seq in self.sequences):
            raise ValueError("calibration sequences must be non-empty")


def synthetic_calibration(vocab_size: int, n_sequences: int, seq_len: int, seed: int) -> CalibrationSet:
    """Uniform random token ids; the desk-scale stand-in for sampled text."""
    if vocab_size < 1 or n_sequences < 1 or seq_len < 1:
        raise ValueError("vocab_size, n_sequences and seq_len must all be >= 1")
    rng = np.random.default_rng(seed)
    ids = rng.integers(0, vocab_size, size=(n_sequences, seq_len))
    return CalibrationSet(
        sequences=tuple(tuple(int(t) for t in row) for row in ids),
        seed=seed,
        source="synthetic",
    )


def collect_activation_stats(weights: ModelWeights, calib: CalibrationSet) -> ActivationStats:
    """Accumulate per-feature sums of squares and absolute sums over all tokens.

    v_j is the L2 norm of input feature j across every token of every
    calibration sequence (running sum of squares, square-rooted at the end).
    """
    sumsq: dict[str, np.ndarray] = {}
    l1: dict[str, np.ndarray] = {}
    tokens = 0
    for seq in calib.sequences:
        trace = forward(weights, seq, capture=True)
        tokens += len(seq)
        for key, block in trace.captured_inputs.items():
            if key in sumsq:
                sumsq[key] += (block * block).sum(axis=0)
                l1[key] += np.abs(block).sum(axis=0)
            else:
                sumsq[key] = (block * block).sum(axis=0)
                l1[key] = np.abs(block).sum(axis=0)
    return {
        key: SubModuleStats(v=np.sqrt(sumsq[key]), l1=l1[key], token_count=tokens)
        for key in sumsq
    }


@dataclass(frozen=True)
class Fitness:
    l_div: float
    kind: MetricKind | None = None
    seconds: float = field(default=0.0, compare=False)  # wall time, excluded from equality

    def __post_init__(self):
        if not np.isfinite(self.l_div) or self.l_div < 0.0:
            raise ValueError("divergence must be finite and nonnegative")


def token_mean_sqdist(a: np.ndarray, b: np.ndarray) -> float:
    """Per-token mean of the squared L2 distance between two T x d blocks."""
    diff = a - b
    return float((diff * diff).sum(axis=1).mean())


def divergence(dense_hidden: list[np.ndarray], pruned: ModelWeights, calib: CalibrationSet) -> Fitness:
    """Mean over sequences of the per-token mean squared hidden-state distance.

    dense_hidden must come from the same calibration set in the same order.
    """
    if len(dense_hidden) != len(calib.sequences):
        raise ValueError(
            f"cache holds {len(dense_hidden)} sequences, calibration has {len(calib.sequences)}"
        )
    start = time.perf_counter()
    total = 0.0
    for ref, seq in zip(dense_hidden, calib.sequences):
        h = forward(pruned, seq).final_hidden
        if h.shape != ref.shape:
            raise ValueError(f"cached hidden shape {ref.shape} does not match forward {h.shape}")
        total += token_mean_sqdist(ref, h)
    return Fitness(l_div=total / len(calib.sequences), seconds=time.perf_counter() - start)


@dataclass(eq=False)
class EvalContext:
    """Shared, effectively immutable inputs for scoring candidate configs.

    The dense hidden cache and activation stats are computed once and reused
    for every candidate. `evaluations` counts completed evaluate_config calls.
    """

    weights: ModelWeights
    stats: ActivationStats
    dense_hidden: list[np.ndarray]
    calib: CalibrationSet
    spec: SparsitySpec
    evaluations: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def count_evaluation(self) -> None:
        with self._lock:
            self.evaluations += 1


def make_context(weights: ModelWeights, calib: CalibrationSet, spec: SparsitySpec) -> EvalContext:
    return EvalContext(
        weights=weights,
        stats=collect_activation_stats(weights, calib),
        dense_hidden=final_hidden_batch(weights, calib),
        calib=calib,
        spec=spec,
    )


def evaluate_config(ctx: EvalContext, kind: MetricKind) -> Fitness:
    """Score -> mask -> pruned copy -> divergence; pure in (ctx, kind)."""
    start = time.perf_counter()
    pruned, _ = prune_model(ctx.weights, ctx.stats, kind, ctx.spec)
    fit = divergence(ctx.dense_hidden, pruned, ctx.calib)
    ctx.count_evaluation()
    return Fitness(l_div=fit.l_div, kind=kind, seconds=time.perf_counter() - start)
