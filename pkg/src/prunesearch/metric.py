"""Composite weight-activation importance scores and the discrete config space.

A config picks one coefficient per side and one transformation per side:

    S_ij = [alpha(|W|)_ij * F1(|W|)_ij] * [beta(v)_j * F2(v)_j]

where W is laid out output x input (row i holds the weights feeding output
neuron i), and v_j is the L2 norm of input feature j accumulated over all
calibration tokens. Seven coefficient choices times seven transformations on
each side give 7^4 = 2401 configs. All denominators are guarded with a 1e-12
floor so every config yields finite scores.
"""

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

EPS = 1e-12

N_COEFFS = 7
N_TRANSFORMS = 7
SPACE_SIZE = N_COEFFS * N_COEFFS * N_TRANSFORMS * N_TRANSFORMS  # 2401


class Coeff(IntEnum):
    UNIFORM = 0
    GLOBAL_SUM = 1
    FROBENIUS = 2
    GLOBAL_MEAN = 3
    ROW_WISE = 4
    COL_WISE = 5
    RELATIVE = 6


class Transform(IntEnum):
    IDENTITY = 0
    SQUARE = 1
    SQRT = 2
    LOG1P = 3
    EXP_NEG = 4
    SIGMOID = 5
    SOFTMAX = 6


def _parse_field(text: str, enum_cls):
    token = text.strip().lower()
    try:
        code = int(token)
    except ValueError:
        try:
            return enum_cls[token.upper()]
        except KeyError:
            names = ", ".join(member.name.lower() for member in enum_cls)
            raise ValueError(f"unknown {enum_cls.__name__.lower()} {text!r}; expected one of {names} or a code 0..6") from None
    if not 0 <= code < 7:
        raise ValueError(f"{enum_cls.__name__.lower()} code {code} out of range 0..6")
    return enum_cls(code)


@dataclass(frozen=True)
class MetricConfig:
    """One point of the config space: (alpha, beta, f1, f2)."""

    alpha: Coeff
    beta: Coeff
    f1: Transform
    f2: Transform

    @property
    def codes(self) -> tuple[int, int, int, int]:
        return (int(self.alpha), int(self.beta), int(self.f1), int(self.f2))

    @classmethod
    def from_codes(cls, codes) -> "MetricConfig":
        a, b, f1, f2 = codes
        return cls(Coeff(a), Coeff(b), Transform(f1), Transform(f2))

    @classmethod
    def from_string(cls, text: str) -> "MetricConfig":
        """Parse "a,b,f1,f2" where each field is a canonical name or code 0..6.

        Example: "frobenius,global_sum,identity,sqrt" or "2,1,0,2".
        """
        parts = text.split(",")
        if len(parts) != 4:
            raise ValueError(f"expected 4 comma-separated fields, got {len(parts)}: {text!r}")
        return cls(
            _parse_field(parts[0], Coeff),
            _parse_field(parts[1], Coeff),
            _parse_field(parts[2], Transform),
            _parse_field(parts[3], Transform),
        )

    def __str__(self) -> str:
        return ",".join(
            (self.alpha.name.lower(), self.beta.name.lower(), self.f1.name.lower(), self.f2.name.lower())
        )


@dataclass(frozen=True)
class Magnitude:
    """Plain absolute-value scoring; activation statistics are ignored."""

    def __str__(self) -> str:
        return "magnitude"


MAGNITUDE = Magnitude()

MetricKind = MetricConfig | Magnitude


@dataclass(eq=False)
class SubModuleStats:
    """Per-input-feature activation statistics for one linear sub-module."""

    v: np.ndarray  # ||X_j||_2 over all calibration tokens
    l1: np.ndarray  # sum_t |X_tj| over all calibration tokens
    token_count: int


def weight_coefficient(w: np.ndarray, coeff: Coeff) -> np.ndarray:
    """Per-element normalizing coefficient computed from A = |w| (m x n)."""
    a = np.abs(w)
    m, n = a.shape
    if coeff is Coeff.UNIFORM:
        return np.ones_like(a)
    if coeff is Coeff.GLOBAL_SUM:
        return np.full_like(a, 1.0 / max(a.sum(), EPS))
    if coeff is Coeff.FROBENIUS:
        return np.full_like(a, 1.0 / max(float(np.sqrt((w * w).sum())), EPS))
    if coeff is Coeff.GLOBAL_MEAN:
        return np.full_like(a, (m * n) / max(a.sum(), EPS))
    row_inv = 1.0 / np.maximum(a.sum(axis=1), EPS)
    col_inv = 1.0 / np.maximum(a.sum(axis=0), EPS)
    if coeff is Coeff.ROW_WISE:
        return np.broadcast_to(row_inv[:, None], a.shape)
    if coeff is Coeff.COL_WISE:
        return np.broadcast_to(col_inv[None, :], a.shape)
    if coeff is Coeff.RELATIVE:
        return row_inv[:, None] + col_inv[None, :]
    raise ValueError(f"unknown coefficient: {coeff!r}")


def activation_coefficient(stats: SubModuleStats, coeff: Coeff) -> np.ndarray:
    """Per-feature normalizing coefficient computed from v_j = ||X_j||_2.

    ROW_WISE normalizes each feature by its own L1 mass; COL_WISE applies the
    global L1 normalizer (a per-token factor cannot multiply into a score that
    is indexed by feature only).
    """
    v = stats.v
    if coeff is Coeff.UNIFORM:
        return np.ones_like(v)
    if coeff is Coeff.GLOBAL_SUM:
        return np.full_like(v, 1.0 / max(v.sum(), EPS))
    if coeff is Coeff.FROBENIUS:
        return np.full_like(v, 1.0 / max(float(np.sqrt((v * v).sum())), EPS))
    if coeff is Coeff.GLOBAL_MEAN:
        return np.full_like(v, v.size / max(v.sum(), EPS))
    if coeff is Coeff.ROW_WISE:
        return 1.0 / np.maximum(stats.l1, EPS)
    if coeff is Coeff.COL_WISE:
        return np.full_like(v, 1.0 / max(stats.l1.sum(), EPS))
    if coeff is Coeff.RELATIVE:
        return 1.0 / max(v.sum(), EPS) + 1.0 / np.maximum(v, EPS)
    raise ValueError(f"unknown coefficient: {coeff!r}")


def _elementwise(a: np.ndarray, transform: Transform) -> np.ndarray:
    if transform is Transform.IDENTITY:
        return a
    if transform is Transform.SQUARE:
        return a * a
    if transform is Transform.SQRT:
        return np.sqrt(a)
    if transform is Transform.LOG1P:
        return np.log1p(a)
    if transform is Transform.EXP_NEG:
        return np.exp(-a)
    if transform is Transform.SIGMOID:
        return 1.0 / (1.0 + np.exp(-a))
    raise ValueError(f"unknown transform: {transform!r}")


def transform_weights(w: np.ndarray, transform: Transform) -> np.ndarray:
    """Transform A = |w|; SOFTMAX normalizes over rows within each column."""
    a = np.abs(w)
    if transform is Transform.SOFTMAX:
        z = a - a.max(axis=0, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=0, keepdims=True)
    return _elementwise(a, transform)


def transform_activations(v: np.ndarray, transform: Transform) -> np.ndarray:
    """Transform the nonnegative norm vector; SOFTMAX normalizes over features."""
    if transform is Transform.SOFTMAX:
        z = v - v.max()
        e = np.exp(z)
        return e / e.sum()
    return _elementwise(v, transform)


def score(w: np.ndarray, stats: SubModuleStats, kind: MetricKind) -> np.ndarray:
    """Importance scores for an output x input weight matrix."""
    if isinstance(kind, Magnitude):
        return np.abs(w)
    if stats.v.size != w.shape[1]:
        raise ValueError(
            f"stats cover {stats.v.size} input features but weight matrix has {w.shape[1]} columns"
        )
    weight_part = weight_coefficient(w, kind.alpha) * transform_weights(w, kind.f1)
    act_part = activation_coefficient(stats, kind.beta) * transform_activations(stats.v, kind.f2)
    return weight_part * act_part[None, :]


PRESET_NAMES = ("magnitude", "wanda", "ria", "optishear-l2-gsm8k", "optishear-l3-gsm8k")

_PRESETS: dict[str, MetricKind] = {
    "magnitude": MAGNITUDE,
    # |W_ij| * ||X_j||_2
    "wanda": MetricConfig(Coeff.UNIFORM, Coeff.UNIFORM, Transform.IDENTITY, Transform.IDENTITY),
    # (|W_ij|/rowsum_i + |W_ij|/colsum_j) * sqrt(||X_j||_2)
    "ria": MetricConfig(Coeff.RELATIVE, Coeff.UNIFORM, Transform.IDENTITY, Transform.SQRT),
    # |W_ij|/||W||_F * sqrt(||X_j||_2)/sum_j ||X_j||_2
    "optishear-l2-gsm8k": MetricConfig(
        Coeff.FROBENIUS, Coeff.GLOBAL_SUM, Transform.IDENTITY, Transform.SQRT
    ),
    # mn*|W_ij|/sum|W| * sqrt(||X_j||_2)/sum_j ||X_j||_2
    "optishear-l3-gsm8k": MetricConfig(
        Coeff.GLOBAL_MEAN, Coeff.GLOBAL_SUM, Transform.IDENTITY, Transform.SQRT
    ),
}


def preset(name: str) -> MetricKind:
    try:
        return _PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset: {name!r}; expected one of {', '.join(PRESET_NAMES)}") from None


def parse_kind(text: str) -> MetricKind:
    """Parse a preset name or "custom:a,b,f1,f2" (canonical names or codes)."""
    if text.startswith("custom:"):
        return MetricConfig.from_string(text[len("custom:"):])
    return preset(text)


# Coefficients that only rescale scores by a positive per-row or global factor
# cannot change the per-row (or per-group) ranking, so configs differing only
# in such coefficients produce identical masks and identical fitness.
_ALPHA_RANK_NEUTRAL = frozenset(
    {Coeff.UNIFORM, Coeff.GLOBAL_SUM, Coeff.FROBENIUS, Coeff.GLOBAL_MEAN, Coeff.ROW_WISE}
)
_BETA_RANK_NEUTRAL = frozenset(
    {Coeff.UNIFORM, Coeff.GLOBAL_SUM, Coeff.FROBENIUS, Coeff.GLOBAL_MEAN, Coeff.COL_WISE}
)


def mask_equivalence_key(config: MetricConfig) -> tuple:
    """Canonical key identifying configs that provably build identical masks.

    On the weight side, global scalings and per-row normalization leave every
    row's ranking untouched; on the activation side, global scalings do. Only
    feature-dependent coefficients (column-wise or relative weights, row-wise
    or relative activations) and the transformations can change rankings.
    """
    alpha = -1 if config.alpha in _ALPHA_RANK_NEUTRAL else int(config.alpha)
    beta = -1 if config.beta in _BETA_RANK_NEUTRAL else int(config.beta)
    return (alpha, beta, int(config.f1), int(config.f2))
