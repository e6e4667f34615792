"""Bit-exact serialization for models, calibration data, stats, masks, results.

Binary container layout (all integers little-endian):

    magic "OPSH" | version u32 | header_len u32 | header JSON (UTF-8) |
    tensor_count u32 | per tensor:
        name_len u16 | name UTF-8 | ndim u8 | dims u32 * ndim |
        dtype u8 (0 = float32, 1 = uint8) | payload, row-major

Weights are stored as float32; all in-memory arithmetic stays float64, so the
file is the precision boundary. Writers are deterministic: identical inputs
produce byte-identical files. Readers reject anything a writer could not have
produced, with a diagnostic.
"""

import csv
import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .metric import SubModuleStats
from .model import SUB_MODULES, LayerWeights, ModelConfig, ModelWeights, sub_module_key
from .objective import ActivationStats, CalibrationSet
from .prune import Mask, MaskSet
from .search import SearchResult

MAGIC = b"OPSH"
VERSION = 1
DTYPE_F32 = 0
DTYPE_U8 = 1

_DTYPES = {DTYPE_F32: np.dtype("<f4"), DTYPE_U8: np.dtype("<u1")}


class FormatError(ValueError):
    """A file does not match what a writer could have produced."""


# -- binary container ---------------------------------------------------------


def _write_container(path, header: dict, tensors: list[tuple[str, np.ndarray, int]]) -> None:
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        f.write(struct.pack("<I", len(tensors)))
        for name, array, dtype_code in tensors:
            name_bytes = name.encode("utf-8")
            f.write(struct.pack("<H", len(name_bytes)))
            f.write(name_bytes)
            f.write(struct.pack("<B", array.ndim))
            for dim in array.shape:
                f.write(struct.pack("<I", dim))
            f.write(struct.pack("<B", dtype_code))
            f.write(np.ascontiguousarray(array).astype(_DTYPES[dtype_code]).tobytes())


def _read_exact(f, count: int, what: str) -> bytes:
    data = f.read(count)
    if len(data) != count:
        raise FormatError(f"truncated file while reading {what}")
    return data


def _read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != MAGIC:
            raise FormatError(f"bad magic in {path}; expected OPSH container")
        (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
        if version != VERSION:
            raise FormatError(f"unsupported container version {version} (expected {VERSION})")
        (header_len,) = struct.unpack("<I", _read_exact(f, 4, "header length"))
        try:
            header = json.loads(_read_exact(f, header_len, "header").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"bad container header: {exc}") from None
        if not isinstance(header, dict):
            raise FormatError("container header must be a JSON object")
        (count,) = struct.unpack("<I", _read_exact(f, 4, "tensor count"))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(f, 2, "tensor name length"))
            name = _read_exact(f, name_len, "tensor name").decode("utf-8")
            if name in tensors:
                raise FormatError(f"duplicate tensor name {name!r}")
            (ndim,) = struct.unpack("<B", _read_exact(f, 1, f"ndim of {name}"))
            dims = tuple(
                struct.unpack("<I", _read_exact(f, 4, f"dims of {name}"))[0] for _ in range(ndim)
            )
            (dtype_code,) = struct.unpack("<B", _read_exact(f, 1, f"dtype of {name}"))
            if dtype_code not in _DTYPES:
                raise FormatError(f"unknown dtype code {dtype_code} for tensor {name!r}")
            dtype = _DTYPES[dtype_code]
            n_items = 1
            for dim in dims:
                n_items *= dim
            payload = _read_exact(f, n_items * dtype.itemsize, f"payload of {name}")
            tensors[name] = np.frombuffer(payload, dtype=dtype).reshape(dims)
        if f.read(1):
            raise FormatError("trailing bytes after last tensor")
    return header, tensors


# -- model weights ------------------------------------------------------------


def _model_tensor_order(config: ModelConfig) -> list[str]:
    names = ["token_embedding", "position_embedding"]
    for i in range(config.n_layers):
        names.extend(sub_module_key(i, sub) for sub in SUB_MODULES)
        names.append(f"layer.{i}.attn_norm")
        names.append(f"layer.{i}.mlp_norm")
    names.append("final_norm")
    return names


def write_model(path, weights: ModelWeights) -> None:
    config = weights.config
    tensors: list[tuple[str, np.ndarray, int]] = [
        ("token_embedding", weights.token_embedding, DTYPE_F32),
        ("position_embedding", weights.position_embedding, DTYPE_F32),
    ]
    for i, layer in enumerate(weights.layers):
        for sub in SUB_MODULES:
            tensors.append((sub_module_key(i, sub), getattr(layer, sub), DTYPE_F32))
        tensors.append((f"layer.{i}.attn_norm", layer.attn_norm, DTYPE_F32))
        tensors.append((f"layer.{i}.mlp_norm", layer.mlp_norm, DTYPE_F32))
    tensors.append(("final_norm", weights.final_norm, DTYPE_F32))
    _write_container(path, {"kind": "model", "config": asdict(config)}, tensors)


_EXPECTED_SHAPES = {
    "q": ("d_model", "d_model"),
    "k": ("d_model", "d_model"),
    "v": ("d_model", "d_model"),
    "o": ("d_model", "d_model"),
    "gate": ("d_model", "d_ff"),
    "up": ("d_model", "d_ff"),
    "down": ("d_ff", "d_model"),
}


def read_model(path) -> ModelWeights:
    header, tensors = _read_container(path)
    if header.get("kind") != "model":
        raise FormatError(f"expected a model container, got kind={header.get('kind')!r}")
    try:
        config = ModelConfig(**header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad model config record: {exc}") from None

    expected = _model_tensor_order(config)
    if list(tensors) != expected:
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        raise FormatError(f"model tensor set mismatch: missing {missing}, unexpected {extra}")

    def take(name: str, shape: tuple[int, ...]) -> np.ndarray:
        array = tensors[name]
        if array.shape != shape:
            raise FormatError(f"tensor {name!r} has shape {array.shape}, expected {shape}")
        return array.astype(np.float64)

    dims = {"d_model": config.d_model, "d_ff": config.d_ff}
    layers = []
    for i in range(config.n_layers):
        fields = {
            sub: take(sub_module_key(i, sub), tuple(dims[d] for d in _EXPECTED_SHAPES[sub]))
            for sub in SUB_MODULES
        }
        layers.append(
            LayerWeights(
                **fields,
                attn_norm=take(f"layer.{i}.attn_norm", (config.d_model,)),
                mlp_norm=take(f"layer.{i}.mlp_norm", (config.d_model,)),
            )
        )
    return ModelWeights(
        config=config,
        token_embedding=take("token_embedding", (config.vocab_size, config.d_model)),
        position_embedding=take("position_embedding", (config.max_seq_len, config.d_model)),
        layers=layers,
        final_norm=take("final_norm", (config.d_model,)),
    )


# -- calibration sets ---------------------------------------------------------


def write_calib(path, calib: CalibrationSet) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for seq in calib.sequences:
            f.write(json.dumps({"tokens": list(seq)}, separators=(",", ":")) + "\n")


def read_calib(path) -> CalibrationSet:
    sequences = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: malformed JSON line: {exc}") from None
            if not isinstance(record, dict) or "tokens" not in record:
                raise FormatError(f"{path}:{lineno}: expected an object with a 'tokens' array")
            tokens = record["tokens"]
            if not isinstance(tokens, list) or not all(
                isinstance(t, int) and not isinstance(t, bool) for t in tokens
            ):
                raise FormatError(f"{path}:{lineno}: 'tokens' must be an array of integers")
            sequences.append(tuple(tokens))
    if not sequences:
        raise FormatError("empty calibration set")
    return CalibrationSet(sequences=tuple(sequences), source=str(path))


# -- activation stats ---------------------------------------------------------


def write_stats(path, stats: ActivationStats) -> None:
    doc = {
        key: {
            "v": [float(x) for x in entry.v],
            "l1": [float(x) for x in entry.l1],
            "token_count": entry.token_count,
        }
        for key, entry in stats.items()
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_stats(path) -> ActivationStats:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed stats JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: stats document must be a JSON object")
    stats: ActivationStats = {}
    for key, entry in doc.items():
        if not isinstance(entry, dict):
            raise FormatError(f"stats[{key!r}]: expected an object")
        for field in ("v", "l1", "token_count"):
            if field not in entry:
                raise FormatError(f"stats[{key!r}].{field}: missing")
        v = entry["v"]
        l1 = entry["l1"]
        if not isinstance(v, list) or not isinstance(l1, list) or len(v) != len(l1):
            raise FormatError(f"stats[{key!r}]: v and l1 must be equal-length arrays")
        if not isinstance(entry["token_count"], int) or entry["token_count"] < 0:
            raise FormatError(f"stats[{key!r}].token_count: must be a nonnegative integer")
        try:
            v_arr = np.asarray(v, dtype=np.float64)
            l1_arr = np.asarray(l1, dtype=np.float64)
        except (TypeError, ValueError):
            raise FormatError(f"stats[{key!r}]: v and l1 must contain only numbers") from None
        stats[key] = SubModuleStats(v=v_arr, l1=l1_arr, token_count=entry["token_count"])
    if not stats:
        raise FormatError(f"{path}: stats document is empty")
    return stats


# -- masks ---------------------------------------------------------------------


def write_masks(path, masks: MaskSet) -> None:
    tensors = [(name, masks[name].bits.astype(np.uint8), DTYPE_U8) for name in masks]
    _write_container(path, {"kind": "masks"}, tensors)


def read_masks(path) -> MaskSet:
    header, tensors = _read_container(path)
    if header.get("kind") != "masks":
        raise FormatError(f"expected a masks container, got kind={header.get('kind')!r}")
    masks: MaskSet = {}
    for name, array in tensors.items():
        if array.dtype != np.uint8 or array.ndim != 2:
            raise FormatError(f"mask {name!r}: expected a 2-D uint8 tensor")
        if not np.isin(array, (0, 1)).all():
            raise FormatError(f"mask {name!r}: flags must be 0 or 1")
        masks[name] = Mask(bits=array.astype(bool))
    return masks


# -- search results -------------------------------------------------------------

RESULT_CSV_COLUMNS = ("trial", "alpha", "beta", "f1", "f2", "l_div")


def _trial_row(index: int, config, l_div: float) -> dict:
    return {
        "trial": index,
        "alpha": config.alpha.name.lower(),
        "beta": config.beta.name.lower(),
        "f1": config.f1.name.lower(),
        "f2": config.f2.name.lower(),
        "l_div": l_div,
    }


def write_results(result: SearchResult, json_path, csv_path=None) -> None:
    """Full trial log as JSON; optional CSV with one row per trial."""
    doc = {
        "algorithm": result.algorithm,
        "seed": result.seed,
        "budget": result.budget,
        "evaluations_used": result.evaluations_used,
        "distinct_configs_evaluated": result.distinct_configs_evaluated,
        "best": _trial_row(0, result.best_config, result.best_l_div) | {"trial": None},
        "trials": [_trial_row(i, cfg, l_div) for i, cfg, l_div in result.trials],
    }
    Path(json_path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(RESULT_CSV_COLUMNS)
            for i, cfg, l_div in result.trials:
                row = _trial_row(i, cfg, l_div)
                writer.writerow([row[col] if col != "l_div" else repr(l_div) for col in RESULT_CSV_COLUMNS])
