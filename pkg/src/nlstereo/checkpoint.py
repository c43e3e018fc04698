"""Versioned binary model container.

Layout: the magic string ``DSMK1``; a u32 little-endian byte length followed
by that many bytes of UTF-8 ``key = value`` config text; then consecutive
array records until end of file.  Each record is u32 name length, the
UTF-8 name, u32 rank, u32 extents (rank of them), then the float64
little-endian values (product-of-extents of them).  Batch-norm running
buffers are stored as ordinary named records.
"""

from __future__ import annotations

import struct

import numpy as np

from .config import ConfigError, get_int, get_int_tuple, parse_config_text, reject_unknown_keys
from .model import ModelConfig, StereoModel, init_model

MAGIC = b"DSMK1"

_CONFIG_KEYS = (
    "norm", "nlf_feature_layers", "nlf_cost_layers", "conv_widths",
    "agg_width", "max_disparity", "downsample", "in_channels",
)


class CheckpointError(ValueError):
    pass


def config_to_text(config: ModelConfig) -> str:
    lines = [
        f"norm = {config.norm_kind}",
        f"nlf_feature_layers = {config.nlf_feature_layers}",
        f"nlf_cost_layers = {config.nlf_cost_layers}",
        "conv_widths = " + ",".join(str(w) for w in config.conv_widths),
        f"agg_width = {config.agg_width}",
        f"max_disparity = {config.max_disparity}",
        f"downsample = {config.downsample}",
        f"in_channels = {config.in_channels}",
    ]
    return "\n".join(lines) + "\n"


def config_from_pairs(pairs: dict) -> ModelConfig:
    reject_unknown_keys(pairs, _CONFIG_KEYS, "model config")
    return ModelConfig(
        norm_kind=pairs.get("norm", "domain"),
        nlf_feature_layers=get_int(pairs, "nlf_feature_layers", 2),
        nlf_cost_layers=get_int(pairs, "nlf_cost_layers", 1),
        conv_widths=get_int_tuple(pairs, "conv_widths", (16, 16, 16)),
        agg_width=get_int(pairs, "agg_width", 16),
        max_disparity=get_int(pairs, "max_disparity", 16),
        downsample=get_int(pairs, "downsample", 2),
        in_channels=get_int(pairs, "in_channels", 3),
    )


def _model_arrays(model: StereoModel):
    entries = [(name, p.value) for name, p in model.named_parameters()]
    for i, mode in enumerate(model.norm_modes):
        if mode.kind == "batch":
            entries.append((f"norm{i}.running_mean", mode.running_mean))
            entries.append((f"norm{i}.running_var", mode.running_var))
    return entries


def save_checkpoint(model: StereoModel, path) -> None:
    cfg = config_to_text(model.config).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(cfg)))
        fh.write(cfg)
        for name, arr in _model_arrays(model):
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(
            f"truncated checkpoint at byte {fh.tell() - len(data)}: "
            f"needed {n} bytes for {what}, got {len(data)}"
        )
    return data


def read_arrays(path):
    """Low-level reader: returns (config pairs, ordered name -> array dict)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
        (cfg_len,) = struct.unpack("<I", _read_exact(fh, 4, "config length"))
        try:
            cfg_text = _read_exact(fh, cfg_len, "config text").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"config text is not valid UTF-8: {exc}") from None
        pairs = parse_config_text(cfg_text)
        arrays: dict = {}
        while True:
            head = fh.read(4)
            if not head:
                break
            if len(head) != 4:
                raise CheckpointError(f"truncated record header at byte {fh.tell() - len(head)}")
            (name_len,) = struct.unpack("<I", head)
            if name_len > 4096:
                raise CheckpointError(f"implausible record name length {name_len}")
            name = _read_exact(fh, name_len, "record name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, f"rank of {name}"))
            if rank > 8:
                raise CheckpointError(f"implausible rank {rank} for {name}")
            shape = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, f"extents of {name}"))
            count = int(np.prod(shape, dtype=np.int64)) if rank else 1
            payload = _read_exact(fh, 8 * count, f"values of {name}")
            arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
        return pairs, arrays


def load_checkpoint(path) -> StereoModel:
    try:
        pairs, arrays = read_arrays(path)
        config = config_from_pairs(pairs)
    except ConfigError as exc:
        raise CheckpointError(f"bad checkpoint config: {exc}") from None
    model = init_model(config, seed=0)
    for name, p in model.named_parameters():
        if name not in arrays:
            raise CheckpointError(f"checkpoint is missing parameter {name}")
        arr = arrays.pop(name)
        if arr.shape != p.value.shape:
            raise CheckpointError(
                f"parameter {name} has shape {arr.shape}, expected {p.value.shape}"
            )
        p.value[...] = arr
    for i, mode in enumerate(model.norm_modes):
        if mode.kind == "batch":
            for suffix, target in (("running_mean", mode.running_mean),
                                   ("running_var", mode.running_var)):
                name = f"norm{i}.{suffix}"
                if name not in arrays:
                    raise CheckpointError(f"checkpoint is missing buffer {name}")
                target[...] = arrays.pop(name)
    if arrays:
        raise CheckpointError(f"checkpoint has unexpected records: {sorted(arrays)}")
    return model
