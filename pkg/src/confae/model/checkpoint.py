"""Model checkpoint file: versioned header + float32 parameter blobs.

Layout: 8-byte magic ``CFAECKPT``, little-endian u32 version, u32 header
length, UTF-8 JSON header (parameter names/shapes in order, model metadata,
and the training-config echo), then the raw little-endian float32 parameter
data concatenated in header order. Round trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from confae.errors import DataError
from confae.model.autoencoder import ModelState

MAGIC = b"CFAECKPT"
VERSION = 1


def save_model(state: ModelState, path, config_echo: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "version": VERSION,
        "latent_dim": state.latent_dim,
        "n_confounders": state.n_confounders,
        "seed": state.seed,
        "params": [{"name": k, "shape": list(v.data.shape)} for k, v in state.params.items()],
        "config": config_echo or {},
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(head)))
        fh.write(head)
        for tensor in state.params.values():
            fh.write(tensor.data.astype("<f4", copy=False).tobytes())
    return path


def load_model(path) -> tuple[ModelState, dict]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise DataError(f"{path.name}: not a confae checkpoint (bad magic)")
    version, head_len = struct.unpack("<II", blob[8:16])
    if version != VERSION:
        raise DataError(f"{path.name}: unsupported checkpoint version {version}")
    try:
        header = json.loads(blob[16:16 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path.name}: corrupt checkpoint header") from exc

    state = ModelState(latent_dim=int(header["latent_dim"]),
                       n_confounders=int(header["n_confounders"]),
                       seed=int(header["seed"]))
    offset = 16 + head_len
    for entry in header["params"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in state.params:
            raise DataError(f"{path.name}: unknown parameter {name!r} in header")
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        chunk = blob[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise DataError(f"{path.name}: truncated parameter blob at {name!r}")
        state.params[name].data = np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise DataError(f"{path.name}: {len(blob) - offset} trailing bytes after parameters")
    return state, header.get("config", {})
