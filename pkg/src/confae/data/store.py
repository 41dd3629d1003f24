"""On-disk dataset format.

A dataset directory holds exactly four files:

    manifest.json   UTF-8, versioned metadata (see dataset.generate_dataset)
    images.f32le    N*H*W little-endian float32, row-major
    labels.f32le    N*K little-endian float32
    mask.u8         N bytes, 0/1

The round trip is bit-exact; readers validate the version tag and that every
blob length agrees with the manifest.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from confae.data.dataset import Dataset
from confae.errors import DataError

FORMAT_NAME = "confae-dataset"
FORMAT_VERSION = 1


def write_dataset(ds: Dataset, directory) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(
        json.dumps(ds.manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    ds.images.astype("<f4", copy=False).tofile(out / "images.f32le")
    ds.labels.astype("<f4", copy=False).tofile(out / "labels.f32le")
    ds.mask.astype(np.uint8).tofile(out / "mask.u8")
    return out


def read_dataset(directory) -> Dataset:
    src = Path(directory)
    manifest_path = src / "manifest.json"
    if not manifest_path.is_file():
        raise DataError(f"no manifest.json in {src}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest.json is not valid JSON: {exc}") from exc

    if manifest.get("format") != FORMAT_NAME:
        raise DataError(f"unknown dataset format tag {manifest.get('format')!r}")
    if manifest.get("version") != FORMAT_VERSION:
        raise DataError(f"unsupported dataset version {manifest.get('version')!r}; "
                        f"this reader handles version {FORMAT_VERSION}")

    n = int(manifest["n"])
    size = int(manifest["image_size"])
    k = len(manifest["attributes"])

    images = _read_blob(src / "images.f32le", "<f4", n * size * size)
    labels = _read_blob(src / "labels.f32le", "<f4", n * k)
    mask = _read_blob(src / "mask.u8", np.uint8, n)
    return Dataset(images=images.reshape(n, size, size).astype(np.float32, copy=False),
                   labels=labels.reshape(n, k).astype(np.float32, copy=False),
                   mask=mask.astype(bool),
                   manifest=manifest)


def _read_blob(path: Path, dtype, count: int) -> np.ndarray:
    if not path.is_file():
        raise DataError(f"missing blob {path.name}")
    arr = np.fromfile(path, dtype=dtype)
    if arr.size != count:
        raise DataError(f"{path.name}: expected {count} elements from the manifest, "
                        f"found {arr.size} (truncated or mismatched blob)")
    return arr
