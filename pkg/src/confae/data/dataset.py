"""Dataset container and the synthetic benchmark generators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from confae import __version__
from confae.data import attributes as attr
from confae.data.render import IMAGE_SIZE, render_circle, render_ellipse
from confae.data.sampling import sample_correlated
from confae.errors import DataError

KINDS = ("circles", "ellipses")


@dataclass
class Dataset:
    """Images + per-sample attribute labels + label-availability mask."""

    images: np.ndarray   # (N, H, W) float32 in [0, 1]
    labels: np.ndarray   # (N, K) float32, columns in manifest attribute order
    mask: np.ndarray     # (N,) bool, True = labeled
    manifest: dict

    def __post_init__(self):
        n = self.images.shape[0]
        if self.labels.shape[0] != n or self.mask.shape[0] != n:
            raise DataError("images, labels and mask must agree on sample count")
        if self.labels.shape[1] != len(self.manifest["attributes"]):
            raise DataError("label columns must match manifest attribute order")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def attribute_names(self) -> list[str]:
        return [a["name"] for a in self.manifest["attributes"]]

    @property
    def target_name(self) -> str:
        return next(a["name"] for a in self.manifest["attributes"] if a["role"] == attr.TARGET)

    @property
    def confounder_names(self) -> list[str]:
        return [a["name"] for a in self.manifest["attributes"] if a["role"] == attr.CONFOUNDER]

    def column(self, name: str) -> np.ndarray:
        try:
            idx = self.attribute_names.index(name)
        except ValueError:
            raise DataError(f"unknown attribute {name!r}; have {self.attribute_names}") from None
        return self.labels[:, idx]


def _specs_for(kind: str):
    if kind == "circles":
        return attr.circle_attributes(), attr.circle_correlation()
    if kind == "ellipses":
        return attr.ellipse_attributes(), attr.ellipse_correlation()
    raise DataError(f"unknown dataset kind {kind!r}; expected one of {KINDS}")


def generate_dataset(kind: str, n: int, seed: int,
                     labeled_fraction: float = 1.0) -> Dataset:
    """Generate a synthetic benchmark dataset; pure in all four arguments."""
    if n < 1:
        raise DataError("n must be >= 1")
    if not 0.0 <= labeled_fraction <= 1.0:
        raise DataError("labeled_fraction must lie in [0, 1]")
    specs, corr = _specs_for(kind)
    values = sample_correlated(specs, corr, n, seed)

    images = np.empty((n, IMAGE_SIZE, IMAGE_SIZE), dtype=np.float32)
    clipped_count = 0
    if kind == "circles":
        for i in range(n):
            images[i] = render_circle(values[i, 0], values[i, 1])
    else:
        for i in range(n):
            images[i], clipped = render_ellipse(*values[i])
            clipped_count += int(clipped)

    n_labeled = int(np.floor(labeled_fraction * n))
    perm = np.random.default_rng((int(seed), 1)).permutation(n)
    mask = np.zeros(n, dtype=bool)
    mask[perm[:n_labeled]] = True

    realized_corr = np.corrcoef(values.T) if n >= 3 else np.eye(len(specs))
    manifest = {
        "format": "confae-dataset",
        "version": 1,
        "generator_version": __version__,
        "kind": kind,
        "n": n,
        "image_size": IMAGE_SIZE,
        "seed": int(seed),
        "labeled_fraction": labeled_fraction,
        "attributes": [
            {"name": a.name, "mean": a.mean, "sd": a.sd,
             "lo": a.lo, "hi": a.hi, "role": a.role}
            for a in specs
        ],
        "target_correlations": corr.matrix.tolist(),
        "realized_correlations": np.asarray(realized_corr).tolist(),
        "realized_means": values.mean(axis=0).tolist(),
        "realized_sds": values.std(axis=0).tolist(),
        "clipped_count": clipped_count,
    }
    return Dataset(images=images, labels=values.astype(np.float32),
                   mask=mask, manifest=manifest)


def realized_target_confounder_corr(ds: Dataset, confounders: list[str]) -> list[float]:
    """Realized r(target, c) for each named confounder, from the manifest."""
    names = ds.attribute_names
    t_idx = names.index(ds.target_name)
    rc = np.asarray(ds.manifest["realized_correlations"])
    return [float(rc[t_idx, names.index(c)]) for c in confounders]
