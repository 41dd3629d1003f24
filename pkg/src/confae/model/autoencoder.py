"""Convolutional autoencoder with a linear projection head.

Encoder: four stride-2 3x3 conv blocks (16/32/64/128 channels, leaky-ReLU
0.2) followed by a dense map to the latent vector. Decoder mirrors it with
stride-2 transposed convs and a final sigmoid. The projection head is a
single bias-free vector p of length n; the scalar projection of a latent
point onto p is the representation the correlation losses shape.

The latent dimension must be at least one more than the number of
confounders being corrected, or no direction orthogonal to all of them can
exist.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from confae.engine import (
    Tensor,
    conv2d_block,
    conv_transpose2d_block,
    dense,
    leaky_relu,
    no_grad,
    reshape,
)
from confae.errors import ConfigError, NumericFault

IMAGE_SIZE = 64
ENC_CHANNELS = (16, 32, 64, 128)
LEAKY_SLOPE = 0.2
_FLAT = ENC_CHANNELS[-1] * 4 * 4  # spatial 64 -> 4 after four stride-2 convs


def _he_std(fan_in: int) -> float:
    # Kaiming init with leaky-ReLU(0.2) gain
    return float(np.sqrt(2.0 / (1.0 + LEAKY_SLOPE ** 2) / fan_in))


class ModelState:
    """Encoder, decoder and projection-estimator parameters."""

    def __init__(self, latent_dim: int, n_confounders: int, seed: int):
        if latent_dim < n_confounders + 1:
            raise ConfigError(
                f"latent dimension {latent_dim} must be >= confounders + 1 "
                f"(= {n_confounders + 1}): a direction orthogonal to all "
                "confounder directions must exist")
        self.latent_dim = latent_dim
        self.n_confounders = n_confounders
        self.seed = int(seed)
        self.params: OrderedDict[str, Tensor] = OrderedDict()
        self._init_params(np.random.default_rng((self.seed, 2)))

    def _param(self, name: str, arr: np.ndarray) -> Tensor:
        t = Tensor(arr.astype(np.float32), requires_grad=True)
        self.params[name] = t
        return t

    def _init_params(self, rng) -> None:
        chans = (1,) + ENC_CHANNELS
        for i in range(4):
            cin, cout = chans[i], chans[i + 1]
            self._param(f"enc.conv{i + 1}.w",
                        rng.standard_normal((cout, cin, 3, 3)) * _he_std(cin * 9))
            self._param(f"enc.conv{i + 1}.b", np.zeros(cout))
        self._param("enc.fc.w", rng.standard_normal((_FLAT, self.latent_dim)) * _he_std(_FLAT))
        self._param("enc.fc.b", np.zeros(self.latent_dim))

        self._param("dec.fc.w", rng.standard_normal((self.latent_dim, _FLAT))
                    * _he_std(self.latent_dim))
        self._param("dec.fc.b", np.zeros(_FLAT))
        rev = ENC_CHANNELS[::-1] + (1,)
        for i in range(4):
            cin, cout = rev[i], rev[i + 1]
            self._param(f"dec.tconv{i + 1}.w",
                        rng.standard_normal((cin, cout, 3, 3)) * _he_std(cin * 9))
            self._param(f"dec.tconv{i + 1}.b", np.zeros(cout))

        p = rng.standard_normal(self.latent_dim) / np.sqrt(self.latent_dim)
        self._param("pe.p", p)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def ae_parameters(self) -> list[Tensor]:
        """Encoder + decoder parameters (everything but the projection head)."""
        return [t for k, t in self.params.items() if not k.startswith("pe.")]

    # -- graph-building forward passes --------------------------------------

    def encode(self, x: Tensor) -> Tensor:
        """(B, 1, 64, 64) images -> (B, n) latents."""
        h = x
        for i in range(4):
            h = conv2d_block(h, self.params[f"enc.conv{i + 1}.w"],
                             self.params[f"enc.conv{i + 1}.b"],
                             stride=2, padding=1, act="leaky", slope=LEAKY_SLOPE)
        h = reshape(h, (h.shape[0], _FLAT))
        d = dense(h, self.params["enc.fc.w"], self.params["enc.fc.b"])
        if not np.all(np.isfinite(d.data)):
            raise NumericFault("non-finite latent representation")
        return d

    def decode(self, d: Tensor) -> Tensor:
        """(B, n) latents -> (B, 1, 64, 64) images in [0, 1]."""
        h = leaky_relu(dense(d, self.params["dec.fc.w"], self.params["dec.fc.b"]),
                       LEAKY_SLOPE)
        h = reshape(h, (h.shape[0], ENC_CHANNELS[-1], 4, 4))
        for i in range(4):
            h = conv_transpose2d_block(
                h, self.params[f"dec.tconv{i + 1}.w"], self.params[f"dec.tconv{i + 1}.b"],
                stride=2, padding=1, output_padding=1,
                act="sigmoid" if i == 3 else "leaky", slope=LEAKY_SLOPE)
        if not np.all(np.isfinite(h.data)):
            raise NumericFault("non-finite reconstruction")
        return h

    def project_raw(self, d: Tensor) -> Tensor:
        """Raw dot product d . p, shape (B,); the in-graph training quantity.

        Pearson losses are invariant to the positive scale 1/||p||, so the
        raw product and the normalized projection give identical loss values;
        the raw form keeps the graph simple.
        """
        p = self.params["pe.p"]
        out = dense(d, reshape(p, (self.latent_dim, 1)))
        return reshape(out, (d.shape[0],))

    # -- numpy-side inference -------------------------------------------------

    def pe_norm(self) -> float:
        return float(np.linalg.norm(self.params["pe.p"].data))

    def pe_unit(self) -> np.ndarray:
        norm = self.pe_norm()
        if norm == 0.0:
            raise NumericFault("projection estimator collapsed to the zero vector")
        return self.params["pe.p"].data / np.float32(norm)

    def encode_array(self, images: np.ndarray, batch: int = 256) -> np.ndarray:
        """Encode (N, 64, 64) or (N, 1, 64, 64) images without recording a graph."""
        x = as_image_batch(images)
        out = np.empty((x.shape[0], self.latent_dim), dtype=np.float32)
        with no_grad():
            for i in range(0, x.shape[0], batch):
                out[i:i + batch] = self.encode(Tensor(x[i:i + batch])).data
        return out

    def decode_array(self, latents: np.ndarray, batch: int = 256) -> np.ndarray:
        z = np.asarray(latents, dtype=np.float32)
        if z.ndim == 1:
            z = z[None, :]
        out = np.empty((z.shape[0], 1, IMAGE_SIZE, IMAGE_SIZE), dtype=np.float32)
        with no_grad():
            for i in range(0, z.shape[0], batch):
                out[i:i + batch] = self.decode(Tensor(z[i:i + batch])).data
        return out

    def project_array(self, latents: np.ndarray) -> np.ndarray:
        """Normalized projection (d . p) / ||p|| of (N, n) latents, shape (N,)."""
        z = np.asarray(latents, dtype=np.float32)
        norm = self.pe_norm()
        if norm == 0.0:
            raise NumericFault("projection estimator collapsed to the zero vector")
        return (z @ self.params["pe.p"].data) / np.float32(norm)


def as_image_batch(images: np.ndarray) -> np.ndarray:
    """Normalize (N, H, W) / (N, 1, H, W) image arrays to NCHW float32."""
    x = np.asarray(images, dtype=np.float32)
    if x.ndim == 3:
        x = x[:, None, :, :]
    if x.ndim != 4 or x.shape[1] != 1:
        raise ValueError(f"expected (N, {IMAGE_SIZE}, {IMAGE_SIZE}) images, got {x.shape}")
    return x
