"""The five network blocks and their parameter bookkeeping.

Forward passes run on single samples. All parameters live in
:class:`ParamSet` instances with stable names and iteration order, which
is what makes training runs and checkpoints bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ArchConfig, validate_config
from .errors import ShapeError
from .ops import (
    channel_slice,
    conv2d,
    conv3d,
    deconv3d,
    dense,
    flatten,
    leaky_relu,
    maxpool2d,
    relu,
    reshape,
    sigmoid,
)
from .tensor import Tensor, add, exp, mul

Array = np.ndarray


class ParamSet:
    """Named parameter tensors in insertion order."""

    def __init__(self) -> None:
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: Array) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(value, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def items(self):
        return self._params.items()

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = None

    def snapshot(self) -> dict[str, Array]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load(self, mapping: dict[str, Array]) -> None:
        if set(mapping) != set(self._params):
            missing = set(self._params) - set(mapping)
            extra = set(mapping) - set(self._params)
            raise ShapeError(f"parameter names differ (missing {missing}, extra {extra})")
        for name, value in mapping.items():
            t = self._params[name]
            if value.shape != t.data.shape:
                raise ShapeError(
                    f"parameter {name!r} has shape {value.shape}, expected {t.data.shape}"
                )
            t.data = np.array(value, dtype=t.data.dtype)

    def count(self) -> int:
        return sum(t.size for t in self._params.values())


def _fan_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype) -> Array:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype, copy=False)


def _add_conv2d(params: ParamSet, rng, name: str, cin: int, cout: int, dtype):
    k = _fan_uniform(rng, (3, 3, cin, cout), 9 * cin, 9 * cout, dtype)
    params.add(f"{name}.kernel", k)
    params.add(f"{name}.bias", np.zeros(cout, dtype=dtype))


def _add_conv3d(params: ParamSet, rng, name: str, cin: int, cout: int, dtype):
    k = _fan_uniform(rng, (3, 3, 3, cin, cout), 27 * cin, 27 * cout, dtype)
    params.add(f"{name}.kernel", k)
    params.add(f"{name}.bias", np.zeros(cout, dtype=dtype))


def _add_deconv3d(params: ParamSet, rng, name: str, cin: int, cout: int, dtype):
    k = _fan_uniform(rng, (3, 3, 3, cout, cin), 27 * cin, 27 * cout, dtype)
    params.add(f"{name}.kernel", k)
    params.add(f"{name}.bias", np.zeros(cout, dtype=dtype))


def _add_dense(params: ParamSet, rng, name: str, n_in: int, n_out: int, dtype):
    params.add(f"{name}.weights", _fan_uniform(rng, (n_in, n_out), n_in, n_out, dtype))
    params.add(f"{name}.bias", np.zeros(n_out, dtype=dtype))


class DepthEncoder:
    """Masked depth image -> deterministic latent block."""

    def __init__(self, cfg: ArchConfig, rng: np.random.Generator, dtype=np.float64):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.params = ParamSet()
        cin = 2
        for i, width in enumerate(cfg.image_encoder_widths()):
            _add_conv2d(self.params, rng, f"conv{i}", cin, width, self.dtype)
            cin = width

    def forward(self, depth: Array) -> Tensor:
        """``depth`` is (horizontal, vertical); NaN marks missing returns.

        Missing pixels enter as zeros, with the validity mask stacked on
        as a second channel so the network can tell them from real zero
        depth.
        """
        depth = np.asarray(depth, dtype=np.float64)
        if depth.shape != self.cfg.image_shape:
            raise ShapeError(
                f"depth image has shape {depth.shape}, config says {self.cfg.image_shape}"
            )
        valid = np.isfinite(depth)
        stacked = np.stack([np.where(valid, depth, 0.0), valid.astype(np.float64)], axis=-1)
        x = Tensor(stacked.astype(self.dtype, copy=False))
        for i in range(self.cfg.pool_pairs):
            x = add(conv2d(x, self.params[f"conv{i}.kernel"]), self.params[f"conv{i}.bias"])
            x = maxpool2d(x)
            x = leaky_relu(x, self.cfg.leaky_slope)
        return reshape(x, self.cfg.latent_shape)


@dataclass
class GaussianLatent:
    """Mean and log-variance blocks of the recognition distribution."""

    mean: Tensor
    log_variance: Tensor

    def sample(self, noise: Array | None = None, rng: np.random.Generator | None = None) -> Tensor:
        """Reparameterized draw: mean + exp(log_variance / 2) * noise."""
        if noise is None:
            if rng is None:
                raise ValueError("sample needs either explicit noise or an rng")
            noise = rng.standard_normal(self.mean.shape)
        noise = np.asarray(noise, dtype=self.mean.dtype)
        if noise.shape != self.mean.shape:
            raise ShapeError(f"noise shape {noise.shape} != latent shape {self.mean.shape}")
        return add(self.mean, mul(exp(mul(self.log_variance, 0.5)), Tensor(noise)))


class VolumeEncoder:
    """One-hot volume -> Gaussian latent (the recognition half of the VAE)."""

    def __init__(self, cfg: ArchConfig, rng: np.random.Generator, dtype=np.float64):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.params = ParamSet()
        cin = cfg.num_categories
        for i, width in enumerate(cfg.vae_encoder_widths()):
            _add_conv3d(self.params, rng, f"conv{i}", cin, width, self.dtype)
            cin = width

    def forward(self, onehot: Array) -> GaussianLatent:
        onehot = np.asarray(onehot)
        expected = (*self.cfg.volume_shape, self.cfg.num_categories)
        if onehot.shape != expected:
            raise ShapeError(f"volume has shape {onehot.shape}, config says {expected}")
        if not (np.isin(onehot, (0.0, 1.0)).all() and (onehot.sum(axis=-1) == 1.0).all()):
            raise ValueError("volume encoder input must be exactly one-hot")
        x = Tensor(onehot.astype(self.dtype, copy=False))
        n = len(self.cfg.vae_encoder_widths())
        for i in range(n):
            x = add(conv3d(x, self.params[f"conv{i}.kernel"]), self.params[f"conv{i}.bias"])
            if i < n - 1:
                x = leaky_relu(x, self.cfg.leaky_slope)
        c = self.cfg.latent_shape[3]
        return GaussianLatent(channel_slice(x, 0, c), channel_slice(x, c, 2 * c))


class Generator:
    """Latent block -> per-category occupancy probabilities."""

    def __init__(self, cfg: ArchConfig, rng: np.random.Generator, dtype=np.float64):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.params = ParamSet()
        cin = cfg.latent_shape[3]
        for i, width in enumerate(cfg.generator_stage_widths()):
            _add_deconv3d(self.params, rng, f"deconv{i}", cin, width, self.dtype)
            cin = width

    def forward(self, latent: Tensor) -> Tensor:
        if latent.shape != self.cfg.latent_shape:
            raise ShapeError(
                f"latent has shape {latent.shape}, config says {self.cfg.latent_shape}"
            )
        x = latent
        n = len(self.cfg.generator_stage_widths())
        for i in range(n):
            x = add(deconv3d(x, self.params[f"deconv{i}.kernel"]), self.params[f"deconv{i}.bias"])
            x = sigmoid(x) if i == n - 1 else relu(x)
        return x


def _dense_head(params: ParamSet, rng, widths, n_in: int, dtype) -> None:
    for i, width in enumerate(widths):
        _add_dense(params, rng, f"dense{i}", n_in, width, dtype)
        n_in = width
    _add_dense(params, rng, "score", n_in, 1, dtype)


def _run_dense_head(params: ParamSet, x: Tensor, widths, slope: float) -> Tensor:
    for i in range(len(widths)):
        x = leaky_relu(dense(x, params[f"dense{i}.weights"], params[f"dense{i}.bias"]), slope)
    x = dense(x, params["score.weights"], params["score.bias"])
    return reshape(sigmoid(x), ())


class VolumeDiscriminator:
    """Scores a semantic volume as drawn-from-data versus generated."""

    def __init__(self, cfg: ArchConfig, rng: np.random.Generator, dtype=np.float64):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.params = ParamSet()
        widths = cfg.volume_disc_widths()
        cin = cfg.num_categories
        for i, width in enumerate(widths):
            _add_conv3d(self.params, rng, f"conv{i}", cin, width, self.dtype)
            cin = width
        spatial = list(cfg.volume_shape)
        for _ in widths:
            spatial = [-(-s // 2) for s in spatial]
        flat = spatial[0] * spatial[1] * spatial[2] * widths[-1]
        _dense_head(self.params, rng, cfg.dense_widths, flat, self.dtype)

    def forward(self, volume: Tensor | Array) -> Tensor:
        x = volume if isinstance(volume, Tensor) else Tensor(np.asarray(volume, self.dtype))
        expected = (*self.cfg.volume_shape, self.cfg.num_categories)
        if x.shape != expected:
            raise ShapeError(f"volume has shape {x.shape}, config says {expected}")
        for i in range(len(self.cfg.volume_disc_widths())):
            x = add(conv3d(x, self.params[f"conv{i}.kernel"]), self.params[f"conv{i}.bias"])
            x = leaky_relu(x, self.cfg.leaky_slope)
        return _run_dense_head(self.params, flatten(x), self.cfg.dense_widths, self.cfg.leaky_slope)


class LatentDiscriminator:
    """Scores a latent block as encoded-from-volume versus from-depth."""

    def __init__(self, cfg: ArchConfig, rng: np.random.Generator, dtype=np.float64):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.params = ParamSet()
        _dense_head(self.params, rng, cfg.dense_widths, cfg.latent_size, self.dtype)

    def forward(self, latent: Tensor | Array) -> Tensor:
        x = latent if isinstance(latent, Tensor) else Tensor(np.asarray(latent, self.dtype))
        if x.shape != self.cfg.latent_shape:
            raise ShapeError(f"latent has shape {x.shape}, config says {self.cfg.latent_shape}")
        return _run_dense_head(self.params, flatten(x), self.cfg.dense_widths, self.cfg.leaky_slope)


@dataclass
class ModelSet:
    """All five networks built against one ArchConfig."""

    cfg: ArchConfig
    depth_encoder: DepthEncoder
    volume_encoder: VolumeEncoder
    generator: Generator
    volume_disc: VolumeDiscriminator
    latent_disc: LatentDiscriminator

    def named(self) -> dict[str, ParamSet]:
        return {
            "depth_encoder": self.depth_encoder.params,
            "volume_encoder": self.volume_encoder.params,
            "generator": self.generator.params,
            "volume_disc": self.volume_disc.params,
            "latent_disc": self.latent_disc.params,
        }

    def snapshot(self) -> dict[str, dict[str, Array]]:
        return {name: ps.snapshot() for name, ps in self.named().items()}


def build_models(cfg: ArchConfig, seed, dtype=np.float64) -> ModelSet:
    """Construct all five networks with independent per-network seeds."""
    validate_config(cfg)
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rngs = [np.random.default_rng(child) for child in seq.spawn(5)]
    return ModelSet(
        cfg=cfg,
        depth_encoder=DepthEncoder(cfg, rngs[0], dtype),
        volume_encoder=VolumeEncoder(cfg, rngs[1], dtype),
        generator=Generator(cfg, rngs[2], dtype),
        volume_disc=VolumeDiscriminator(cfg, rngs[3], dtype),
        latent_disc=LatentDiscriminator(cfg, rngs[4], dtype),
    )
