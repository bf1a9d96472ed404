"""Alternating optimization over the five networks.

Each step walks six stages in a fixed order, re-running forward passes
so every stage sees the parameters its predecessors just moved:

    reconstruction    depth encoder + generator on the voxel error
    vae               volume encoder + generator on error plus prior
    latent_alignment  depth encoder pushed toward latents the latent
                      discriminator accepts (discriminator frozen)
    volume_realism    depth encoder + generator pushed toward volumes
                      the volume discriminator accepts (frozen)
    volume_disc       volume discriminator on real versus generated
                      volumes, detached, gated on its own accuracy
    latent_disc       latent discriminator on encoded-from-volume
                      versus encoded-from-depth latents, gated

A discriminator only updates while it is doing badly enough; once its
batch error drops below the gate threshold it sits still and the
generator side keeps training against it.

Stage weights of zero drop the stage entirely (the paired discriminator
stage too), and skipped stages log NaN.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os

import numpy as np

from .checkpoint import save_checkpoint
from .config import ArchConfig, HyperParams, config_to_text
from .errors import ConfigError, NumericError, ShapeError
from .losses import (
    adversarial_discriminator_loss,
    adversarial_generator_loss,
    reconstruction_loss,
    vae_loss,
)
from .networks import ModelSet, build_models
from .optim import Adam
from .tensor import Tensor, add, backward, mul
from .transforms import one_hot

STAGES = (
    "reconstruction",
    "vae",
    "latent_alignment",
    "volume_realism",
    "volume_disc",
    "latent_disc",
)

_EMA_DECAY = 0.9


@dataclasses.dataclass
class StepRecord:
    """Everything one optimization step logged; NaN marks skipped stages."""

    step: int
    reconstruction: float
    vae: float
    latent_alignment: float
    volume_realism: float
    volume_disc: float
    latent_disc: float
    volume_disc_accuracy: float
    latent_disc_accuracy: float
    volume_disc_updated: bool
    latent_disc_updated: bool
    volume_disc_accuracy_ema: float
    latent_disc_accuracy_ema: float

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


def disc_gate(accuracy: float, threshold: float, on: str = "error") -> bool:
    """Should the discriminator take a step given this batch accuracy?

    A threshold of one or more always updates. Otherwise "error" mode
    updates while the misclassification rate still exceeds the
    threshold, "accuracy" mode while accuracy is below it.
    """
    if threshold >= 1.0:
        return True
    if on == "error":
        return (1.0 - accuracy) > threshold
    if on == "accuracy":
        return accuracy < threshold
    raise ConfigError(f"gate mode must be 'error' or 'accuracy', got {on!r}")


def prepare_samples(dataset, cfg: ArchConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """Check every pair against the architecture and one-hot the volumes."""
    samples = []
    for i, (depth, volume) in enumerate(dataset):
        if depth.shape != cfg.image_shape:
            raise ShapeError(
                f"sample {i}: depth image is {depth.shape}, config says {cfg.image_shape}"
            )
        if volume.extents != cfg.volume_shape:
            raise ShapeError(
                f"sample {i}: volume is {volume.extents}, config says {cfg.volume_shape}"
            )
        if volume.num_categories != cfg.num_categories:
            raise ShapeError(
                f"sample {i}: volume has {volume.num_categories} categories, "
                f"config says {cfg.num_categories}"
            )
        samples.append((depth.values.astype(np.float64), one_hot(volume.labels, cfg.num_categories)))
    return samples


class _PermutationSampler:
    """Hands out dataset indices in shuffled epochs."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.n = n
        self.rng = rng
        self.queue: list[int] = []

    def take(self, count: int) -> list[int]:
        out = []
        while len(out) < count:
            if not self.queue:
                self.queue = self.rng.permutation(self.n).tolist()
            out.append(self.queue.pop(0))
        return out


class TrainState:
    """Models, their optimizers, and the RNG streams of one run."""

    def __init__(self, cfg: ArchConfig, hyper: HyperParams, models: ModelSet,
                 batch_rng: np.random.Generator, noise_rng: np.random.Generator):
        self.cfg = cfg
        self.hyper = hyper
        self.models = models
        self.batch_rng = batch_rng
        self.noise_rng = noise_rng
        self.step = 0
        self.volume_disc_acc_ema = math.nan
        self.latent_disc_acc_ema = math.nan
        self.optimizers = {
            name: Adam(
                params,
                lr=hyper.learning_rate,
                beta1=hyper.adam_beta1,
                beta2=hyper.adam_beta2,
                eps=hyper.adam_eps,
            )
            for name, params in models.named().items()
        }

    @classmethod
    def create(cls, cfg: ArchConfig, hyper: HyperParams) -> "TrainState":
        hyper.validate()
        seq = np.random.SeedSequence(hyper.seed)
        model_seq, batch_seq, noise_seq = seq.spawn(3)
        dtype = np.float64 if hyper.dtype == "float64" else np.float32
        models = build_models(cfg, model_seq, dtype=dtype)
        return cls(cfg, hyper, models,
                   np.random.default_rng(batch_seq), np.random.default_rng(noise_seq))


def _batch_mean(per_sample: list[Tensor]) -> Tensor:
    total = per_sample[0]
    for term in per_sample[1:]:
        total = add(total, term)
    return mul(total, 1.0 / len(per_sample))


def _all_params(models: ModelSet):
    return [t for ps in models.named().values() for _, t in ps.items()]


def _finite_or_raise(loss: Tensor, stage: str, step: int) -> None:
    if not np.isfinite(loss.data).all():
        raise NumericError(f"{stage} loss is not finite at step {step}")


def _optimize(state: TrainState, loss: Tensor, nets: tuple[str, ...], stage: str) -> float:
    _finite_or_raise(loss, stage, state.step)
    for ps in state.models.named().values():
        ps.zero_grads()
    backward(loss, leaves=_all_params(state.models))
    for name in nets:
        state.optimizers[name].step()
    return float(loss.data)


def _accuracy(real_scores: list[float], fake_scores: list[float]) -> float:
    correct = sum(1 for p in real_scores if p > 0.5)
    correct += sum(1 for p in fake_scores if p <= 0.5)
    return correct / (len(real_scores) + len(fake_scores))


def train_step(state: TrainState, batch, stages=STAGES) -> StepRecord:
    """Run the requested stages on one batch of (depth, one-hot) pairs."""
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise ConfigError(f"unknown training stages {sorted(unknown)}")
    if not batch:
        raise ShapeError("training batch is empty")
    cfg, hyper, models = state.cfg, state.hyper, state.models
    losses = {name: math.nan for name in STAGES}
    vol_acc = math.nan
    lat_acc = math.nan
    vol_updated = False
    lat_updated = False

    if "reconstruction" in stages:
        terms = []
        for depth, onehot in batch:
            prob = models.generator.forward(models.depth_encoder.forward(depth))
            terms.append(reconstruction_loss(prob, onehot, hyper.positive_weight, hyper.reduction))
        losses["reconstruction"] = _optimize(
            state, _batch_mean(terms), ("depth_encoder", "generator"), "reconstruction"
        )

    if "vae" in stages and hyper.vae_weight != 0.0:
        terms = []
        for _, onehot in batch:
            latent = models.volume_encoder.forward(onehot)
            z = latent.sample(noise=state.noise_rng.standard_normal(cfg.latent_shape))
            prob = models.generator.forward(z)
            terms.append(vae_loss(prob, onehot, latent, hyper.positive_weight,
                                  hyper.kl_weight, hyper.reduction))
        loss = mul(_batch_mean(terms), hyper.vae_weight)
        losses["vae"] = _optimize(state, loss, ("volume_encoder", "generator"), "vae")

    if "latent_alignment" in stages and hyper.adversarial_latent_weight != 0.0:
        terms = []
        for depth, _ in batch:
            score = models.latent_disc.forward(models.depth_encoder.forward(depth))
            terms.append(adversarial_generator_loss(score))
        loss = mul(_batch_mean(terms), hyper.adversarial_latent_weight)
        losses["latent_alignment"] = _optimize(
            state, loss, ("depth_encoder",), "latent_alignment"
        )

    if "volume_realism" in stages and hyper.adversarial_volume_weight != 0.0:
        terms = []
        for depth, _ in batch:
            prob = models.generator.forward(models.depth_encoder.forward(depth))
            terms.append(adversarial_generator_loss(models.volume_disc.forward(prob)))
        loss = mul(_batch_mean(terms), hyper.adversarial_volume_weight)
        losses["volume_realism"] = _optimize(
            state, loss, ("depth_encoder", "generator"), "volume_realism"
        )

    if "volume_disc" in stages and hyper.adversarial_volume_weight != 0.0:
        terms = []
        real_ps: list[float] = []
        fake_ps: list[float] = []
        for depth, onehot in batch:
            fake = models.generator.forward(models.depth_encoder.forward(depth)).data
            real_score = models.volume_disc.forward(onehot)
            fake_score = models.volume_disc.forward(Tensor(fake))
            real_ps.append(float(real_score.data))
            fake_ps.append(float(fake_score.data))
            terms.append(adversarial_discriminator_loss(real_score, fake_score))
        vol_acc = _accuracy(real_ps, fake_ps)
        loss = _batch_mean(terms)
        _finite_or_raise(loss, "volume_disc", state.step)
        losses["volume_disc"] = float(loss.data)
        vol_updated = disc_gate(vol_acc, hyper.gate_threshold, hyper.gate_on)
        if vol_updated:
            _optimize(state, loss, ("volume_disc",), "volume_disc")

    if "latent_disc" in stages and hyper.adversarial_latent_weight != 0.0:
        terms = []
        real_ps = []
        fake_ps = []
        for depth, onehot in batch:
            latent = models.volume_encoder.forward(onehot)
            real = latent.sample(noise=state.noise_rng.standard_normal(cfg.latent_shape)).data
            fake = models.depth_encoder.forward(depth).data
            real_score = models.latent_disc.forward(Tensor(real))
            fake_score = models.latent_disc.forward(Tensor(fake))
            real_ps.append(float(real_score.data))
            fake_ps.append(float(fake_score.data))
            terms.append(adversarial_discriminator_loss(real_score, fake_score))
        lat_acc = _accuracy(real_ps, fake_ps)
        loss = _batch_mean(terms)
        _finite_or_raise(loss, "latent_disc", state.step)
        losses["latent_disc"] = float(loss.data)
        lat_updated = disc_gate(lat_acc, hyper.gate_threshold, hyper.gate_on)
        if lat_updated:
            _optimize(state, loss, ("latent_disc",), "latent_disc")

    if not math.isnan(vol_acc):
        prev = state.volume_disc_acc_ema
        state.volume_disc_acc_ema = (
            vol_acc if math.isnan(prev) else _EMA_DECAY * prev + (1 - _EMA_DECAY) * vol_acc
        )
    if not math.isnan(lat_acc):
        prev = state.latent_disc_acc_ema
        state.latent_disc_acc_ema = (
            lat_acc if math.isnan(prev) else _EMA_DECAY * prev + (1 - _EMA_DECAY) * lat_acc
        )

    state.step += 1
    return StepRecord(
        step=state.step,
        reconstruction=losses["reconstruction"],
        vae=losses["vae"],
        latent_alignment=losses["latent_alignment"],
        volume_realism=losses["volume_realism"],
        volume_disc=losses["volume_disc"],
        latent_disc=losses["latent_disc"],
        volume_disc_accuracy=vol_acc,
        latent_disc_accuracy=lat_acc,
        volume_disc_updated=vol_updated,
        latent_disc_updated=lat_updated,
        volume_disc_accuracy_ema=state.volume_disc_acc_ema,
        latent_disc_accuracy_ema=state.latent_disc_acc_ema,
    )


def train(state: TrainState, samples, steps: int | None = None, stages=STAGES,
          log=None) -> list[StepRecord]:
    """Drive train_step for ``steps`` batches drawn in shuffled epochs."""
    if steps is None:
        steps = state.hyper.steps
    if not samples:
        raise ShapeError("cannot train on an empty sample list")
    sampler = _PermutationSampler(len(samples), state.batch_rng)
    records = []
    for _ in range(steps):
        batch = [samples[i] for i in sampler.take(state.hyper.batch_size)]
        record = train_step(state, batch, stages)
        records.append(record)
        if log is not None:
            log.write(record.to_json() + "\n")
    return records


def run_training(dataset, cfg: ArchConfig, hyper: HyperParams, out_dir,
                 stages=STAGES) -> tuple[TrainState, list[StepRecord]]:
    """Full run against a dataset: config dump, JSONL log, checkpoint."""
    os.makedirs(out_dir, exist_ok=True)
    state = TrainState.create(cfg, hyper)
    samples = prepare_samples(dataset, cfg)
    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        fh.write(config_to_text(cfg, prefix="arch."))
        fh.write(config_to_text(hyper, prefix="hyper."))
    with open(os.path.join(out_dir, "losses.jsonl"), "w") as fh:
        records = train(state, samples, stages=stages, log=fh)
    save_checkpoint(os.path.join(out_dir, "model.vsck"), state.models, hyper)
    return state, records
