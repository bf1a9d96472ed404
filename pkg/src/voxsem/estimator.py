"""Scikit-learn style front door: fit on (depth, volume) pairs, predict
label volumes from depth alone."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .config import HyperParams, resolve_preset
from .metrics import argmax_labels, evaluate
from .trainer import STAGES, TrainState, prepare_samples, train
from .validation import as_depth_images, as_volumes
from .vsem import Dataset


class SceneCompleter(BaseEstimator):
    """Depth image in, semantic voxel volume out.

    X is a (n, horizontal, vertical) float array (NaN = missing) or a
    list of DepthImage; y is a (n, x, y, z) integer label array or a
    list of SemanticVolume. ``preset`` picks the architecture scale
    ("micro", "tiny", "desk", "full"), or pass an ArchConfig directly.
    """

    def __init__(
        self,
        preset="desk",
        learning_rate: float = 1e-4,
        steps: int = 200,
        batch_size: int = 4,
        positive_weight: float = 0.85,
        kl_weight: float = 1.0,
        vae_weight: float = 1.0,
        adversarial_volume_weight: float = 1.0,
        adversarial_latent_weight: float = 1.0,
        gate_threshold: float = 0.15,
        gate_on: str = "error",
        seed: int = 0,
        stages=None,
    ):
        self.preset = preset
        self.learning_rate = learning_rate
        self.steps = steps
        self.batch_size = batch_size
        self.positive_weight = positive_weight
        self.kl_weight = kl_weight
        self.vae_weight = vae_weight
        self.adversarial_volume_weight = adversarial_volume_weight
        self.adversarial_latent_weight = adversarial_latent_weight
        self.gate_threshold = gate_threshold
        self.gate_on = gate_on
        self.seed = seed
        self.stages = stages

    def _hyper(self) -> HyperParams:
        return HyperParams(
            positive_weight=self.positive_weight,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            kl_weight=self.kl_weight,
            gate_threshold=self.gate_threshold,
            gate_on=self.gate_on,
            steps=self.steps,
            seed=self.seed,
            vae_weight=self.vae_weight,
            adversarial_volume_weight=self.adversarial_volume_weight,
            adversarial_latent_weight=self.adversarial_latent_weight,
        )

    def fit(self, X, y):
        arch = resolve_preset(self.preset)
        depths = as_depth_images(X, arch.image_shape)
        volumes = as_volumes(y, arch.volume_shape, arch.num_categories)
        if len(depths) != len(volumes):
            raise ValueError(f"X has {len(depths)} samples, y has {len(volumes)}")
        dataset = Dataset(list(zip(depths, volumes)))
        state = TrainState.create(arch, self._hyper())
        samples = prepare_samples(dataset, arch)
        stages = tuple(self.stages) if self.stages is not None else STAGES
        records = train(state, samples, stages=stages)
        self.arch_ = arch
        self.models_ = state.models
        self.history_ = records
        self.category_names_ = volumes[0].names
        self.n_features_in_ = int(np.prod(arch.image_shape))
        return self

    def _require_fitted(self) -> None:
        if not hasattr(self, "models_"):
            raise NotFittedError(
                "this SceneCompleter is not fitted yet; call fit(X, y) first"
            )

    def predict_proba(self, X) -> np.ndarray:
        """Per-voxel category probabilities, (n, x, y, z, categories)."""
        self._require_fitted()
        depths = as_depth_images(X, self.arch_.image_shape)
        out = []
        for img in depths:
            latent = self.models_.depth_encoder.forward(img.values.astype(np.float64))
            out.append(self.models_.generator.forward(latent).data)
        return np.stack(out)

    def predict(self, X) -> np.ndarray:
        """Most probable category per voxel, (n, x, y, z) uint8."""
        prob = self.predict_proba(X)
        return np.stack([argmax_labels(p).labels for p in prob])

    def score(self, X, y) -> float:
        """Voxel-count-weighted mean IoU against ground truth."""
        self._require_fitted()
        volumes = as_volumes(y, self.arch_.volume_shape, self.arch_.num_categories)
        prob = self.predict_proba(X)
        if len(volumes) != prob.shape[0]:
            raise ValueError(f"X has {prob.shape[0]} samples, y has {len(volumes)}")
        report = evaluate(zip(prob, volumes), self.arch_.num_categories,
                          self.category_names_)
        return report.mean_iou
