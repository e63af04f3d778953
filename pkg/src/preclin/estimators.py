"""Scikit-learn style wrappers around the three volume classifiers.

Each estimator takes raw volumes as a (n, depth, height, width) array,
handles preprocessing, optional training-split rebalancing, balanced
batching, and best-validation-F1 checkpoint selection internally, and
exposes the usual fit / predict / predict_proba surface.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin

from ._validation import check_binary_labels, check_is_fitted, check_volume_array
from .dataset import apply_augment, rebalance_indices
from .models.rvn import Trajectory
from .optim import OptimizerSpec
from .training import (TrainConfig, build_model, encode_volume,
                       model_config_from_dict, predict_probs, train_model)
from .volume_io import VoxelVolume


class _VolumeClassifier(BaseEstimator, ClassifierMixin):
    """Shared fit/predict machinery; subclasses define the model kind."""

    _kind = ""

    def _model_config(self):
        raise NotImplementedError

    def _encode(self, X: np.ndarray) -> torch.Tensor:
        config = self.config_
        return torch.stack([
            encode_volume(self._kind, config, VoxelVolume(voxels=v))
            for v in X])

    def fit(self, X, y, eval_set=None):
        """Train on volumes X with 0/1 labels y.

        eval_set, an optional (X_val, y_val) pair, drives best-epoch
        selection; without it the training set itself is scored.
        """
        X = check_volume_array(X)
        y = check_binary_labels(y, X.shape[0])
        self.config_ = self._model_config()
        self.classes_ = np.array([0, 1])

        if self.rebalance_train:
            pairs = rebalance_indices(y, target_ratio=1.0, seed=self.seed)
            volumes = [X[i] if op is None else apply_augment(X[i], op)
                       for i, op in pairs]
            y_fit = np.array([y[i] for i, _ in pairs], dtype=np.int64)
        else:
            volumes, y_fit = list(X), y
        x_fit = torch.stack([
            encode_volume(self._kind, self.config_, VoxelVolume(voxels=v))
            for v in volumes])

        if eval_set is not None:
            x_val = check_volume_array(eval_set[0], name="eval_set[0]")
            y_val = check_binary_labels(eval_set[1], x_val.shape[0])
            x_val = self._encode(x_val)
        else:
            x_val, y_val = x_fit, y_fit

        config = TrainConfig(model=self._kind, epochs=self.epochs,
                             batch_size=self.batch_size, seed=self.seed,
                             optimizer=self.optimizer)
        model = build_model(self._kind, self.config_, seed=self.seed)
        result = train_model(self._kind, model, x_fit, y_fit,
                             x_val, y_val, config)
        self.model_ = result.model
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self)
        X = check_volume_array(X)
        p1 = predict_probs(self._kind, self.model_, self._encode(X),
                           self.batch_size)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[(proba[:, 1] >= 0.5).astype(int)]

    def score(self, X, y) -> float:
        y = check_binary_labels(y, np.asarray(X).shape[0])
        return float(np.mean(self.predict(X) == y))


class Cnn3dVolumeClassifier(_VolumeClassifier):
    """Five conv blocks + three fc layers on trilinearly resized volumes."""

    _kind = "cnn3d"

    def __init__(self, input_shape=(32, 32, 32), channels=(8, 16, 32, 64, 64),
                 kernel_size=3, pool=2, dropout=0.3, fc_sizes=(256, 64, 1),
                 epochs=10, batch_size=8, optimizer=None,
                 rebalance_train=True, seed=0):
        self.input_shape = input_shape
        self.channels = channels
        self.kernel_size = kernel_size
        self.pool = pool
        self.dropout = dropout
        self.fc_sizes = fc_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.rebalance_train = rebalance_train
        self.seed = seed

    def _model_config(self):
        return model_config_from_dict("cnn3d", {
            "input_shape": self.input_shape, "channels": self.channels,
            "kernel_size": self.kernel_size, "pool": self.pool,
            "dropout": self.dropout, "fc_sizes": self.fc_sizes})


class GlimpseAgentClassifier(_VolumeClassifier):
    """Recurrent attention agent; volumes are standardized, never resized."""

    _kind = "rvn"

    def __init__(self, glimpse_side=24, glimpse_channels=(8, 16),
                 glimpse_dim=128, hidden_size=256, n_glimpses=6,
                 location_sigma=0.2, epochs=10, batch_size=8, optimizer=None,
                 rebalance_train=True, seed=0):
        self.glimpse_side = glimpse_side
        self.glimpse_channels = glimpse_channels
        self.glimpse_dim = glimpse_dim
        self.hidden_size = hidden_size
        self.n_glimpses = n_glimpses
        self.location_sigma = location_sigma
        self.epochs = epochs
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.rebalance_train = rebalance_train
        self.seed = seed

    def _model_config(self):
        return model_config_from_dict("rvn", {
            "glimpse_side": self.glimpse_side,
            "glimpse_channels": self.glimpse_channels,
            "glimpse_dim": self.glimpse_dim, "hidden_size": self.hidden_size,
            "n_glimpses": self.n_glimpses,
            "location_sigma": self.location_sigma})

    def trajectories(self, X) -> list[Trajectory]:
        """Greedy (deterministic) glimpse paths for each volume."""
        check_is_fitted(self)
        X = check_volume_array(X)
        out = []
        for v in X:
            volume = VoxelVolume(voxels=v)
            encoded = encode_volume(self._kind, self.config_, volume)
            self.model_.eval()
            _, traj = self.model_.run(encoded.squeeze(0).numpy(),
                                      stochastic=False)
            out.append(traj)
        return out


class FrameTransformerClassifier(_VolumeClassifier):
    """Frame-sequence transformer over centered axial slices."""

    _kind = "transformer"

    def __init__(self, n_frames=16, frame_size=32, d_model=64, n_heads=4,
                 ff_width=128, backbone_stages=((8, 8), (16, 16)),
                 backbone_init="scratch", epochs=10, batch_size=8,
                 optimizer=None, rebalance_train=True, seed=0):
        self.n_frames = n_frames
        self.frame_size = frame_size
        self.d_model = d_model
        self.n_heads = n_heads
        self.ff_width = ff_width
        self.backbone_stages = backbone_stages
        self.backbone_init = backbone_init
        self.epochs = epochs
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.rebalance_train = rebalance_train
        self.seed = seed

    def _model_config(self):
        return model_config_from_dict("transformer", {
            "n_frames": self.n_frames, "frame_size": self.frame_size,
            "d_model": self.d_model, "n_heads": self.n_heads,
            "ff_width": self.ff_width,
            "backbone_stages": self.backbone_stages,
            "backbone_init": self.backbone_init})


__all__ = ["Cnn3dVolumeClassifier", "GlimpseAgentClassifier",
           "FrameTransformerClassifier", "OptimizerSpec"]
