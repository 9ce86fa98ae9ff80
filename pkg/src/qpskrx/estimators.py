"""Estimator-style wrappers around the receiver models.

Inputs ``X`` are photon numbers ``|alpha|^2``, as a 1-D array or a single
column.  ``fit`` resolves the receiver parameters for the training grid,
``transform`` returns the parameter table ``[t2, beta, gamma2, phi]`` and
``predict`` returns average symbol error rates.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .analytic import Receiver, heterodyne_error, helstrom_asymptotic, helstrom_qpsk, hybrid_error
from .optimizer import OptimizerSettings

__all__ = ["check_alpha2", "HybridReceiver", "HeterodyneReceiver", "HelstromBound"]


def check_alpha2(X) -> np.ndarray:
    """Validate photon numbers and return them as a flat float array."""
    arr = check_array(X, ensure_2d=False, dtype=float)
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise ValueError(f"expected a single column of photon numbers, got shape {arr.shape}")
        arr = arr[:, 0]
    if np.any(arr < 0):
        raise ValueError("photon numbers must be non-negative")
    return arr


class _ReceiverBase(BaseEstimator):
    def fit(self, X, y=None):
        self.alpha2_ = check_alpha2(X)
        self.n_features_in_ = 1
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "alpha2_")
        return np.array([self._error(math.sqrt(a2)) for a2 in check_alpha2(X)])

    def score(self, X, y=None) -> float:
        """Negative mean error rate over ``X`` (larger is better)."""
        return -float(np.mean(self.predict(X)))


class HybridReceiver(_ReceiverBase):
    """Homodyne plus photon-counting receiver (``HD-K`` or ``HD-OD``).

    ``split`` is a fixed transmittance ``t^2`` or ``"optimize"`` for the
    per-amplitude optimum.  A non-zero ``dark_prob`` enters the predicted
    error but not the parameter choice.
    """

    def __init__(self, receiver="HD-OD", split="optimize", dark_prob=0.0, settings=None):
        self.receiver = receiver
        self.split = split
        self.dark_prob = dark_prob
        self.settings = settings

    def _validate(self):
        rx = Receiver(self.receiver)
        if rx not in (Receiver.HD_K, Receiver.HD_OD):
            raise ValueError(f"HybridReceiver needs HD-K or HD-OD, got {self.receiver!r}")
        if not 0 <= self.dark_prob <= 1:
            raise ValueError("dark_prob must lie in [0, 1]")
        if self.settings is not None and not isinstance(self.settings, OptimizerSettings):
            raise TypeError("settings must be an OptimizerSettings")
        return rx

    def _params(self, alpha2):
        from .sweeps import receiver_setup

        split, setting, beta = receiver_setup(math.sqrt(alpha2), self._validate(), self.split, self.settings)
        return split, setting, beta

    def fit(self, X, y=None):
        super().fit(X)
        table = self._table(self.alpha2_)
        self.t2_, self.beta_, self.gamma2_, self.phi_ = table.T
        return self

    def _table(self, alpha2):
        rows = []
        for a2 in alpha2:
            split, setting, beta = self._params(a2)
            rows.append((split.t2, beta, setting.gamma2, setting.phi))
        return np.array(rows, dtype=float).reshape(-1, 4)

    def transform(self, X) -> np.ndarray:
        """Receiver parameters ``[t2, beta, gamma2, phi]`` per photon number."""
        check_is_fitted(self, "alpha2_")
        return self._table(check_alpha2(X))

    def _error(self, alpha):
        split, setting, _ = self._params(alpha * alpha)
        return hybrid_error(alpha, split, setting, self.dark_prob)


class HeterodyneReceiver(_ReceiverBase):
    """Ideal dual-homodyne receiver with quadrant decisions."""

    def _error(self, alpha):
        return float(heterodyne_error(alpha))


class HelstromBound(_ReceiverBase):
    """Minimum error over all measurements; ``asymptotic=True`` uses the large-amplitude form."""

    def __init__(self, asymptotic=False):
        self.asymptotic = asymptotic

    def _error(self, alpha):
        return float(helstrom_asymptotic(alpha) if self.asymptotic else helstrom_qpsk(alpha))
