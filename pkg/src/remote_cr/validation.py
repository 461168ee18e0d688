"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

__all__ = ["check_times", "check_trajectories", "check_depths"]


def check_times(times) -> np.ndarray:
    """1-D finite, non-negative, strictly increasing sample times."""
    t = check_array(np.asarray(times, dtype=float).reshape(-1, 1), ensure_min_samples=2).ravel()
    if np.any(t < 0):
        raise ValueError("times must be non-negative")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    return t


def check_trajectories(traj, n_times: int) -> np.ndarray:
    """Bloch trajectories of shape ``(n_times, 2, 3)`` with entries in [-1, 1] (small slack)."""
    y = np.asarray(traj, dtype=float)
    if y.shape != (n_times, 2, 3):
        raise ValueError(f"trajectories must have shape ({n_times}, 2, 3), got {y.shape}")
    check_array(y.reshape(n_times, -1))
    if np.any(np.abs(y) > 1.5):
        raise ValueError("Bloch components must lie in [-1, 1]")
    return y


def check_depths(depths) -> np.ndarray:
    d = check_array(np.asarray(depths, dtype=float).reshape(-1, 1), ensure_min_samples=2).ravel()
    if np.any(d < 0) or np.any(d != np.round(d)):
        raise ValueError("depths must be non-negative integers")
    if len(np.unique(d)) < 2:
        raise ValueError("need at least two distinct depths")
    return d
