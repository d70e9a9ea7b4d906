"""Input validation helpers shared across the package."""

import numpy as np


def check_series(frames, n_channels=None, name="series"):
    """Coerce one time series to a float64 array of shape (n_frames, n_channels).

    1-D input is treated as single-channel. Raises ValueError on empty,
    non-finite, or channel-mismatched input.
    """
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D (frames x channels) array, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name}: needs at least one frame and one channel, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains non-finite values")
    if n_channels is not None and arr.shape[1] != n_channels:
        raise ValueError(
            f"{name}: has {arr.shape[1]} channels, expected {n_channels}"
        )
    return arr


def check_series_list(series, n_channels=None):
    """Validate a sequence of series; all must share one channel count."""
    out = []
    for i, s in enumerate(series):
        arr = check_series(s, n_channels=n_channels, name=f"series[{i}]")
        if n_channels is None:
            n_channels = arr.shape[1]
        out.append(arr)
    return out


def check_square(M, name="matrix"):
    arr = np.asarray(M, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name}: expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains non-finite values")
    return arr


def check_gram(K, name="gram"):
    """Accept a GramMatrix-like object or a raw square array; return the array."""
    values = getattr(K, "values", K)
    return check_square(values, name=name)


def check_vector(v, length=None, name="vector"):
    arr = np.asarray(v, dtype=np.float64).ravel()
    if length is not None and arr.shape[0] != length:
        raise ValueError(f"{name}: expected length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains non-finite values")
    return arr


def check_labels(labels, n_samples=None):
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ValueError(f"labels: expected 1-D, got shape {arr.shape}")
    if n_samples is not None and arr.shape[0] != n_samples:
        raise ValueError(f"labels: expected {n_samples} entries, got {arr.shape[0]}")
    return arr
