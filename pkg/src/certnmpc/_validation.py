"""Small input-validation helpers used at public entry points."""

import numpy as np


def as_vector(value, name, size=None):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise ValueError(f"{name} must have length {size}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_matrix(value, name, shape=None):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"{name} must have shape {tuple(shape)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_trajectory(value, name, length, width):
    """Coerce to a ``(length, width)`` array; a single vector is broadcast."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 1:
        if arr.shape[0] != width:
            raise ValueError(f"{name} must have {width} columns, got {arr.shape[0]}")
        arr = np.broadcast_to(arr, (length, width)).copy()
    if arr.shape != (length, width):
        raise ValueError(f"{name} must have shape {(length, width)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_spd(mat, name, strict=True):
    """Raise unless ``mat`` is symmetric and positive (semi)definite."""
    if mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(mat, mat.T, rtol=1e-12, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    eig_min = np.linalg.eigvalsh(mat).min()
    if eig_min <= 0 if strict else eig_min < 0:
        kind = "positive definite" if strict else "positive semidefinite"
        raise ValueError(f"{name} must be {kind} (min eigenvalue {eig_min:.3g})")
    return mat
