"""Input validation helpers, in the spirit of sklearn's check_array utilities."""

import numpy as np
from sklearn.utils.validation import check_array


def check_points(X, name="X", allow_empty=False):
    """Validate and return an (n, 3) float64 array of points."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True,
                    ensure_min_samples=0 if allow_empty else 1)
    if X.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {X.shape}")
    return X


def check_vector3(v, name="v"):
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {np.shape(v)}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    return v


def check_unit(v, name="v", tol=1e-6):
    v = check_vector3(v, name)
    n = np.linalg.norm(v)
    if abs(n - 1.0) > tol:
        raise ValueError(f"{name} must be unit length, got norm {n!r}")
    return v


def check_quaternions(q, tol=1e-6, name="rotations", allow_empty=False):
    """Validate an (n, 4) array of unit quaternions (w, x, y, z)."""
    q = check_array(q, dtype=np.float64, ensure_2d=True, ensure_all_finite=True,
                    ensure_min_samples=0 if allow_empty else 1)
    if q.shape[1] != 4:
        raise ValueError(f"{name} must have shape (n, 4), got {q.shape}")
    norms = np.linalg.norm(q, axis=1)
    bad = np.abs(norms - 1.0) > tol
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValueError(f"{name}[{i}] is not unit norm (|q| = {norms[i]!r})")
    return q


def check_positive(x, name="value"):
    x = float(x)
    if not np.isfinite(x) or x <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {x!r}")
    return x


def check_nonnegative(x, name="value"):
    x = float(x)
    if not np.isfinite(x) or x < 0:
        raise ValueError(f"{name} must be a non-negative finite number, got {x!r}")
    return x
