"""Shared helpers: reproducible RNG substreams and input validation."""

import numpy as np

# Stream ids for the splittable seeding scheme.  Every module derives its
# generators as substream(root_seed, STREAM_X, *cell_ids), so per-cell
# randomness is reproducible independently of execution order.
STREAM_DATA = 0
STREAM_INIT = 1
STREAM_SPECTRAL = 2
STREAM_THETA = 3


def substream(root_seed, *key):
    """Return a Generator for the (root_seed, key) counter substream.

    Identical (root_seed, key) pairs always yield identical streams; distinct
    keys yield statistically independent streams.
    """
    return np.random.default_rng(np.random.SeedSequence(int(root_seed), spawn_key=tuple(int(k) for k in key)))


def random_unit_columns(rng, d, m):
    """Draw m unit vectors uniformly on the sphere, as columns of a (d, m) array.

    Rows are drawn contiguously so the first m' columns coincide, for the
    same rng state, with a request for m' < m columns (prefix stability).
    """
    M = rng.standard_normal((m, d)).T
    return M / np.linalg.norm(M, axis=0, keepdims=True)


def as_vector(x, d, name="vector"):
    v = np.asarray(x, dtype=float)
    if v.ndim != 1 or v.shape[0] != d:
        raise ValueError(f"{name} must be a 1-d array of length {d}, got shape {v.shape}")
    return v


def check_unit(v, name="vector", tol=1e-8):
    nrm = np.linalg.norm(v)
    if abs(nrm - 1.0) > tol:
        raise ValueError(f"{name} must have unit norm, got {nrm!r}")
    return v


def check_finite(a, name="array"):
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def column_batch(x, d, name="vector"):
    """Coerce a vector or a (d, m) batch of column vectors to 2-d form.

    Returns (array, was_single) where was_single marks a 1-d input.
    """
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        if a.shape[0] != d:
            raise ValueError(f"{name} must have length {d}, got {a.shape[0]}")
        return a[:, None], True
    if a.ndim == 2:
        if a.shape[0] != d:
            raise ValueError(f"{name} must have {d} rows, got shape {a.shape}")
        return a, False
    raise ValueError(f"{name} must be 1-d or 2-d, got shape {a.shape}")
