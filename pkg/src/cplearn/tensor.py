"""Dense tensor storage, multilinear contractions, and norm estimation.

A :class:`DenseTensor` is an order-3 or order-4 real tensor with equal mode
sizes, viewed as a multilinear form: contracting every mode with a vector
gives a scalar, leaving one mode free gives a vector (a combination of the
fibers of that mode), and leaving two modes free gives a matrix (a
combination of slices).  :class:`CPModel` is a weighted sum of rank-1 outer
products; ``cp_to_dense`` materializes it.

Entries are stored in canonical lexicographic order (last index fastest),
which is numpy's C order; the text serialization below relies on this.
All objects are immutable after construction and safe to share across
workers; operations are pure functions of their inputs.
"""

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .utils import check_finite, column_batch, random_unit_columns, substream, STREAM_SPECTRAL

__all__ = [
    "DenseTensor",
    "CPModel",
    "cp_to_dense",
    "SpectralNormEstimate",
    "spectral_norm_estimate",
    "save_tensor",
    "load_tensor",
]

def _mode_contract3(data, mode, mats):
    """T with two modes contracted against column batches, BLAS-backed.

    mats holds the (d, m) batches for the non-free modes in ascending order.
    """
    d = data.shape[0]
    m = mats[0].shape[1]
    if mode == 0:
        S = (data.reshape(d * d, d) @ mats[1]).reshape(d, d, m)  # over last mode
        return np.einsum("ijm,jm->im", S, mats[0])
    if mode == 1:
        S = (data.reshape(d * d, d) @ mats[1]).reshape(d, d, m)
        return np.einsum("ijm,im->jm", S, mats[0])
    S = (data.reshape(d, d * d).T @ mats[0]).reshape(d, d, m)  # over first mode
    return np.einsum("jlm,jm->lm", S, mats[1])


def _mode_contract4(data, mode, mats):
    d = data.shape[0]
    m = mats[0].shape[1]
    if mode == 3:
        S = (data.reshape(d, d * d * d).T @ mats[0]).reshape(d, d, d, m)  # over mode 0
        S = np.einsum("jklm,jm->klm", S, mats[1])
        return np.einsum("klm,km->lm", S, mats[2])
    S = (data.reshape(d * d * d, d) @ mats[-1]).reshape(d, d, d, m)  # over mode 3
    if mode == 0:
        S = np.einsum("ijkm,km->ijm", S, mats[1])
        return np.einsum("ijm,jm->im", S, mats[0])
    if mode == 1:
        S = np.einsum("ijkm,km->ijm", S, mats[1])
        return np.einsum("ijm,im->jm", S, mats[0])
    S = np.einsum("ijkm,jm->ikm", S, mats[1])
    return np.einsum("ikm,im->km", S, mats[0])


class DenseTensor:
    """Dense order-3 or order-4 tensor with equal mode sizes.

    Parameters
    ----------
    data : ndarray
        3-d or 4-d array with all axes of equal length.
    symmetric : bool
        Hint that entries are invariant under index permutations; verified
        on construction to 1e-12 absolute.
    """

    __slots__ = ("data", "order", "d", "symmetric")

    def __init__(self, data, symmetric=False):
        arr = np.asarray(data, dtype=float)
        if arr.ndim not in (3, 4):
            raise ValueError(f"tensor order must be 3 or 4, got {arr.ndim}")
        if len(set(arr.shape)) != 1:
            raise ValueError(f"all mode sizes must be equal, got {arr.shape}")
        check_finite(arr, "tensor entries")
        if symmetric:
            for perm in permutations(range(arr.ndim)):
                if np.max(np.abs(arr - arr.transpose(perm))) > 1e-12:
                    raise ValueError("symmetric flag set but entries are not permutation invariant")
        self.data = arr
        self.order = arr.ndim
        self.d = arr.shape[0]
        self.symmetric = bool(symmetric)

    @property
    def dims(self):
        return self.data.shape

    # The sample count behind this tensor; dense tensors have none, so
    # sample-size-dependent stopping terms are dropped by callers.
    n = None

    def contract(self, vectors):
        """Multilinear form: contract every mode with a vector.

        Each element of ``vectors`` may be a length-d vector or a (d, m)
        batch of columns; a batch input yields a length-m array.
        """
        mats, singles = self._batch(vectors, self.order)
        fiber = self._mode(0, mats[1:])
        out = (fiber * mats[0]).sum(axis=0)
        return float(out[0]) if singles else out

    def contract_mode(self, mode, vectors):
        """Contract all modes except ``mode``, returning that mode's fiber combination.

        ``vectors`` holds one vector (or (d, m) batch) per remaining mode, in
        ascending mode order.
        """
        if not 0 <= mode < self.order:
            raise ValueError(f"mode must be in [0, {self.order}), got {mode}")
        mats, singles = self._batch(vectors, self.order - 1)
        out = self._mode(mode, mats)
        return out[:, 0] if singles else out

    def _mode(self, mode, mats):
        if self.order == 3:
            return _mode_contract3(self.data, mode, mats)
        return _mode_contract4(self.data, mode, mats)

    def slice_combination(self, theta):
        """Linear combination of slices: T(I, I, theta) or T(I, I, theta, theta)."""
        th = np.asarray(theta, dtype=float)
        if th.shape != (self.d,):
            raise ValueError(f"theta must have length {self.d}, got shape {th.shape}")
        if self.order == 3:
            return np.einsum("ijk,k->ij", self.data, th)
        return np.einsum("ijkl,k,l->ij", self.data, th, th)

    def frobenius_norm(self):
        return float(np.sqrt(np.sum(self.data ** 2)))

    def densify(self):
        return self

    def _batch(self, vectors, expected):
        vectors = tuple(vectors)
        if len(vectors) != expected:
            raise ValueError(f"expected {expected} vectors, got {len(vectors)}")
        mats = []
        singles = True
        m = None
        for v in vectors:
            a, single = column_batch(v, self.d)
            singles = singles and single
            if m is None:
                m = a.shape[1]
            elif a.shape[1] != m:
                raise ValueError("batched vectors must share the same number of columns")
            mats.append(a)
        return mats, singles

    def __repr__(self):
        return f"DenseTensor(order={self.order}, d={self.d}, symmetric={self.symmetric})"


@dataclass(frozen=True)
class CPModel:
    """Weighted sum of k rank-1 outer products with unit-norm factor columns.

    ``weights`` are strictly positive magnitudes; ``signs`` (+1/-1 per
    component) carry the sign separately so models with negative rank-1
    coefficients (e.g. negative excess kurtosis) stay representable.  For
    symmetric models all modes share one factor matrix.
    """

    weights: np.ndarray
    factors: tuple
    signs: np.ndarray = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        facs = tuple(np.asarray(F, dtype=float) for F in self.factors)
        if len(facs) not in (3, 4):
            raise ValueError("a CP model needs 3 or 4 factor matrices")
        k = w.shape[0]
        d = facs[0].shape[0]
        for F in facs:
            if F.shape != (d, k):
                raise ValueError(f"factor matrices must all be ({d}, {k})")
            nrm = np.linalg.norm(F, axis=0)
            if np.max(np.abs(nrm - 1.0)) > 1e-12:
                raise ValueError("factor columns must have unit norm (1e-12)")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive; carry signs separately")
        s = self.signs
        s = np.ones(k) if s is None else np.asarray(s, dtype=float)
        if s.shape != (k,) or not np.all(np.abs(s) == 1.0):
            raise ValueError("signs must be +1/-1 per component")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "factors", facs)
        object.__setattr__(self, "signs", s)

    @property
    def k(self):
        return self.weights.shape[0]

    @property
    def d(self):
        return self.factors[0].shape[0]

    @property
    def order(self):
        return len(self.factors)

    @property
    def signed_weights(self):
        return self.weights * self.signs

    @property
    def is_symmetric(self):
        return all(F is self.factors[0] or np.array_equal(F, self.factors[0]) for F in self.factors)

    @classmethod
    def symmetric(cls, weights, factor, order=3, signs=None):
        return cls(weights, (factor,) * order, signs)

    def to_dense(self):
        return cp_to_dense(self)


def cp_to_dense(model: CPModel) -> DenseTensor:
    """Materialize a CP model as a dense tensor."""
    w = model.signed_weights
    if model.order == 3:
        A, B, C = model.factors
        data = np.einsum("j,ij,kj,lj->ikl", w, A, B, C, optimize=True)
    else:
        A, B, C, D = model.factors
        data = np.einsum("j,ij,kj,lj,mj->iklm", w, A, B, C, D, optimize=True)
    return DenseTensor(data, symmetric=model.is_symmetric)


@dataclass(frozen=True)
class SpectralNormEstimate:
    """Lower bound on the tensor spectral norm from restarted power iterations.

    ``value`` is the best |T(u, v, ...)| over all restarts (a certified lower
    bound on the true norm, never claimed exact); ``dispersion`` is the
    standard deviation across restart values; ``restart_values`` holds one
    converged objective per restart.
    """

    value: float
    dispersion: float
    restart_values: np.ndarray = field(repr=False)

    def __float__(self):
        return self.value


def spectral_norm_estimate(T, restarts=64, iters=100, seed=0, tol=1e-10):
    """Estimate the spectral norm sup |T(u, v, ...)| over unit vectors.

    Runs ``restarts`` independent alternating normalized contractions from
    random unit starts and keeps the largest attained multilinear form.
    Restart starting points are drawn prefix-stably, so for a fixed seed the
    estimate is monotone nondecreasing in ``restarts``.

    Parameters
    ----------
    T : DenseTensor
    restarts, iters : int
        Number of random restarts (>= 1) and iteration cap per restart.
    seed : int
        Root seed for the restart substream.
    tol : float
        Relative-improvement convergence threshold.

    Returns
    -------
    SpectralNormEstimate
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    check_finite(T.data, "tensor entries")
    order, d = T.order, T.d
    rng = substream(seed, STREAM_SPECTRAL)
    mats = [random_unit_columns(rng, d, restarts) for _ in range(order)]
    prev = np.zeros(restarts)
    for _ in range(iters):
        for mode in range(order):
            others = [mats[r] for r in range(order) if r != mode]
            raw = T.contract_mode(mode, others)
            nrm = np.linalg.norm(raw, axis=0)
            ok = nrm > 0
            mats[mode] = np.where(ok, raw / np.where(ok, nrm, 1.0), mats[mode])
        vals = np.abs(T.contract(mats))
        if np.all(np.abs(vals - prev) <= tol * np.maximum(vals, 1.0)):
            prev = vals
            break
        prev = vals
    vals = np.abs(T.contract(mats))
    return SpectralNormEstimate(
        value=float(vals.max()),
        dispersion=float(vals.std()),
        restart_values=vals,
    )


def save_tensor(path, T: DenseTensor):
    """Write a tensor as text: 'order d1 d2 ... ; symmetric:{0,1}' then entries.

    Entries follow in canonical lexicographic order (last index fastest),
    whitespace separated.
    """
    header = f"{T.order} " + " ".join(str(s) for s in T.dims) + f" ; symmetric:{int(T.symmetric)}"
    with open(path, "w") as fh:
        fh.write(header + "\n")
        T.data.ravel(order="C").tofile(fh, sep=" ", format="%.17g")
        fh.write("\n")


def load_tensor(path) -> DenseTensor:
    with open(path) as fh:
        header = fh.readline().split()
        body = fh.read()
    order = int(header[0])
    dims = tuple(int(t) for t in header[1 : 1 + order])
    sym_tok = header[1 + order + 1]  # after the ';'
    if not sym_tok.startswith("symmetric:"):
        raise ValueError(f"malformed tensor header: {' '.join(header)}")
    symmetric = bool(int(sym_tok.split(":")[1]))
    entries = np.array(body.split(), dtype=float) if body.strip() else np.array([])
    if entries.size != int(np.prod(dims)):
        raise ValueError(f"expected {int(np.prod(dims))} entries, got {entries.size}")
    return DenseTensor(entries.reshape(dims, order="C"), symmetric=symmetric)
