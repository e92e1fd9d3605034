"""Synthetic latent-variable models and their sample-backed moment oracles.

Three model families are covered:

* multiview mixtures: three conditionally independent views whose
  conditional means are the factor columns; the third-order cross moment is
  a CP tensor with the mixing probabilities as weights;
* spherical Gaussian mixtures: one view, common spherical covariance; the
  third raw moment minus known-variance correction terms is a symmetric CP
  tensor of the component means;
* ICA / sparse ICA: linear mixing of independent sources; the fourth-order
  cumulant tensor (raw fourth moment minus the Gaussian-matching
  second-order combination) is a symmetric CP tensor weighted by the excess
  kurtosis of each source.

Each moment oracle answers the same contraction queries as a dense tensor
without materializing it, using only matrix-vector products against the
sample matrices; ``densify`` materializes the equivalent dense tensor for
small dimensions.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .tensor import CPModel, DenseTensor
from .utils import column_batch, random_unit_columns, substream, STREAM_DATA

__all__ = [
    "MultiviewSpec",
    "ICASpec",
    "SampleSet",
    "gen_multiview",
    "gen_gmm",
    "gen_ica",
    "moment_multiview",
    "moment_gmm3",
    "moment_ica4",
    "estimate_gmm_variance",
    "MultiviewMoment",
    "GaussianMixtureMoment",
    "FourthCumulantMoment",
    "save_samples",
    "load_samples",
    "source_kurtosis",
]


@dataclass(frozen=True)
class MultiviewSpec:
    """Mixture with categorical hidden state and per-view unit-norm means.

    ``noise_scale`` is the per-entry standard deviation scale zeta; samples
    are component mean + zeta*sqrt(d)*eps with eps zero mean, covariance
    I/d (Gaussian).  Low noise regime: zeta^2 ~ 1/d; high noise: zeta^2 ~ 1.
    ``balanced`` forces each component to appear exactly n/k times.
    """

    d: int
    k: int
    noise_scale: float = 0.0
    weights: Optional[np.ndarray] = None
    balanced: bool = True
    factors: Optional[tuple] = None  # user-provided (d, k) matrices, else uniform-sphere

    def __post_init__(self):
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.k,) or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("weights must be k positive probabilities summing to 1")
            object.__setattr__(self, "weights", w)

    def probabilities(self):
        return self.weights if self.weights is not None else np.full(self.k, 1.0 / self.k)


@dataclass(frozen=True)
class ICASpec:
    """Linear mixing of k independent unit-variance sources in d dimensions.

    ``source_law`` is one of 'rademacher' (excess kurtosis -2), 'uniform'
    (-1.2), or 'bernoulli-gaussian' with expected support ``sparsity``;
    activations are Bernoulli(s/k) times a Gaussian.  With ``unit_variance``
    the Gaussian is scaled to N(0, k/s) so every source has second moment 1
    and excess kurtosis 3k/s - 3; without it the Gaussian is standard, which
    keeps the raw sparse-coding scaling (second moment s/k).
    """

    d: int
    k: int
    source_law: str = "rademacher"
    sparsity: float = 0.0
    mixing: Optional[np.ndarray] = None  # user-provided (d, k), else uniform-sphere columns
    noise_scale: float = 0.0  # optional additive Gaussian observation noise (std per entry)
    unit_variance: bool = True

    def __post_init__(self):
        if self.source_law not in ("rademacher", "uniform", "bernoulli-gaussian"):
            raise ValueError(f"unknown source law {self.source_law!r}")
        if self.source_law == "bernoulli-gaussian" and not 0 < self.sparsity <= self.k:
            raise ValueError("sparsity must lie in (0, k] for bernoulli-gaussian sources")


def source_kurtosis(spec: ICASpec) -> np.ndarray:
    """Excess kurtosis E[h^4] - 3 E[h^2]^2 per source, from the law's moments."""
    if spec.source_law == "rademacher":
        kappa = -2.0
    elif spec.source_law == "uniform":
        kappa = -1.2
    else:
        p = spec.sparsity / spec.k
        if spec.unit_variance:
            kappa = 3.0 / p - 3.0
        else:
            kappa = 3.0 * p - 3.0 * p ** 2
    return np.full(spec.k, kappa)


class SampleSet:
    """Per-view observation matrices plus optional hidden labels.

    views are (d, n) arrays sharing n; labels, when present, are integers
    in [0, k).
    """

    def __init__(self, views, labels=None):
        views = [np.asarray(X, dtype=float) for X in views]
        if not views:
            raise ValueError("at least one view required")
        n = views[0].shape[1]
        if any(X.ndim != 2 or X.shape[1] != n for X in views):
            raise ValueError("all views must be 2-d with a shared sample count")
        if labels is not None:
            labels = np.asarray(labels)
            if labels.shape != (n,):
                raise ValueError("labels must be one per sample")
        self.views = views
        self.labels = labels

    @property
    def n(self):
        return self.views[0].shape[1]

    @property
    def d(self):
        return self.views[0].shape[0]

    @property
    def n_views(self):
        return len(self.views)


def _draw_factors(rng, d, k, provided, count):
    if provided is not None:
        mats = tuple(np.asarray(F, dtype=float) for F in provided)
        if len(mats) != count or any(F.shape != (d, k) for F in mats):
            raise ValueError(f"expected {count} factor matrices of shape ({d}, {k})")
        return mats
    return tuple(random_unit_columns(rng, d, k) for _ in range(count))


def _draw_labels(rng, spec, n):
    if spec.balanced:
        if n % spec.k != 0:
            raise ValueError(f"balanced sampling needs k | n, got k={spec.k}, n={n}")
        h = np.tile(np.arange(spec.k), n // spec.k)
        rng.shuffle(h)
        return h
    return rng.choice(spec.k, size=n, p=spec.probabilities())


def gen_multiview(spec: MultiviewSpec, n, seed):
    """Sample a three-view mixture; returns (SampleSet with labels, truth CPModel).

    Views are component mean + zeta*sqrt(d)*eps with eps ~ N(0, I/d), so the
    noise vector norm concentrates near zeta*sqrt(d).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = substream(seed, STREAM_DATA)
    A, B, C = _draw_factors(rng, spec.d, spec.k, spec.factors, 3)
    h = _draw_labels(rng, spec, n)
    sd = spec.noise_scale  # zeta*sqrt(d) * entrywise std 1/sqrt(d)
    views = []
    for F in (A, B, C):
        views.append(F[:, h] + sd * rng.standard_normal((spec.d, n)))
    truth = CPModel(spec.probabilities(), (A, B, C))
    return SampleSet(views, labels=h), truth


def gen_gmm(spec: MultiviewSpec, n, seed):
    """Sample a spherical Gaussian mixture (single view); returns (SampleSet, truth).

    The truth model is symmetric order 3 with the component means as the
    shared factor matrix.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = substream(seed, STREAM_DATA)
    (A,) = _draw_factors(rng, spec.d, spec.k, spec.factors, 1)
    h = _draw_labels(rng, spec, n)
    X = A[:, h] + spec.noise_scale * rng.standard_normal((spec.d, n))
    truth = CPModel.symmetric(spec.probabilities(), A, order=3)
    return SampleSet([X], labels=h), truth


def gen_ica(spec: ICASpec, n, seed):
    """Sample x = A h (+ optional Gaussian noise); returns (SampleSet, mixing, kappa).

    ``mixing`` is the (d, k) matrix of unit mixing columns and ``kappa`` the
    excess kurtosis per source (the CP weights of the cumulant tensor).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = substream(seed, STREAM_DATA)
    (A,) = _draw_factors(rng, spec.d, spec.k, (spec.mixing,) if spec.mixing is not None else None, 1)
    k = spec.k
    if spec.source_law == "rademacher":
        H = rng.choice([-1.0, 1.0], size=(k, n))
    elif spec.source_law == "uniform":
        H = rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=(k, n))
    else:
        p = spec.sparsity / k
        S = rng.random((k, n)) < p
        G = rng.standard_normal((k, n))
        if spec.unit_variance:
            G = G * np.sqrt(1.0 / p)
        H = S * G
    X = A @ H
    if spec.noise_scale > 0:
        X = X + spec.noise_scale * rng.standard_normal((spec.d, n))
    return SampleSet([X]), A, source_kurtosis(spec)


class _ImplicitBase:
    """Shared batching glue for sample-backed moment oracles."""

    order = None
    symmetric = False

    def _cols(self, vectors, expected):
        vectors = tuple(vectors)
        if len(vectors) != expected:
            raise ValueError(f"expected {expected} vectors, got {len(vectors)}")
        mats, singles = [], True
        for v in vectors:
            a, single = column_batch(v, self.d)
            singles = singles and single
            mats.append(a)
        return mats, singles

    def contract(self, vectors):
        mats, singles = self._cols(vectors, self.order)
        out = self._contract(mats)
        return float(out[0]) if singles else out

    def contract_mode(self, mode, vectors):
        if not 0 <= mode < self.order:
            raise ValueError(f"mode must be in [0, {self.order}), got {mode}")
        mats, singles = self._cols(vectors, self.order - 1)
        out = self._contract_mode(mode, mats)
        return out[:, 0] if singles else out

    def frobenius_norm(self):
        return self.densify().frobenius_norm()


class MultiviewMoment(_ImplicitBase):
    """Empirical third-order cross moment (1/n) sum x1 (x) x2 (x) x3.

    Contractions reduce to matrix products with the view matrices: the
    mode-r fiber combination at (v, w) is (1/n) X_r (X_s^T v * X_t^T w)
    with * the Hadamard product.
    """

    order = 3

    def __init__(self, samples: SampleSet):
        if samples.n_views != 3:
            raise ValueError("multiview moment needs exactly 3 views")
        if samples.n == 0:
            raise ValueError("empty sample set")
        self.samples = samples
        self.d = samples.d
        self.n = samples.n

    def _contract(self, mats):
        X1, X2, X3 = self.samples.views
        P = (X1.T @ mats[0]) * (X2.T @ mats[1]) * (X3.T @ mats[2])
        return P.mean(axis=0)

    def _contract_mode(self, mode, mats):
        X = self.samples.views
        rest = [r for r in range(3) if r != mode]
        P = (X[rest[0]].T @ mats[0]) * (X[rest[1]].T @ mats[1])
        return X[mode] @ P / self.n

    def slice_combination(self, theta):
        X1, X2, X3 = self.samples.views
        t = np.asarray(theta, dtype=float)
        return (X1 * (X3.T @ t)) @ X2.T / self.n

    def densify(self):
        X1, X2, X3 = self.samples.views
        data = np.einsum("in,jn,kn->ijk", X1, X2, X3, optimize=True) / self.n
        return DenseTensor(data)


class GaussianMixtureMoment(_ImplicitBase):
    """Variance-corrected empirical third moment of a spherical mixture.

    Subtracts variance * (mean (x) e_i (x) e_i + permutations) from the raw
    third moment so the population value is the symmetric CP tensor of the
    component means.  The variance is a required input; see
    ``estimate_gmm_variance`` for the undercomplete diagnostic.
    """

    order = 3
    symmetric = True

    def __init__(self, samples: SampleSet, variance):
        if samples.n_views != 1:
            raise ValueError("spherical mixture moment needs a single view")
        if samples.n == 0:
            raise ValueError("empty sample set")
        if variance < 0:
            raise ValueError("variance must be >= 0")
        self.samples = samples
        self.variance = float(variance)
        self.d = samples.d
        self.n = samples.n
        self.mean = samples.views[0].mean(axis=1)

    def _contract(self, mats):
        X = self.samples.views[0]
        u, v, w = mats
        raw = ((X.T @ u) * (X.T @ v) * (X.T @ w)).mean(axis=0)
        m = self.mean
        corr = (m @ u) * (v * w).sum(axis=0) + (m @ v) * (u * w).sum(axis=0) + (m @ w) * (u * v).sum(axis=0)
        return raw - self.variance * corr

    def _contract_mode(self, mode, mats):
        X = self.samples.views[0]
        v, w = mats
        raw = X @ ((X.T @ v) * (X.T @ w)) / self.n
        m = self.mean
        corr = m[:, None] * (v * w).sum(axis=0)[None, :] + w * (m @ v)[None, :] + v * (m @ w)[None, :]
        return raw - self.variance * corr

    def slice_combination(self, theta):
        X = self.samples.views[0]
        t = np.asarray(theta, dtype=float)
        raw = (X * (X.T @ t)) @ X.T / self.n
        m = self.mean
        corr = np.outer(m, t) + np.outer(t, m) + (m @ t) * np.eye(self.d)
        return raw - self.variance * corr

    def densify(self):
        X = self.samples.views[0]
        raw = np.einsum("in,jn,kn->ijk", X, X, X, optimize=True) / self.n
        eye = np.eye(self.d)
        m = self.mean
        corr = (
            np.einsum("a,ij->aij", m, eye)
            + np.einsum("a,ij->iaj", m, eye)
            + np.einsum("a,ij->ija", m, eye)
        )
        return DenseTensor(raw - self.variance * corr)


class FourthCumulantMoment(_ImplicitBase):
    """Empirical fourth-order cumulant tensor of a single view.

    Raw fourth moment minus the three pairings of the empirical second
    moment W, so Gaussian directions cancel; the population value is the
    symmetric CP tensor with excess-kurtosis weights.  Closed forms:
    M(I,u,u,u) = (1/n) sum <x,u>^3 x - 3 (W u)(u' W u) and
    M(u,u,u,u) = (1/n) sum <x,u>^4 - 3 (u' W u)^2.
    """

    order = 4
    symmetric = True

    def __init__(self, samples: SampleSet):
        if samples.n_views != 1:
            raise ValueError("fourth-cumulant moment needs a single view")
        if samples.n == 0:
            raise ValueError("empty sample set")
        self.samples = samples
        self.d = samples.d
        self.n = samples.n
        X = samples.views[0]
        self.second = X @ X.T / self.n

    def _contract(self, mats):
        X = self.samples.views[0]
        u, v, w, z = mats
        raw = ((X.T @ u) * (X.T @ v) * (X.T @ w) * (X.T @ z)).mean(axis=0)
        W = self.second
        uv = (u * (W @ v)).sum(axis=0)
        uw = (u * (W @ w)).sum(axis=0)
        uz = (u * (W @ z)).sum(axis=0)
        vw = (v * (W @ w)).sum(axis=0)
        vz = (v * (W @ z)).sum(axis=0)
        wz = (w * (W @ z)).sum(axis=0)
        return raw - (uv * wz + uw * vz + uz * vw)

    def _contract_mode(self, mode, mats):
        X = self.samples.views[0]
        v, w, z = mats
        raw = X @ ((X.T @ v) * (X.T @ w) * (X.T @ z)) / self.n
        W = self.second
        Wv, Ww, Wz = W @ v, W @ w, W @ z
        vw = (v * Ww).sum(axis=0)
        vz = (v * Wz).sum(axis=0)
        wz = (w * Wz).sum(axis=0)
        return raw - (Wv * wz[None, :] + Ww * vz[None, :] + Wz * vw[None, :])

    def slice_combination(self, theta):
        X = self.samples.views[0]
        t = np.asarray(theta, dtype=float)
        Pt = X.T @ t
        raw = (X * Pt ** 2) @ X.T / self.n
        W = self.second
        Wt = W @ t
        return raw - (t @ Wt) * W - 2.0 * np.outer(Wt, Wt)

    def densify(self):
        X = self.samples.views[0]
        d = self.d
        pairs = (X[:, None, :] * X[None, :, :]).reshape(d * d, self.n)
        raw = (pairs @ pairs.T).reshape(d, d, d, d) / self.n
        W = self.second
        corr = (
            np.einsum("ij,kl->ijkl", W, W)
            + np.einsum("ik,jl->ijkl", W, W)
            + np.einsum("il,jk->ijkl", W, W)
        )
        return DenseTensor(raw - corr)


def moment_multiview(samples: SampleSet) -> MultiviewMoment:
    """Implicit third-order cross-moment oracle over a three-view sample set."""
    return MultiviewMoment(samples)


def moment_gmm3(samples: SampleSet, variance) -> GaussianMixtureMoment:
    """Implicit variance-corrected third-moment oracle; ``variance`` is the known
    spherical noise variance per coordinate."""
    return GaussianMixtureMoment(samples, variance)


def moment_ica4(samples: SampleSet) -> FourthCumulantMoment:
    """Implicit fourth-order cumulant oracle over a single-view sample set."""
    return FourthCumulantMoment(samples)


def estimate_gmm_variance(samples: SampleSet, k) -> float:
    """k-th largest eigenvalue of the empirical covariance.

    Only meaningful in the undercomplete regime; refuses k > d.
    """
    if samples.n_views != 1:
        raise ValueError("variance estimation needs a single view")
    if k > samples.d:
        raise ValueError(f"undercomplete estimator requires k <= d, got k={k}, d={samples.d}")
    X = samples.views[0]
    m = X.mean(axis=1)
    cov = X @ X.T / samples.n - np.outer(m, m)
    eig = np.sort(np.linalg.eigvalsh(cov))[::-1]
    return float(eig[k - 1])


def save_samples(path, samples: SampleSet):
    """Write a sample set as text.

    Line 1: 'd=<d> n=<n> views=<v> labels=<0|1>'.  Then each view in order,
    one sample per line (d floats); samples are the columns of the view
    matrices.  If labels are present, one final line of n integers.
    """
    with open(path, "w") as fh:
        fh.write(f"d={samples.d} n={samples.n} views={samples.n_views} labels={int(samples.labels is not None)}\n")
        for X in samples.views:
            np.savetxt(fh, X.T, fmt="%.17g")
        if samples.labels is not None:
            fh.write(" ".join(str(int(l)) for l in samples.labels) + "\n")


def load_samples(path) -> SampleSet:
    with open(path) as fh:
        header = dict(tok.split("=") for tok in fh.readline().split())
        d, n, v, has_labels = (int(header[key]) for key in ("d", "n", "views", "labels"))
        views = []
        for _ in range(v):
            rows = [np.array(fh.readline().split(), dtype=float) for _ in range(n)]
            views.append(np.vstack(rows).T if n else np.empty((d, 0)))
        labels = np.array(fh.readline().split(), dtype=int) if has_labels else None
    ss = SampleSet(views, labels=labels)
    if ss.d != d:
        raise ValueError(f"header d={d} does not match data d={ss.d}")
    return ss
