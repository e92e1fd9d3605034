"""CP decomposition by alternating rank-1 power updates.

The decomposition runs L independent trials.  Each trial starts from unit
vectors (random on the sphere, from an SVD of a random slice combination,
or from labeled-sample means), repeatedly applies the normalized
multilinear power update simultaneously to every mode, and estimates the
rank-1 weight as the full contraction at the final iterate.  A greedy
clustering pass then selects k centers: take the surviving trial with the
largest objective, refine it with further power iterations, and absorb all
trials whose factor alignment with the refined center exceeds half the
clustering parameter.

Trials are embarrassingly parallel; here they advance in lock-step as
column batches so the per-iteration work is dense matrix algebra.  Batches
are chunked to bound temporary memory, which leaves per-trial sequences
unchanged.

The sklearn-style front end is :class:`CPPowerDecomposition`; the
functional core is :func:`decompose`.
"""

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from .tensor import CPModel, DenseTensor
from .models import SampleSet
from .utils import random_unit_columns, substream, STREAM_INIT, STREAM_THETA

__all__ = [
    "DecompositionConfig",
    "RunReport",
    "power_trial",
    "svd_slice_init",
    "semi_supervised_init",
    "cluster_candidates",
    "decompose",
    "stopping_threshold",
    "CPPowerDecomposition",
    "save_report",
    "load_report",
]

_INITS = ("random-sphere", "svd-slice", "semi-supervised")
# Cap on elements of the largest per-chunk temporary (samples x trials).
_CHUNK_ELEMENTS = 8_000_000
# Column norms below this flag a degenerate contraction.
_DEGENERATE = 1e-150


@dataclass(frozen=True)
class DecompositionConfig:
    """Algorithm knobs for one decomposition run.

    ``stopping`` is 'threshold' (stop a trial once the squared per-mode
    iterate change falls below t1*(log d)^2*sqrt(k/n) + t2*(log d)^2*sqrt(k)/d,
    the statistical-error plus incoherence-bias floor; the sample term is
    dropped when the oracle is not sample backed) or 'fixed' (always run
    ``max_iter`` iterations).  ``max_iter`` caps either mode.
    """

    k: int
    n_init: int = 100
    max_iter: int = 100
    stopping: str = "threshold"
    t1: float = 1e-08
    t2: float = 1e-07
    cluster_epsilon: float = 0.5
    init: str = "random-sphere"
    seed: int = 0
    init_factors: Optional[tuple] = None  # (d, m) matrices for semi-supervised starts

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.n_init < 1 or self.max_iter < 1:
            raise ValueError("n_init and max_iter must be >= 1")
        if not 0.0 < self.cluster_epsilon < 1.0:
            raise ValueError("cluster_epsilon must lie in (0, 1)")
        if self.t1 < 0 or self.t2 < 0:
            raise ValueError("t1 and t2 must be >= 0")
        if self.stopping not in ("threshold", "fixed"):
            raise ValueError(f"unknown stopping mode {self.stopping!r}")
        if self.init not in _INITS:
            raise ValueError(f"unknown init {self.init!r}")
        if self.init == "semi-supervised" and self.init_factors is None:
            raise ValueError("semi-supervised init requires init_factors")


def stopping_threshold(cfg: DecompositionConfig, d, n=None):
    """Iterate-change threshold for the given dimension and sample count.

    Returns None in fixed-iteration mode (no early stopping).
    """
    if cfg.stopping == "fixed":
        return None
    logd2 = np.log(d) ** 2
    t = cfg.t2 * logd2 * np.sqrt(cfg.k) / d
    if n is not None:
        t += cfg.t1 * logd2 * np.sqrt(cfg.k / n)
    return t


def _power_step(oracle, mats):
    """One simultaneous power sweep over all modes of a column batch.

    For order 3 every mode is updated from the current other two; for the
    symmetric order-4 case a single representative vector is updated from
    its own triple, with the sign fixed toward the previous iterate (u and
    -u span the same even-order component).

    Returns (new_mats, ok) where ok flags columns whose updates stayed
    finite and nonzero.
    """
    order = oracle.order
    m = mats[0].shape[1]
    ok = np.ones(m, dtype=bool)
    if len(mats) == 1:  # symmetric order-4 update
        U = mats[0]
        raw = oracle.contract_mode(0, (U, U, U))
        nrm = np.linalg.norm(raw, axis=0)
        ok &= np.isfinite(nrm) & (nrm > _DEGENERATE)
        Un = raw / np.where(ok, nrm, 1.0)
        flip = (Un * U).sum(axis=0) < 0
        Un[:, flip] *= -1.0
        Un[:, ~ok] = U[:, ~ok]
        return (Un,), ok
    new = []
    for mode in range(order):
        others = [mats[r] for r in range(order) if r != mode]
        raw = oracle.contract_mode(mode, others)
        nrm = np.linalg.norm(raw, axis=0)
        good = np.isfinite(nrm) & (nrm > _DEGENERATE)
        ok &= good
        upd = raw / np.where(good, nrm, 1.0)
        upd[:, ~good] = mats[mode][:, ~good]
        new.append(upd)
    return tuple(new), ok


def _run_power(oracle, mats0, max_iter, t_stop):
    """Iterate the power sweep on a column batch until threshold or cap.

    Returns (final mats, iterations per column, failed mask).
    """
    mats = tuple(M.copy() for M in mats0)
    m = mats[0].shape[1]
    iters = np.zeros(m, dtype=int)
    failed = np.zeros(m, dtype=bool)
    chunk = _chunk_size(oracle, m)
    for lo in range(0, m, chunk):
        hi = min(lo + chunk, m)
        sub = tuple(M[:, lo:hi] for M in mats)
        active = np.ones(hi - lo, dtype=bool)
        for _ in range(max_iter):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            cur = tuple(M[:, idx] for M in sub)
            new, ok = _power_step(oracle, cur)
            imp = np.zeros(idx.size)
            for M, Mn in zip(cur, new):
                imp = np.maximum(imp, ((Mn - M) ** 2).sum(axis=0))
            for M, Mn in zip(sub, new):
                M[:, idx] = Mn
            iters[lo + idx] += 1
            bad = idx[~ok]
            failed[lo + bad] = True
            active[bad] = False
            if t_stop is not None:
                active[idx[ok & (imp <= t_stop)]] = False
        for M, S in zip(mats, sub):
            M[:, lo:hi] = S
    return mats, iters, failed


def _chunk_size(oracle, m):
    width = max(getattr(oracle, "n", None) or 0, oracle.d ** 2)
    return int(np.clip(_CHUNK_ELEMENTS // max(width, 1), 1, m))


def _expand(oracle, mats):
    """Replicate the representative vector of symmetric updates to all modes."""
    if len(mats) == oracle.order:
        return mats
    return mats * oracle.order


def power_trial(oracle, init, cfg: DecompositionConfig, return_trace=False):
    """Run one trial of alternating power updates from the given unit vectors.

    ``init`` holds one unit vector per mode (a single vector for symmetric
    order-4 oracles).  Returns (vectors, weight, iterations); the weight is
    the full contraction at the final iterate, sign included.  With
    ``return_trace`` a list with the iterate tuple after every sweep is
    appended to the return value.

    Raises RuntimeError if a contraction degenerates to zero or NaN.
    """
    expected = 1 if oracle.order == 4 else oracle.order
    init = tuple(np.asarray(v, dtype=float) for v in init)
    if len(init) != expected:
        raise ValueError(f"expected {expected} init vectors, got {len(init)}")
    for v in init:
        if abs(np.linalg.norm(v) - 1.0) > 1e-8:
            raise ValueError("init vectors must have unit norm")
    t_stop = stopping_threshold(cfg, oracle.d, oracle.n)
    mats = tuple(v[:, None].copy() for v in init)
    trace = []
    iterations = 0
    for _ in range(cfg.max_iter):
        new, ok = _power_step(oracle, mats)
        if not ok[0]:
            raise RuntimeError("power update degenerated (zero or non-finite contraction)")
        imp = max(float(((Mn - M) ** 2).sum()) for M, Mn in zip(mats, new))
        mats = new
        iterations += 1
        if return_trace:
            trace.append(tuple(M[:, 0].copy() for M in mats))
        if t_stop is not None and imp <= t_stop:
            break
    vectors = tuple(M[:, 0] for M in _expand(oracle, mats))
    weight = oracle.contract(vectors)
    out = (vectors, float(weight), iterations)
    return out + (trace,) if return_trace else out


def svd_slice_init(oracle, rng, power_iters=200, tol=1e-10, max_redraws=16):
    """Initialization from the top singular pair of a random slice combination.

    Draws theta ~ N(0, I), forms the matrix T(I, I, theta) (order 4:
    T(I, I, theta, theta)), extracts its top left/right singular vectors by
    alternating matrix power iteration, and completes the third vector with
    one power update.  Nearly-zero slices (Frobenius norm < 1e-14) trigger a
    redraw of theta, at most ``max_redraws`` times.
    """
    d = oracle.d
    for _ in range(max_redraws):
        theta = rng.standard_normal(d)
        M = oracle.slice_combination(theta)
        if np.linalg.norm(M) >= 1e-14:
            break
    else:
        raise RuntimeError(f"slice combination numerically zero after {max_redraws} redraws")
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    for _ in range(power_iters):
        v = M.T @ u
        nv = np.linalg.norm(v)
        if nv <= _DEGENERATE:
            v = rng.standard_normal(d)
            nv = np.linalg.norm(v)
        v /= nv
        u_next = M @ v
        nu = np.linalg.norm(u_next)
        if nu <= _DEGENERATE:
            u_next = rng.standard_normal(d)
            nu = np.linalg.norm(u_next)
        u_next /= nu
        if np.linalg.norm(u_next - u) <= tol:
            u = u_next
            break
        u = u_next
    v = M.T @ u
    v /= np.linalg.norm(v)
    if oracle.order == 4:
        return (u,)
    c = oracle.contract_mode(2, (u, v))
    nc = np.linalg.norm(c)
    if nc <= _DEGENERATE:
        raise RuntimeError("degenerate third-mode completion in SVD initialization")
    return (u, v, c / nc)


def semi_supervised_init(samples: SampleSet) -> CPModel:
    """Per-class normalized sample means as initialization vectors.

    Requires labels; every class in [0, max label] must be populated.
    Returns a CP model whose factor columns are the normalized class means
    per view and whose weights are the empirical class frequencies.
    """
    if samples.labels is None:
        raise ValueError("semi-supervised initialization requires labeled samples")
    labels = samples.labels
    k = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=k)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise ValueError(f"no labeled samples for class {int(empty[0])}")
    factors = []
    for X in samples.views:
        F = np.zeros((samples.d, k))
        for j in range(k):
            mean = X[:, labels == j].mean(axis=1)
            nrm = np.linalg.norm(mean)
            if nrm <= _DEGENERATE:
                raise ValueError(f"class {j} has a zero mean vector")
            F[:, j] = mean / nrm
        factors.append(F)
    if len(factors) == 1:
        return CPModel.symmetric(counts / counts.sum(), factors[0], order=3)
    return CPModel(counts / counts.sum(), tuple(factors))


@dataclass
class TrialResults:
    """Final iterates of every trial, as column-aligned arrays."""

    factors: tuple  # one (d, L) array per mode
    weights: np.ndarray
    objectives: np.ndarray
    iterations: np.ndarray
    failed: np.ndarray

    @property
    def n_trials(self):
        return self.weights.shape[0]


def cluster_candidates(oracle, trials: TrialResults, cfg: DecompositionConfig):
    """Greedy selection of k cluster centers from trial outputs.

    Repeats k times: pick the surviving trial with the largest objective
    |T(a, b, c)| (ties: lowest trial index), refine it with another round of
    power iterations, emit the refined tuple with its re-estimated weight,
    and drop every trial whose maximal per-mode alignment with the center
    exceeds cluster_epsilon / 2.

    Returns (model, center_iterations, shortfall); ``model`` is None when no
    center could be formed, and ``shortfall`` flags fewer than k centers.
    """
    if trials.n_trials == 0:
        raise ValueError("no trial tuples to cluster")
    remaining = ~trials.failed.copy()
    n_modes = len(trials.factors)
    centers = [[] for _ in range(n_modes)]
    center_w = []
    center_iters = []
    while len(center_w) < cfg.k:
        idx = np.flatnonzero(remaining)
        if idx.size == 0:
            break
        best = idx[np.argmax(trials.objectives[idx])]
        init = tuple(F[:, best] for F in trials.factors)
        try:
            vectors, weight, used = power_trial(oracle, init, cfg)
        except RuntimeError:
            remaining[best] = False
            continue
        rep = vectors[: 1] if n_modes == 1 else vectors
        for r in range(n_modes):
            centers[r].append(rep[r])
        center_w.append(weight)
        center_iters.append(used)
        align = np.zeros(trials.weights.shape[0])
        for r in range(n_modes):
            align = np.maximum(align, np.abs(rep[r] @ trials.factors[r]))
        remaining &= align <= cfg.cluster_epsilon / 2.0
    if not center_w:
        return None, np.array([], dtype=int), True
    weights = np.array(center_w)
    factors = tuple(np.stack(cols, axis=1) for cols in centers)
    weights, factors, signs = _canonical_signs(oracle.order, weights, factors)
    if oracle.order == 4:
        factors = factors * 4
    model = CPModel(weights, factors, signs)
    return model, np.array(center_iters, dtype=int), len(center_w) < cfg.k


def _canonical_signs(order, weights, factors):
    """Positive weights for order 3 (flip one mode); preserved signs for order 4."""
    if order == 3:
        neg = weights < 0
        if np.any(neg):
            factors = (np.where(neg[None, :], -factors[0], factors[0]),) + factors[1:]
            weights = np.abs(weights)
        return weights, factors, np.ones(weights.shape[0])
    signs = np.where(weights < 0, -1.0, 1.0)
    return np.abs(weights), factors, signs


@dataclass
class RunReport:
    """Everything a decomposition run produced.

    ``model`` holds the k cluster centers (None if clustering found none);
    trial arrays keep every trial's final tuple, weight, objective,
    iteration count and failure flag.  ``evaluation`` is filled by the
    evaluation module when ground truth is available.
    """

    model: Optional[CPModel]
    center_iterations: np.ndarray
    shortfall: bool
    trials: TrialResults
    elapsed_seconds: float
    d: int
    order: int
    config: DecompositionConfig
    evaluation: object = None


def _initial_mats(oracle, cfg, L):
    rng = substream(cfg.seed, STREAM_INIT)
    d = oracle.d
    if cfg.init == "random-sphere":
        if oracle.order == 4:
            return (random_unit_columns(rng, d, L),)
        A0 = random_unit_columns(rng, d, L)
        B0 = random_unit_columns(rng, d, L)
        raw = _chunked_mode(oracle, 2, (A0, B0))
        nrm = np.linalg.norm(raw, axis=0)
        bad = nrm <= _DEGENERATE
        raw[:, bad] = random_unit_columns(substream(cfg.seed, STREAM_THETA), d, max(int(bad.sum()), 1))[:, : int(bad.sum())]
        C0 = raw / np.linalg.norm(raw, axis=0, keepdims=True)
        return (A0, B0, C0)
    if cfg.init == "svd-slice":
        cols = [svd_slice_init(oracle, rng) for _ in range(L)]
        n_modes = len(cols[0])
        return tuple(np.stack([c[r] for c in cols], axis=1) for r in range(n_modes))
    mats = tuple(np.asarray(F, dtype=float) for F in cfg.init_factors)
    if oracle.order == 4 and len(mats) > 1:
        mats = (mats[0],)
    if any(F.shape[0] != d for F in mats):
        raise ValueError("init_factors do not match the oracle dimension")
    return tuple(F / np.linalg.norm(F, axis=0, keepdims=True) for F in mats)


def _chunked_mode(oracle, mode, mats):
    m = mats[0].shape[1]
    chunk = _chunk_size(oracle, m)
    parts = [oracle.contract_mode(mode, tuple(M[:, lo : lo + chunk] for M in mats)) for lo in range(0, m, chunk)]
    return np.concatenate(parts, axis=1) if len(parts) > 1 else parts[0]


def _chunked_contract(oracle, mats):
    m = mats[0].shape[1]
    chunk = _chunk_size(oracle, m)
    parts = [oracle.contract(tuple(M[:, lo : lo + chunk] for M in mats)) for lo in range(0, m, chunk)]
    return np.concatenate(parts) if len(parts) > 1 else parts[0]


def decompose(oracle, cfg: DecompositionConfig) -> RunReport:
    """Full pipeline: initialize L trials, iterate, estimate weights, cluster.

    The oracle may be a DenseTensor or any sample-backed moment oracle with
    the same contraction interface (order 3, or symmetric order 4).
    Individual trial failures are flagged and excluded from clustering; the
    run aborts only if every trial fails.
    """
    if oracle.order not in (3, 4):
        raise ValueError("only order-3 and symmetric order-4 oracles are supported")
    start = time.perf_counter()
    mats0 = _initial_mats(oracle, cfg, cfg.n_init)
    L = mats0[0].shape[1]
    t_stop = stopping_threshold(cfg, oracle.d, oracle.n)
    mats, iters, failed = _run_power(oracle, mats0, cfg.max_iter, t_stop)
    weights = _chunked_contract(oracle, _expand(oracle, mats))
    bad = ~np.isfinite(weights)
    failed |= bad
    weights = np.where(bad, 0.0, weights)
    if oracle.order == 3:
        neg = weights < 0
        mats = (np.where(neg[None, :], -mats[0], mats[0]),) + mats[1:]
        weights = np.abs(weights)
    trials = TrialResults(
        factors=mats,
        weights=weights,
        objectives=np.abs(weights),
        iterations=iters,
        failed=failed,
    )
    if np.all(failed):
        raise RuntimeError(f"all {L} trials failed (degenerate contractions)")
    model, center_iters, shortfall = cluster_candidates(oracle, trials, cfg)
    return RunReport(
        model=model,
        center_iterations=center_iters,
        shortfall=shortfall,
        trials=trials,
        elapsed_seconds=time.perf_counter() - start,
        d=oracle.d,
        order=oracle.order,
        config=cfg,
    )


class CPPowerDecomposition(BaseEstimator):
    """CP tensor decomposition by alternating rank-1 power updates.

    Estimator wrapper around :func:`decompose`: ``fit`` accepts a dense
    tensor (DenseTensor or raw 3-d/4-d ndarray) or a sample-backed moment
    oracle, and exposes the recovered components sklearn-style.

    Parameters
    ----------
    k : int
        Number of components to extract.
    n_init : int
        Number of independent initializations L.
    max_iter : int
        Iteration cap N per trial.
    stopping : {'threshold', 'fixed'}
        Early-stopping rule; see :class:`DecompositionConfig`.
    t1, t2 : float
        Stopping-threshold constants.
    cluster_epsilon : float
        Alignment parameter of the clustering pass, in (0, 1).
    init : {'random-sphere', 'svd-slice', 'semi-supervised'}
        Trial initialization scheme.
    init_factors : tuple of ndarray, optional
        Per-mode starting columns for 'semi-supervised'.
    random_state : int
        Root seed; all randomness derives from it through counter substreams.

    Attributes
    ----------
    model_ : CPModel
        Recovered components (weights, signs, unit factor columns).
    weights_ : ndarray of shape (k,)
        Signed component weights.
    factors_ : tuple of ndarray
        One (d, k) matrix per mode.
    report_ : RunReport
        Full per-trial diagnostics.
    """

    def __init__(self, k=1, n_init=100, max_iter=100, stopping="threshold",
                 t1=1e-08, t2=1e-07, cluster_epsilon=0.5, init="random-sphere",
                 init_factors=None, random_state=0):
        self.k = k
        self.n_init = n_init
        self.max_iter = max_iter
        self.stopping = stopping
        self.t1 = t1
        self.t2 = t2
        self.cluster_epsilon = cluster_epsilon
        self.init = init
        self.init_factors = init_factors
        self.random_state = random_state

    def _config(self):
        return DecompositionConfig(
            k=self.k, n_init=self.n_init, max_iter=self.max_iter,
            stopping=self.stopping, t1=self.t1, t2=self.t2,
            cluster_epsilon=self.cluster_epsilon, init=self.init,
            init_factors=self.init_factors, seed=self.random_state,
        )

    def fit(self, X, y=None):
        """Decompose a tensor or moment oracle; returns self."""
        oracle = DenseTensor(X) if isinstance(X, np.ndarray) else X
        report = decompose(oracle, self._config())
        self.report_ = report
        self.model_ = report.model
        if report.model is not None:
            self.weights_ = report.model.signed_weights
            self.factors_ = report.model.factors
            self.n_components_ = report.model.k
        else:
            self.weights_ = np.array([])
            self.factors_ = ()
            self.n_components_ = 0
        return self

    def fit_report(self, X):
        """Like ``fit`` but returns the RunReport."""
        self.fit(X)
        return self.report_


def save_report(path, report: RunReport):
    """Write the recovered components as a structured text record.

    Header: 'k=<k> d=<d> order=<order> shortfall=<0|1>'; per component one
    stanza with weight, sign, refinement iterations and objective, followed
    by one line per mode holding that factor column.
    """
    model = report.model
    k = 0 if model is None else model.k
    with open(path, "w") as fh:
        fh.write(f"k={k} d={report.d} order={report.order} shortfall={int(report.shortfall)}\n")
        for j in range(k):
            obj = abs(model.signed_weights[j])
            fh.write(
                f"component {j} weight={model.weights[j]:.17g} sign={int(model.signs[j])} "
                f"iterations={int(report.center_iterations[j])} objective={obj:.17g}\n"
            )
            for r, F in enumerate(model.factors):
                fh.write(f"mode {r}: " + " ".join(f"{x:.17g}" for x in F[:, j]) + "\n")


def load_report(path):
    """Read back a report written by :func:`save_report`.

    Returns (model, meta) where meta holds the header fields and
    per-component iterations/objectives; model is None for k=0.
    """
    with open(path) as fh:
        head = dict(tok.split("=") for tok in fh.readline().split())
        k, d, order = int(head["k"]), int(head["d"]), int(head["order"])
        meta = {"shortfall": bool(int(head["shortfall"])), "iterations": [], "objectives": []}
        weights, signs = [], []
        cols = [[] for _ in range(order)]
        for _ in range(k):
            fields = dict(tok.split("=") for tok in fh.readline().split()[2:])
            weights.append(float(fields["weight"]))
            signs.append(float(fields["sign"]))
            meta["iterations"].append(int(fields["iterations"]))
            meta["objectives"].append(float(fields["objective"]))
            for r in range(order):
                line = fh.readline().split(":", 1)[1]
                cols[r].append(np.array(line.split(), dtype=float))
    if k == 0:
        return None, meta
    factors = tuple(np.stack(c, axis=1) for c in cols)
    model = CPModel(np.array(weights), factors, np.array(signs))
    return model, meta
