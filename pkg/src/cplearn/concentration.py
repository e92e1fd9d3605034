"""Empirical concentration of moment tensors: error norms versus sample size.

For each model the lab builds the empirical moment tensor from n samples,
subtracts the sample-conditional population tensor, estimates the spectral
norm of the difference by restarted power iterations, and fits the log-log
slope of error versus n.  Only the n-exponent and the ordering of noise
regimes are checked; constants and polylog factors are not resolvable at
desk scale, and a constant-factor estimator bias cancels in the slope.

The sparse-ICA sweep keeps the raw sparse-coding scaling of the sources
(Bernoulli activations times standard Gaussians, second moment s/k) so the
error growth with expected sparsity s at fixed n is visible; under
unit-variance renormalization the leading s dependence cancels.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .models import ICASpec, MultiviewSpec, SampleSet, gen_ica, gen_multiview, moment_ica4
from .tensor import CPModel, DenseTensor, spectral_norm_estimate

__all__ = [
    "SweepSpec",
    "SweepCell",
    "error_tensor_multiview",
    "error_norm_ica",
    "fit_scaling",
    "SlopeFit",
    "run_sweep",
    "sweep_slope",
]

# Dense order-4 error tensors hold d^4 entries; refuse beyond this.
_DENSIFY_LIMIT = 30


@dataclass(frozen=True)
class SweepSpec:
    """One concentration sweep: a model family, a noise regime, and an n grid.

    ``regime`` selects the noise scale for multiview sweeps ('low': per-entry
    variance 1/d, 'high': 1); ICA sweeps ignore it.  ``sparsity_grid`` turns
    an 'sparse-ica' sweep into an s sweep crossed with the n grid.
    """

    model: str  # 'multiview' | 'ica' | 'sparse-ica'
    d: int
    k: int
    n_grid: tuple
    seeds: int = 5
    regime: str = "low"
    sparsity_grid: tuple = ()
    restarts: int = 48
    iters: int = 80

    def __post_init__(self):
        if self.model not in ("multiview", "ica", "sparse-ica"):
            raise ValueError(f"unknown sweep model {self.model!r}")
        if len(self.n_grid) < 3 and self.model != "sparse-ica":
            raise ValueError("n_grid needs at least 3 points for slope fitting")
        if self.model == "sparse-ica" and not self.sparsity_grid:
            raise ValueError("sparse-ica sweeps need a sparsity_grid")
        if self.regime not in ("low", "high"):
            raise ValueError(f"unknown noise regime {self.regime!r}")

    def noise_scale(self):
        return 1.0 / np.sqrt(self.d) if self.regime == "low" else 1.0


@dataclass
class SweepCell:
    model: str
    d: int
    k: int
    regime: str
    n: int
    seed: int
    error: float


def error_tensor_multiview(samples: SampleSet, truth: CPModel) -> DenseTensor:
    """Difference between the empirical third moment and its sample-conditional
    population value (truth components weighted by empirical label frequencies).

    Requires labels; exactly zero in the noiseless case.
    """
    if samples.labels is None:
        raise ValueError("error tensor needs hidden labels for the empirical frequencies")
    X1, X2, X3 = samples.views
    n = samples.n
    h = samples.labels
    A, B, C = truth.factors
    emp = np.einsum("in,jn,kn->ijk", X1, X2, X3, optimize=True)
    # per-sample conditional means: summing a_h (x) b_h (x) c_h over samples
    # equals weighting components by empirical label frequencies, and keeps
    # the noiseless error exactly zero
    cond = np.einsum("in,jn,kn->ijk", A[:, h], B[:, h], C[:, h], optimize=True)
    return DenseTensor((emp - cond) / n)


def error_norm_ica(samples: SampleSet, mixing, kappa, restarts=48, iters=80, seed=0) -> float:
    """Spectral-norm estimate of (empirical - population) fourth cumulant tensor.

    ``mixing`` is the true (d, k) mixing matrix and ``kappa`` the excess
    kurtosis per source.  Densifies both tensors, so d is capped; larger
    problems should compare contractions against sampled probes instead.
    """
    d = samples.d
    if d > _DENSIFY_LIMIT:
        raise ValueError(
            f"d={d} exceeds the densification guard ({_DENSIFY_LIMIT}); "
            "evaluate contraction agreement on sampled probes instead"
        )
    kappa = np.asarray(kappa, dtype=float)
    emp = moment_ica4(samples).densify().data
    pop = np.einsum("j,ij,kj,lj,mj->iklm", kappa, mixing, mixing, mixing, mixing, optimize=True)
    est = spectral_norm_estimate(DenseTensor(emp - pop), restarts=restarts, iters=iters, seed=seed)
    return est.value


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    residual_std: float
    n_points: int


def fit_scaling(ns, errors) -> SlopeFit:
    """Least-squares slope of log(error) versus log(n).

    Nonpositive error values cannot enter the log fit and are excluded with
    a warning.
    """
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    keep = errors > 0
    if not np.all(keep):
        warnings.warn(f"excluding {int((~keep).sum())} nonpositive error values from slope fit")
    ns, errors = ns[keep], errors[keep]
    if ns.size < 3:
        raise ValueError("slope fitting needs at least 3 positive points")
    x, y = np.log(ns), np.log(errors)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return SlopeFit(float(slope), float(intercept), float(resid.std()), int(ns.size))


def _multiview_cell(spec: SweepSpec, n, seed):
    mspec = MultiviewSpec(d=spec.d, k=spec.k, noise_scale=spec.noise_scale(), balanced=False)
    samples, truth = gen_multiview(mspec, n, seed)
    err = error_tensor_multiview(samples, truth)
    est = spectral_norm_estimate(err, restarts=spec.restarts, iters=spec.iters, seed=seed)
    return est.value


def _ica_cell(spec: SweepSpec, n, seed, sparsity=None):
    if sparsity is None:
        ispec = ICASpec(d=spec.d, k=spec.k, source_law="rademacher")
    else:
        ispec = ICASpec(d=spec.d, k=spec.k, source_law="bernoulli-gaussian",
                        sparsity=sparsity, unit_variance=False)
    samples, A, kappa = gen_ica(ispec, n, seed)
    return error_norm_ica(samples, A, kappa, restarts=spec.restarts, iters=spec.iters, seed=seed)


def run_sweep(spec: SweepSpec, root_seed=0):
    """Measure every (n, seed[, s]) cell of the sweep; returns a list of SweepCell.

    The cell seed combines the root seed with the cell coordinates, so cells
    are reproducible independently of execution order.
    """
    cells = []
    if spec.model == "sparse-ica":
        for si, s in enumerate(spec.sparsity_grid):
            for n in spec.n_grid:
                for r in range(spec.seeds):
                    seed = (root_seed, 1000 + si, int(n), r)
                    err = _ica_cell(spec, int(n), _cell_seed(*seed), sparsity=s)
                    cells.append(SweepCell(spec.model, spec.d, spec.k, f"s={s}", int(n), r, err))
        return cells
    for n in spec.n_grid:
        for r in range(spec.seeds):
            seed = _cell_seed(root_seed, 0, int(n), r)
            if spec.model == "multiview":
                err = _multiview_cell(spec, int(n), seed)
            else:
                err = _ica_cell(spec, int(n), seed)
            cells.append(SweepCell(spec.model, spec.d, spec.k, spec.regime, int(n), r, err))
    return cells


def _cell_seed(root, tag, n, r):
    # Deterministic scalar seed per cell; generators re-split it internally.
    return (int(root) * 1_000_003 + tag * 10_007 + n * 101 + r) % (2 ** 63)


def sweep_slope(cells) -> SlopeFit:
    """Slope fit over per-n mean errors of a sweep's cells."""
    by_n = {}
    for c in cells:
        by_n.setdefault(c.n, []).append(c.error)
    ns = sorted(by_n)
    means = [float(np.mean(by_n[n])) for n in ns]
    return fit_scaling(ns, means)
