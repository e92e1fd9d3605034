"""Recovery metrics: distance, component matching, error tables, recovery curves.

The recovery distance between two vectors is the sine of their angle,
which is invariant to scaling and sign and therefore blind to the inherent
sign ambiguity of odd-order rank-1 terms.  Estimated components are matched
to ground truth greedily on the smallest pairwise distance (max over modes
for asymmetric models); aggregate error rows follow the conventions of the
experiment harness: per-component square error averaged over modes, squared
relative weight error, and per-trial iteration counts.
"""

from dataclasses import dataclass, replace
from itertools import permutations

import numpy as np

from .tensor import CPModel

__all__ = [
    "dist",
    "pairwise_dist",
    "match_components",
    "component_square_error",
    "EvaluationReport",
    "TableRow",
    "table_row",
    "recovery_curve",
    "TABLE_COLUMNS",
]

TABLE_COLUMNS = ("k", "avg_square_error", "avg_weight_error", "avg_iterations",
                 "avg_square_error/k", "avg_weight_error/k")


def dist(u, v):
    """sin of the angle between u and v: sqrt(1 - cos^2), in [0, 1].

    Equals sup over z orthogonal to u of <z, v>/(|z||v|); invariant to the
    norm and sign of both inputs.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("dist is undefined for zero vectors")
    c = float(u @ v) / (nu * nv)
    return float(np.sqrt(max(0.0, 1.0 - min(1.0, c * c))))


def pairwise_dist(U, V):
    """Distance matrix between columns of U (d, p) and V (d, q), normalized."""
    Un = U / np.linalg.norm(U, axis=0, keepdims=True)
    Vn = V / np.linalg.norm(V, axis=0, keepdims=True)
    G = np.abs(Un.T @ Vn)
    return np.sqrt(np.clip(1.0 - G ** 2, 0.0, 1.0))


def _pair_score(est: CPModel, truth: CPModel):
    """Max-over-modes distance matrix between estimated and true components."""
    S = None
    for Fe, Ft in zip(est.factors, truth.factors):
        D = pairwise_dist(Fe, Ft)
        S = D if S is None else np.maximum(S, D)
    return S


@dataclass
class EvaluationReport:
    """Match of an estimated model against ground truth plus error statistics.

    ``permutation[i]`` is the truth index matched to estimated component i
    (-1 when unmatched); ``truth_dist[j]`` the matched score per truth
    component (nan when unrecovered).  The aggregate error fields are filled
    by :func:`table_row`.
    """

    permutation: np.ndarray
    truth_dist: np.ndarray
    recovery_rate: float
    threshold: float
    avg_square_error: float = np.nan
    avg_weight_error: float = np.nan
    avg_iterations: float = np.nan

    @property
    def matched(self):
        return self.permutation >= 0


def match_components(est: CPModel, truth: CPModel, threshold=0.05) -> EvaluationReport:
    """Greedy globally-minimal matching of estimated to true components.

    Repeatedly pairs the smallest remaining entry of the max-over-modes
    distance matrix; pairs scoring above ``threshold`` do not count as
    recovered.
    """
    if est.d != truth.d:
        raise ValueError("estimate and truth have different dimensions")
    S = _pair_score(est, truth).copy()
    p, q = S.shape
    perm = np.full(p, -1, dtype=int)
    truth_dist = np.full(q, np.nan)
    for _ in range(min(p, q)):
        i, j = np.unravel_index(np.argmin(S), S.shape)
        score = S[i, j]
        if not np.isfinite(score):
            break
        if score <= threshold:
            perm[i] = j
            truth_dist[j] = score
        S[i, :] = np.inf
        S[:, j] = np.inf
    rate = float(np.isfinite(truth_dist).mean())
    return EvaluationReport(permutation=perm, truth_dist=truth_dist,
                            recovery_rate=rate, threshold=threshold)


def best_permutation_cost(est: CPModel, truth: CPModel):
    """Exhaustive minimal total matching cost; test oracle for small k."""
    S = _pair_score(est, truth)
    k = min(S.shape)
    if max(S.shape) > 8:
        raise ValueError("exhaustive matching is for small models only")
    best = np.inf
    for perm in permutations(range(S.shape[1]), k):
        best = min(best, sum(S[i, j] for i, j in enumerate(perm)))
    return best


_SIGN_TRIPLES = ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1))


def component_square_error(est_vectors, truth_vectors, symmetric=False):
    """Mean squared factor error over modes, minimized over admissible signs.

    For order-3 components the admissible sign flips have product +1 (two
    modes flip together); for symmetric even-order components every mode's
    sign is free.
    """
    est = [np.asarray(v, dtype=float) for v in est_vectors]
    tru = [np.asarray(v, dtype=float) for v in truth_vectors]
    aligns = np.array([e @ t for e, t in zip(est, tru)])
    if symmetric or len(est) != 3:
        total = np.abs(aligns).sum()
    else:
        total = max(sum(s * a for s, a in zip(trip, aligns)) for trip in _SIGN_TRIPLES)
    return float((2.0 * len(est) - 2.0 * total) / len(est))


@dataclass
class TableRow:
    k: int
    avg_square_error: float
    avg_weight_error: float
    avg_iterations: float
    n_matched: int
    n_trials: int
    empty: bool = False

    def as_csv(self):
        if self.empty:
            return f"{self.k},nan,nan,{self.avg_iterations:.6g},nan,nan"
        return (f"{self.k},{self.avg_square_error:.6g},{self.avg_weight_error:.6g},"
                f"{self.avg_iterations:.6g},{self.avg_square_error / self.k:.6g},"
                f"{self.avg_weight_error / self.k:.6g}")


def _trial_matches(report, truth: CPModel, threshold):
    """Nearest truth component per trial and the max-over-modes distance."""
    trials = report.trials
    n_modes = len(trials.factors)
    S = None
    for r in range(n_modes):
        D = pairwise_dist(trials.factors[r], truth.factors[r])
        S = D if S is None else np.maximum(S, D)
    jstar = S.argmin(axis=1)
    dmin = S[np.arange(S.shape[0]), jstar]
    ok = (dmin <= threshold) & ~trials.failed
    return jstar, dmin, ok


def table_row(runs, match_threshold=0.2) -> TableRow:
    """Aggregate per-trial recovery errors into one table row.

    ``runs`` is a list of (RunReport, truth CPModel) pairs (one per random
    run).  Every non-failed trial is matched to its nearest true component;
    trials within ``match_threshold`` (max-over-modes distance) contribute a
    square error and a squared relative weight error.  Iteration counts
    average over all non-failed trials.  A row with no matched trial is
    flagged empty.
    """
    if not runs:
        raise ValueError("no runs to aggregate")
    sq, wq, its = [], [], []
    n_trials = 0
    k = runs[0][1].k
    for report, truth in runs:
        trials = report.trials
        jstar, dmin, ok = _trial_matches(report, truth, match_threshold)
        live = ~trials.failed
        its.append(trials.iterations[live])
        n_trials += int(live.sum())
        n_modes = len(trials.factors)
        w_true = truth.signed_weights
        for t in np.flatnonzero(ok):
            j = jstar[t]
            est_vecs = [trials.factors[r][:, t] for r in range(n_modes)]
            tru_vecs = [truth.factors[r][:, j] for r in range(n_modes)]
            sq.append(component_square_error(est_vecs, tru_vecs, symmetric=n_modes == 1))
            wq.append((trials.weights[t] - w_true[j]) ** 2 / w_true[j] ** 2)
    avg_iter = float(np.concatenate(its).mean()) if n_trials else np.nan
    if not sq:
        return TableRow(k, np.nan, np.nan, avg_iter, 0, n_trials, empty=True)
    return TableRow(k, float(np.mean(sq)), float(np.mean(wq)), avg_iter, len(sq), n_trials)


def recovery_curve(oracle, truth: CPModel, cfg, L_grid, threshold=0.05):
    """Fraction of true components hit by some trial, as a function of L.

    Runs max(L_grid) trials once; because trial initializations are drawn
    prefix-stably, the first L trials coincide with an L-trial run under the
    same seed, so the curve is exactly nondecreasing in L.
    A truth component counts as recovered at L when any of the first L
    non-failed trials lies within ``threshold`` of it (max over modes).
    """
    from .decomposition import decompose  # local import avoids a cycle

    L_grid = [int(L) for L in L_grid]
    if any(b <= a for a, b in zip(L_grid, L_grid[1:])):
        raise ValueError("L_grid must be strictly increasing")
    cfg = replace(cfg, n_init=max(L_grid))
    report = decompose(oracle, cfg)
    jstar, dmin, ok = _trial_matches(report, truth, threshold)
    rates = []
    for L in L_grid:
        hit = set(jstar[: L][ok[: L]].tolist())
        rates.append((L, len(hit) / truth.k))
    return rates
