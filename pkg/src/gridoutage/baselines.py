"""Reference solvers and scoring for the outage-identification problem.

The exhaustive search is the gold standard when the outage count is
known and small: it scans every k-subset of lines for the best fit of
``y = A s``.  The l1-regularized least-squares solver (coordinate
descent with soft thresholding) is the classical sparse-recovery
baseline.  ``identification_rates`` scores an estimated line set against
the truth as a hit rate / false-alarm rate pair.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .network import MeasurementMatrix

__all__ = [
    "Rates",
    "exhaustive_search",
    "lasso_solve",
    "identification_rates",
    "lasso_kkt_violation",
]


def _dense(a):
    if isinstance(a, MeasurementMatrix):
        a = a.matrix
    if sp.issparse(a):
        return a.toarray()
    return np.asarray(a, dtype=float)


def exhaustive_search(a, y, k, cap=2):
    """Best k-subset of lines under the squared-residual fit of y = A s.

    Cost grows as C(L, k); ``k`` beyond ``cap`` is refused.  Ties resolve
    to the lexicographically smallest subset.  Returns 1-based line numbers.
    """
    if k < 0:
        raise ValueError("outage count must be nonnegative")
    if k > cap:
        raise ValueError(f"exhaustive search over {k}-subsets refused (cap {cap})")
    if k == 0:
        return ()
    a = _dense(a)
    y = np.asarray(y, dtype=float)
    n, L = a.shape

    # residual via the Gram matrix: |y|^2 - 2 c[S] + sum_{ij in S} G_ij
    gram = a.T @ a
    c = a.T @ y
    yy = float(y @ y)
    if k == 1:
        obj = yy - 2.0 * c + np.diag(gram)
        best = int(np.argmin(obj))  # argmin takes the first minimum: lexicographic
        return (best + 1,)
    if k == 2:
        diag = np.diag(gram)
        obj = yy - 2.0 * (c[:, None] + c[None, :]) + diag[:, None] + diag[None, :] + 2.0 * gram
        iu = np.triu_indices(L, k=1)
        vals = obj[iu]
        best = int(np.argmin(vals))
        return (int(iu[0][best]) + 1, int(iu[1][best]) + 1)
    best_obj = math.inf
    best_set = None
    for subset in itertools.combinations(range(L), k):
        s = np.zeros(L)
        s[list(subset)] = 1.0
        r = y - a @ s
        obj = float(r @ r)
        if obj < best_obj:
            best_obj = obj
            best_set = subset
    return tuple(i + 1 for i in best_set)


def lasso_solve(a, y, lam_s, lam_e, max_iter=1000, tol=1e-8):
    """Cyclic coordinate descent for |y - A s - e|^2 + lam_s |s|_1 + lam_e |e|_1.

    ``lam_e = inf`` pins ``e`` at zero (the no-bad-data variant).  Returns
    ``(s, e, converged)``; non-convergence returns the best iterate.
    """
    if lam_s <= 0 or lam_e <= 0:
        raise ValueError("regularization weights must be positive")
    a = _dense(a)
    y = np.asarray(y, dtype=float)
    n, L = a.shape
    col_norm2 = (a * a).sum(axis=0)
    s = np.zeros(L)
    e = np.zeros(n)
    r = y.copy()  # residual y - A s - e

    solve_e = math.isfinite(lam_e)
    for _ in range(max_iter):
        delta = 0.0
        for l in range(L):
            if col_norm2[l] <= 0.0:
                continue
            old = s[l]
            if old != 0.0:
                r += old * a[:, l]
            z = float(a[:, l] @ r)
            new = math.copysign(max(abs(z) - lam_s / 2.0, 0.0), z) / col_norm2[l]
            if new != 0.0:
                r -= new * a[:, l]
            s[l] = new
            delta = max(delta, abs(new - old))
        if solve_e:
            for i in range(n):
                old = e[i]
                z = r[i] + old
                new = math.copysign(max(abs(z) - lam_e / 2.0, 0.0), z)
                r[i] = z - new
                e[i] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            return s, e, True
    return s, e, False


def lasso_kkt_violation(a, y, s, e, lam_s, lam_e):
    """Largest violation of the soft-threshold stationarity conditions."""
    a = _dense(a)
    r = y - a @ s - e
    grad_s = -2.0 * (a.T @ r)
    worst = 0.0
    for l in range(len(s)):
        if s[l] > 0:
            worst = max(worst, abs(grad_s[l] + lam_s))
        elif s[l] < 0:
            worst = max(worst, abs(grad_s[l] - lam_s))
        else:
            worst = max(worst, max(abs(grad_s[l]) - lam_s, 0.0))
    if math.isfinite(lam_e):
        grad_e = -2.0 * r
        for i in range(len(e)):
            if e[i] > 0:
                worst = max(worst, abs(grad_e[i] + lam_e))
            elif e[i] < 0:
                worst = max(worst, abs(grad_e[i] - lam_e))
            else:
                worst = max(worst, max(abs(grad_e[i]) - lam_e, 0.0))
    return worst


@dataclass
class Rates:
    """Hit rate and false-alarm rate of an estimated outage set."""

    kappa_i: float
    kappa_f: float


def identification_rates(truth, estimate):
    """Score an estimated line set: hits over truth, misses over estimate.

    Empty truth counts as fully identified; an empty estimate raises no
    false alarm.
    """
    truth = set(truth)
    estimate = set(estimate)
    hits = len(truth & estimate)
    kappa_i = hits / len(truth) if truth else 1.0
    kappa_f = 1.0 - hits / len(estimate) if estimate else 0.0
    return Rates(kappa_i=kappa_i, kappa_f=kappa_f)
