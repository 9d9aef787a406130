"""Swept approximate message passing for the joint sparse model y = A s + e + eta.

``s`` is a binary line-state indicator with i.i.d. Bernoulli(p_o) prior;
``e`` is a sparse real error vector with a Bernoulli-Gaussian-mixture
prior (spike at zero plus K Gaussian components); ``eta`` is white noise
with variance ``noise_var``.  The solver alternates:

* output half-step: residual scores ``g_n``, variances ``V_n`` and
  Onsager-corrected means ``omega_n`` at every measurement node;
* a sequential sweep over one random permutation of all L + N variables,
  where each variable is re-estimated from its Gaussian pseudo-data
  ``(R, Sigma^2)`` through the posterior-mean/variance denoiser of its
  prior, and the change is pushed immediately into the affected
  ``V_i, omega_i`` (this sweeping is what keeps the iteration stable on
  very sparse A);
* one expectation-maximization pass that re-fits ``p_o``, the mixture
  weights/means/variances, and the noise level from the current marginals.

Iteration stops when the squared change of the indicator estimate falls
below ``eps`` or after ``t_max`` sweeps.  With a fixed ``seed`` the result
is bit-for-bit reproducible.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from .errors import SolverDivergedError
from .network import MeasurementMatrix

__all__ = [
    "PriorParams",
    "SolverConfig",
    "SolverState",
    "SparseEstimate",
    "denoise_indicator",
    "denoise_error",
    "initial_priors",
    "em_update_priors",
    "em_update_noise",
    "swamp_solve",
    "write_trace_csv",
]

PROB_FLOOR = 1e-12
VAR_FLOOR = 1e-12
NOISE_FLOOR = 1e-10
SPIKE_CEILING = 1e-3   # mixture mass the EM may never take away from the error components
_BIG_VAR = 1e18
_LOG2PI = math.log(2.0 * math.pi)


@dataclass
class PriorParams:
    """Prior parameters: Bernoulli p_o, B-GM mixture, and noise variance.

    ``rho`` has K+1 entries (spike weight first) and is kept normalized;
    ``mu`` and ``sigma2`` have K entries each.
    """

    p_o: float
    rho: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    noise_var: float

    def __post_init__(self):
        self.p_o = float(min(max(self.p_o, PROB_FLOOR), 1.0 - PROB_FLOOR))
        self.rho = np.clip(np.asarray(self.rho, dtype=float), 0.0, None)
        total = self.rho.sum()
        if not total > 0:
            raise ValueError("mixture weights must not all vanish")
        self.rho = self.rho / total
        self.mu = np.asarray(self.mu, dtype=float).copy()
        self.sigma2 = np.maximum(np.asarray(self.sigma2, dtype=float), VAR_FLOOR)
        if len(self.rho) != len(self.mu) + 1 or len(self.mu) != len(self.sigma2):
            raise ValueError("inconsistent mixture sizes")
        self.noise_var = float(max(self.noise_var, NOISE_FLOOR))

    @property
    def n_components(self):
        return len(self.mu)


@dataclass
class SolverConfig:
    n_components: int = 3       # K
    eps: float = 1e-6           # stop when sum_l (ds_l)^2 <= eps
    t_max: int = 200
    em_enabled: bool = True
    fix_p_o: float = None       # hold p_o at this value (skipped by EM)
    fix_noise_var: float = None  # hold the noise variance (skipped by EM)
    error_channel: bool = True  # False: no sparse error term (clean-measurement model)
    seed: int = 0               # sweep-permutation stream
    trace: bool = False


@dataclass
class SolverState:
    """Marginal state after a sweep, as consumed by the EM updates."""

    y: np.ndarray
    s_hat: np.ndarray
    v_s: np.ndarray
    e_hat: np.ndarray
    v_e: np.ndarray
    V: np.ndarray
    omega: np.ndarray
    g: np.ndarray
    iteration: int = 0


@dataclass
class SparseEstimate:
    s_hat: np.ndarray
    e_hat: np.ndarray
    priors: PriorParams
    iterations: int
    converged: bool
    final_change: float
    mult_count: int = 0
    mults_per_sweep: float = 0.0
    trace: list = field(default=None, repr=False)


# -- scalar denoisers ----------------------------------------------------------


def denoise_indicator(sigma2, r, p_o):
    """Posterior mean/variance of a {0,1} Bernoulli(p_o) variable.

    The pseudo-likelihood is N(r; s, sigma2); the posterior activation is
    a logistic in r, evaluated in the log-odds domain for stability.
    """
    sigma2 = max(float(sigma2), 1e-15)
    p_o = min(max(float(p_o), PROB_FLOOR), 1.0 - PROB_FLOOR)
    z = math.log(p_o / (1.0 - p_o)) + (2.0 * float(r) - 1.0) / (2.0 * sigma2)
    if z >= 0:
        pi = 1.0 / (1.0 + (math.exp(-z) if z < 700 else 0.0))
    else:
        ez = math.exp(z) if z > -700 else 0.0
        pi = ez / (1.0 + ez)
    return pi, pi * (1.0 - pi)


def denoise_error(sigma2, r, priors):
    """Posterior mean/variance under the spike-plus-Gaussian-mixture prior."""
    log_rho = [math.log(w) if w > 0 else -math.inf for w in priors.rho]
    return _denoise_error_scalar(
        float(sigma2), float(r), log_rho, priors.mu.tolist(), priors.sigma2.tolist()
    )


def _denoise_error_scalar(sigma2, r, log_rho, mu, s2):
    # mixture weights in the log domain with max subtraction; the spike
    # component sees likelihood N(r; 0, sigma2) and contributes no moments
    sigma2 = max(sigma2, 1e-15)
    k = len(mu)
    logw = [log_rho[0] - 0.5 * (_LOG2PI + math.log(sigma2)) - r * r / (2.0 * sigma2)]
    gam = [0.0]
    zet = [0.0]
    for j in range(k):
        lv = s2[j] + sigma2
        d = r - mu[j]
        logw.append(log_rho[j + 1] - 0.5 * (_LOG2PI + math.log(lv)) - d * d / (2.0 * lv))
        prec = 1.0 / sigma2 + 1.0 / s2[j]
        gam.append((r / sigma2 + mu[j] / s2[j]) / prec)
        zet.append(1.0 / prec)
    top = max(logw)
    if not math.isfinite(top):
        return 0.0, 0.0
    ws = [math.exp(lw - top) for lw in logw]
    tot = sum(ws)
    mean = 0.0
    second = 0.0
    for j in range(1, k + 1):
        w = ws[j] / tot
        mean += w * gam[j]
        second += w * (zet[j] + gam[j] * gam[j])
    var = second - mean * mean
    return mean, max(var, 0.0)


# -- EM updates ----------------------------------------------------------------


def initial_priors(y, n_lines, n_components=3):
    """Weakly informative, scale-adaptive starting point for EM."""
    y = np.asarray(y, dtype=float)
    scale = max(float(np.var(y)), VAR_FLOOR)
    k = n_components
    p_o = min(5.0, n_lines / 10.0) / n_lines
    rho = np.r_[0.9, np.full(k, 0.1 / k)]
    # variance ladder spread geometrically around the observation scale
    expo = np.arange(1, k + 1) - (k + 1) / 2.0
    sigma2 = (10.0 ** expo) * scale
    return PriorParams(
        p_o=p_o, rho=rho, mu=np.zeros(k), sigma2=sigma2, noise_var=0.1 * scale
    )


def _log_responsibilities(r, s2_pseudo, priors):
    """Joint log weights of spike and mixture components per entry."""
    k = priors.n_components
    logpsi = np.empty((k + 1, len(r)))
    with np.errstate(divide="ignore"):
        log_rho = np.log(priors.rho)
    logpsi[0] = log_rho[0] - 0.5 * (_LOG2PI + np.log(s2_pseudo)) - r**2 / (2.0 * s2_pseudo)
    for j in range(k):
        lv = priors.sigma2[j] + s2_pseudo
        logpsi[j + 1] = (
            log_rho[j + 1]
            - 0.5 * (_LOG2PI + np.log(lv))
            - (r - priors.mu[j]) ** 2 / (2.0 * lv)
        )
    return logpsi


def em_update_priors(state, priors):
    """One maximization step for p_o and the B-GM parameters.

    The error entries enter through their Gaussian pseudo-data
    ``r = e_hat + (y - omega)`` with variance ``noise_var + V`` (the same
    quantities the denoiser consumes), so the E-step sees the evidence
    once, not the already-shrunk posterior.  Component moments combine
    pseudo-data and component prior by their precisions.  Weights are
    renormalized and variances floored, so the result always satisfies
    the prior invariants.
    """
    p_o = float(np.mean(state.s_hat))

    r = np.asarray(state.e_hat, dtype=float) + (state.y - state.omega)
    s2_pseudo = np.maximum(priors.noise_var + np.asarray(state.V, dtype=float), VAR_FLOOR)
    k = priors.n_components

    logpsi = _log_responsibilities(r, s2_pseudo, priors)
    resp = np.exp(logpsi - logsumexp(logpsi, axis=0))
    nonspike = resp[1:]              # joint responsibility of component j, entry n
    active = nonspike.sum(axis=0)    # total non-spike mass per entry
    # keeping a sliver of mixture mass prevents the error channel from
    # dying irreversibly before it has found its support
    lam = float(min(max(np.mean(active), SPIKE_CEILING), 1.0 - PROB_FLOOR))

    total = active.sum()
    if total <= 1e-300:
        cond = priors.rho[1:] / max(priors.rho[1:].sum(), PROB_FLOOR)
        rho = np.r_[1.0 - lam, lam * cond]
        return PriorParams(p_o, rho, priors.mu, priors.sigma2, priors.noise_var)

    weight = nonspike.sum(axis=1)    # sum_n of joint responsibilities, per component
    cond_w = weight / total

    prec = 1.0 / s2_pseudo + 1.0 / priors.sigma2[:, None]
    gamma = (r / s2_pseudo + priors.mu[:, None] / priors.sigma2[:, None]) / prec
    zeta = 1.0 / prec

    safe = weight > 1e-300
    mu = priors.mu.copy()
    mu[safe] = (nonspike * gamma).sum(axis=1)[safe] / weight[safe]
    sigma2 = priors.sigma2.copy()
    spread = (nonspike * ((mu[:, None] - gamma) ** 2 + zeta)).sum(axis=1)
    sigma2[safe] = spread[safe] / weight[safe]

    rho = np.r_[1.0 - lam, lam * cond_w]
    return PriorParams(p_o, rho, mu, sigma2, priors.noise_var)


def em_update_noise(state, noise_var):
    """Noise-variance maximization from the output-node residuals."""
    v = np.maximum(np.asarray(state.V, dtype=float), 1e-18)
    res2 = (state.y - state.omega) ** 2
    prec = 1.0 / noise_var + 1.0 / v
    new = float(np.mean((res2 / v) / prec + 1.0 / prec))
    return max(new, NOISE_FLOOR)


# -- the sweep -----------------------------------------------------------------


def _columns(a):
    """Per-line endpoint rows and coefficients from a sparse/dense matrix."""
    if isinstance(a, MeasurementMatrix):
        a = a.matrix
    if not sp.issparse(a):
        a = sp.csc_matrix(np.asarray(a, dtype=float))
    a = a.tocsc()
    cols = []
    for l in range(a.shape[1]):
        lo, hi = a.indptr[l], a.indptr[l + 1]
        rows = a.indices[lo:hi].tolist()
        vals = a.data[lo:hi].tolist()
        cols.append((rows, vals, [v * v for v in vals]))
    return a.shape[0], a.shape[1], cols


def _sweep(perm, cols, y, s_hat, v_s, e_hat, v_e, V, omega, g,
           noise_var, log_odds, log_rho, mu, s2):
    """One sequential pass over every variable; mutates the state lists.

    Returns (squared indicator change, multiply count for this pass).
    """
    n_lines = len(s_hat)
    change = 0.0
    mults = 0
    for idx in perm:
        if idx < n_lines:
            l = idx
            rows, vals, vals2 = cols[l]
            ssum = 0.0
            rsum = 0.0
            for j in range(len(rows)):
                i = rows[j]
                inv = 1.0 / (noise_var + V[i]) if noise_var + V[i] > 1e-15 else 1e15
                ssum += vals2[j] * inv
                rsum += vals[j] * (y[i] - omega[i]) * inv
            mults += 5 * len(rows)
            if ssum > 1.0 / _BIG_VAR:
                sig2_l = 1.0 / ssum
                r = s_hat[l] + sig2_l * rsum
            else:
                sig2_l = _BIG_VAR   # uninformative column: fall back to the prior
                r = s_hat[l]
            z = log_odds + (2.0 * r - 1.0) / (2.0 * sig2_l)
            if z >= 0:
                new_s = 1.0 / (1.0 + (math.exp(-z) if z < 700 else 0.0))
            else:
                ez = math.exp(z) if z > -700 else 0.0
                new_s = ez / (1.0 + ez)
            new_vs = new_s * (1.0 - new_s)
            mults += 6
            ds = new_s - s_hat[l]
            dv = new_vs - v_s[l]
            s_hat[l] = new_s
            v_s[l] = new_vs
            change += ds * ds
            for j in range(len(rows)):
                i = rows[j]
                v_old = V[i]
                V[i] = v_old + vals2[j] * dv
                omega[i] += vals[j] * ds - g[i] * (V[i] - v_old)
            mults += 3 * len(rows) + 1
        else:
            n = idx - n_lines
            sig2_n = noise_var + V[n]
            r = e_hat[n] + (y[n] - omega[n])
            new_e, new_ve = _denoise_error_scalar(sig2_n, r, log_rho, mu, s2)
            mults += 11 * len(mu) + 8
            de = new_e - e_hat[n]
            dv = new_ve - v_e[n]
            e_hat[n] = new_e
            v_e[n] = new_ve
            v_old = V[n]
            V[n] = v_old + dv
            omega[n] += de - g[n] * (V[n] - v_old)
            mults += 1
    return change, mults


def swamp_solve(a, y, config=None, priors=None):
    """Estimate (s_hat, e_hat) from y = A s + e + eta by swept message passing.

    Parameters
    ----------
    a : MeasurementMatrix, sparse or dense N x L matrix.
    y : observation vector, length N.
    config : SolverConfig, optional.
    priors : PriorParams, optional
        Starting point (and, with EM disabled, the fixed prior).  Defaults
        to :func:`initial_priors`, with ``config.fix_p_o`` /
        ``config.fix_noise_var`` overriding single fields.

    Raises
    ------
    ValueError on dimension mismatch; SolverDivergedError if the iteration
    produces non-finite values (the last finite state is attached).
    """
    config = config or SolverConfig()
    n_rows, n_lines, cols = _columns(a)
    y = np.asarray(y, dtype=float)
    if y.shape != (n_rows,):
        raise ValueError(f"observation vector has shape {y.shape}, expected ({n_rows},)")

    if priors is None:
        priors = initial_priors(y, n_lines, config.n_components)
    if config.fix_p_o is not None:
        priors = PriorParams(config.fix_p_o, priors.rho, priors.mu,
                             priors.sigma2, priors.noise_var)
    if config.fix_noise_var is not None:
        priors = PriorParams(priors.p_o, priors.rho, priors.mu,
                             priors.sigma2, config.fix_noise_var)

    rng = np.random.default_rng(config.seed)
    n = n_rows
    ylist = y.tolist()
    s_hat = [1.0] * n_lines
    v_s = [n / n_lines] * n_lines
    e_hat = [0.0] * n
    v_e = [1.0 / n if config.error_channel else 0.0] * n
    V = [1.0] * n
    omega = list(ylist)
    g = [0.0] * n
    n_vars = n_lines + n if config.error_channel else n_lines

    trace = [] if config.trace else None
    total_mults = 0
    change = math.inf
    converged = False
    t = 0
    while t < config.t_max:
        t += 1
        noise_var = priors.noise_var
        # output half-step: scores from the last sweep's V, omega, then a
        # fresh variance/mean pass with the Onsager correction -g*V
        for i in range(n):
            g[i] = (ylist[i] - omega[i]) / (noise_var + V[i])
            V[i] = v_e[i]
            omega[i] = e_hat[i]
        for l in range(n_lines):
            rows, vals, vals2 = cols[l]
            for j in range(len(rows)):
                i = rows[j]
                V[i] += vals2[j] * v_s[l]
                omega[i] += vals[j] * s_hat[l]
        for i in range(n):
            omega[i] -= g[i] * V[i]
        total_mults += 2 * n + 4 * n_lines  # g, V and omega passes

        log_odds = math.log(priors.p_o / (1.0 - priors.p_o))
        log_rho = [math.log(w) if w > 0 else -math.inf for w in priors.rho]
        perm = rng.permutation(n_vars)
        change, mults = _sweep(
            perm, cols, ylist, s_hat, v_s, e_hat, v_e, V, omega, g,
            noise_var, log_odds, log_rho, priors.mu.tolist(), priors.sigma2.tolist(),
        )
        total_mults += mults

        state = SolverState(
            y=y, s_hat=np.array(s_hat), v_s=np.array(v_s),
            e_hat=np.array(e_hat), v_e=np.array(v_e),
            V=np.array(V), omega=np.array(omega), g=np.array(g), iteration=t,
        )
        if not (math.isfinite(change)
                and np.isfinite(state.V).all() and np.isfinite(state.omega).all()
                and np.isfinite(state.e_hat).all()):
            raise SolverDivergedError(f"non-finite state at sweep {t}", state=state)

        if config.em_enabled:
            if config.error_channel:
                new = em_update_priors(state, priors)
            else:
                new = PriorParams(
                    float(np.mean(state.s_hat)), priors.rho, priors.mu,
                    priors.sigma2, priors.noise_var,
                )
            noise = em_update_noise(state, priors.noise_var)
            priors = PriorParams(
                priors.p_o if config.fix_p_o is not None else new.p_o,
                new.rho, new.mu, new.sigma2,
                priors.noise_var if config.fix_noise_var is not None else noise,
            )
            total_mults += (13 * priors.n_components + 5) * n + 5 * n + n_lines

        if trace is not None:
            trace.append(
                {"iteration": t, "change": change,
                 "p_o": priors.p_o, "noise_var": priors.noise_var}
            )
        if change <= config.eps:
            converged = True
            break

    return SparseEstimate(
        s_hat=np.array(s_hat),
        e_hat=np.array(e_hat),
        priors=priors,
        iterations=t,
        converged=converged,
        final_change=change,
        mult_count=total_mults,
        mults_per_sweep=total_mults / max(t, 1),
        trace=trace,
    )


def write_trace_csv(estimate, path):
    """Dump the per-iteration trace (if recorded) for debugging."""
    if estimate.trace is None:
        raise ValueError("estimate carries no trace; solve with trace=True")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["iteration", "change", "p_o", "noise_var"])
        writer.writeheader()
        writer.writerows(estimate.trace)
