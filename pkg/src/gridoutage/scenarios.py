"""Ground-truth event simulation: outages, injection noise, and bad data.

A :class:`Scenario` bundles one simulated event: the outage set, the
faulty-bus set, pre/post-event angles, and the corrupted measurement
vector actually seen by the identification pipeline.

Randomness comes from ``numpy.random.Generator`` (PCG64).  For
reproducible experiment tables use :func:`trial_rng`, which derives a
per-trial substream from ``(base_seed, *key)`` via ``SeedSequence``
hashing, so trials can run in any order or in parallel.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import SamplingError
from .network import dc_flow_solve, measurement_matrix, susceptance_matrix

__all__ = [
    "Scenario",
    "trial_rng",
    "sample_outage",
    "sample_faulty_buses",
    "simulate_event",
    "inject_bad_data",
    "make_scenario",
    "outage_indicator",
    "bad_data_indicator",
    "true_decomposition",
    "outage_delta_b",
    "write_scenarios",
    "read_scenarios",
]

_MAX_DRAWS = 1_000_000


@dataclass
class Scenario:
    """One simulated outage event with optional measurement corruption.

    ``outage_lines`` holds 1-based line numbers, ``faulty_buses`` external
    bus ids.  ``theta_corrupt`` differs from ``theta_post`` exactly on the
    faulty buses.  ``noise_std`` is the injection-noise standard deviation
    in per-unit (0 for noiseless events).
    """

    outage_lines: tuple
    faulty_buses: tuple
    theta_pre: np.ndarray
    theta_post: np.ndarray
    theta_corrupt: np.ndarray
    noise_std: float
    seed: object = None

    def to_dict(self):
        return {
            "outage_lines": [int(l) for l in self.outage_lines],
            "faulty_buses": [int(b) for b in self.faulty_buses],
            "theta_pre": [float(v) for v in self.theta_pre],
            "theta_post": [float(v) for v in self.theta_post],
            "theta_corrupt": [float(v) for v in self.theta_corrupt],
            "noise_std": float(self.noise_std),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            outage_lines=tuple(doc["outage_lines"]),
            faulty_buses=tuple(doc["faulty_buses"]),
            theta_pre=np.asarray(doc["theta_pre"], dtype=float),
            theta_post=np.asarray(doc["theta_post"], dtype=float),
            theta_corrupt=np.asarray(doc["theta_corrupt"], dtype=float),
            noise_std=float(doc["noise_std"]),
            seed=doc.get("seed"),
        )


def trial_rng(base_seed, *key):
    """Independent substream for one trial, keyed by integers."""
    return np.random.default_rng([int(base_seed), *[int(k) for k in key]])


def balanced_injections(net):
    """Injections with any imbalance absorbed at the slack bus."""
    p = net.p.copy()
    p[net.slack] -= p.sum()
    return p


def sample_outage(net, k, rng, max_attempts=None):
    """Uniform k-subset of lines whose removal keeps the grid connected.

    Rejection sampling; the attempt budget defaults to ``10 * C(L, k)``
    capped at one million draws.  Returns sorted 1-based line numbers.
    """
    if not 0 <= k <= net.n_lines:
        raise ValueError(f"outage count {k} out of range 0..{net.n_lines}")
    if k == 0:
        return ()
    if max_attempts is None:
        max_attempts = min(10 * math.comb(net.n_lines, k), _MAX_DRAWS)
    for _ in range(max_attempts):
        pick = rng.choice(net.n_lines, size=k, replace=False)
        if net.is_connected(removed_lines=pick):
            return tuple(sorted(net.line_id(int(i)) for i in pick))
    raise SamplingError(
        f"no connected {k}-line outage found in {max_attempts} draws"
    )


def _outage_buses(net, outage_lines):
    """Internal indices of all endpoints of the given outage lines."""
    buses = set()
    for lid in outage_lines:
        l = net.line_index(lid)
        buses.add(int(net.from_idx[l]))
        buses.add(int(net.to_idx[l]))
    return buses


def sample_faulty_buses(net, n, outage_lines, placement, rng):
    """Draw faulty buses without replacement, placed relative to the outage.

    ``placement="involved"`` forces one faulty bus onto an outage endpoint
    (when there is an outage); ``"separated"`` keeps every faulty bus off
    the outage endpoints and their neighbours.  Returns external bus ids.
    """
    if n == 0:
        return ()
    if n > net.n_buses:
        raise ValueError(f"cannot pick {n} faulty buses out of {net.n_buses}")
    n_o = _outage_buses(net, outage_lines)

    if placement == "involved" and n_o:
        first = int(rng.choice(sorted(n_o)))
        rest_pool = [i for i in range(net.n_buses) if i != first]
        rest = rng.choice(len(rest_pool), size=n - 1, replace=False) if n > 1 else []
        chosen = [first] + [rest_pool[i] for i in rest]
    elif placement == "separated":
        forbidden = set(n_o)
        for b in n_o:
            for l in net.lines_at(b):
                forbidden.add(int(net.from_idx[l]))
                forbidden.add(int(net.to_idx[l]))
        pool = [i for i in range(net.n_buses) if i not in forbidden]
        if len(pool) < n:
            raise SamplingError(
                f"only {len(pool)} buses are separated from the outage; need {n}"
            )
        chosen = [pool[i] for i in rng.choice(len(pool), size=n, replace=False)]
    elif placement == "involved":  # no outage to involve with
        chosen = list(rng.choice(net.n_buses, size=n, replace=False))
    else:
        raise ValueError(f"unknown placement {placement!r}")
    return tuple(sorted(net.bus_id(int(i)) for i in chosen))


def outage_delta_b(net, outage_lines):
    """Rank-|outage| susceptance change ``sum_l (1/x_l) m_l m_l^T``."""
    n = net.n_buses
    rows, cols, data = [], [], []
    for lid in outage_lines:
        l = net.line_index(lid)
        f, t = int(net.from_idx[l]), int(net.to_idx[l])
        w = 1.0 / net.x[l]
        rows += [f, t, f, t]
        cols += [f, t, t, f]
        data += [w, w, -w, -w]
    return sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


def simulate_event(net, outage_lines, noise_std_frac, rng):
    """Solve pre- and post-event flows; returns (theta, theta_post, eta).

    The injection perturbation ``eta`` is i.i.d. Gaussian with standard
    deviation ``noise_std_frac`` times the mean absolute pre-event
    injection, then re-centred so total injection stays balanced.
    """
    p = balanced_injections(net)
    b = susceptance_matrix(net)
    theta = dc_flow_solve(b, p, net.slack)

    if noise_std_frac > 0:
        scale = noise_std_frac * np.mean(np.abs(p))
        eta = rng.normal(0.0, scale, size=net.n_buses)
        eta -= eta.mean()
    else:
        eta = np.zeros(net.n_buses)

    b_post = b - outage_delta_b(net, outage_lines)
    theta_post = dc_flow_solve(b_post, p + eta, net.slack)
    return theta, theta_post, eta


def inject_bad_data(theta_post, faulty_buses, theta_pre, net, rng):
    """Add uniform gross errors at the faulty buses.

    Each corrupted entry gets ``U(-tb, tb)`` with ``tb`` the mean absolute
    pre-event angle, so bad data hide at the scale of ordinary angles.
    """
    theta_bar = float(np.mean(np.abs(theta_pre)))
    corrupt = np.asarray(theta_post, dtype=float).copy()
    for bus in sorted(faulty_buses):
        corrupt[net.bus_index(bus)] += rng.uniform(-theta_bar, theta_bar)
    return corrupt


def make_scenario(net, n_outages, n_faulty=0, placement="involved",
                  noise_std_frac=0.0, rng=None, seed=None):
    """Sample one complete scenario; deterministic given ``seed``."""
    if rng is None:
        rng = np.random.default_rng(seed)
    outages = sample_outage(net, n_outages, rng)
    theta, theta_post, _ = simulate_event(net, outages, noise_std_frac, rng)
    faulty = sample_faulty_buses(net, n_faulty, outages, placement, rng)
    corrupt = inject_bad_data(theta_post, faulty, theta, net, rng)
    p = balanced_injections(net)
    noise_std = noise_std_frac * float(np.mean(np.abs(p)))
    return Scenario(
        outage_lines=outages,
        faulty_buses=faulty,
        theta_pre=theta,
        theta_post=theta_post,
        theta_corrupt=corrupt,
        noise_std=noise_std,
        seed=seed,
    )


# -- ground-truth vectors ----------------------------------------------------


def outage_indicator(net, outage_lines):
    s = np.zeros(net.n_lines)
    for lid in outage_lines:
        s[net.line_index(lid)] = 1.0
    return s


def bad_data_indicator(net, faulty_buses):
    """Binary indicator of every line incident to a faulty bus."""
    s = np.zeros(net.n_lines)
    for bus in faulty_buses:
        s[net.lines_at(net.bus_index(bus))] = 1.0
    return s


def true_decomposition(net, scenario):
    """Exact (s, e) with ``B (theta_corrupt - theta_pre) = A s + e + eta``.

    ``s`` is the union indicator of outage lines and corrupted lines; the
    sparse error ``e`` collects the effect of corrupted lines that are not
    themselves in outage (a corrupted line that is also in outage carries no
    flow, so it contributes nothing to ``e``).
    """
    s_o = outage_indicator(net, scenario.outage_lines)
    s_b = bad_data_indicator(net, scenario.faulty_buses)
    s = np.maximum(s_o, s_b)
    s_b_only = np.clip(s_b - s_o, 0.0, 1.0)
    a_post = measurement_matrix(net, scenario.theta_post)
    e = -(a_post @ s_b_only)
    return s, e


# -- JSONL serialization -----------------------------------------------------


def write_scenarios(path, scenarios):
    with open(path, "w") as fh:
        for sc in scenarios:
            fh.write(json.dumps(sc.to_dict()) + "\n")


def read_scenarios(path):
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(Scenario.from_dict(json.loads(line)))
    return out
