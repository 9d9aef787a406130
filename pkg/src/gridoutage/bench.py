"""Monte-Carlo experiment harness over simulated outage scenarios.

An experiment fixes a case file, an outage count, a bad-data placement
and a noise level, then scores an identification algorithm over
``locations`` random outage sets times ``trials`` independent noise /
bad-data realizations each.  Every trial draws its randomness from a
``(seed, location, realization)`` substream, so a run is reproducible
trial by trial and may be distributed over worker processes without
changing any number.

Two stages are scored for each trial: the raw hard-decided indicator
(before any bad-data handling) and the final outage set after the
separation/recovery phases.  Wall-clock accounting covers only the
identification call, never the scenario simulation.
"""

import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .baselines import exhaustive_search, identification_rates, lasso_solve
from .caseio import load_case
from .identify import IdentifyConfig, build_observation, identify, lines_from_indicator
from .network import measurement_matrix, susceptance_matrix
from .scenarios import (
    balanced_injections,
    inject_bad_data,
    sample_faulty_buses,
    sample_outage,
    simulate_event,
    trial_rng,
)

__all__ = ["ExperimentConfig", "TrialRecord", "Report", "run_experiment",
           "write_report", "report_from_json"]

_ALGORITHMS = ("swamp", "lasso", "es")


@dataclass
class ExperimentConfig:
    case: str
    fmt: str = None
    outages: int = 2
    bad_buses: int = 0
    placement: str = "involved"
    noise_std: float = 0.0          # fraction of the mean absolute injection
    locations: int = 100
    trials: int = 3                 # realizations per location
    seed: int = 0
    alg: str = "swamp"
    known_ssi: bool = False
    tau: float = 0.5
    n_components: int = 3
    eps: float = 1e-6
    t_max: int = 200
    workers: int = 1
    keep_trials: bool = False
    lasso_lam_frac: float = 0.01    # lambda_s as a fraction of |A^T y|_inf
    error_channel: bool = None      # default: model bad data iff bad_buses > 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("need at least one realization per location")
        if self.locations < 0 or self.outages < 0 or self.bad_buses < 0:
            raise ValueError("counts must be nonnegative")
        if self.noise_std < 0:
            raise ValueError("noise level must be nonnegative")
        if self.alg not in _ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.alg!r}")
        if self.alg == "es" and not (self.known_ssi and self.outages <= 2):
            raise ValueError("exhaustive search needs known_ssi and at most 2 outages")
        if self.placement not in ("involved", "separated"):
            raise ValueError(f"unknown placement {self.placement!r}")


@dataclass
class TrialRecord:
    location: int
    realization: int
    outage_lines: tuple
    faulty_buses: tuple
    kappa_i_sphase: float
    kappa_f_sphase: float
    kappa_i_final: float
    kappa_f_final: float
    runtime_s: float
    iterations: int = 0

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["outage_lines"] = list(self.outage_lines)
        d["faulty_buses"] = list(self.faulty_buses)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["outage_lines"] = tuple(d["outage_lines"])
        d["faulty_buses"] = tuple(d["faulty_buses"])
        return cls(**d)


@dataclass
class Report:
    config: dict
    n_buses: int
    n_lines: int
    n_trials: int
    kappa_i_sphase: float
    kappa_f_sphase: float
    kappa_i_final: float
    kappa_f_final: float
    mean_runtime_s: float
    p95_runtime_s: float
    records: list = None


@lru_cache(maxsize=8)
def _cached_case(path, fmt):
    return load_case(path, fmt)


def _solver_seed(config, loc, real):
    return [config.seed, loc, real, 0x5eed]


def _run_trial(net, config, loc, real):
    outages = sample_outage(net, config.outages, trial_rng(config.seed, loc))
    rng = trial_rng(config.seed, loc, real)
    theta, theta_post, _ = simulate_event(net, outages, config.noise_std, rng)
    faulty = sample_faulty_buses(net, config.bad_buses, outages, config.placement, rng)
    corrupt = inject_bad_data(theta_post, faulty, theta, net, rng)

    p = balanced_injections(net)
    true_noise_var = (config.noise_std * float(np.mean(np.abs(p)))) ** 2

    if config.alg == "swamp":
        error_channel = (
            config.error_channel if config.error_channel is not None
            else config.bad_buses > 0
        )
        idc = IdentifyConfig(
            tau=config.tau, n_components=config.n_components, eps=config.eps,
            t_max=config.t_max, seed=_solver_seed(config, loc, real),
            known_ssi=config.known_ssi,
            n_outages=config.outages if config.known_ssi else None,
            noise_var=true_noise_var if config.known_ssi else None,
            error_channel=error_channel,
        )
        t0 = time.perf_counter()
        result = identify(net, theta, corrupt, idc)
        runtime = time.perf_counter() - t0
        final_lines = result.outage_lines
        flagged = result.flagged_lines
        iters = result.estimate.iterations
    else:
        b = susceptance_matrix(net)
        t0 = time.perf_counter()
        y = build_observation(b, theta, corrupt)
        a = measurement_matrix(net, corrupt)
        if config.alg == "es":
            final_lines = exhaustive_search(a, y, config.outages)
            iters = 0
        else:
            aty = np.abs(a.matrix.T @ y)
            lam_s = max(config.lasso_lam_frac * float(aty.max()), 1e-12)
            lam_e = math.inf if config.bad_buses == 0 else 2.0 * float(np.abs(y).max()) * config.lasso_lam_frac
            s, _, _ = lasso_solve(a, y, lam_s, lam_e)
            if config.known_ssi:
                order = np.argsort(-s, kind="stable")[: config.outages]
                final_lines = tuple(int(i) + 1 for i in sorted(order))
            else:
                final_lines = tuple(int(i) + 1 for i in np.flatnonzero(s >= config.tau))
            iters = 0
        runtime = time.perf_counter() - t0
        flagged = final_lines

    r_final = identification_rates(outages, final_lines)
    r_stage = identification_rates(outages, flagged)
    return TrialRecord(
        location=loc, realization=real,
        outage_lines=outages, faulty_buses=faulty,
        kappa_i_sphase=r_stage.kappa_i, kappa_f_sphase=r_stage.kappa_f,
        kappa_i_final=r_final.kappa_i, kappa_f_final=r_final.kappa_f,
        runtime_s=runtime, iterations=iters,
    )


def _run_slice(config_dict, lo, hi):
    config = ExperimentConfig(**config_dict)
    net = _cached_case(config.case, config.fmt)
    return [
        _run_trial(net, config, t // config.trials, t % config.trials)
        for t in range(lo, hi)
    ]


def run_experiment(config):
    """Run all trials and aggregate; deterministic for a fixed seed."""
    total = config.locations * config.trials
    cfg_dict = dataclasses.asdict(config)
    if config.workers > 1 and total > 1:
        bounds = np.linspace(0, total, config.workers + 1).astype(int)
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            parts = pool.map(
                _run_slice,
                [cfg_dict] * config.workers,
                bounds[:-1].tolist(),
                bounds[1:].tolist(),
            )
            records = [rec for part in parts for rec in part]
    else:
        records = _run_slice(cfg_dict, 0, total)

    net = _cached_case(config.case, config.fmt)
    if records:
        runtimes = np.array([r.runtime_s for r in records])
        agg = {
            "kappa_i_sphase": float(np.mean([r.kappa_i_sphase for r in records])),
            "kappa_f_sphase": float(np.mean([r.kappa_f_sphase for r in records])),
            "kappa_i_final": float(np.mean([r.kappa_i_final for r in records])),
            "kappa_f_final": float(np.mean([r.kappa_f_final for r in records])),
            "mean_runtime_s": float(runtimes.mean()),
            "p95_runtime_s": float(np.percentile(runtimes, 95)),
        }
    else:
        agg = dict.fromkeys(
            ["kappa_i_sphase", "kappa_f_sphase", "kappa_i_final",
             "kappa_f_final", "mean_runtime_s", "p95_runtime_s"], None
        )
    return Report(
        config=cfg_dict,
        n_buses=net.n_buses,
        n_lines=net.n_lines,
        n_trials=len(records),
        records=records if config.keep_trials else None,
        **agg,
    )


_CSV_COLUMNS = [
    "N", "L", "outages", "bad_buses", "noise_std", "algorithm",
    "kappa_I_sphase", "kappa_I_final", "kappa_F_sphase", "kappa_F_final",
    "trials", "mean_runtime_s",
]


def write_report(report, path, fmt="csv"):
    """Write a report as a one-row CSV (header only when empty) or as JSON."""
    if fmt == "csv":
        lines = [",".join(_CSV_COLUMNS)]
        if report.n_trials:
            row = [
                report.n_buses, report.n_lines, report.config["outages"],
                report.config["bad_buses"], report.config["noise_std"],
                report.config["alg"],
                report.kappa_i_sphase, report.kappa_i_final,
                report.kappa_f_sphase, report.kappa_f_final,
                report.n_trials, report.mean_runtime_s,
            ]
            lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    elif fmt == "json":
        doc = dataclasses.asdict(report)
        if report.records is not None:
            doc["records"] = [r.to_dict() for r in report.records]
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def report_from_json(path):
    with open(path) as fh:
        doc = json.load(fh)
    records = doc.get("records")
    if records is not None:
        doc["records"] = [TrialRecord.from_dict(r) for r in records]
    return Report(**doc)
