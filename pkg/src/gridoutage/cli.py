"""Command-line interface: single-scenario identification and Monte-Carlo benchmarks."""

import argparse
import dataclasses
import json
import sys

from .bench import ExperimentConfig, run_experiment, write_report
from .caseio import load_case
from .casegen import synthetic_case
from .identify import IdentifyConfig, identify
from .scenarios import read_scenarios


def _add_case_args(p):
    p.add_argument("--case", required=True, help="case file path")
    p.add_argument("--format", dest="fmt", choices=["matpower", "native"],
                   help="case format (default: by extension)")


def _cmd_identify(args):
    net = load_case(args.case, args.fmt)
    scenarios = read_scenarios(args.scenario)
    if len(scenarios) != 1:
        raise ValueError(f"expected exactly one scenario line, found {len(scenarios)}")
    sc = scenarios[0]
    config = IdentifyConfig(
        tau=args.tau, n_components=args.K, eps=args.eps, t_max=args.tmax,
        seed=args.seed, known_ssi=args.known_ssi,
        n_outages=len(sc.outage_lines) if args.known_ssi else None,
        noise_var=sc.noise_std**2 if args.known_ssi else None,
    )
    result = identify(net, sc.theta_pre, sc.theta_corrupt, config)
    doc = result.to_dict(net)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=1)
    else:
        json.dump(doc, sys.stdout, indent=1)
        print()
    return 0


def _cmd_bench(args):
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    settings = {}
    if args.config:
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - fields
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        settings.update(file_cfg)
    overrides = {
        "case": args.case, "fmt": args.fmt, "outages": args.outages,
        "bad_buses": args.bad_buses, "placement": args.placement,
        "noise_std": args.noise_std, "locations": args.locations,
        "trials": args.trials, "seed": args.seed, "alg": args.alg,
        "known_ssi": args.known_ssi or None, "tau": args.tau,
        "n_components": args.K, "eps": args.eps, "t_max": args.tmax,
        "workers": args.workers, "keep_trials": args.keep_trials or None,
    }
    settings.update({k: v for k, v in overrides.items() if v is not None})
    if args.full_scale:
        settings["locations"] = max(settings.get("locations", 0), 1000)
        settings["trials"] = max(settings.get("trials", 0), 10)
    if "case" not in settings:
        raise ValueError("--case (or a config file with 'case') is required")
    config = ExperimentConfig(**settings)
    report = run_experiment(config)
    if args.out:
        write_report(report, args.out, args.out_format)
    summary = {
        "N": report.n_buses, "L": report.n_lines, "trials": report.n_trials,
        "kappa_I_sphase": report.kappa_i_sphase, "kappa_I_final": report.kappa_i_final,
        "kappa_F_sphase": report.kappa_f_sphase, "kappa_F_final": report.kappa_f_final,
        "mean_runtime_s": report.mean_runtime_s,
    }
    json.dump(summary, sys.stdout, indent=1)
    print()
    return 0


def _cmd_make_case(args):
    text = synthetic_case(args.buses, args.lines, seed=args.seed,
                          parallel_pairs=args.parallel_pairs)
    with open(args.out, "w") as fh:
        fh.write(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gridoutage",
        description="identify power-line outages from phasor angles with bad data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("identify", help="run one scenario from files")
    _add_case_args(p)
    p.add_argument("--scenario", required=True, help="scenario JSONL file (one line)")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--tmax", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--known-ssi", dest="known_ssi", action="store_true")
    p.add_argument("--out", help="result JSON path (default: stdout)")
    p.set_defaults(func=_cmd_identify)

    p = sub.add_parser("bench", help="Monte-Carlo experiment suite")
    p.add_argument("--case")
    p.add_argument("--format", dest="fmt", choices=["matpower", "native"])
    p.add_argument("--config", help="ExperimentConfig JSON file; flags override")
    p.add_argument("--outages", type=int)
    p.add_argument("--bad-buses", dest="bad_buses", type=int)
    p.add_argument("--placement", choices=["involved", "separated"])
    p.add_argument("--noise-std", dest="noise_std", type=float)
    p.add_argument("--locations", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--alg", choices=["swamp", "lasso", "es"])
    p.add_argument("--known-ssi", dest="known_ssi", action="store_true")
    p.add_argument("--tau", type=float)
    p.add_argument("--K", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--tmax", type=int)
    p.add_argument("--out")
    p.add_argument("--out-format", dest="out_format", choices=["csv", "json"], default="csv")
    p.add_argument("--workers", type=int)
    p.add_argument("--keep-trials", dest="keep_trials", action="store_true")
    p.add_argument("--full-scale", action="store_true",
                   help="at least 1000 locations x 10 realizations")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("make-case", help="generate a synthetic benchmark case")
    p.add_argument("--buses", type=int, required=True)
    p.add_argument("--lines", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallel-pairs", dest="parallel_pairs", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_make_case)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface any failure as a nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
