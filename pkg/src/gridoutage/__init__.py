"""Identification of multiple power-line outages from phasor-angle
measurements that may carry gross errors (bad data).

The public surface:

* :mod:`gridoutage.network` / :mod:`gridoutage.caseio`: grid topology,
  DC power-flow objects, case-file parsing.
* :mod:`gridoutage.scenarios`: ground-truth event simulation.
* :mod:`gridoutage.swamp`: swept message-passing solver with
  expectation-maximization prior learning.
* :mod:`gridoutage.identify`: the end-to-end identification pipeline.
* :mod:`gridoutage.baselines`: exhaustive search, l1 baseline, metrics.
* :mod:`gridoutage.bench`: Monte-Carlo experiment harness.
"""

from .baselines import Rates, exhaustive_search, identification_rates, lasso_solve
from .bench import ExperimentConfig, Report, run_experiment, write_report
from .caseio import load_case, parse_case, serialize_native
from .errors import (
    CaseParseError,
    SamplingError,
    SearchExplosionError,
    SolverDivergedError,
    TopologyError,
)
from .identify import (
    IdentificationResult,
    IdentifyConfig,
    build_observation,
    hard_decision,
    identify,
    recovery_phase,
    separation_phase,
)
from .network import (
    MeasurementMatrix,
    Network,
    dc_flow_solve,
    incidence_matrix,
    measurement_matrix,
    susceptance_matrix,
)
from .scenarios import (
    Scenario,
    inject_bad_data,
    make_scenario,
    sample_faulty_buses,
    sample_outage,
    simulate_event,
    trial_rng,
)
from .swamp import (
    PriorParams,
    SolverConfig,
    SparseEstimate,
    denoise_error,
    denoise_indicator,
    em_update_noise,
    em_update_priors,
    initial_priors,
    swamp_solve,
)

__version__ = "0.1.0"
