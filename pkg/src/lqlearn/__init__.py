"""Learning control of randomly-stopped linear-quadratic systems.

Library layout:

* :mod:`lqlearn.linalg`   - symmetric/PD matrix utilities
* :mod:`lqlearn.model`    - plant definitions, validation, one-step simulation
* :mod:`lqlearn.riccati`  - exact fixed-point reference (value/gain/action value)
* :mod:`lqlearn.agents`   - TD(0) and Sarsa(0) training loops
* :mod:`lqlearn.kalman`   - state filtering and filtered TD(0)
* :mod:`lqlearn.lemmas`   - randomized matrix-identity checks
* :mod:`lqlearn.cli`      - command-line harness (solve/check/train/sweep/lemmas/report)
"""

from .agents import (
    ExplorationNoise,
    QEstimate,
    RunRecord,
    Schedule,
    StepDiagnostics,
    TrainerConfig,
    ValueEstimate,
    expected_td_error,
    greedy_control_q,
    greedy_control_v,
    learning_rate,
    run_sarsa0,
    run_td0,
    td_error_q,
    td_error_v,
    update_pi,
    update_theta,
)
from .kalman import KalmanState, estimation_error_stats, kf_step, run_kf_td0
from .linalg import (
    DefinitenessError,
    DimensionError,
    DivergenceError,
    min_eigenvalue,
    psd_order_geq,
    spd_solve,
    spectral_norm,
    spectral_radius,
    woodbury_gain,
    woodbury_gain_expanded,
)
from .model import (
    LqgProblem,
    LqProblem,
    Policy,
    StepOutcome,
    closed_loop,
    stability_margin,
    step,
    step_lqg,
    validate,
    validate_lqg,
)
from .riccati import (
    OracleSolution,
    monte_carlo_value,
    policy_value,
    recover_pi,
    solve_pi_star,
)

__version__ = "0.1.0"
