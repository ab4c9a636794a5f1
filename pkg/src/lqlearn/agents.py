"""On-line TD(0) and Sarsa(0) learners with quadratic function approximation.

Both learners fit the coefficient matrix of a quadratic cost-to-go (state
value ``x'Px`` or action value ``z'Sz`` on stacked ``z = (x, u)``) by rank-one
temporal-difference updates while acting greedily against the current fit.
Episodes end at the plant's random stop and restart from a sphere of
configurable radius; learning rates follow a Robbins-Monro base rule capped
online by ``1 / ||x||^4`` so oversized samples cannot destabilize the fit.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import frobenius, pd_solve_fast
from .model import (
    final_cost,
    norm_guard,
    sample_sphere,
    spawn_streams,
    stage_cost,
)
from .riccati import recover_pi


@dataclass(frozen=True)
class ValueEstimate:
    """Current quadratic state-value fit ``V(x) = x' matrix x``."""

    matrix: np.ndarray

    def value(self, x):
        return float(x @ self.matrix @ x)


@dataclass(frozen=True)
class QEstimate:
    """Quadratic action-value fit on stacked vectors ``z = (x, u)``."""

    matrix: np.ndarray
    n: int

    @property
    def state_block(self):
        return self.matrix[: self.n, : self.n]

    @property
    def cross_block(self):
        return self.matrix[self.n :, : self.n]

    @property
    def control_block(self):
        return self.matrix[self.n :, self.n :]

    def value(self, z):
        return float(z @ self.matrix @ z)


@dataclass(frozen=True)
class Schedule:
    """Base learning-rate rule ``a / (b + t)`` plus the online state-norm cap."""

    a: float = 1.0
    b: float = 100.0

    def alpha_prime(self, t):
        return self.a / (self.b + t)


def learning_rate(sched, t, x):
    """Capped rate: ``alpha = min(alpha', 1/||x||^4)``; returns (alpha, alpha', alpha/alpha')."""
    alpha_prime = sched.alpha_prime(t)
    nrm2 = float(x @ x)
    if nrm2 > 0.0:
        alpha = min(alpha_prime, 1.0 / (nrm2 * nrm2))
    else:
        alpha = alpha_prime
    return alpha, alpha_prime, alpha / alpha_prime


@dataclass(frozen=True)
class ExplorationNoise:
    """Zero-mean Gaussian control dither, decayed geometrically per episode."""

    sigma: float = 0.1
    decay: float = 1.0

    def scale(self, episode):
        return self.sigma * self.decay**episode


@dataclass
class RunRecord:
    """One environment step of a training run."""

    t: int
    episode: int
    x: np.ndarray
    u: np.ndarray
    nu: np.ndarray
    delta: float
    alpha: float
    alpha_prime: float
    stopped: bool
    pi_error: float
    state_norm: float
    # filled only by the filtered runs
    x_true: np.ndarray | None = None
    est_error: np.ndarray | None = None
    sigma_trace: float | None = None
    true_final_cost: float | None = None


@dataclass(frozen=True)
class StepDiagnostics:
    """Closed-form one-step expectations used to audit the descent argument."""

    expected_delta: float
    descent_inner: float | None = None
    epsilon2: float | None = None


@dataclass(frozen=True)
class TrainerConfig:
    algorithm: str = "td0"
    steps: int = 100_000
    seed: int = 0
    pi0_scale: float | None = None
    schedule_a: float = 1.0
    schedule_b: float = 100.0
    sigma_nu: float = 0.1
    noise_decay: float = 1.0
    restart_radius: float = 3.0
    restart_ramp_episodes: int = 0
    divergence_ceiling: float = 1e6
    metrics_stride: int = 100

    def schedule(self):
        return Schedule(self.schedule_a, self.schedule_b)

    def exploration(self):
        return ExplorationNoise(self.sigma_nu, self.noise_decay)


ALGORITHMS = ("td0", "sarsa0", "kf-td0")


def validate_config(config):
    """Config invariant violations, empty when fine."""
    issues = []
    if config.algorithm not in ALGORITHMS:
        issues.append(f"algorithm must be one of {ALGORITHMS}, got {config.algorithm!r}")
    if config.steps <= 0:
        issues.append(f"steps must be positive, got {config.steps}")
    if config.pi0_scale is not None and config.pi0_scale <= 0:
        issues.append(f"pi0_scale must be positive, got {config.pi0_scale}")
    if config.sigma_nu < 0:
        issues.append(f"sigma_nu must be nonnegative, got {config.sigma_nu}")
    if not (0.0 < config.noise_decay <= 1.0):
        issues.append(f"noise_decay must lie in (0, 1], got {config.noise_decay}")
    if config.schedule_a <= 0 or config.schedule_b <= 0:
        issues.append("schedule parameters a and b must be positive")
    if config.restart_radius <= 0:
        issues.append(f"restart_radius must be positive, got {config.restart_radius}")
    if config.restart_ramp_episodes < 0:
        issues.append(f"restart_ramp_episodes must be nonnegative, got {config.restart_ramp_episodes}")
    if config.metrics_stride <= 0:
        issues.append(f"metrics_stride must be positive, got {config.metrics_stride}")
    return issues


def _greedy_v(F, G, R, pi, x):
    # the Cholesky gate inside the solve enforces R + G'PG > 0
    return -pd_solve_fast(R + G.T @ pi @ G, G.T @ (pi @ (F @ x)))


def greedy_control_v(prob, est, x):
    """Control minimizing ``u'Ru + (Fx+Gu)' P (Fx+Gu)`` for the current fit."""
    return _greedy_v(prob.F, prob.G, prob.R, est.matrix, x)


def _greedy_q(theta, n, x):
    cross = 0.5 * (theta[n:, :n] + theta[:n, n:].T)
    return -pd_solve_fast(theta[n:, n:], cross @ x)


def greedy_control_q(est, x):
    """Control minimizing the fitted action value at ``x``: ``-T22^-1 T21 x``."""
    return _greedy_q(est.matrix, est.n, x)


def _delta_go(Q, R, pi, x, u, x_next):
    return float(x @ Q @ x + u @ R @ u + x_next @ pi @ x_next - x @ pi @ x)


def _delta_stop(Qf, pi, x):
    return float(x @ Qf @ x - x @ pi @ x)


def td_error_v(prob, est, x, u, outcome):
    """One-step TD residual of the state-value fit on an observed transition."""
    if outcome.stopped:
        return _delta_stop(prob.Qf, est.matrix, x)
    return _delta_go(prob.Q, prob.R, est.matrix, x, u, outcome.next_state)


def update_pi(est, alpha, delta, x):
    """Rank-one update ``P + alpha * delta * x x'``; exactly symmetry-preserving."""
    return ValueEstimate(est.matrix + (alpha * delta) * (x[:, None] * x))


def td_error_q(prob, est, z, z_next, outcome):
    """One-step TD residual of the action-value fit; ``z = (x, u)`` stacked."""
    n = est.n
    x = z[:n]
    here = est.value(z)
    if outcome.stopped:
        return final_cost(prob, x) - here
    return stage_cost(prob, x, z[n:]) + est.value(z_next) - here


def update_theta(est, alpha, delta, z):
    return QEstimate(est.matrix + (alpha * delta) * (z[:, None] * z), est.n)


def expected_td_error(prob, est, x, oracle=None, alpha_prime=None):
    """Expectation of the TD residual over the stop event, greedy noise-free control.

    With an oracle the diagnostics include the inner product of the expected
    update direction with the gradient of the squared parameter error, damped
    by the cap factor when ``alpha_prime`` is given, and the margin constant
    ``1 - (1-p) * ||F + G L*||^2`` of the optimal closed loop.
    """
    from .linalg import spectral_norm

    pi = est.matrix
    p = prob.p
    u = _greedy_v(prob.F, prob.G, prob.R, pi, x)
    nxt = prob.F @ x + prob.G @ u
    here = float(x @ pi @ x)
    expected_delta = p * (final_cost(prob, x) - here) + (1.0 - p) * (
        stage_cost(prob, x, u) + float(nxt @ pi @ nxt) - here
    )
    if oracle is None:
        return StepDiagnostics(expected_delta)
    closed_norm = spectral_norm(prob.F + prob.G @ oracle.gain_star.L)
    epsilon2 = 1.0 - (1.0 - p) * closed_norm**2
    gap = float(x @ (pi - oracle.pi_star) @ x)
    scaling = 1.0
    if alpha_prime is not None:
        nrm2 = float(x @ x)
        if nrm2 > 0.0:
            scaling = min(1.0, 1.0 / (alpha_prime * nrm2 * nrm2))
    return StepDiagnostics(expected_delta, scaling * expected_delta * gap, epsilon2)


def initial_value_matrix(prob, config, oracle=None):
    """Starting fit ``kappa * I``; ``kappa`` must dominate the optimum for the
    convergence guarantee, so default to ten times the oracle's top eigenvalue."""
    if config.pi0_scale is not None:
        kappa = config.pi0_scale
    elif oracle is not None:
        kappa = 10.0 * float(np.linalg.eigvalsh(oracle.pi_star)[-1])
    else:
        raise ValueError("pi0_scale is required when no oracle solution is supplied")
    return kappa * np.eye(prob.n)


def initial_q_matrix(prob, config, oracle=None):
    """Starting action-value fit ``kappa * I`` on the stacked space; the same
    ``kappa`` rule as the state-value fit (it dominates the optimum there too)."""
    if config.pi0_scale is not None:
        kappa = config.pi0_scale
    elif oracle is not None:
        kappa = 10.0 * float(np.linalg.eigvalsh(oracle.pi_star)[-1])
    else:
        raise ValueError("pi0_scale is required when no oracle solution is supplied")
    return kappa * np.eye(prob.n + prob.m)


def _ramped_radius(config, episode):
    ramp = config.restart_ramp_episodes
    if ramp <= 0 or episode >= ramp:
        return config.restart_radius
    return config.restart_radius * (0.1 + 0.9 * episode / ramp)


def run_td0(prob, config, oracle=None, seed=None):
    """Generate the TD(0) training stream: one RunRecord per environment step.

    Loop order per step: observe the stop event / transition under the action
    chosen last step, form the TD residual, update the fit, then act for the
    next state with the updated fit plus exploration noise.
    """
    streams = spawn_streams(config.seed if seed is None else seed)
    stop_rng, explore_rng, restart_rng = (
        streams["stop"],
        streams["explore"],
        streams["restart"],
    )
    F, G, Q, R, Qf, p = prob.F, prob.G, prob.Q, prob.R, prob.Qf, prob.p
    n, m = prob.n, prob.m
    a_sched, b_sched = config.schedule_a, config.schedule_b
    noise = config.exploration()
    pi = initial_value_matrix(prob, config, oracle)
    pi_star = oracle.pi_star if oracle is not None else None
    ceiling = config.divergence_ceiling * max(frobenius(pi), 1.0)

    episode = 0
    x = sample_sphere(restart_rng, n, _ramped_radius(config, episode))
    nu = noise.scale(episode) * explore_rng.standard_normal(m)
    u = _greedy_v(F, G, R, pi, x) + nu

    for t in range(config.steps):
        stopped = stop_rng.random() < p
        nrm2 = float(x @ x)
        alpha_prime = a_sched / (b_sched + t)
        if nrm2 > 0.0:
            alpha = min(alpha_prime, 1.0 / (nrm2 * nrm2))
        else:
            alpha = alpha_prime
        if stopped:
            delta = _delta_stop(Qf, pi, x)
        else:
            x_next = F @ x + G @ u
            delta = _delta_go(Q, R, pi, x, u, x_next)
        pi = pi + (alpha * delta) * (x[:, None] * x)
        norm_guard(pi, ceiling, "value matrix")
        pi_error = frobenius(pi - pi_star) if pi_star is not None else float("nan")
        record = RunRecord(
            t=t,
            episode=episode,
            x=x,
            u=u,
            nu=nu,
            delta=delta,
            alpha=alpha,
            alpha_prime=alpha_prime,
            stopped=stopped,
            pi_error=pi_error,
            state_norm=float(np.sqrt(nrm2)),
        )
        if stopped:
            episode += 1
            x = sample_sphere(restart_rng, n, _ramped_radius(config, episode))
        else:
            x = x_next
        nu = noise.scale(episode) * explore_rng.standard_normal(m)
        u = _greedy_v(F, G, R, pi, x) + nu
        yield record
    return ValueEstimate(pi)


def run_sarsa0(prob, config, oracle=None, seed=None):
    """Generate the Sarsa(0) training stream on stacked (state, control) vectors.

    Episode starts draw the whole (state, control) pair uniformly from a
    sphere in the stacked space: action-value fitting needs excitation that is
    isotropic in that space, exactly as the state-value loop's restarts are
    isotropic in state space (greedy-only restarts leave the control block of
    the fit unidentified once the dither has decayed).  Within an episode the
    next action is chosen greedily from the pre-update fit (the residual must
    score the action actually taken), then the rank-one update applies.
    """
    streams = spawn_streams(config.seed if seed is None else seed)
    stop_rng, explore_rng, restart_rng = (
        streams["stop"],
        streams["explore"],
        streams["restart"],
    )
    F, G, Q, R, Qf, p = prob.F, prob.G, prob.Q, prob.R, prob.Qf, prob.p
    n, m = prob.n, prob.m
    a_sched, b_sched = config.schedule_a, config.schedule_b
    noise = config.exploration()
    theta = initial_q_matrix(prob, config, oracle)
    pi_star = oracle.pi_star if oracle is not None else None
    ceiling = config.divergence_ceiling * max(frobenius(theta), 1.0)

    episode = 0
    zz = sample_sphere(restart_rng, n + m, _ramped_radius(config, episode))
    x, u = zz[:n], zz[n:]
    nu = np.zeros(m)

    for t in range(config.steps):
        z = np.concatenate([x, u])
        stopped = stop_rng.random() < p
        nrm2 = float(z @ z)
        alpha_prime = a_sched / (b_sched + t)
        if nrm2 > 0.0:
            alpha = min(alpha_prime, 1.0 / (nrm2 * nrm2))
        else:
            alpha = alpha_prime
        if stopped:
            x_next = u_next = nu_next = None
            delta = float(x @ Qf @ x) - float(z @ theta @ z)
        else:
            x_next = F @ x + G @ u
            nu_next = noise.scale(episode) * explore_rng.standard_normal(m)
            u_next = _greedy_q(theta, n, x_next) + nu_next
            z_next = np.concatenate([x_next, u_next])
            delta = (
                float(x @ Q @ x + u @ R @ u)
                + float(z_next @ theta @ z_next)
                - float(z @ theta @ z)
            )
        theta = theta + (alpha * delta) * (z[:, None] * z)
        norm_guard(theta, ceiling, "action-value matrix")
        if pi_star is not None:
            pi_error = frobenius(recover_pi(theta, n) - pi_star)
        else:
            pi_error = float("nan")
        record = RunRecord(
            t=t,
            episode=episode,
            x=x,
            u=u,
            nu=nu,
            delta=delta,
            alpha=alpha,
            alpha_prime=alpha_prime,
            stopped=stopped,
            pi_error=pi_error,
            state_norm=float(np.sqrt(float(x @ x))),
        )
        if stopped:
            episode += 1
            zz = sample_sphere(restart_rng, n + m, _ramped_radius(config, episode))
            x, u = zz[:n], zz[n:]
            nu = np.zeros(m)
        else:
            x, u, nu = x_next, u_next, nu_next
        yield record
    return QEstimate(theta, n)
