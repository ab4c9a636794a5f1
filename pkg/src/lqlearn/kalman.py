"""Kalman filtering for the noisy stopped-LQ plant, and TD(0) driven by the filter.

The plant is only observed through ``y = H x + noise``; the filter keeps the
one-step-ahead mean/covariance of the hidden state, and the learner runs the
plain TD(0) recursion on the filtered mean as if it were the true state (the
control that is optimal for the estimate is optimal for the plant, so nothing
else in the loop changes).
"""

from dataclasses import dataclass

import numpy as np

from .linalg import DefinitenessError, DivergenceError, frobenius, min_eigenvalue, sym
from .agents import (
    RunRecord,
    ValueEstimate,
    _delta_go,
    _delta_stop,
    _greedy_v,
    _ramped_radius,
    initial_value_matrix,
)
from .model import final_cost, norm_guard, sample_sphere, spawn_streams


@dataclass(frozen=True)
class KalmanState:
    """Filter belief: mean ``x_hat``, error covariance ``sigma``, last gain."""

    x_hat: np.ndarray
    sigma: np.ndarray
    gain: np.ndarray


def initial_state(prob):
    n, k = prob.base.n, prob.k
    return KalmanState(prob.xhat1.copy(), prob.Sigma1.copy(), np.zeros((n, k)))


def kf_step(prob, state, u, y):
    """One filter update given the applied control and the observation of the
    current state:

        innovation = y - H x_hat
        K      = F sigma H' (H sigma H' + OmegaZeta)^-1
        sigma' = OmegaXi + F sigma F' - K H sigma F'
        x_hat' = F x_hat + G u + K innovation

    An exactly-zero innovation covariance means the belief is already exact,
    so the gain is zero and the mean propagates open loop; a singular but
    nonzero covariance is an error.
    """
    base = prob.base
    F, G, H = base.F, base.G, prob.H
    x_hat, sigma = state.x_hat, state.sigma
    innovation = y - H @ x_hat
    innovation_cov = sym(H @ sigma @ H.T + prob.OmegaZeta)
    if not np.any(innovation_cov):
        gain = np.zeros((base.n, prob.k))
        sigma_next = sym(prob.OmegaXi + F @ sigma @ F.T)
        x_hat_next = F @ x_hat + G @ u
        return KalmanState(x_hat_next, sigma_next, gain)
    try:
        np.linalg.cholesky(innovation_cov)  # gates definiteness
    except np.linalg.LinAlgError as exc:
        bad = min_eigenvalue(innovation_cov)
        raise DefinitenessError(
            f"innovation covariance is singular (min eigenvalue {bad:.6g})",
            eigenvalue=bad,
        ) from exc
    # K = F sigma H' S^-1, via a solve against the symmetric S
    gain = F @ np.linalg.solve(innovation_cov, H @ sigma).T
    sigma_next = sym(prob.OmegaXi + F @ sigma @ F.T - gain @ H @ sigma @ F.T)
    x_hat_next = F @ x_hat + G @ u + gain @ innovation
    return KalmanState(x_hat_next, sigma_next, gain)


def run_kf_td0(prob, config, oracle=None, seed=None):
    """TD(0) training stream where the learner only sees filtered estimates.

    Structure matches ``run_td0`` with the filter mean standing in for the
    state everywhere the learner looks; records additionally carry the hidden
    true state, the estimation error, and the filter covariance trace.  When
    every noise covariance is zero (with ``H = I``) the emitted records reduce
    bit for bit to the fully observed run under the same seed.
    """
    base = prob.base
    n, m, k = base.n, base.m, prob.k
    streams = spawn_streams(config.seed if seed is None else seed)
    stop_rng, explore_rng, restart_rng = (
        streams["stop"],
        streams["explore"],
        streams["restart"],
    )
    process_rng, observe_rng = streams["process"], streams["observe"]
    F, G, Q, R, Qf, p = base.F, base.G, base.Q, base.R, base.Qf, base.p
    a_sched, b_sched = config.schedule_a, config.schedule_b
    noise = config.exploration()
    pi = initial_value_matrix(base, config, oracle)
    pi_star = oracle.pi_star if oracle is not None else None
    ceiling = config.divergence_ceiling * max(frobenius(pi), 1.0)

    def fresh_episode(ep):
        # The restart anchor is the agent's belief mean; initial-belief noise
        # (scaled by Sigma1) perturbs the hidden state around it.
        anchor = sample_sphere(restart_rng, n, _ramped_radius(config, ep))
        x_true = anchor
        if np.any(prob.sigma1_factor):
            x_true = anchor + prob.sigma1_factor @ process_rng.standard_normal(n)
        return x_true, anchor, prob.Sigma1.copy()

    episode = 0
    x_true, x_hat, sigma = fresh_episode(episode)
    gain = np.zeros((n, k))
    nu = noise.scale(episode) * explore_rng.standard_normal(m)
    u = _greedy_v(F, G, R, pi, x_hat) + nu

    for t in range(config.steps):
        stopped = stop_rng.random() < p
        nrm2 = float(x_hat @ x_hat)
        alpha_prime = a_sched / (b_sched + t)
        if nrm2 > 0.0:
            alpha = min(alpha_prime, 1.0 / (nrm2 * nrm2))
        else:
            alpha = alpha_prime
        true_final = None
        if stopped:
            delta = _delta_stop(Qf, pi, x_hat)
            true_final = final_cost(base, x_true)
        else:
            x_true_next = F @ x_true + G @ u
            if np.any(prob.xi_factor):
                x_true_next = x_true_next + prob.xi_factor @ process_rng.standard_normal(n)
            y = prob.H @ x_true
            if np.any(prob.zeta_factor):
                y = y + prob.zeta_factor @ observe_rng.standard_normal(k)
            state = kf_step(prob, KalmanState(x_hat, sigma, gain), u, y)
            delta = _delta_go(Q, R, pi, x_hat, u, state.x_hat)
        pi = pi + (alpha * delta) * (x_hat[:, None] * x_hat)
        norm_guard(pi, ceiling, "value matrix")
        pi_error = frobenius(pi - pi_star) if pi_star is not None else float("nan")
        record = RunRecord(
            t=t,
            episode=episode,
            x=x_hat,
            u=u,
            nu=nu,
            delta=delta,
            alpha=alpha,
            alpha_prime=alpha_prime,
            stopped=stopped,
            pi_error=pi_error,
            state_norm=float(np.sqrt(nrm2)),
            x_true=x_true,
            est_error=x_true - x_hat,
            sigma_trace=float(np.trace(sigma)),
            true_final_cost=true_final,
        )
        if stopped:
            episode += 1
            x_true, x_hat, sigma = fresh_episode(episode)
        else:
            x_true = x_true_next
            x_hat, sigma, gain = state.x_hat, state.sigma, state.gain
        nu = noise.scale(episode) * explore_rng.standard_normal(m)
        u = _greedy_v(F, G, R, pi, x_hat) + nu
        yield record
    return ValueEstimate(pi)


@dataclass(frozen=True)
class EstimationStats:
    mean_error: np.ndarray
    mean_sq_error: np.ndarray
    max_state_norm: float


def estimation_error_stats(records):
    """Sample statistics of the estimation error over a filtered run."""
    errors = []
    max_norm = 0.0
    for rec in records:
        if rec.est_error is None or rec.x_true is None:
            raise ValueError("records lack true-state diagnostics")
        errors.append(rec.est_error)
        max_norm = max(max_norm, float(np.linalg.norm(rec.x_true)))
    if not errors:
        raise ValueError("no records supplied")
    err = np.asarray(errors)
    mean_error = err.mean(axis=0)
    mean_sq = sym(err.T @ err / err.shape[0])
    return EstimationStats(mean_error, mean_sq, max_norm)


def steady_state_sigma(prob, tol=1e-10, max_iter=10**4):
    """Iterate the covariance recursion to its fixed point (no learner involved)."""
    sigma = prob.Sigma1.copy()
    base = prob.base
    F, H = base.F, prob.H
    gap = np.inf
    for _ in range(max_iter):
        innovation_cov = sym(H @ sigma @ H.T + prob.OmegaZeta)
        if not np.any(innovation_cov):
            gain = np.zeros((base.n, prob.k))
        else:
            gain = F @ np.linalg.solve(innovation_cov, H @ sigma).T
        sigma_next = sym(prob.OmegaXi + F @ sigma @ F.T - gain @ H @ sigma @ F.T)
        gap = frobenius(sigma_next - sigma)
        sigma = sigma_next
        if gap <= tol:
            return sigma
    raise DivergenceError(
        f"filter covariance did not settle within {max_iter} iterations", residual=gap
    )
