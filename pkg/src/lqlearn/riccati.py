"""Exact dynamic-programming reference for the stopped LQ problem.

The optimal cost-to-go is the quadratic ``x' P x`` whose coefficient matrix is
the fixed point of the stopped Riccati map

    T(P) = p*Qf + (1-p) * (Q + F'PF - F'PG (R + G'PG)^-1 G'PF),

obtained by plugging the greedy control into the one-step recursion for the
expected remaining cost.  Iterating T from zero converges monotonically from
below, which is all we need at desk scale.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .linalg import (
    DivergenceError,
    spd_solve,
    spectral_norm,
    sym,
)
from .model import Policy


@dataclass(frozen=True)
class OracleSolution:
    """Fixed point of the stopped Riccati map plus derived quantities.

    ``pi_star`` is the optimal value matrix, ``gain_star`` the optimal feedback,
    ``theta_star`` the optimal action-value matrix on (state, control) pairs.
    """

    pi_star: np.ndarray
    gain_star: Policy
    theta_star: np.ndarray
    residual: float
    iterations: int


def greedy_gain(prob, pi):
    """Feedback ``L = -(R + G'PG)^-1 G'PF`` minimizing cost-plus-next-value."""
    F, G, R = prob.F, prob.G, prob.R
    return -spd_solve(sym(R + G.T @ pi @ G), G.T @ pi @ F)


def bellman_map(prob, pi):
    """One application of the stopped Riccati map T."""
    F, G, Q, R, Qf, p = prob.F, prob.G, prob.Q, prob.R, prob.Qf, prob.p
    gpf = G.T @ pi @ F
    correction = gpf.T @ spd_solve(sym(R + G.T @ pi @ G), gpf)
    return sym(p * Qf + (1.0 - p) * (Q + F.T @ pi @ F - correction))


def assemble_theta(prob, pi):
    """Action-value matrix consistent with a value matrix ``pi``.

    Block form: p * blockdiag(Qf, 0) + (1-p) * (blockdiag(Q, R) + [F G]'P[F G]).
    """
    n, m = prob.n, prob.m
    fg = np.hstack([prob.F, prob.G])
    head = np.zeros((n + m, n + m))
    head[:n, :n] = prob.Qf
    stage = scipy.linalg.block_diag(prob.Q, prob.R)
    return sym(prob.p * head + (1.0 - prob.p) * (stage + fg.T @ pi @ fg))


def recover_pi(theta, n):
    """Value matrix implied by an action-value matrix: the Schur complement
    ``T11 - T12 T22^-1 T21`` of the control block."""
    from .linalg import pd_solve_fast

    t11 = theta[:n, :n]
    t12 = theta[:n, n:]
    t21 = theta[n:, :n]
    t22 = theta[n:, n:]
    return sym(t11 - t12 @ pd_solve_fast(t22, t21))


def solve_pi_star(prob, tol=1e-12, max_iter=10**6):
    """Fixed-point iteration for the optimal value matrix, from zero upward."""
    pi = np.zeros((prob.n, prob.n))
    residual = np.inf
    for it in range(1, max_iter + 1):
        nxt = bellman_map(prob, pi)
        residual = spectral_norm(nxt - pi)
        pi = nxt
        if residual <= tol:
            gain = Policy(greedy_gain(prob, pi))
            return OracleSolution(pi, gain, assemble_theta(prob, pi), residual, it)
        if not np.isfinite(residual) or residual > 1e50:
            raise DivergenceError(
                f"value iteration diverging (residual {residual:.3g}); the expected "
                "cost has no finite fixed point",
                residual=residual,
            )
    raise DivergenceError(
        f"value iteration did not reach tolerance {tol:g} in {max_iter} steps "
        f"(last residual {residual:.6g})",
        residual=residual,
    )


def policy_value(prob, pol, tol=1e-10):
    """Value matrix of a fixed linear policy ``u = Lx``.

    Solves the linear fixed point
        P = p*Qf + (1-p) * (Q + L'RL + (F+GL)' P (F+GL))
    via a discrete Lyapunov solve.  The total expected cost is finite only
    when the closed loop beats the stop-compensated budget, so the spectral
    norm of ``F + GL`` is checked first.
    """
    L = pol.L
    a = prob.F + prob.G @ L
    a_norm = spectral_norm(a)
    if a_norm >= prob.q:
        raise DivergenceError(
            f"closed-loop norm {a_norm:.6g} >= {prob.q:.6g}; the policy's expected "
            "cost is infinite",
            residual=a_norm,
        )
    beta = 1.0 - prob.p
    const = sym(prob.p * prob.Qf + beta * (prob.Q + L.T @ prob.R @ L))
    value = sym(scipy.linalg.solve_discrete_lyapunov(np.sqrt(beta) * a.T, const))
    gap = spectral_norm(value - (const + beta * sym(a.T @ value @ a)))
    if gap > tol:
        raise DivergenceError(
            f"policy value residual {gap:.6g} exceeds tolerance {tol:g}", residual=gap
        )
    return value


def monte_carlo_value(prob, pol, x0, episodes, seed):
    """Estimate the expected total cost from ``x0`` under ``u = Lx`` by simulation.

    All episodes run as one vectorized batch; returns (mean, standard error).
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    rng = np.random.default_rng(seed)
    F, G, Q, R, Qf, p = prob.F, prob.G, prob.Q, prob.R, prob.Qf, prob.p
    L = pol.L
    totals = np.zeros(episodes)
    x = np.tile(x0, (episodes, 1))
    alive = np.ones(episodes, dtype=bool)
    while np.any(alive):
        idx = np.flatnonzero(alive)
        stops = rng.random(idx.size) < p
        stop_idx = idx[stops]
        go_idx = idx[~stops]
        if stop_idx.size:
            xs = x[stop_idx]
            totals[stop_idx] += np.einsum("ij,jk,ik->i", xs, Qf, xs)
            alive[stop_idx] = False
        if go_idx.size:
            xg = x[go_idx]
            ug = xg @ L.T
            totals[go_idx] += np.einsum("ij,jk,ik->i", xg, Q, xg)
            totals[go_idx] += np.einsum("ij,jk,ik->i", ug, R, ug)
            x[go_idx] = xg @ F.T + ug @ G.T
    mean = float(np.mean(totals))
    stderr = float(np.std(totals, ddof=1) / np.sqrt(episodes)) if episodes > 1 else 0.0
    return mean, stderr
