"""Randomly-stopped linear-quadratic plant definitions and one-step simulation.

The plant is ``x' = F x + G u`` with per-step cost ``x'Qx + u'Ru``.  After each
step the run halts with probability ``p`` and charges the terminal cost
``x'Qf x``.  The partially observed variant adds Gaussian process/observation
noise and an observation map ``y = H x + noise``.
"""

from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    DimensionError,
    DivergenceError,
    frobenius,
    min_eigenvalue,
    spectral_norm,
    sym,
)

#: eigenvalue slack used when testing "positive semidefinite" on float data
PSD_TOL = 1e-10


def _as_matrix(a, name):
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got ndim={m.ndim}")
    return m


def _as_vector(a, name):
    v = np.asarray(a, dtype=float).reshape(-1)
    return v


def psd_factor(cov):
    """Square root ``L`` with ``L @ L.T = cov`` for a PSD matrix (may be singular)."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if not np.any(cov):
        return np.zeros_like(cov)
    vals, vecs = np.linalg.eigh(sym(cov))
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)


@dataclass(frozen=True)
class LqProblem:
    """Stopped LQ plant: dynamics ``F, G``, costs ``Q, R, Qf``, stop probability ``p``."""

    F: np.ndarray
    G: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Qf: np.ndarray
    p: float

    def __post_init__(self):
        object.__setattr__(self, "F", _as_matrix(self.F, "F"))
        object.__setattr__(self, "G", _as_matrix(self.G, "G"))
        # cost matrices are stored exactly symmetric
        object.__setattr__(self, "Q", sym(_as_matrix(self.Q, "Q")))
        object.__setattr__(self, "R", sym(_as_matrix(self.R, "R")))
        object.__setattr__(self, "Qf", sym(_as_matrix(self.Qf, "Qf")))
        object.__setattr__(self, "p", float(self.p))

    @property
    def n(self):
        return self.F.shape[0]

    @property
    def m(self):
        return self.G.shape[1]

    @property
    def q(self):
        """Stability budget ``1 / sqrt(1 - p)`` for the closed-loop norm."""
        return 1.0 / np.sqrt(1.0 - self.p)


@dataclass(frozen=True)
class LqgProblem:
    """Stopped LQ plant with Gaussian noise and partial observation ``y = H x + noise``."""

    base: LqProblem
    H: np.ndarray
    OmegaXi: np.ndarray
    OmegaZeta: np.ndarray
    xhat1: np.ndarray
    Sigma1: np.ndarray
    # cached covariance square roots (zero matrix when the covariance is zero)
    xi_factor: np.ndarray = field(init=False, repr=False, compare=False)
    zeta_factor: np.ndarray = field(init=False, repr=False, compare=False)
    sigma1_factor: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "H", _as_matrix(self.H, "H"))
        object.__setattr__(self, "OmegaXi", sym(_as_matrix(self.OmegaXi, "OmegaXi")))
        object.__setattr__(self, "OmegaZeta", sym(_as_matrix(self.OmegaZeta, "OmegaZeta")))
        object.__setattr__(self, "xhat1", _as_vector(self.xhat1, "xhat1"))
        object.__setattr__(self, "Sigma1", sym(_as_matrix(self.Sigma1, "Sigma1")))
        object.__setattr__(self, "xi_factor", psd_factor(self.OmegaXi))
        object.__setattr__(self, "zeta_factor", psd_factor(self.OmegaZeta))
        object.__setattr__(self, "sigma1_factor", psd_factor(self.Sigma1))

    @property
    def k(self):
        return self.H.shape[0]


@dataclass(frozen=True)
class Policy:
    """Linear state feedback ``u = L @ x``."""

    L: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "L", _as_matrix(self.L, "L"))

    def act(self, x):
        return self.L @ x


@dataclass(frozen=True)
class StepOutcome:
    stopped: bool
    next_state: np.ndarray | None
    stage_cost: float


@dataclass(frozen=True)
class StabilityMargin:
    norm: float
    q: float
    satisfies: bool


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple

    @property
    def ok(self):
        return not self.issues

    def __str__(self):
        return "valid" if self.ok else "; ".join(self.issues)


def validate(prob):
    """Report every violated problem invariant with the measured quantity."""
    issues = []
    n, m = prob.n, prob.m
    if prob.F.shape != (n, n):
        issues.append(f"F must be square, got {prob.F.shape}")
    if prob.G.shape != (n, m):
        issues.append(f"G must be {n}x{m}, got {prob.G.shape}")
    for name, mat, dim in (("Q", prob.Q, n), ("R", prob.R, m), ("Qf", prob.Qf, n)):
        if mat.shape != (dim, dim):
            issues.append(f"{name} must be {dim}x{dim}, got {mat.shape}")
    for name, mat in (("F", prob.F), ("G", prob.G), ("Q", prob.Q), ("R", prob.R), ("Qf", prob.Qf)):
        if not np.all(np.isfinite(mat)):
            issues.append(f"{name} contains non-finite entries")
    if not (0.0 < prob.p < 1.0):
        issues.append(f"p must lie in (0, 1), got {prob.p}")
    if not issues:
        q_min = min_eigenvalue(prob.Q)
        if q_min < -PSD_TOL:
            issues.append(f"Q not positive semidefinite (min eigenvalue {q_min:.6g})")
        r_min = min_eigenvalue(prob.R)
        if r_min <= 0.0:
            issues.append(f"R not positive definite (min eigenvalue {r_min:.6g})")
        qf_min = min_eigenvalue(prob.Qf)
        if qf_min <= 0.0:
            issues.append(f"Qf not positive definite (min eigenvalue {qf_min:.6g})")
    return ValidationReport(tuple(issues))


def validate_lqg(prob):
    """Validate an LqgProblem: base invariants plus noise/observation shapes."""
    issues = list(validate(prob.base).issues)
    n = prob.base.n
    k = prob.k
    if prob.H.shape != (k, n):
        issues.append(f"H must have {n} columns, got {prob.H.shape}")
    if prob.OmegaXi.shape != (n, n):
        issues.append(f"OmegaXi must be {n}x{n}, got {prob.OmegaXi.shape}")
    if prob.OmegaZeta.shape != (k, k):
        issues.append(f"OmegaZeta must be {k}x{k}, got {prob.OmegaZeta.shape}")
    if prob.Sigma1.shape != (n, n):
        issues.append(f"Sigma1 must be {n}x{n}, got {prob.Sigma1.shape}")
    if prob.xhat1.shape != (n,):
        issues.append(f"xhat1 must have length {n}, got {prob.xhat1.shape}")
    if not issues:
        for name, mat in (
            ("OmegaXi", prob.OmegaXi),
            ("OmegaZeta", prob.OmegaZeta),
            ("Sigma1", prob.Sigma1),
        ):
            low = min_eigenvalue(mat)
            if low < -PSD_TOL:
                issues.append(f"{name} not positive semidefinite (min eigenvalue {low:.6g})")
    return ValidationReport(tuple(issues))


def stage_cost(prob, x, u):
    return float(x @ prob.Q @ x + u @ prob.R @ u)


def final_cost(prob, x):
    return float(x @ prob.Qf @ x)


def step(prob, x, u, stop_draw):
    """Advance one step; ``stop_draw`` is a uniform [0, 1) sample owned by the caller."""
    x = _as_vector(x, "x")
    u = _as_vector(u, "u")
    if x.shape != (prob.n,) or u.shape != (prob.m,):
        raise DimensionError(
            f"step expects x of length {prob.n} and u of length {prob.m}, "
            f"got {x.shape} and {u.shape}"
        )
    if stop_draw < prob.p:
        return StepOutcome(True, None, final_cost(prob, x))
    return StepOutcome(False, prob.F @ x + prob.G @ u, stage_cost(prob, x, u))


def step_lqg(prob, x, u, xi_draw, zeta_draw, stop_draw):
    """LQG step: returns (outcome, observation of the current state).

    ``xi_draw`` / ``zeta_draw`` are standard-normal vectors from the caller's
    streams; they are shaped by the problem's covariance factors so zero
    covariance reproduces the noise-free step bit for bit.
    """
    base = prob.base
    x = _as_vector(x, "x")
    u = _as_vector(u, "u")
    y = prob.H @ x
    if np.any(prob.zeta_factor):
        y = y + prob.zeta_factor @ _as_vector(zeta_draw, "zeta_draw")
    if stop_draw < base.p:
        return StepOutcome(True, None, final_cost(base, x)), y
    nxt = base.F @ x + base.G @ u
    if np.any(prob.xi_factor):
        nxt = nxt + prob.xi_factor @ _as_vector(xi_draw, "xi_draw")
    return StepOutcome(False, nxt, stage_cost(base, x, u)), y


def closed_loop(prob, pol):
    """Closed-loop transition matrix ``F + G @ L``."""
    if pol.L.shape != (prob.m, prob.n):
        raise DimensionError(f"policy gain must be {prob.m}x{prob.n}, got {pol.L.shape}")
    return prob.F + prob.G @ pol.L


def stability_margin(prob, pol):
    """Closed-loop spectral norm against the stop-compensated budget ``q``."""
    norm = spectral_norm(closed_loop(prob, pol))
    q = prob.q
    return StabilityMargin(norm, q, norm <= q)


def sample_sphere(rng, dim, radius):
    """Uniform draw from the sphere of the given radius (episode restarts)."""
    while True:
        z = rng.standard_normal(dim)
        nrm = np.linalg.norm(z)
        if nrm > 0.0:
            return (radius / nrm) * z


STREAM_NAMES = ("stop", "explore", "restart", "process", "observe")


def spawn_streams(seed):
    """Independent per-purpose generators derived from one run seed.

    All five streams are always spawned so runs that ignore some of them
    (e.g. noise-free training) still share the others bit for bit.
    """
    children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
    return {name: np.random.default_rng(child) for name, child in zip(STREAM_NAMES, children)}


def norm_guard(matrix, ceiling, what):
    """Raise DivergenceError when a learned matrix blows past its ceiling."""
    nrm = frobenius(matrix)
    if not np.isfinite(nrm) or nrm > ceiling:
        raise DivergenceError(
            f"{what} norm {nrm:.6g} exceeded the divergence ceiling {ceiling:.6g}",
            residual=nrm,
        )
