"""Dense symmetric/positive-definite matrix utilities used across the package.

Everything here is a pure function of ndarray inputs.  Matrix norms are
spectral (largest singular value) unless a function name says otherwise.
"""

import numpy as np


class DimensionError(ValueError):
    """Shapes of the operands do not match the operation."""


class DefinitenessError(ValueError):
    """A matrix required to be positive definite is not.

    ``eigenvalue`` carries the offending (smallest) eigenvalue when known.
    """

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class DivergenceError(RuntimeError):
    """An iteration failed to converge; ``residual`` holds the last gap."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


def sym(a):
    """Exactly symmetric copy of ``a``; use wherever symmetry must hold bitwise."""
    a = np.asarray(a, dtype=float)
    return (a + a.T) / 2.0


def frobenius(a):
    a = np.asarray(a, dtype=float)
    return float(np.sqrt((a * a).sum()))


def spectral_norm(m):
    """Largest singular value of ``m``."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.size == 0:
        raise DimensionError("spectral_norm of an empty matrix")
    return float(np.linalg.norm(m, 2))


def spectral_radius(m):
    """Largest absolute eigenvalue (general square matrix)."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[0] != m.shape[1] or m.size == 0:
        raise DimensionError(f"spectral_radius needs a nonempty square matrix, got {m.shape}")
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def min_eigenvalue(s):
    """Smallest eigenvalue of a symmetric matrix."""
    s = np.atleast_2d(np.asarray(s, dtype=float))
    if s.shape[0] != s.shape[1] or s.size == 0:
        raise DimensionError(f"min_eigenvalue needs a nonempty square matrix, got {s.shape}")
    return float(np.linalg.eigvalsh(s)[0])


def max_eigenvalue(s):
    s = np.atleast_2d(np.asarray(s, dtype=float))
    if s.shape[0] != s.shape[1] or s.size == 0:
        raise DimensionError(f"max_eigenvalue needs a nonempty square matrix, got {s.shape}")
    return float(np.linalg.eigvalsh(s)[-1])


def psd_order_geq(a, b, tol=1e-10):
    """True iff ``a - b`` is positive semidefinite up to ``-tol`` on the spectrum."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"psd_order_geq shapes differ: {a.shape} vs {b.shape}")
    return min_eigenvalue(a - b) >= -tol


def pd_solve_fast(a, rhs):
    """Cholesky-gated solve for hot paths; no input validation.

    The factorization certifies positive definiteness (raising
    DefinitenessError otherwise); the solve itself never forms an inverse.
    """
    if a.shape[0] == 1:
        v = a[0, 0]
        if not v > 0.0:
            raise DefinitenessError(
                f"matrix is not positive definite (min eigenvalue {v:.6g})",
                eigenvalue=float(v),
            )
        return rhs / v
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        bad = min_eigenvalue(a)
        raise DefinitenessError(
            f"matrix is not positive definite (min eigenvalue {bad:.6g})", eigenvalue=bad
        ) from exc
    return np.linalg.solve(a, rhs)


def spd_solve(a, rhs):
    """Solve ``a @ x = rhs`` for symmetric positive-definite ``a``.

    Raises DefinitenessError (with the offending eigenvalue) when ``a`` is
    not PD.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    rhs = np.asarray(rhs, dtype=float)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"spd_solve needs a square matrix, got {a.shape}")
    if rhs.shape[0] != a.shape[0]:
        raise DimensionError(f"spd_solve rhs has {rhs.shape[0]} rows, expected {a.shape[0]}")
    return pd_solve_fast(a, rhs)


def woodbury_gain(r, g, pi):
    """Gain factor ``(r + g.T @ pi @ g)^-1 @ g.T @ pi`` for PD ``r`` and ``pi``."""
    r = np.atleast_2d(np.asarray(r, dtype=float))
    g = np.atleast_2d(np.asarray(g, dtype=float))
    pi = np.atleast_2d(np.asarray(pi, dtype=float))
    if g.shape != (pi.shape[0], r.shape[0]):
        raise DimensionError(
            f"woodbury_gain shapes inconsistent: r {r.shape}, g {g.shape}, pi {pi.shape}"
        )
    return spd_solve(sym(r + g.T @ pi @ g), g.T @ pi)


def woodbury_gain_expanded(r, g, pi):
    """Equivalent form ``r^-1 g.T (g r^-1 g.T + pi^-1)^-1``.

    Exists to cross-check :func:`woodbury_gain`; requires ``pi`` invertible and
    is the one place an explicit inverse is acceptable.
    """
    r = np.atleast_2d(np.asarray(r, dtype=float))
    g = np.atleast_2d(np.asarray(g, dtype=float))
    pi = np.atleast_2d(np.asarray(pi, dtype=float))
    if min_eigenvalue(pi) <= 0:
        raise DefinitenessError(
            "expanded gain form needs positive definite pi", eigenvalue=min_eigenvalue(pi)
        )
    r_inv_gt = spd_solve(r, g.T)
    middle = sym(g @ r_inv_gt + np.linalg.inv(pi))
    return spd_solve(middle, r_inv_gt.T).T
