"""Dense linear algebra for the null-space step decomposition.

Every constrained step in this library splits into a normal component in
range(J.T) that reduces constraint violation and a tangential component in
null(J) obtained by projection.  Both reduce to small positive-definite
solves with J @ J.T, which is what this module provides, together with a
direct solve of the full KKT system that serves as an independent oracle
for the decomposed path.

All solves are dense; the number of constraints m is assumed small
(tens at most), so the O(m^3 + m^2 n) cost of a step is dominated by the
matrix-vector products with J.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite

# Fixed tolerances; deliberately not configurable so property tests are
# deterministic.
SYMMETRY_TOL = 1e-10
JITTER_SCALE = 1e-10


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-d array, got ndim={a.ndim}")
    return a


def _as_vector(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 1:
        raise DimensionMismatch(f"{name} must be a 1-d array, got ndim={a.ndim}")
    return a


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor L with L @ L.T equal to the input matrix."""

    dim: int
    lower: np.ndarray

    @classmethod
    def factor(cls, a: np.ndarray, jitter: bool = False) -> "CholeskyFactor":
        """Factor a symmetric positive-definite matrix.

        Raises NotPositiveDefinite when the factorization breaks down.  With
        jitter enabled, one retry is made with trace(a)/m * 1e-10 added to
        the diagonal; this is off by default so that rank-deficient
        Jacobians fail loudly instead of being silently regularized.
        """
        a = _as_matrix(a, "a")
        m = a.shape[0]
        if a.shape[1] != m or m < 1:
            raise DimensionMismatch(f"expected square matrix, got {a.shape}")
        if np.abs(a - a.T).max() > SYMMETRY_TOL * max(1.0, np.abs(a).max()):
            raise ValueError("matrix is not symmetric within tolerance")
        try:
            lower = np.linalg.cholesky(a)
        except np.linalg.LinAlgError:
            if not jitter:
                raise NotPositiveDefinite(
                    f"Cholesky failed on {m}x{m} matrix (rank-deficient Jacobian?)"
                ) from None
            delta = JITTER_SCALE * np.trace(a) / m
            try:
                lower = np.linalg.cholesky(a + delta * np.eye(m))
            except np.linalg.LinAlgError:
                raise NotPositiveDefinite(
                    f"Cholesky failed on {m}x{m} matrix even with jitter {delta:.3e}"
                ) from None
        return cls(dim=m, lower=lower)

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve (L @ L.T) x = b via the two triangular systems."""
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.dim:
            raise DimensionMismatch(f"rhs has length {b.shape[0]}, expected {self.dim}")
        y = np.linalg.solve(self.lower, b)
        return np.linalg.solve(self.lower.T, y)


def cholesky_solve(a: np.ndarray, b: np.ndarray, jitter: bool = False) -> np.ndarray:
    """Solve a @ x = b for symmetric positive-definite a."""
    return CholeskyFactor.factor(a, jitter=jitter).solve(b)


class JacobianFactor:
    """A constraint Jacobian together with its factored normal matrix.

    Steppers build one of these per iteration so the Cholesky of J @ J.T is
    computed once and reused by every projection and normal-step solve in
    that iteration.
    """

    def __init__(self, jac: np.ndarray, jitter: bool = False):
        jac = _as_matrix(jac, "J")
        m, n = jac.shape
        if m >= n:
            raise DimensionMismatch(
                f"need fewer constraints than variables, got m={m}, n={n}"
            )
        self.jac = jac
        self.m = m
        self.n = n
        if m == 1:
            # scalar normal matrix; positivity check doubles as the rank check
            a = float(jac[0] @ jac[0])
            if jitter:
                a += JITTER_SCALE * a
            if not a > 0.0:
                raise NotPositiveDefinite("1x1 normal matrix is not positive")
            self._inv = None
            self._scalar = a
        else:
            # factor once (this is the rank check), then keep the explicit
            # inverse so the several solves per step are plain matvecs; m is
            # small and bounded away from singular, so this loses nothing
            factor = CholeskyFactor.factor(jac @ jac.T, jitter=jitter)
            inv_lower = np.linalg.solve(factor.lower, np.eye(m))
            self._inv = inv_lower.T @ inv_lower

    def solve_normal(self, b: np.ndarray) -> np.ndarray:
        """Solve (J @ J.T) x = b."""
        if self._inv is None:
            return b / self._scalar
        return self._inv @ b

    def project(self, q: np.ndarray) -> np.ndarray:
        """Project q onto null(J): q - J.T (J J.T)^{-1} J q."""
        q = _as_vector(q, "q")
        if q.shape[0] != self.n:
            raise DimensionMismatch(f"q has length {q.shape[0]}, expected {self.n}")
        return q - self.jac.T @ self.solve_normal(self.jac @ q)

    def normal_step(self, c: np.ndarray, rho: float = 1.0) -> np.ndarray:
        """Return v = -rho * J.T (J J.T)^{-1} c, the violation-reducing step.

        v lies in range(J.T) and satisfies J v = -rho * c.
        """
        c = _as_vector(c, "c")
        if c.shape[0] != self.m:
            raise DimensionMismatch(f"c has length {c.shape[0]}, expected {self.m}")
        if not 0.0 < rho <= 1.0:
            raise ValueError(f"rho must be in (0, 1], got {rho}")
        return -rho * (self.jac.T @ self.solve_normal(c))


def project_null(jac: np.ndarray, q: np.ndarray, jitter: bool = False) -> np.ndarray:
    """Project q onto the null space of a full-row-rank Jacobian."""
    return JacobianFactor(jac, jitter=jitter).project(q)


def normal_step(jac: np.ndarray, c: np.ndarray, rho: float = 1.0,
                jitter: bool = False) -> np.ndarray:
    """Step toward the linearized constraint manifold, scaled by rho."""
    return JacobianFactor(jac, jitter=jitter).normal_step(c, rho)


def projection_matrix(jac: np.ndarray) -> np.ndarray:
    """Explicitly form P = I - J.T (J J.T)^{-1} J.

    Intended for tests and small diagnostics only; the solvers never
    materialize P.
    """
    f = JacobianFactor(jac)
    n = f.n
    return np.eye(n) - jac.T @ f.solve_normal(jac)


def kkt_solve_direct(jac: np.ndarray, q: np.ndarray, c: np.ndarray
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Solve the full KKT system with identity Hessian block.

        [ I   J.T ] [ s ]     [ q ]
        [ J   0   ] [ y ] = - [ c ]

    Returns (s, y).  This one-shot dense solve is the oracle against which
    the decomposed path (normal step plus projection) is checked; it shares
    no code with that path.
    """
    jac = _as_matrix(jac, "J")
    q = _as_vector(q, "q")
    c = _as_vector(c, "c")
    m, n = jac.shape
    if m >= n:
        raise DimensionMismatch(f"need fewer constraints than variables, got m={m}, n={n}")
    if q.shape[0] != n or c.shape[0] != m:
        raise DimensionMismatch(
            f"rhs sizes ({q.shape[0]}, {c.shape[0]}) do not match J {jac.shape}"
        )
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = np.eye(n)
    kkt[:n, n:] = jac.T
    kkt[n:, :n] = jac
    rhs = -np.concatenate([q, c])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("KKT system is singular (rank-deficient Jacobian?)") from None
    return sol[:n], sol[n:]
