"""Dense linear algebra primitives used by the models and controllers.

Everything operates on 2-D float64 numpy arrays.  The routines here are
deliberately small and self-contained: a partial-pivoting linear solve with an
explicit singularity test, a scaling-and-squaring matrix exponential, and a
discrete Lyapunov solver built on the Kronecker vectorization of the
equation.  They are sized for the small, dense matrices that show up in
power-system frequency models (a handful of states), not for large sparse
problems.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "SingularMatrixError",
    "UnstableSystemError",
    "as_matrix",
    "solve_linear",
    "matrix_exponential",
    "kronecker",
    "solve_discrete_lyapunov",
    "is_positive_semidefinite",
]

# Pivot threshold for solve_linear, relative to the largest initial row norm.
PIVOT_RTOL = 1e-12
# Residual guarantee of solve_linear, relative to max(1, ||b||_inf).
RESIDUAL_RTOL = 1e-10
# Truncation order of the Pade core of matrix_exponential.
PADE_ORDER = 13
# Shift used when testing positive semidefiniteness via Cholesky.
PSD_SHIFT = 1e-10


class SingularMatrixError(ValueError):
    """Raised when a linear system has no reliable solution.

    The solve aborts as soon as the best available pivot falls below
    ``PIVOT_RTOL`` times the largest row norm of the input matrix.
    """


class UnstableSystemError(ValueError):
    """Raised when a discrete Lyapunov equation has no unique solution.

    The vectorized system matrix ``kron(a, a) - I`` is singular exactly when
    some product of eigenvalues of ``a`` equals one, which for real systems
    is the boundary of discrete-time stability.
    """


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return ``a`` as a 2-D float64 array with finite entries."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def solve_linear(a, b, *, pivot_rtol: float = PIVOT_RTOL) -> np.ndarray:
    """Solve ``a @ x = b`` by Gaussian elimination with partial pivoting.

    Parameters
    ----------
    a : (n, n) array_like
        Square coefficient matrix with finite entries.
    b : (n,) or (n, m) array_like
        Right-hand side, one or several columns.
    pivot_rtol : float, optional
        Relative pivot threshold.  A pivot whose magnitude falls below
        ``pivot_rtol`` times the largest initial row norm triggers
        :class:`SingularMatrixError`.

    Returns
    -------
    x : ndarray
        Solution with the same trailing shape as ``b``.  The residual
        satisfies ``||a @ x - b||_inf <= 1e-10 * max(1, ||b||_inf)`` for
        well-conditioned inputs; callers relying on that bound should keep
        their systems away from the singularity threshold.
    """
    m = as_matrix(a, "a").copy()
    n = m.shape[0]
    if m.shape[1] != n:
        raise ValueError(f"a must be square, got shape {m.shape}")
    rhs = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(rhs)):
        raise ValueError("b contains non-finite entries")
    squeeze = rhs.ndim == 1
    rhs = rhs.reshape(n, -1).copy()
    if rhs.shape[0] != n:
        raise ValueError(f"b has {rhs.shape[0]} rows, expected {n}")

    if n == 0:
        return rhs[:, 0] if squeeze else rhs

    # Singularity is judged against the scale of the untouched input.
    row_scale = np.max(np.abs(m), axis=1) if n else np.zeros(0)
    pivot_floor = pivot_rtol * max(np.max(row_scale), 0.0)

    for k in range(n):
        pivot_row = k + int(np.argmax(np.abs(m[k:, k])))
        pivot = m[pivot_row, k]
        if abs(pivot) <= pivot_floor:
            raise SingularMatrixError(
                f"pivot {abs(pivot):.3e} below threshold {pivot_floor:.3e} "
                f"at elimination step {k}"
            )
        if pivot_row != k:
            m[[k, pivot_row]] = m[[pivot_row, k]]
            rhs[[k, pivot_row]] = rhs[[pivot_row, k]]
        factors = m[k + 1 :, k] / pivot
        m[k + 1 :, k:] -= np.outer(factors, m[k, k:])
        rhs[k + 1 :] -= np.outer(factors, rhs[k])

    x = np.empty_like(rhs)
    for k in range(n - 1, -1, -1):
        x[k] = (rhs[k] - m[k, k + 1 :] @ x[k + 1 :]) / m[k, k]
    return x[:, 0] if squeeze else x


# Coefficients of the degree-13 Pade numerator of exp(x); the denominator
# uses the same coefficients with alternating signs.
_PADE13_COEFFS = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)


def matrix_exponential(a) -> np.ndarray:
    """Compute ``exp(a)`` by scaling and squaring with a degree-13 Pade core.

    The input is scaled by ``2**-s`` with ``s = ceil(log2(||a||_1))`` (zero
    when the norm is already at most one), passed through the rational
    approximation, and squared back up.  For diagonal input the result is the
    elementwise exponential of the diagonal to machine precision.
    """
    m = as_matrix(a, "a")
    n = m.shape[0]
    if m.shape[1] != n:
        raise ValueError(f"a must be square, got shape {m.shape}")
    if n == 0:
        return np.zeros((0, 0))

    norm1 = float(np.max(np.sum(np.abs(m), axis=0)))
    squarings = max(0, int(np.ceil(np.log2(norm1)))) if norm1 > 1.0 else 0
    m = m / (2.0**squarings)

    # exp(m) ~= q(m)^-1 p(m) with p = V + U, q = V - U (odd/even split).
    b = _PADE13_COEFFS
    ident = np.eye(n)
    m2 = m @ m
    m4 = m2 @ m2
    m6 = m4 @ m2
    u = m @ (
        m6 @ (b[13] * m6 + b[11] * m4 + b[9] * m2)
        + b[7] * m6
        + b[5] * m4
        + b[3] * m2
        + b[1] * ident
    )
    v = (
        m6 @ (b[12] * m6 + b[10] * m4 + b[8] * m2)
        + b[6] * m6
        + b[4] * m4
        + b[2] * m2
        + b[0] * ident
    )
    result = solve_linear(v - u, v + u)
    for _ in range(squarings):
        result = result @ result
    return result


def kronecker(a, b) -> np.ndarray:
    """Kronecker product of two matrices."""
    return np.kron(as_matrix(a, "a"), as_matrix(b, "b"))


def solve_discrete_lyapunov(a, q, *, residual_rtol: float = RESIDUAL_RTOL) -> np.ndarray:
    """Solve ``a @ x @ a.T - x + q = 0`` for symmetric ``x``.

    The equation is vectorized as ``(kron(a, a) - I) vec(x) = -vec(q)`` and
    handed to :func:`solve_linear`.  Stability of ``a`` is checked without
    eigenvalue routines: the vectorized system is singular exactly on the
    unit-circle boundary, and for a spectral radius beyond one the solution
    of the vectorized system loses positive semidefiniteness whenever ``q``
    is PSD.  Either symptom raises :class:`UnstableSystemError`.

    Parameters
    ----------
    a : (n, n) array_like
        System matrix; must have spectral radius below one for a unique
        solution to exist.
    q : (n, n) array_like
        Symmetric weight matrix.

    Returns
    -------
    x : (n, n) ndarray
        Symmetrized solution.  When ``q`` is positive semidefinite so is
        ``x``.  The residual ``||a x a.T - x + q||_inf`` stays below
        ``residual_rtol * max(1, ||q||_inf)`` away from the stability
        boundary.
    """
    am = as_matrix(a, "a")
    qm = as_matrix(q, "q")
    n = am.shape[0]
    if am.shape != (n, n) or qm.shape != (n, n):
        raise ValueError(
            f"a and q must be square and matching, got {am.shape} and {qm.shape}"
        )

    system = kronecker(am, am) - np.eye(n * n)
    try:
        # Column-major vec so that vec(A X A^T) == kron(A, A) vec(X).
        vec_x = solve_linear(system, -qm.flatten(order="F"))
    except SingularMatrixError as exc:
        raise UnstableSystemError(
            "discrete Lyapunov equation is singular; the system matrix has "
            "spectral radius at (or numerically near) one"
        ) from exc
    x = vec_x.reshape((n, n), order="F")
    x = 0.5 * (x + x.T)

    residual = np.max(np.abs(am @ x @ am.T - x + qm)) if n else 0.0
    bound = residual_rtol * max(1.0, float(np.max(np.abs(qm))) if n else 0.0)
    if residual > bound:
        raise UnstableSystemError(
            f"Lyapunov residual {residual:.3e} exceeds {bound:.3e}; "
            "system is too close to the stability boundary"
        )
    if is_positive_semidefinite(qm) and not is_positive_semidefinite(x):
        raise UnstableSystemError(
            "solution is not positive semidefinite for PSD q; the system "
            "matrix has spectral radius beyond one"
        )
    return x


def is_positive_semidefinite(m, *, shift: float = PSD_SHIFT) -> bool:
    """Whether symmetric ``m`` is PSD up to a small diagonal shift.

    The test attempts a Cholesky factorization of ``m + shift * s * I`` where
    ``s = max(1, ||m||_inf)``, so the tolerance scales with the matrix.
    """
    a = as_matrix(m, "m")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    try:
        np.linalg.cholesky(a + shift * scale * np.eye(a.shape[0]))
    except np.linalg.LinAlgError:
        return False
    return True
