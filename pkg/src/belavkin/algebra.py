"""Dense complex small-matrix kernel.

Matrices are plain ``numpy`` arrays of shape ``(n, n)``. Superoperators act on
column-stacked vectorizations::

    vec(M)[i + n*j] = M[i, j]        (Fortran / column-major order)

so that ``vec(A M B) = kron(B.T, A) @ vec(M)``. Every constructor below states
its matrix in this convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import AmbiguityError, InvalidInputError, InvalidStateError

__all__ = [
    "Superoperator",
    "dag",
    "commutator",
    "anticommutator",
    "vec",
    "unvec",
    "identity_super",
    "spre",
    "spost",
    "sprepost",
    "hamiltonian_super",
    "dissipator",
    "expm",
    "apply_super",
    "steady_state",
    "check_density",
    "projector",
    "min_eigenvalue",
]

TRACE_TOL = 1e-10
HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = -1e-8


def _as_matrix(m, name="matrix"):
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return a


def dag(m):
    """Conjugate transpose."""
    return np.conj(np.swapaxes(m, -1, -2))


def commutator(a, b):
    return a @ b - b @ a


def anticommutator(a, b):
    return a @ b + b @ a


def vec(m):
    """Column-stack a matrix (or a stack of matrices along the last two axes)."""
    m = np.asarray(m)
    n = m.shape[-1]
    return np.swapaxes(m, -1, -2).reshape(m.shape[:-2] + (n * n,))


def unvec(v, n=None):
    v = np.asarray(v)
    if n is None:
        n = int(round(np.sqrt(v.shape[-1])))
    if n * n != v.shape[-1]:
        raise InvalidInputError(f"vector of length {v.shape[-1]} is not a vectorized square matrix")
    return np.swapaxes(v.reshape(v.shape[:-1] + (n, n)), -1, -2)


@dataclass(frozen=True, eq=False)
class Superoperator:
    """Linear map on ``dim x dim`` matrices stored as a ``dim**2 x dim**2`` array."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidInputError(f"superoperator matrix must be square, got {m.shape}")
        n = int(round(np.sqrt(m.shape[0])))
        if n * n != m.shape[0]:
            raise InvalidInputError(f"superoperator size {m.shape[0]} is not a square number")
        if not np.all(np.isfinite(m)):
            raise InvalidInputError("superoperator has non-finite entries")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.matrix.shape[0])))

    def __call__(self, m):
        return apply_super(self, m)

    def __matmul__(self, other: "Superoperator") -> "Superoperator":
        """Composition ``(self @ other)(M) = self(other(M))``."""
        return Superoperator(self.matrix @ other.matrix)

    def __add__(self, other: "Superoperator") -> "Superoperator":
        return Superoperator(self.matrix + other.matrix)

    def __sub__(self, other: "Superoperator") -> "Superoperator":
        return Superoperator(self.matrix - other.matrix)

    def __mul__(self, scalar) -> "Superoperator":
        return Superoperator(self.matrix * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Superoperator":
        return Superoperator(-self.matrix)

    def dual(self) -> "Superoperator":
        """Heisenberg-picture dual, defined by ``Tr(X S(rho)) = Tr(S'(X) rho)``.

        With ``Tr(X M) = vec(X.T) . vec(M)`` the dual matrix is ``P S.T P``
        where ``P`` is the transpose permutation on vectorized matrices.
        """
        n = self.dim
        perm = _transpose_permutation(n)
        return Superoperator(self.matrix.T[np.ix_(perm, perm)])

    def norm(self) -> float:
        """Operator 2-norm of the matrix representation."""
        return float(np.linalg.norm(self.matrix, 2))


def _transpose_permutation(n):
    idx = np.arange(n * n)
    i, j = idx % n, idx // n
    return j + n * i


def identity_super(n: int) -> Superoperator:
    return Superoperator(np.eye(n * n, dtype=complex))


def spre(a) -> Superoperator:
    """``M -> A M``, matrix ``kron(I, A)``."""
    a = _as_matrix(a)
    return Superoperator(np.kron(np.eye(a.shape[0]), a))


def spost(b) -> Superoperator:
    """``M -> M B``, matrix ``kron(B.T, I)``."""
    b = _as_matrix(b)
    return Superoperator(np.kron(b.T, np.eye(b.shape[0])))


def sprepost(a, b) -> Superoperator:
    """``M -> A M B``, matrix ``kron(B.T, A)``."""
    a = _as_matrix(a)
    b = _as_matrix(b)
    return Superoperator(np.kron(b.T, a))


def hamiltonian_super(h) -> Superoperator:
    """``rho -> -i[H, rho]``."""
    h = _as_matrix(h, "H")
    return Superoperator(-1j * (spre(h).matrix - spost(h).matrix))


def dissipator(v) -> Superoperator:
    """``rho -> V rho V* - 1/2 {V*V, rho}``."""
    v = _as_matrix(v, "V")
    vdv = dag(v) @ v
    return Superoperator(sprepost(v, dag(v)).matrix - 0.5 * (spre(vdv).matrix + spost(vdv).matrix))


def expm(s: Superoperator, t: float = 1.0) -> Superoperator:
    """Return ``exp(t S)`` (scaling and squaring with Pade approximants)."""
    if not np.isfinite(t):
        raise InvalidInputError(f"time must be finite, got {t}")
    if t == 0:
        return identity_super(s.dim)
    return Superoperator(scipy.linalg.expm(t * s.matrix))


def apply_super(s: Superoperator, m) -> np.ndarray:
    """Apply ``S`` to a matrix, or to a stack of matrices along the last two axes."""
    m = np.asarray(m, dtype=complex)
    n = s.dim
    if m.shape[-2:] != (n, n):
        raise InvalidInputError(f"superoperator of dim {n} cannot act on shape {m.shape}")
    return unvec(vec(m) @ s.matrix.T, n)


def steady_state(generator: Superoperator, tol: float = 1e-10) -> np.ndarray:
    """Unique trace-one fixed point of the semigroup generated by ``generator``.

    Raises
    ------
    AmbiguityError
        If the numerical null space is not one-dimensional.
    """
    n = generator.dim
    if n == 1:
        if abs(generator.matrix[0, 0]) > tol:
            raise AmbiguityError("1x1 generator has no null space")
        return np.ones((1, 1), dtype=complex)
    _, sv, vh = np.linalg.svd(generator.matrix)
    scale = max(1.0, sv[0])
    null_dim = int(np.sum(sv <= 1e-9 * scale))
    if null_dim != 1:
        raise AmbiguityError(f"null space of the generator has dimension {null_dim}")
    rho = unvec(np.conj(vh[-1]), n)
    tr = np.trace(rho)
    if abs(tr) < 1e-12:
        raise AmbiguityError("null vector is traceless; no normalizable steady state")
    rho = rho / tr
    rho = 0.5 * (rho + dag(rho))
    residual = np.linalg.norm(apply_super(generator, rho))
    if residual > tol * max(1.0, generator.norm()):
        raise AmbiguityError(f"steady-state residual {residual:.3e} exceeds tolerance")
    return rho


def projector(i: int, n: int = 2) -> np.ndarray:
    p = np.zeros((n, n), dtype=complex)
    p[i, i] = 1.0
    return p


def min_eigenvalue(rho) -> float:
    rho = np.asarray(rho)
    return float(np.linalg.eigvalsh(0.5 * (rho + dag(rho))).min())


def check_density(rho, trace_tol=TRACE_TOL, herm_tol=HERMITIAN_TOL, pos_tol=POSITIVITY_TOL) -> np.ndarray:
    """Validate a density matrix and return it as a complex array.

    Tolerances default to the package-wide ones (trace and Hermiticity 1e-10,
    eigenvalues down to -1e-8).
    """
    rho = _as_matrix(rho, "density matrix")
    if abs(np.trace(rho) - 1.0) > trace_tol:
        raise InvalidStateError(f"trace {np.trace(rho)} differs from 1")
    if np.max(np.abs(rho - dag(rho))) > herm_tol:
        raise InvalidStateError("density matrix is not Hermitian")
    lam = min_eigenvalue(rho)
    if lam < pos_tol:
        raise InvalidStateError(f"minimum eigenvalue {lam:.3e} below {pos_tol}")
    return rho
