"""Tolerance-aware linear algebra on tangent spaces.

Every rank decision in the package goes through :func:`nullspace`, so one
relative threshold (``rtol``) governs all of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import subspace_angles

DEFAULT_RANK_TOL = 1e-9


def nullspace(M, rtol: float = DEFAULT_RANK_TOL, scale: float | None = None) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical nullspace of ``M``.

    Singular values below ``rtol * scale`` count as zero; ``scale`` defaults to
    the largest singular value.  Pass an explicit ``scale`` when ``M`` may be
    pure round-off (e.g. a restriction of a form that should vanish).
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    ncols = M.shape[1]
    if M.size == 0 or M.shape[0] == 0:
        return np.eye(ncols)
    _, s, vt = np.linalg.svd(M, full_matrices=True)
    ref = s[0] if scale is None else scale
    if ref == 0.0:
        return np.eye(ncols)
    rank = int(np.sum(s > rtol * ref))
    return vt[rank:].T.copy()


def rank(M, rtol: float = DEFAULT_RANK_TOL, scale: float | None = None) -> int:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return M.shape[1] - nullspace(M, rtol, scale).shape[1]


def orth(M, rtol: float = DEFAULT_RANK_TOL, scale: float | None = None) -> np.ndarray:
    """Orthonormal basis of the column span of ``M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] == 0:
        return np.zeros((M.shape[0], 0))
    u, s, _ = np.linalg.svd(M, full_matrices=False)
    ref = s[0] if scale is None else scale
    if ref == 0.0:
        return np.zeros((M.shape[0], 0))
    return u[:, s > rtol * ref].copy()


def sym(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def restrict(form, basis) -> np.ndarray:
    """Gram matrix of a bilinear form on the columns of ``basis``."""
    return basis.T @ form @ basis


def echelon(basis, rtol: float = 1e-9) -> tuple[np.ndarray, tuple[int, ...]]:
    """Canonical basis of a column span, pivoted on the *last* nonzero coordinate.

    Returns ``(E, pivots)``: every column of ``E`` has entry 1 at its pivot
    coordinate and 0 at the other columns' pivots; columns are sorted by
    pivot.  For span{e1 - e3, e2 - e4} this gives e3 - e1 and e4 - e2.
    The result depends only on the subspace, not on the input basis.
    """
    B = np.asarray(basis, dtype=float)
    n, k = B.shape
    if k == 0:
        return np.zeros((n, 0)), ()
    R = B.T.copy()  # rows span the subspace
    scale = np.max(np.abs(R))
    pivots = []
    row = 0
    for col in range(n - 1, -1, -1):
        if row == k:
            break
        piv = row + int(np.argmax(np.abs(R[row:, col])))
        if abs(R[piv, col]) <= rtol * scale:
            R[row:, col] = 0.0
            continue
        R[[row, piv]] = R[[piv, row]]
        R[row] /= R[row, col]
        others = np.arange(k) != row
        R[others] -= np.outer(R[others, col], R[row])
        R[others, col] = 0.0
        R[row, col] = 1.0
        pivots.append(col)
        row += 1
    order = np.argsort(pivots)
    E = R[:len(pivots)][order].T
    E[np.abs(E) <= 1e-14 * scale] = 0.0
    return E, tuple(int(pivots[i]) for i in order)


@dataclass(frozen=True)
class Subspace:
    """A linear subspace of R^n stored by an orthonormal basis (columns).

    Orthonormality is coordinate bookkeeping only; geometric orthogonality is
    always taken with an explicitly named bilinear form.
    """

    basis: np.ndarray
    tol: float = DEFAULT_RANK_TOL
    ambient: int = field(default=-1)

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        object.__setattr__(self, "basis", B)
        if self.ambient < 0:
            object.__setattr__(self, "ambient", B.shape[0])

    @classmethod
    def span(cls, vectors, tol: float = DEFAULT_RANK_TOL, ambient: int | None = None) -> "Subspace":
        """Subspace spanned by the columns of ``vectors`` (rank decided at ``tol``)."""
        V = np.asarray(vectors, dtype=float)
        if V.ndim == 1:
            V = V.reshape(-1, 1)
        if V.size == 0:
            n = ambient if ambient is not None else V.shape[0]
            return cls(np.zeros((n, 0)), tol, n)
        return cls(orth(V, tol), tol, V.shape[0])

    @classmethod
    def zero(cls, n: int) -> "Subspace":
        return cls(np.zeros((n, 0)), ambient=n)

    @classmethod
    def full(cls, n: int) -> "Subspace":
        return cls(np.eye(n), ambient=n)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        """Coordinate-orthogonal projector (bookkeeping, not geometric)."""
        return self.basis @ self.basis.T

    def contains(self, v, atol: float = 1e-8) -> bool:
        v = np.asarray(v, dtype=float)
        r = v - self.basis @ (self.basis.T @ v)
        return bool(np.linalg.norm(r) <= atol * max(1.0, np.linalg.norm(v)))

    def angle(self, other: "Subspace") -> float:
        """Largest principal angle to ``other``; ``pi/2`` if dimensions differ."""
        return subspace_angle(self.basis, other.basis)

    def echelon_basis(self) -> np.ndarray:
        return echelon(self.basis, max(self.tol, 1e-9))[0]

    def pivots(self) -> tuple[int, ...]:
        return echelon(self.basis, max(self.tol, 1e-9))[1]


def subspace_angle(A, B) -> float:
    """Largest principal angle between the column spans of ``A`` and ``B``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[1] != B.shape[1]:
        return float(np.pi / 2)
    if A.shape[1] == 0:
        return 0.0
    return float(np.max(subspace_angles(A, B)))


def form_kernel(form, within: np.ndarray | None = None, rtol: float = DEFAULT_RANK_TOL,
                scale: float | None = None) -> np.ndarray:
    """Kernel of ``form`` restricted to span(``within``), as ambient columns.

    ``scale`` defaults to the norm of the unrestricted form, so a restriction
    that is pure round-off is recognised as zero.
    """
    form = np.asarray(form, dtype=float)
    n = form.shape[0]
    if within is None:
        within = np.eye(n)
    if within.shape[1] == 0:
        return np.zeros((n, 0))
    if scale is None:
        scale = np.linalg.norm(form, 2)
    H = restrict(form, within)
    return within @ nullspace(H, rtol, scale=scale if scale > 0 else None)


def orthogonal_complement(form, sub: np.ndarray, within: np.ndarray | None = None,
                          rtol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """{x in span(within) : form(x, s) = 0 for all s in span(sub)} as ambient columns."""
    form = np.asarray(form, dtype=float)
    n = form.shape[0]
    if within is None:
        within = np.eye(n)
    if sub.shape[1] == 0:
        return orth(within) if within.shape[1] else within
    if within.shape[1] == 0:
        return within
    M = sub.T @ form @ within
    return orth(within @ nullspace(M, rtol, scale=np.linalg.norm(form, 2)))


def form_projector(form, basis) -> np.ndarray:
    """Projector onto span(basis) along its ``form``-orthogonal complement.

    Requires ``form`` non-degenerate on span(basis).
    """
    G = restrict(form, basis)
    return basis @ np.linalg.solve(G, basis.T @ form)


def sym_basis(n: int) -> list[np.ndarray]:
    """Basis E_ij + E_ji (i <= j, diagonal entries E_ii) of symmetric n x n matrices."""
    out = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            out.append(E)
    return out
