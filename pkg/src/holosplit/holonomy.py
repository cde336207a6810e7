"""Infinitesimal holonomy algebra at a point and its invariants.

The algebra is spanned by the curvature endomorphisms R(e_i, e_j), the
endomorphisms (nabla^m R)(e_a..., e_i, e_j), and commutators of all of
these.  Invariant vectors and invariant symmetric bilinear forms at the base
point stand in for parallel vector fields and parallel symmetric forms.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ToleranceError
from .geometry import MetricSpec, metric_at, nabla_riemann_at
from .linalg import (DEFAULT_RANK_TOL, Subspace, form_kernel, nullspace, orth,
                     orthogonal_complement, restrict, sym_basis)

log = logging.getLogger(__name__)

DEFAULT_MAX_ORDER = 4


@dataclass(frozen=True)
class HolonomyAlgebra:
    """Spanning set (Frobenius-orthonormal) of the holonomy algebra at ``base_point``."""

    base_point: np.ndarray
    metric: np.ndarray
    generators: np.ndarray  # shape (k, n, n)
    order: int
    stabilized: bool
    rank_history: tuple = ()
    tol: float = DEFAULT_RANK_TOL

    @property
    def dim(self) -> int:
        return self.generators.shape[0]

    @property
    def n(self) -> int:
        return self.metric.shape[0]

    def skew_residual(self) -> float:
        """max_A ||g A + (g A)^T|| / (||A|| ||g||); zero for a subalgebra of so(g)."""
        if self.dim == 0:
            return 0.0
        g = self.metric
        res = [np.linalg.norm(g @ A + (g @ A).T) / (np.linalg.norm(A) * np.linalg.norm(g))
               for A in self.generators]
        return float(max(res))

    def closure_residual(self) -> float:
        """Largest distance of a commutator of generators from their span."""
        if self.dim == 0:
            return 0.0
        flat = self.generators.reshape(self.dim, -1).T
        worst = 0.0
        for A in self.generators:
            for B in self.generators:
                c = (A @ B - B @ A).ravel()
                r = c - flat @ (flat.T @ c)
                worst = max(worst, float(np.linalg.norm(r)))
        return worst


def curvature_endomorphisms(D: np.ndarray) -> np.ndarray:
    """All endomorphisms D[a..., :, :, i, j] (i < j) of a stored nabla^m R tensor."""
    n = D.shape[-1]
    m = D.ndim - 4
    moved = np.moveaxis(D, (m, m + 1), (-2, -1))  # (a..., i, j, l, k)
    iu, ju = np.triu_indices(n, 1)
    ops = moved[..., iu, ju, :, :]
    return ops.reshape(-1, n, n)


def _span(ops: np.ndarray, rtol: float) -> np.ndarray:
    n = ops.shape[-1]
    if ops.shape[0] == 0:
        return np.zeros((0, n, n))
    basis = orth(ops.reshape(ops.shape[0], -1).T, rtol)
    return basis.T.reshape(-1, n, n)


def _close(basis: np.ndarray, rtol: float) -> np.ndarray:
    n = basis.shape[-1] if basis.ndim == 3 else 0
    while basis.shape[0] > 1:
        comms = [A @ B - B @ A for i, A in enumerate(basis) for B in basis[i + 1:]]
        grown = _span(np.concatenate([basis, np.array(comms)]), rtol)
        if grown.shape[0] == basis.shape[0]:
            return grown
        basis = grown
    return basis if basis.size else np.zeros((0, n, n))


def generate_holonomy(spec: MetricSpec, p, max_order: int = DEFAULT_MAX_ORDER,
                      rtol: float = DEFAULT_RANK_TOL) -> HolonomyAlgebra:
    """Generate the infinitesimal holonomy algebra at ``p``.

    Orders of nabla^m R are added one at a time; generation stops as soon as
    an order (m >= 1) adds nothing to the commutator-closed span.  Hitting
    ``max_order`` without that happening is reported via ``stabilized=False``.
    """
    p = np.asarray(p, dtype=float)
    g = metric_at(spec, p)
    n = spec.n
    raw = np.zeros((0, n, n))
    basis = np.zeros((0, n, n))
    history = []
    stabilized = False
    order = 0
    computed = []
    for m in range(max_order + 1):
        if m >= len(computed):
            # recomputing the jets is cheap next to hand-rolled incremental bookkeeping
            computed = nabla_riemann_at(spec, p, min(max_order, max(1, 2 * m)))
        raw = np.concatenate([raw, curvature_endomorphisms(computed[m])])
        basis = _close(_span(raw, rtol), rtol)
        history.append(basis.shape[0])
        order = m
        if m >= 1 and history[-1] == history[-2]:
            stabilized = True
            break
    if not stabilized:
        log.warning("holonomy algebra did not stabilize up to order %d", max_order)
    return HolonomyAlgebra(base_point=p, metric=g, generators=basis, order=order,
                           stabilized=stabilized, rank_history=tuple(history), tol=rtol)


def algebra_from_generators(metric, generators, rtol: float = DEFAULT_RANK_TOL,
                            base_point=None) -> HolonomyAlgebra:
    """Build an algebra from explicit endomorphisms (closed under commutators)."""
    metric = np.asarray(metric, dtype=float)
    n = metric.shape[0]
    ops = np.asarray(generators, dtype=float).reshape(-1, n, n)
    basis = _close(_span(ops, rtol), rtol)
    bp = np.zeros(n) if base_point is None else np.asarray(base_point, dtype=float)
    return HolonomyAlgebra(bp, metric, basis, order=0, stabilized=True,
                           rank_history=(basis.shape[0],), tol=rtol)


def invariant_vectors(H: HolonomyAlgebra) -> Subspace:
    """Joint kernel of all generators."""
    n = H.n
    if H.dim == 0:
        return Subspace.full(n)
    stacked = H.generators.reshape(-1, n)
    return Subspace(nullspace(stacked, H.tol), H.tol, n)


def invariant_sym_forms(H: HolonomyAlgebra, g_x=None) -> list[np.ndarray]:
    """Basis of symmetric forms h with h(A., .) + h(., A.) = 0 for all generators A.

    The first element is exactly ``g_x`` (the metric at the base point by
    default); the rest complete it to a basis of the solution space.
    """
    n = H.n
    g_x = H.metric if g_x is None else np.asarray(g_x, dtype=float)
    E = sym_basis(n)
    if H.dim == 0:
        null = np.eye(len(E))
    else:
        cols = [np.concatenate([(A.T @ e + e @ A).ravel() for A in H.generators]) for e in E]
        null = nullspace(np.array(cols).T, H.tol)
    iu = np.triu_indices(n)
    gvec = g_x[iu]
    proj = null @ (null.T @ gvec)
    if np.linalg.norm(gvec - proj) > 1e-6 * np.linalg.norm(gvec):
        raise ToleranceError("invariant_sym_forms",
                             "metric is not invariant under the generated algebra",
                             residual=float(np.linalg.norm(gvec - proj)))
    unit = gvec / np.linalg.norm(gvec)
    rest = orth(null - np.outer(unit, unit @ null), 1e-8) if null.shape[1] > 1 else np.zeros((len(E), 0))

    def to_matrix(v):
        M = np.zeros((n, n))
        M[iu] = v
        return M + np.triu(M, 1).T

    return [g_x.copy()] + [to_matrix(v) for v in rest.T]


def form_invariance_residual(H: HolonomyAlgebra, h: np.ndarray) -> float:
    """max_A ||A^T h + h A|| / (||h|| ||A||) over the generators."""
    if H.dim == 0:
        return 0.0
    return float(max(np.linalg.norm(A.T @ h + h @ A) / (np.linalg.norm(h) * np.linalg.norm(A))
                     for A in H.generators))


@dataclass
class ReducedProblem:
    """The problem restricted to a complement of E_0.

    ``embedding`` has orthonormal columns spanning the complement (identity
    when E_0 = 0); forms are expressed in that basis.  In the null case
    ``null_vector`` is the lightlike invariant vector p in full coordinates
    and ``null_vector_reduced`` the same vector in the embedding basis.
    """

    eta: np.ndarray
    forms: list
    embedding: np.ndarray
    E0: Subspace
    branch: str
    null_vector: np.ndarray | None = None
    null_vector_reduced: np.ndarray | None = None
    notes: list = field(default_factory=list)


def normalize_null_vector(p: np.ndarray) -> np.ndarray:
    """Scale ``p`` so that its largest-magnitude coordinate is +1."""
    p = np.asarray(p, dtype=float).ravel()
    return p / p[int(np.argmax(np.abs(p)))]


def reduce_by_E0(eta, forms, inv: Subspace, signature: str,
                 rtol: float = DEFAULT_RANK_TOL) -> ReducedProblem:
    """Split off the flat factor E_0 and restrict the problem to its complement.

    Riemannian, or Lorentzian with eta non-degenerate on the invariant
    vectors: E_0 is the whole invariant-vector space.  Lorentzian with eta
    degenerate there: p spans the radical, and E_0 is the complement of p in
    the invariant space cut out by eta(q, .) = 0 for a lightlike q with
    eta(p, q) != 0.
    """
    from .split_wu import find_q  # local import: split_wu depends on this module

    eta = np.asarray(eta, dtype=float)
    n = eta.shape[0]
    V = inv.basis
    G = restrict(eta, V)
    w = np.linalg.eigvalsh(G) if V.shape[1] else np.zeros(0)
    scale = np.linalg.norm(eta, 2)
    nonpos = int(np.sum(w <= rtol * scale))
    radical = int(np.sum(np.abs(w) <= rtol * scale))
    notes = []
    if signature == "riemannian" and nonpos:
        raise InputError("metric restricted to invariant vectors is not positive definite")
    if signature == "lorentzian" and nonpos >= 2:
        raise InputError("metric restricted to invariant vectors has >= 2 nonpositive directions")

    null_vector = None
    if radical == 0:
        E0 = Subspace(V, rtol, n) if V.shape[1] else Subspace.zero(n)
        branch = "derham"
    else:
        branch = "wu"
        kern = form_kernel(eta, V, rtol, scale)
        null_vector = normalize_null_vector(kern[:, 0])
        q = find_q(eta, null_vector, rtol)
        e0 = orthogonal_complement(eta, q.reshape(-1, 1), within=V, rtol=rtol)
        E0 = Subspace(e0, rtol, n) if e0.shape[1] else Subspace.zero(n)
        if E0.dim:
            notes.append("E0 chosen as the invariant vectors annihilated by eta(q, .)")
    if E0.dim == 0:
        embedding = np.eye(n)
    else:
        embedding = orthogonal_complement(eta, E0.basis, rtol=rtol)
        if embedding.shape[1] + E0.dim != n:
            raise ToleranceError("reduce_by_E0", "eta is degenerate on the chosen E0",
                                 dim_E0=E0.dim, dim_complement=embedding.shape[1])
    reduced = ReducedProblem(
        eta=restrict(eta, embedding),
        forms=[restrict(np.asarray(f, dtype=float), embedding) for f in forms],
        embedding=embedding, E0=E0, branch=branch, null_vector=null_vector, notes=notes)
    if null_vector is not None:
        reduced.null_vector_reduced = embedding.T @ null_vector
    return reduced
