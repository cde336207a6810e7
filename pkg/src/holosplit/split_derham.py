"""Reconstruction of an orthogonal decomposition from a basis of its block forms.

Given the metric value eta at a point and any basis of span{eta_1, ..., eta_r},
where eta_a is eta composed with the eta-orthogonal projection onto a block
V_a, recover the blocks V_a, the forms eta_a and the coefficient matrix A with
basis_a = sum_b A[b, a] eta_b.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import ToleranceError
from .geometry import MetricSpec
from .linalg import (DEFAULT_RANK_TOL, Subspace, echelon, form_projector, nullspace, orth,
                     restrict, subspace_angle, sym)
from .transport import PolylinePath, transport_vector

log = logging.getLogger(__name__)

DEFAULT_RESIDUAL_TOL = 1e-8
RANDOM_SHIFT_CANDIDATES = 32


@dataclass
class DeRhamSplit:
    """Blocks V_1..V_r, canonical forms eta_1..eta_r and the matrix A."""

    eta: np.ndarray
    blocks: list
    forms: list
    A: np.ndarray
    basis: list

    @property
    def r(self) -> int:
        return len(self.blocks)

    @property
    def dims(self) -> list[int]:
        return [b.dim for b in self.blocks]

    def signatures(self) -> list[tuple[int, int]]:
        out = []
        for b in self.blocks:
            w = np.linalg.eigvalsh(restrict(self.eta, b.basis))
            out.append((int(np.sum(w < 0)), int(np.sum(w > 0))))
        return out

    def projectors(self) -> list[np.ndarray]:
        """eta-orthogonal projectors onto the blocks."""
        return [form_projector(self.eta, b.basis) for b in self.blocks]


def _vec(forms) -> np.ndarray:
    return np.array([np.asarray(f, dtype=float).ravel() for f in forms]).T


def normalize_basis(eta, forms: Sequence, rtol: float = DEFAULT_RANK_TOL,
                    res_tol: float = DEFAULT_RESIDUAL_TOL) -> list[np.ndarray]:
    """Return a basis of span(forms) whose first element is exactly ``eta``.

    Forms are taken greedily in the given order, skipping those dependent on
    the ones already chosen.
    """
    eta = np.asarray(eta, dtype=float)
    forms = [np.asarray(f, dtype=float) for f in forms]
    if not forms:
        raise ToleranceError("normalize_basis", "no forms given")
    M = _vec(forms)
    coef, *_ = np.linalg.lstsq(M, eta.ravel(), rcond=None)
    resid = np.linalg.norm(M @ coef - eta.ravel())
    if resid > res_tol * max(1.0, np.linalg.norm(eta)) * 10:
        raise ToleranceError("normalize_basis", "metric is not in the span of the given forms",
                             residual=float(resid))
    out = [eta]
    scale = max(np.linalg.norm(M, 2), np.linalg.norm(eta))
    for f in forms:
        # count singular values: a wide matrix has fewer of them than columns
        sv = np.linalg.svd(_vec(out + [f]), compute_uv=False)
        if int(np.sum(sv > rtol * scale)) == len(out) + 1:
            out.append(f)
    return out


def _is_zero(H, scale, rtol):
    return np.linalg.norm(H, 2) <= rtol * scale


def _proportionality(H, G):
    d = G.shape[0]
    c = float(np.trace(np.linalg.solve(G, H)) / d)
    return c, float(np.linalg.norm(H - c * G, 2))


def _split(eta, F, K_local):
    """Split span(F) into K = F K_local and its eta-orthogonal complement inside span(F)."""
    K = orth(F @ K_local)
    G = restrict(eta, F)
    comp_local = nullspace(K_local.T @ G, 1e-9)
    C = orth(F @ comp_local)
    if K.shape[1] + C.shape[1] != F.shape[1]:
        raise ToleranceError("refine_blocks", "kernel and its complement do not span the block",
                             dims=(K.shape[1], C.shape[1], F.shape[1]))
    return [K, C]


def _shift_candidates(H, G, rng):
    d = G.shape[0]
    try:
        w, vecs = scipy.linalg.eig(H, G)
        good = np.isfinite(w) & (np.abs(np.imag(w)) <= 1e-9 * (1 + np.abs(w)))
        order = np.argsort(np.real(w[good]))
        for v in np.real(vecs[:, good][:, order]).T:
            yield v
    except (np.linalg.LinAlgError, ValueError):
        pass
    L = np.linalg.cholesky(G) if np.all(np.linalg.eigvalsh(G) > 0) else np.eye(d)
    basis = np.linalg.inv(L).T  # eta-orthonormal basis vectors when eta is definite
    for v in basis.T:
        yield v
    for _ in range(RANDOM_SHIFT_CANDIDATES):
        v = rng.standard_normal(d)
        yield v / np.linalg.norm(v)


def _shift_split(eta, F, H, G, scale, rtol, rng):
    """Find b with H - b G degenerate and non-zero; return the resulting split of F."""
    for X in _shift_candidates(H, G, rng):
        gxx = X @ G @ X
        hxx = X @ H @ X
        if abs(gxx) <= rtol * np.linalg.norm(G, 2) or abs(hxx) <= rtol * scale:
            continue
        b = hxx / gxx
        Hb = H - b * G
        ref = max(scale, abs(b) * np.linalg.norm(G, 2))
        K_local = nullspace(Hb, rtol * 10, scale=ref)
        if 0 < K_local.shape[1] < F.shape[1]:
            return _split(eta, F, K_local), b
    raise ToleranceError("refine_blocks", "no shift vector makes the block form degenerate",
                         block_dim=F.shape[1])


def refine_blocks(eta, basis: Sequence, rtol: float = DEFAULT_RANK_TOL,
                  res_tol: float = DEFAULT_RESIDUAL_TOL, seed: int = 0) -> list[np.ndarray]:
    """Refine the ambient space into blocks on which every basis form is zero or prop. to eta.

    ``basis`` must be normalized (eta first).  Returns orthonormal bases
    (columns) of the blocks, pairwise eta-orthogonal, in no particular order.
    """
    eta = np.asarray(eta, dtype=float)
    basis = [np.asarray(b, dtype=float) for b in basis]
    r = len(basis)
    n = eta.shape[0]
    rng = np.random.default_rng(seed)
    pieces = [np.eye(n)] if n else []
    scales = [np.linalg.norm(b, 2) for b in basis]
    for _ in range(10 * max(r, 1)):
        changed = False
        for a in range(1, r):
            new_pieces = []
            for F in pieces:
                H = restrict(basis[a], F)
                G = restrict(eta, F)
                if changed or _is_zero(H, scales[a], rtol):
                    new_pieces.append(F)
                    continue
                K_local = nullspace(H, rtol, scale=scales[a])
                if K_local.shape[1]:
                    new_pieces.extend(_split(eta, F, K_local))
                    changed = True
                    continue
                c, resid = _proportionality(H, G)
                if resid <= res_tol * (1 + abs(c)) * np.linalg.norm(G, 2):
                    new_pieces.append(F)
                    continue
                parts, b = _shift_split(eta, F, H, G, scales[a], rtol, rng)
                log.debug("shift b=%g split a block of dim %d", b, F.shape[1])
                new_pieces.extend(parts)
                changed = True
            pieces = new_pieces
        if not changed:
            break
    else:
        raise ToleranceError("refine_blocks", "refinement did not converge", pieces=len(pieces))
    if len(pieces) != r:
        raise ToleranceError("refine_blocks",
                             f"found {len(pieces)} blocks but the form space has dimension {r}; "
                             "consider adjusting the rank tolerance",
                             blocks=[p.shape[1] for p in pieces], r=r)
    return pieces


def block_sort_key(basis: np.ndarray):
    """Canonical order: descending dimension, ascending echelon pivots, then echelon entries.

    The echelon basis is unique for a subspace, so the last component breaks
    ties between blocks whose pivots coincide (generic after coordinate mixing).
    Entries are rounded so that round-off cannot flip the order.
    """
    E, piv = echelon(basis)
    return (-basis.shape[1], piv, tuple(np.round(E.T.ravel(), 8).tolist()))


def block_forms(eta, blocks: Sequence[np.ndarray]) -> list[np.ndarray]:
    """eta_a(X, Y) = eta(P_a X, P_a Y) for eta-orthogonal projectors P_a."""
    out = []
    for B in blocks:
        P = form_projector(eta, B)
        out.append(sym(P.T @ eta @ P))
    return out


def solve_coefficients(targets: Sequence, forms: Sequence, stage: str,
                       res_tol: float = DEFAULT_RESIDUAL_TOL) -> np.ndarray:
    """Least-squares C with targets[a] = sum_b C[b, a] forms[b], residual-checked."""
    M = _vec(forms)
    T = _vec(targets)
    C, *_ = np.linalg.lstsq(M, T, rcond=None)
    for a in range(T.shape[1]):
        resid = np.linalg.norm(M @ C[:, a] - T[:, a])
        if resid > res_tol * max(1.0, np.linalg.norm(T[:, a])):
            raise ToleranceError(stage, f"form {a} is not a combination of the block forms",
                                 residual=float(resid))
    return C


def recover_canonical(eta, basis: Sequence, blocks: Sequence[np.ndarray],
                      rtol: float = DEFAULT_RANK_TOL,
                      res_tol: float = DEFAULT_RESIDUAL_TOL) -> DeRhamSplit:
    """Sort blocks canonically, build eta_a and solve basis_a = sum_b A[b, a] eta_b."""
    eta = np.asarray(eta, dtype=float)
    blocks = sorted((orth(B) for B in blocks), key=block_sort_key)
    forms = block_forms(eta, blocks)
    total = sum(forms) if forms else np.zeros_like(eta)
    if np.linalg.norm(total - eta) > res_tol * max(1.0, np.linalg.norm(eta)):
        raise ToleranceError("recover_canonical", "block forms do not sum to eta")
    A = solve_coefficients(basis, forms, "recover_canonical", res_tol)
    if A.size and np.linalg.svd(A, compute_uv=False)[-1] <= rtol * max(1.0, np.abs(A).max()):
        raise ToleranceError("recover_canonical", "coefficient matrix A is singular")
    subspaces = [Subspace(B, rtol) for B in blocks]
    return DeRhamSplit(eta=eta, blocks=subspaces, forms=forms, A=A,
                       basis=[np.asarray(b, dtype=float) for b in basis])


def derham_split(eta, forms: Sequence, rtol: float = DEFAULT_RANK_TOL,
                 res_tol: float = DEFAULT_RESIDUAL_TOL, seed: int = 0) -> DeRhamSplit:
    """normalize_basis, refine_blocks and recover_canonical in one call."""
    basis = normalize_basis(eta, forms, rtol, res_tol)
    blocks = refine_blocks(eta, basis, rtol, res_tol, seed)
    return recover_canonical(eta, basis, blocks, rtol, res_tol)


# ---------------------------------------------------------------------------
# distributions away from the base point


def distributions_from_fields(block_fields: Sequence[Callable], y,
                              rtol: float = DEFAULT_RANK_TOL) -> list[Subspace]:
    """E_a(y) = intersection over b != a of ker g_b(y) (mode B).

    ``block_fields`` are callables y -> matrix for *all* block forms of the
    decomposition, including the flat factor when present.
    """
    values = [np.asarray(f(y), dtype=float) for f in block_fields]
    n = values[0].shape[0]
    scale = max(np.linalg.norm(v, 2) for v in values)
    out = []
    for a in range(len(values)):
        others = [v for b, v in enumerate(values) if b != a]
        if not others:
            out.append(Subspace.full(n))
            continue
        out.append(Subspace(nullspace(np.vstack(others), rtol, scale=scale), rtol, n))
    return out


def distributions_by_transport(spec: MetricSpec, x, y, blocks: Sequence[Subspace],
                               steps: int = 100, path: PolylinePath | None = None,
                               ) -> list[Subspace]:
    """Parallel-transport each block basis from ``x`` to ``y`` (mode A)."""
    if path is None:
        path = PolylinePath.segment(x, y, steps)
    if not blocks:
        return []
    stacked = np.hstack([b.basis for b in blocks])
    moved = transport_vector(spec, path, stacked) if stacked.shape[1] else stacked
    out = []
    start = 0
    for b in blocks:
        cols = moved[:, start:start + b.dim]
        start += b.dim
        out.append(Subspace(orth(cols) if b.dim else cols, b.tol, b.ambient))
    return out


def distributions_at(blocks: Sequence[Subspace], y, *, block_fields=None, spec=None,
                     base_point=None, steps: int = 100, rtol: float = DEFAULT_RANK_TOL,
                     ) -> list[Subspace]:
    """Block distributions at ``y``: mode B from parallel form fields, else mode A."""
    y = np.asarray(y, dtype=float)
    if base_point is not None and np.array_equal(y, np.asarray(base_point, dtype=float)):
        return list(blocks)
    if block_fields is not None:
        return distributions_from_fields(block_fields, y, rtol)
    if spec is None or base_point is None:
        raise ValueError("mode A needs the metric and the base point")
    return distributions_by_transport(spec, base_point, y, blocks, steps)


def detect_linear_adapted_coords(blocks: Sequence[Subspace], samples: Sequence,
                                 evaluate: Callable[[np.ndarray], Sequence[Subspace]],
                                 angle_tol: float = 1e-6) -> np.ndarray | None:
    """Matrix Z with z = Z x adapted to constant block distributions, or None.

    ``evaluate(y)`` returns the block subspaces at ``y`` in the same order as
    ``blocks``.  The columns of Z^{-1} are the concatenated echelon bases of
    the blocks, i.e. d/dz_j = sum_i Zinv[i, j] d/dx_i.
    """
    for y in samples:
        at_y = evaluate(np.asarray(y, dtype=float))
        for b, c in zip(blocks, at_y):
            if b.dim and subspace_angle(b.basis, c.basis) > angle_tol:
                return None
    cols = [b.echelon_basis() for b in blocks if b.dim]
    if not cols:
        return None
    B = np.hstack(cols)
    if B.shape[0] != B.shape[1]:
        return None
    return np.linalg.inv(B)
