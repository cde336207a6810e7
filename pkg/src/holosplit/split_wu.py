"""Wu decomposition data at a point for a Lorentzian metric with a parallel null vector.

The form space is span{eta_1, ..., eta_r, theta (x) theta} with V_r the
Lorentzian block containing the null vector p and theta = eta(p, .).  The
Lorentzian block is isolated first; the Riemannian remainder is handed to
:mod:`holosplit.split_derham`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ToleranceError
from .linalg import (DEFAULT_RANK_TOL, Subspace, form_kernel, nullspace, orth,
                     orthogonal_complement, restrict)
from .split_derham import (DEFAULT_RESIDUAL_TOL, block_forms, block_sort_key,
                           normalize_basis, recover_canonical, refine_blocks,
                           solve_coefficients)


@dataclass(frozen=True)
class NullData:
    """Null vector p, its dual theta = eta(p, .), a partner q and theta (x) theta."""

    p: np.ndarray
    theta: np.ndarray
    q: np.ndarray

    @property
    def theta_theta(self) -> np.ndarray:
        return np.outer(self.theta, self.theta)


@dataclass
class WuSplit:
    """Riemannian blocks V_1..V_{r-1}, Lorentzian block V_r and the matrix C."""

    eta: np.ndarray
    riemannian: list
    lorentzian: Subspace
    forms: list
    C: np.ndarray
    null: NullData
    W: Subspace
    W_perp: Subspace
    basis: list
    A: np.ndarray | None = None
    theta_flags: list = field(default_factory=list)

    @property
    def blocks(self) -> list[Subspace]:
        return list(self.riemannian) + [self.lorentzian]

    @property
    def r(self) -> int:
        return len(self.riemannian) + 1

    def expansion_residual(self) -> float:
        """max_a ||basis_a - sum_b C[b,a] eta_b - C[r+1,a] theta theta|| / ||basis_a||."""
        comps = self.forms + [self.null.theta_theta]
        worst = 0.0
        for a, f in enumerate(self.basis):
            recon = sum(self.C[b, a] * comps[b] for b in range(len(comps)))
            worst = max(worst, float(np.linalg.norm(f - recon) / max(1.0, np.linalg.norm(f))))
        return worst


def branch_select(inv: Subspace, eta, rtol: float = DEFAULT_RANK_TOL) -> str:
    """'wu' iff eta restricted to the invariant vectors is degenerate."""
    if inv.dim == 0:
        return "derham"
    G = restrict(np.asarray(eta, dtype=float), inv.basis)
    scale = np.linalg.norm(eta, 2)
    k = nullspace(G, rtol, scale=scale).shape[1]
    return "wu" if k else "derham"


def find_q(eta, p, rtol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """A lightlike q with eta(p, q) != 0.

    X is the first coordinate basis vector with eta(p, X) != 0; q = X if X is
    itself null, else q = p - 2 eta(p, X) / eta(X, X) X.
    """
    eta = np.asarray(eta, dtype=float)
    p = np.asarray(p, dtype=float)
    theta = eta @ p
    thresh = rtol * np.linalg.norm(eta, 2) * np.linalg.norm(p)
    for i in range(len(p)):
        if abs(theta[i]) > thresh:
            X = np.zeros_like(p)
            X[i] = 1.0
            xx = eta[i, i]
            if abs(xx) <= rtol * np.linalg.norm(eta, 2):
                return X
            return p - (2 * theta[i] / xx) * X
    raise ToleranceError("find_q", "no vector pairs non-trivially with p; eta is degenerate")


def eliminate_Cr(eta, forms: Sequence, p, q) -> tuple[list[np.ndarray], list[float]]:
    """Subtract C_{r,a} eta from every form a >= 2 so that form(p, q) = 0.

    Returns the adjusted forms (first one untouched) and the removed
    coefficients C_{r,a} (0 for a = 1).
    """
    eta = np.asarray(eta, dtype=float)
    pq = p @ eta @ q
    out = [np.asarray(forms[0], dtype=float)]
    coeffs = [0.0]
    for f in forms[1:]:
        f = np.asarray(f, dtype=float)
        c = float(p @ f @ q / pq)
        out.append(f - c * eta)
        coeffs.append(c)
    return out, coeffs


def classify_theta(eta, form, p, rtol: float = DEFAULT_RANK_TOL) -> tuple[bool, np.ndarray]:
    """Decide whether ``form`` has a theta (x) theta component and normalize it.

    With K = ker(form), the kernel of eta on K is either {0} (no theta part;
    theta (x) theta is added) or the line through p (kept as is).
    """
    eta = np.asarray(eta, dtype=float)
    form = np.asarray(form, dtype=float)
    p = np.asarray(p, dtype=float)
    scale_eta = np.linalg.norm(eta, 2)
    K = form_kernel(form, None, rtol)
    if K.shape[1]:
        radical = form_kernel(eta, K, rtol, scale=scale_eta)
    else:
        radical = np.zeros((len(p), 0))
    if radical.shape[1] == 0:
        theta = eta @ p
        return False, form + np.outer(theta, theta)
    if radical.shape[1] == 1 and Subspace(radical).contains(p / np.linalg.norm(p), 1e-6):
        return True, form
    raise ToleranceError("classify_theta",
                         "kernel of eta on ker(form) is neither {0} nor the line through p",
                         radical_dim=int(radical.shape[1]))


def isolate_lorentz_block(eta, forms: Sequence, p, rtol: float = DEFAULT_RANK_TOL,
                          ) -> tuple[Subspace, Subspace, Subspace]:
    """(V_r, W, W_perp) from normalized forms (eta first, theta parts ensured).

    W = joint kernel of forms[1:], W_perp its eta-orthogonal complement, and
    V_r = {X : form(X, Y) = 0 for all forms[1:] and Y in W_perp}.
    """
    eta = np.asarray(eta, dtype=float)
    n = eta.shape[0]
    rest = [np.asarray(f, dtype=float) for f in forms[1:]]
    if not rest:
        raise ToleranceError("isolate_lorentz_block", "the form space must contain theta (x) theta")
    scale = max(np.linalg.norm(f, 2) for f in rest)
    W = nullspace(np.vstack(rest), rtol, scale=scale)
    W_perp = orthogonal_complement(eta, W, rtol=rtol)
    if W_perp.shape[1]:
        rows = np.vstack([W_perp.T @ f for f in rest])
        Vr = nullspace(rows, rtol, scale=scale)
    else:
        Vr = np.eye(n)
    neg = int(np.sum(np.linalg.eigvalsh(restrict(eta, Vr)) < 0)) if Vr.shape[1] else 0
    if Vr.shape[1] < 2 or neg != 1 or not Subspace(Vr).contains(p / np.linalg.norm(p), 1e-6):
        raise ToleranceError("isolate_lorentz_block", "Lorentzian block failed its signature check",
                             dim=int(Vr.shape[1]), negative=neg)
    return Subspace(Vr, rtol, n), Subspace(W, rtol, n), Subspace(W_perp, rtol, n)


def split_riemannian_rest(eta, basis: Sequence, Vr: Subspace, p, W: Subspace, W_perp: Subspace,
                          rtol: float = DEFAULT_RANK_TOL, res_tol: float = DEFAULT_RESIDUAL_TOL,
                          seed: int = 0, q=None, theta_flags=()) -> WuSplit:
    """Decompose the eta-orthogonal complement of V_r and assemble the C matrix."""
    eta = np.asarray(eta, dtype=float)
    n = eta.shape[0]
    r = len(basis) - 1
    R = orthogonal_complement(eta, Vr.basis, rtol=rtol)
    riem_blocks: list[np.ndarray] = []
    A = None
    if r - 1 > 0:
        if R.shape[1] == 0:
            raise ToleranceError("split_riemannian_rest", f"expected {r - 1} Riemannian blocks, "
                                 "but V_r fills the space")
        eta_R = restrict(eta, R)
        restricted = [restrict(np.asarray(f, dtype=float), R) for f in basis]
        sub = normalize_basis(eta_R, restricted, rtol, res_tol)
        if len(sub) != r - 1:
            raise ToleranceError("split_riemannian_rest",
                                 f"restricted system has rank {len(sub)}, expected {r - 1}")
        local = refine_blocks(eta_R, sub, rtol, res_tol, seed)
        split_R = recover_canonical(eta_R, sub, local, rtol, res_tol)
        A = split_R.A
        riem_blocks = [R @ b.basis for b in split_R.blocks]
        riem_blocks = sorted((orth(b) for b in riem_blocks), key=block_sort_key)
    elif R.shape[1] != 0:
        raise ToleranceError("split_riemannian_rest",
                             "V_r does not fill the space although r = 1", rest_dim=int(R.shape[1]))
    riem_forms = block_forms(eta, riem_blocks)
    eta_r = eta - sum(riem_forms) if riem_forms else eta.copy()
    theta = eta_r @ p
    if np.linalg.norm(theta - eta @ p) > 1e-9 * max(1.0, np.linalg.norm(eta @ p)):
        raise ToleranceError("split_riemannian_rest", "theta from eta_r disagrees with eta(p, .)")
    forms = riem_forms + [eta_r]
    tt = np.outer(theta, theta)
    C = solve_coefficients(basis, forms + [tt], "split_riemannian_rest", res_tol)
    if np.linalg.svd(C, compute_uv=False)[-1] <= rtol * max(1.0, np.abs(C).max()):
        raise ToleranceError("split_riemannian_rest", "coefficient matrix C is singular")
    null = NullData(p=np.asarray(p, dtype=float), theta=theta,
                    q=np.asarray(q, dtype=float) if q is not None else find_q(eta, p, rtol))
    return WuSplit(eta=eta, riemannian=[Subspace(b, rtol, n) for b in riem_blocks],
                   lorentzian=Vr, forms=forms, C=C, null=null, W=W, W_perp=W_perp,
                   basis=[np.asarray(b, dtype=float) for b in basis], A=A,
                   theta_flags=list(theta_flags))


def wu_split(eta, forms: Sequence, p, rtol: float = DEFAULT_RANK_TOL,
             res_tol: float = DEFAULT_RESIDUAL_TOL, seed: int = 0) -> WuSplit:
    """Full Lorentzian splitting at a point from any basis of the parallel form space."""
    eta = np.asarray(eta, dtype=float)
    p = np.asarray(p, dtype=float)
    basis = normalize_basis(eta, forms, rtol, res_tol)
    q = find_q(eta, p, rtol)
    adjusted, _ = eliminate_Cr(eta, basis, p, q)
    normalized = [adjusted[0]]
    flags = []
    for f in adjusted[1:]:
        has_theta, g = classify_theta(eta, f, p, rtol)
        flags.append(has_theta)
        normalized.append(g)
    Vr, W, W_perp = isolate_lorentz_block(eta, normalized, p, rtol)
    return split_riemannian_rest(eta, basis, Vr, p, W, W_perp, rtol, res_tol, seed, q=q,
                                 theta_flags=flags)
