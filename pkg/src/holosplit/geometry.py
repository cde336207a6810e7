"""Metric container and pointwise tensor calculus.

Index conventions used throughout the package:

* ``gamma[k, i, j]`` is the Christoffel symbol Gamma^k_ij.
* ``riemann[l, k, i, j]`` is R^l_kij, i.e. R(e_i, e_j) e_k = R^l_kij e_l, with
  R^l_kij = d_i Gamma^l_jk - d_j Gamma^l_ik + Gamma^l_im Gamma^m_jk - Gamma^l_jm Gamma^m_ik.
* ``nabla^m R`` is stored with the newest derivative index first:
  ``D[a_m, ..., a_1, l, k, i, j]``.

Two evaluation routes exist.  Christoffel symbols at arbitrary points (needed
by parallel transport) use compiled exact first derivatives of the metric
entries.  Curvature and its covariant derivatives at a point use jets, which
carry exact higher derivatives through inverse and products.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import expr as ex
from .errors import DegeneratePointError, InputError
from .jets import expression_jet, jet_space

SIGNATURES = ("riemannian", "lorentzian", "auto")
DEGENERACY_TOL = 1e-10


class MetricSpec:
    """Coordinates plus a symmetric matrix of closed-form expressions.

    Parameters
    ----------
    coords : sequence of str
        Coordinate names, in order.
    entries : n x n nested sequence of Expression or str
        Metric components g_ij.  Strings are parsed over ``coords``.
    signature : {'riemannian', 'lorentzian', 'auto'}
        Signature hint checked at evaluation points.
    """

    def __init__(self, coords: Sequence[str], entries, signature: str = "auto"):
        coords = tuple(str(c) for c in coords)
        if len(set(coords)) != len(coords):
            raise InputError("duplicate coordinate names")
        if signature not in SIGNATURES:
            raise InputError(f"unknown signature hint {signature!r}")
        n = len(coords)
        if n == 0:
            raise InputError("at least one coordinate is required")
        if len(entries) != n or any(len(row) != n for row in entries):
            raise InputError(f"metric must be a {n}x{n} matrix")
        try:
            parsed = tuple(tuple(e if isinstance(e, ex.Expression) else ex.parse(e, coords)
                                 for e in row) for row in entries)
        except ex.ExpressionError as err:
            raise InputError(f"metric entry: {err}") from err
        for i in range(n):
            for j in range(i + 1, n):
                if ex.simplify(parsed[i][j]) != ex.simplify(parsed[j][i]):
                    raise InputError(f"metric is not symmetric: entries ({i},{j}) and ({j},{i}) differ")
        self.coords = coords
        self.entries = parsed
        self.signature = signature
        self.n = n
        self._g = None
        self._dg = None

    def __repr__(self):
        return f"MetricSpec(coords={list(self.coords)!r}, signature={self.signature!r})"

    def _compiled(self):
        if self._g is None:
            n = self.n
            self._g = ex.compile_expressions([self.entries[i][j] for i in range(n) for j in range(n)],
                                             self.coords)
        return self._g

    def _compiled_derivatives(self):
        # symbolic derivatives are only built when asked for; upper triangle suffices
        if self._dg is None:
            n = self.n
            self._iu = np.triu_indices(n)
            derivs = [ex.differentiate(self.entries[i][j], c)
                      for c in self.coords for i, j in zip(*self._iu)]
            self._dg = ex.compile_expressions(derivs, self.coords)
        return self._dg

    def values(self, p) -> np.ndarray:
        """Metric matrix at ``p`` without degeneracy checks."""
        return self._compiled()(np.asarray(p, dtype=float)).reshape(self.n, self.n)

    def derivative_values(self, p) -> np.ndarray:
        """``dg[c, i, j] = d_c g_ij`` at ``p``."""
        n = self.n
        flat = self._compiled_derivatives()(np.asarray(p, dtype=float)).reshape(n, -1)
        out = np.empty((n, n, n))
        i, j = self._iu
        out[:, i, j] = flat
        out[:, j, i] = flat
        return out


def point_from_strings(values, coords: Sequence[str] = ()) -> np.ndarray:
    """Evaluate a point given as numbers or constant expressions such as ``"pi/2"``."""
    out = []
    for v in values:
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            out.append(float(v))
            continue
        try:
            e = ex.parse(str(v), ())
        except ex.ExpressionError as err:
            raise InputError(f"point coordinate {v!r}: {err}") from err
        out.append(ex.evaluate(e, {}))
    p = np.array(out, dtype=float)
    if coords and len(p) != len(coords):
        raise InputError(f"point has {len(p)} coordinates, expected {len(coords)}")
    if not np.all(np.isfinite(p)):
        raise InputError("point coordinates must be finite")
    return p


def check_nondegenerate(g: np.ndarray, where=None) -> None:
    n = g.shape[0]
    scale = np.max(np.abs(g))
    det = np.linalg.det(g) if scale > 0 else 0.0
    if scale == 0 or abs(det) < DEGENERACY_TOL * scale ** n:
        at = f" at {np.asarray(where).tolist()}" if where is not None else ""
        raise DegeneratePointError(f"metric is degenerate{at} (det={det:.3e})")


def signature_of(g: np.ndarray, rtol: float = 1e-9) -> tuple[int, int]:
    """(number of negative, number of positive) eigenvalues."""
    w = np.linalg.eigvalsh(g)
    tol = rtol * np.max(np.abs(w))
    return int(np.sum(w < -tol)), int(np.sum(w > tol))


def check_signature(spec: MetricSpec, g: np.ndarray) -> str:
    """Validate the signature hint at a point and return the resolved signature."""
    neg, pos = signature_of(g)
    if neg + pos != g.shape[0]:
        raise DegeneratePointError("metric is degenerate at the base point")
    resolved = {0: "riemannian", 1: "lorentzian"}.get(neg)
    if spec.signature == "riemannian" and neg != 0:
        raise InputError(f"signature hint riemannian but metric has {neg} negative directions")
    if spec.signature == "lorentzian" and neg != 1:
        raise InputError(f"signature hint lorentzian but metric has {neg} negative directions")
    if resolved is None:
        raise InputError(f"signature with {neg} negative directions is not supported")
    return resolved


def metric_at(spec: MetricSpec, p) -> np.ndarray:
    """Metric matrix g_ij at ``p``; raises on degeneracy."""
    p = np.asarray(p, dtype=float)
    g = spec.values(p)
    g = 0.5 * (g + g.T)
    check_nondegenerate(g, p)
    return g


def christoffel_at(spec: MetricSpec, p) -> np.ndarray:
    """Christoffel symbols ``gamma[k, i, j]`` at ``p`` from exact first derivatives."""
    g = metric_at(spec, p)
    dg = spec.derivative_values(p)
    lower = 0.5 * (np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg)
    gamma = np.linalg.solve(g, lower.reshape(spec.n, -1)).reshape(spec.n, spec.n, spec.n)
    return 0.5 * (gamma + gamma.transpose(0, 2, 1))


# ---------------------------------------------------------------------------
# jet route


def metric_jets(spec: MetricSpec, p, order: int) -> np.ndarray:
    """Taylor coefficients of every g_ij at ``p`` up to ``order``: shape (n, n, N)."""
    n = spec.n
    space = jet_space(n, order)
    cache: dict = {}
    G = np.empty((n, n, space.size(order)))
    for i in range(n):
        for j in range(i, n):
            G[i, j] = G[j, i] = expression_jet(spec.entries[i][j], space, p, spec.coords, order, cache)
    return G


def inverse_jets(space, G: np.ndarray) -> np.ndarray:
    order = space.order_of(G)
    g0inv = np.linalg.inv(G[..., 0])
    delta = G.copy()
    delta[..., 0] = 0.0
    M = -space.einsum("ij,jk->ik", space.constant(1.0, order) * g0inv[..., None], delta)
    term = space.constant(1.0, order) * g0inv[..., None]
    acc = term.copy()
    for _ in range(order):
        term = space.einsum("ij,jk->ik", M, term)
        acc = acc + term
    return acc


def christoffel_jets(space, G: np.ndarray) -> np.ndarray:
    order = space.order_of(G)
    ginv = space.truncate(inverse_jets(space, G), order - 1)
    dG = space.grad(G)  # dG[c, a, b] = d_c g_ab
    lower = 0.5 * (np.einsum("ijlZ->lijZ", dG) + np.einsum("jilZ->lijZ", dG) - dG)
    return space.einsum("kl,lij->kij", ginv, lower)


def riemann_from_christoffel_jets(space, gamma: np.ndarray) -> np.ndarray:
    order = space.order_of(gamma) - 1
    dgam = space.grad(gamma)  # dgam[c, l, a, b] = d_c Gamma^l_ab
    g = space.truncate(gamma, order)
    R = (np.einsum("iljkZ->lkijZ", dgam) - np.einsum("jlikZ->lkijZ", dgam)
         + space.einsum("lim,mjk->lkij", g, g) - space.einsum("ljm,mik->lkij", g, g))
    return R


_LETTERS = "abcdefghijklmnopqrstuvwxy"


def covariant_derivative_jets(space, T: np.ndarray, gamma: np.ndarray,
                              upper: Sequence[int]) -> np.ndarray:
    """Jets of nabla T with the new derivative index first.

    ``upper`` lists the positions of contravariant slots of ``T``; all other
    slots are covariant.
    """
    rank = T.ndim - 1
    order = space.order_of(T) - 1
    g = space.truncate(gamma, order)
    idx = _LETTERS[1:rank + 1]
    out_idx = "a" + idx
    result = np.stack([space.diff(T, v) for v in range(space.n)])
    Tt = space.truncate(T, order)
    for s in range(rank):
        c = "z"
        t_idx = idx[:s] + c + idx[s + 1:]
        if s in upper:
            term = space.einsum(f"{idx[s]}a{c},{t_idx}->{out_idx}", g, Tt)
            result = result + term
        else:
            term = space.einsum(f"{c}a{idx[s]},{t_idx}->{out_idx}", g, Tt)
            result = result - term
    return result


def curvature_jets(spec: MetricSpec, p, max_order: int):
    """Jets of Gamma, R and nabla^m R (m <= max_order) at ``p``.

    Returns ``(space, gamma, [R, nabla R, ...])`` where the m-th entry has jet
    order 0 (value only) once m == max_order.
    """
    K = max_order + 2
    space = jet_space(spec.n, K)
    G = metric_jets(spec, p, K)
    check_nondegenerate(G[..., 0], p)
    gamma = christoffel_jets(space, G)
    R = riemann_from_christoffel_jets(space, gamma)
    series = [R]
    for m in range(max_order):
        series.append(covariant_derivative_jets(space, series[-1], gamma, upper=[m]))
    return space, gamma, series


@dataclass(frozen=True)
class Curvature:
    """Christoffel symbols and curvature at a point (see module docstring for indices)."""

    gamma: np.ndarray
    riemann: np.ndarray
    riemann_lower: np.ndarray
    metric: np.ndarray

    def operator(self, i: int, j: int) -> np.ndarray:
        """Endomorphism R(e_i, e_j) as a matrix acting on column vectors."""
        return self.riemann[:, :, i, j]


def riemann_at(spec: MetricSpec, p) -> Curvature:
    p = np.asarray(p, dtype=float)
    g = metric_at(spec, p)
    space, gamma, series = curvature_jets(spec, p, 0)
    R = series[0][..., 0]
    return Curvature(gamma=gamma[..., 0], riemann=R,
                     riemann_lower=np.einsum("lm,mkij->lkij", g, R), metric=g)


def nabla_riemann_at(spec: MetricSpec, p, order: int) -> list[np.ndarray]:
    """Values of R, nabla R, ..., nabla^order R at ``p``."""
    if order < 0:
        raise ValueError("order must be >= 0")
    p = np.asarray(p, dtype=float)
    metric_at(spec, p)
    _, _, series = curvature_jets(spec, p, order)
    return [T[..., 0] for T in series]


def form_covariant_derivative(form_values: np.ndarray, form_derivs: np.ndarray,
                              gamma: np.ndarray) -> np.ndarray:
    """``(nabla_k h)_ij = d_k h_ij - Gamma^l_ki h_lj - Gamma^l_kj h_il``."""
    return (form_derivs
            - np.einsum("lki,lj->kij", gamma, form_values)
            - np.einsum("lkj,il->kij", gamma, form_values))


class FormField:
    """A symmetric (0,2) tensor field given by expressions, e.g. a supplied parallel form."""

    def __init__(self, coords: Sequence[str], entries, label: str = ""):
        helper = MetricSpec(coords, entries)
        self.coords = helper.coords
        self.entries = helper.entries
        self.n = helper.n
        self.label = label
        self._helper = helper

    def values(self, p) -> np.ndarray:
        return self._helper.values(p)

    def derivative_values(self, p) -> np.ndarray:
        return self._helper.derivative_values(p)


def parallel_residual(spec: MetricSpec, field: "FormField | MetricSpec", p) -> np.ndarray:
    """nabla h at ``p`` as an array ``[k, i, j]``; zero iff the field is parallel there."""
    gamma = christoffel_at(spec, p)
    return form_covariant_derivative(field.values(p), field.derivative_values(p), gamma)
