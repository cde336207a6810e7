"""Truncated multivariate Taylor series ("jets") at a point.

A jet of order K in n variables is stored as its Taylor coefficients
c_alpha = d^alpha f / alpha! for all multi-indices |alpha| <= K, in graded
order (all degree-0, then degree-1, ... coefficients), so truncating to a
lower order is a prefix slice.  Arrays carry the coefficient axis last and
any number of leading tensor axes.

Jets give exact derivatives at a point without symbolic blow-up: the metric
entries are evaluated as jets, and Christoffel symbols, curvature and its
covariant derivatives are formed by jet arithmetic.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import expr as ex


class JetSpace:
    """Multi-index bookkeeping for jets of order <= ``order`` in ``n`` variables."""

    def __init__(self, n: int, order: int):
        self.n = n
        self.order = order
        idx = []
        for d in range(order + 1):
            for combo in itertools.combinations_with_replacement(range(n), d):
                a = [0] * n
                for c in combo:
                    a[c] += 1
                idx.append(tuple(a))
        self.multi = idx
        self.position = {a: i for i, a in enumerate(idx)}
        self.degree = np.array([sum(a) for a in idx])
        self.size_upto = [int(np.sum(self.degree <= d)) for d in range(order + 1)]
        self._mul = {}
        self._diff = {}

    def size(self, order: int) -> int:
        return self.size_upto[order]

    def order_of(self, arr: np.ndarray) -> int:
        return self.size_upto.index(arr.shape[-1])

    def mul_table(self, order: int):
        """(I, J, S): coefficient pairs with total degree <= order and scatter matrix."""
        if order not in self._mul:
            N = self.size(order)
            I, J, K = [], [], []
            for i in range(N):
                a = self.multi[i]
                da = self.degree[i]
                for j in range(self.size(order - da)):
                    b = self.multi[j]
                    I.append(i)
                    J.append(j)
                    K.append(self.position[tuple(x + y for x, y in zip(a, b))])
            S = sp.csr_matrix((np.ones(len(K)), (np.arange(len(K)), K)), shape=(len(K), N))
            self._mul[order] = (np.array(I), np.array(J), S)
        return self._mul[order]

    def diff_table(self, var: int, order: int):
        """(src, factor) so that (d/dx_var f)[k] = factor[k] * f[src[k]], for result order."""
        key = (var, order)
        if key not in self._diff:
            N = self.size(order)
            src = np.empty(N, dtype=int)
            fac = np.empty(N)
            for k in range(N):
                a = list(self.multi[k])
                a[var] += 1
                src[k] = self.position[tuple(a)]
                fac[k] = a[var]
            self._diff[key] = (src, fac)
        return self._diff[key]

    # -- arithmetic ---------------------------------------------------------

    def truncate(self, a: np.ndarray, order: int) -> np.ndarray:
        return a[..., :self.size(order)]

    def constant(self, value: float, order: int) -> np.ndarray:
        out = np.zeros(self.size(order))
        out[0] = value
        return out

    def variable(self, var: int, value: float, order: int) -> np.ndarray:
        out = self.constant(value, order)
        if order >= 1:
            out[self.position[tuple(int(i == var) for i in range(self.n))]] = 1.0
        return out

    def mul(self, a: np.ndarray, b: np.ndarray, order: int | None = None) -> np.ndarray:
        """Elementwise (broadcast) product of jets."""
        if order is None:
            order = min(self.order_of(a), self.order_of(b))
        I, J, S = self.mul_table(order)
        prod = a[..., I] * b[..., J]
        shape = prod.shape[:-1]
        out = S.T @ prod.reshape(-1, prod.shape[-1]).T
        return np.asarray(out.T).reshape(shape + (self.size(order),))

    def einsum(self, subscripts: str, a: np.ndarray, b: np.ndarray,
               order: int | None = None) -> np.ndarray:
        """``np.einsum`` over tensor axes with jet multiplication on the last axis.

        ``subscripts`` mentions tensor axes only, e.g. ``"kl,lij->kij"``.
        """
        if order is None:
            order = min(self.order_of(a), self.order_of(b))
        I, J, S = self.mul_table(order)
        ins, out = subscripts.split("->")
        sa, sb = ins.split(",")
        pa = a[..., I]
        pb = b[..., J]
        prod = np.einsum(f"{sa}Z,{sb}Z->{out}Z", pa, pb, optimize=True)
        shape = prod.shape[:-1]
        res = S.T @ prod.reshape(-1, prod.shape[-1]).T
        return np.asarray(res.T).reshape(shape + (self.size(order),))

    def diff(self, a: np.ndarray, var: int) -> np.ndarray:
        """Partial derivative; the result has order one less than ``a``."""
        order = self.order_of(a) - 1
        if order < 0:
            raise ValueError("cannot differentiate an order-0 jet")
        src, fac = self.diff_table(var, order)
        return a[..., src] * fac

    def grad(self, a: np.ndarray) -> np.ndarray:
        """Stack of partial derivatives along a new leading axis."""
        return np.stack([self.diff(a, v) for v in range(self.n)])

    def power_series(self, h: np.ndarray, coeffs, order: int) -> np.ndarray:
        """sum_k coeffs[k] h^k for a jet ``h`` with zero constant term."""
        out = self.constant(coeffs[0], order)
        hk = self.constant(1.0, order)
        for k in range(1, order + 1):
            hk = self.mul(hk, h, order)
            if coeffs[k]:
                out = out + coeffs[k] * hk
        return out

    def value(self, a: np.ndarray) -> np.ndarray:
        return a[..., 0]

    def partial(self, a: np.ndarray, alpha) -> np.ndarray:
        """The partial derivative d^alpha at the base point."""
        alpha = tuple(alpha)
        fact = math.prod(math.factorial(k) for k in alpha)
        return a[..., self.position[alpha]] * fact


@lru_cache(maxsize=32)
def jet_space(n: int, order: int) -> JetSpace:
    return JetSpace(n, order)


def expression_jet(e: ex.Expression, space: JetSpace, point, coords, order: int,
                   cache: dict | None = None) -> np.ndarray:
    """Taylor coefficients of ``e`` at ``point`` up to ``order``."""
    if cache is None:
        cache = {}
    index = {c: i for i, c in enumerate(coords)}

    def go(node):
        hit = cache.get(node)
        if hit is not None:
            return hit
        if isinstance(node, ex.Const):
            r = space.constant(float(node.value), order)
        elif isinstance(node, ex.Pi):
            r = space.constant(math.pi, order)
        elif isinstance(node, ex.Var):
            i = index[node.name]
            r = space.variable(i, float(point[i]), order)
        elif isinstance(node, ex.Sum):
            r = sum(go(t) for t in node.terms)
        elif isinstance(node, ex.Product):
            r = go(node.factors[0])
            for f in node.factors[1:]:
                r = space.mul(r, go(f), order)
        elif isinstance(node, ex.Power):
            if node.exponent < 0:
                r = space.constant(ex.evaluate(node, {}), order)
            else:
                b = go(node.base)
                r = space.constant(1.0, order)
                for _ in range(node.exponent):
                    r = space.mul(r, b, order)
        elif isinstance(node, (ex.Sin, ex.Cos)):
            a = go(node.arg)
            a0 = a[0]
            h = a.copy()
            h[0] = 0.0
            cos_c = [(-1) ** (k // 2) / math.factorial(k) if k % 2 == 0 else 0.0
                     for k in range(order + 1)]
            sin_c = [(-1) ** (k // 2) / math.factorial(k) if k % 2 == 1 else 0.0
                     for k in range(order + 1)]
            ch = space.power_series(h, cos_c, order)
            sh = space.power_series(h, sin_c, order)
            if isinstance(node, ex.Sin):
                r = math.sin(a0) * ch + math.cos(a0) * sh
            else:
                r = math.cos(a0) * ch - math.sin(a0) * sh
        else:
            raise TypeError(f"not an expression: {node!r}")
        cache[node] = r
        return r

    return go(e)
