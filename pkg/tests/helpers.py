"""Shared metrics, supplied form families and random constructions for the tests."""

import math

import numpy as np

from holosplit.geometry import MetricSpec
from holosplit.linalg import subspace_angle

X4 = ["x1", "x2", "x3", "x4"]
X5 = ["x1", "x2", "x3", "x4", "x5"]

S13 = "sin(x1+x3)^2"
S14 = "sin(x1+x4)^2"

TWO_SPHERES = [["1", "0", "1", "0"],
               ["0", S13, "0", S13],
               ["1", "0", "2", "0"],
               ["0", S13, "0", "sin(x3)^2+" + S13]]
TWO_SPHERES_POINT = np.array([0.0, 0.0, math.pi / 2, 0.0])
# the displayed two-parameter family: C2 = 1 member, C1 = 1 member
TWO_SPHERES_FORMS = [
    [["1", "0", "1", "0"], ["0", S13, "0", S13], ["1", "0", "0", "0"],
     ["0", S13, "0", S13 + "-sin(x3)^2"]],
    [["0", "0", "0", "0"], ["0", "0", "0", "0"], ["0", "0", "1", "0"], ["0", "0", "0", "sin(x3)^2"]],
]

SPHERE_PPWAVE = [["1", "0", "0", "1", "0"],
                 ["0", S14, "0", "0", "0"],
                 ["0", "0", "0", "0", "1"],
                 ["1", "0", "0", "2", "0"],
                 ["0", "0", "1", "0", "x4^2"]]
SPHERE_PPWAVE_POINT = np.array([math.pi / 2, 0.0, 0.0, 0.0, 0.0])
_z = "0"
SPHERE_PPWAVE_FORMS = [  # C1, C2, C3 members of the displayed family
    [["1", _z, _z, "1", _z], [_z, S14, _z, _z, _z], [_z] * 5, ["1", _z, _z, "1", _z], [_z] * 5],
    [[_z] * 5, [_z] * 5, [_z] * 5, [_z] * 5, [_z, _z, _z, _z, "1"]],
    [[_z] * 5, [_z] * 5, [_z, _z, _z, _z, "1"], [_z, _z, _z, "1", _z], [_z, _z, "1", _z, "x4^2"]],
]

SPHERE2 = [["1", "0"], ["0", "sin(y1)^2"]]


def two_spheres():
    return MetricSpec(X4, TWO_SPHERES, "riemannian")


def sphere_ppwave():
    return MetricSpec(X5, SPHERE_PPWAVE, "lorentzian")


def sphere():
    return MetricSpec(["y1", "y2"], SPHERE2, "riemannian")


def flat(n):
    coords = [f"u{i}" for i in range(1, n + 1)]
    return MetricSpec(coords, [["1" if i == j else "0" for j in range(n)] for i in range(n)])


# expected factor fields of the two worked examples, as functions of x
def two_spheres_g1(x):
    s = math.sin(x[0] + x[2]) ** 2
    return np.array([[1, 0, 1, 0], [0, s, 0, s], [1, 0, 1, 0], [0, s, 0, s]], dtype=float)


def two_spheres_g2(x):
    return np.diag([0.0, 0.0, 1.0, math.sin(x[2]) ** 2])


def ppwave_g1(x):
    s = math.sin(x[0] + x[3]) ** 2
    M = np.zeros((5, 5))
    M[0, 0] = M[0, 3] = M[3, 0] = M[3, 3] = 1.0
    M[1, 1] = s
    return M


def ppwave_g2(x):
    M = np.zeros((5, 5))
    M[2, 4] = M[4, 2] = 1.0
    M[3, 3] = 1.0
    M[4, 4] = x[3] ** 2
    return M


def span(*vectors):
    return np.array(vectors, dtype=float).T


def angle(a, b):
    a = a.basis if hasattr(a, "basis") else a
    b = b.basis if hasattr(b, "basis") else b
    return subspace_angle(a, b)


def matrix_of_strings(M):
    return [[repr(float(v)) for v in row] for row in np.asarray(M)]


# --- random block products -----------------------------------------------------

# Each factor: (entries over local names a1..ak, dimension).  All have
# irreducible holonomy at generic points.
def sphere_factor(k, radius_sq):
    """Round k-sphere (k = 2 or 3) of squared radius ``radius_sq``, local coords a1..ak."""
    r = repr(float(radius_sq))
    if k == 2:
        return [[r, "0"], ["0", f"{r}*sin(a1)^2"]]
    if k == 3:
        return [[r, "0", "0"], ["0", f"{r}*sin(a1)^2", "0"],
                ["0", "0", f"{r}*sin(a1)^2*sin(a2)^2"]]
    raise ValueError(k)


def warped_factor(radius_sq):
    """2D surface da1^2 + (1 + a1^2)^2 da2^2 (scaled); Gauss curvature -2 / (1 + a1^2)."""
    r = repr(float(radius_sq))
    return [[r, "0"], ["0", f"{r}*(1+a1^2)^2"]]


def block_product_metric(factors, mix, names):
    """Metric in coordinates x = mix^{-1} y for the block-diagonal metric in y.

    ``factors`` is a list of local-coordinate expression matrices (names a1..);
    ``mix`` is the n x n matrix with y = mix @ x.  Returns the expression matrix
    in ``names`` and the list of block index ranges in y.
    """
    n = sum(len(f) for f in factors)
    y_expr = []
    for i in range(n):
        terms = [f"({float(mix[i, j])!r})*{names[j]}" for j in range(n) if mix[i, j] != 0.0]
        y_expr.append("(" + " + ".join(terms) + ")" if terms else "0")
    G = [["0"] * n for _ in range(n)]
    ranges = []
    start = 0
    for f in factors:
        k = len(f)
        ranges.append(range(start, start + k))
        local = {f"a{i + 1}": y_expr[start + i] for i in range(k)}
        for i in range(k):
            for j in range(k):
                G[start + i][start + j] = _substitute(f[i][j], local)
        start += k
    # g_x = mix^T G_y mix, assembled as strings
    out = [["0"] * n for _ in range(n)]
    for a in range(n):
        for b in range(a, n):
            terms = []
            for i in range(n):
                if mix[i, a] == 0.0:
                    continue
                for j in range(n):
                    if mix[j, b] == 0.0 or G[i][j] == "0":
                        continue
                    terms.append(f"({float(mix[i, a] * mix[j, b])!r})*({G[i][j]})")
            out[a][b] = out[b][a] = " + ".join(terms) if terms else "0"
    return out, ranges


def _substitute(text, local):
    import re
    return re.sub(r"\ba\d+\b", lambda m: "(" + local[m.group(0)] + ")", text)


# --- pointwise Lorentzian products --------------------------------------------

def wu_problem(rng, riem_dims, w=None, mix="orthogonal"):
    """Pointwise data of (pp-wave at w) x SPD blocks under a random linear change.

    Returns eta, p, the true component forms [eta_1.. eta_{r-1}, eta_r, theta theta],
    the Riemannian block bases and V_r.
    """
    w = rng.uniform(-1, 1) if w is None else w
    n = 3 + sum(riem_dims)
    comps = []
    ranges = []
    start = 0
    for d in riem_dims:
        M = rng.normal(size=(d, d))
        S = M @ M.T + d * np.eye(d)
        F = np.zeros((n, n))
        F[start:start + d, start:start + d] = S
        comps.append(F)
        ranges.append(range(start, start + d))
        start += d
    L = np.zeros((n, n))
    L[start:, start:] = [[0, 1, 0], [1, w * w, 0], [0, 0, 1]]  # 2 du dv + dw^2 + w^2 dv^2
    comps.append(L)
    ranges.append(range(start, n))
    pu = np.zeros(n)
    pu[start] = 1.0
    if mix == "orthogonal":
        Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    else:
        Q = rng.normal(size=(n, n)) + 3 * np.eye(n)
    Qi = np.linalg.inv(Q)
    # tangent vectors v_x = Qi v_y, forms h_x = Q^T h_y Q
    comps = [Q.T @ F @ Q for F in comps]
    eta = sum(comps)
    p = Qi @ pu
    theta = eta @ p
    comps.append(np.outer(theta, theta))
    blocks = [Qi[:, list(rg)] for rg in ranges]
    return eta, p, comps, blocks[:-1], blocks[-1]


def random_C(rng, r):
    C = rng.uniform(-2, 2, (r + 1, r + 1))
    C[:, 0] = 0.0
    C[:r, 0] = 1.0  # first basis element is eta
    while abs(np.linalg.det(C)) < 0.1:
        C[:, 1:] = rng.uniform(-2, 2, (r + 1, r))
    return C


def combine(C, comps):
    return [sum(C[b, a] * comps[b] for b in range(len(comps))) for a in range(C.shape[1])]
