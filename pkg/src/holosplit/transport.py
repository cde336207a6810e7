"""Parallel transport along straight coordinate segments (fixed-step RK4)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import MetricSpec, christoffel_at

DEFAULT_STEPS = 100


@dataclass(frozen=True)
class PolylinePath:
    """Waypoints joined by straight segments in coordinates."""

    waypoints: np.ndarray
    steps: int = DEFAULT_STEPS

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        if w.shape[0] < 2:
            raise ValueError("a path needs at least two waypoints")
        if self.steps < 1:
            raise ValueError("steps per segment must be positive")
        object.__setattr__(self, "waypoints", w)

    @classmethod
    def segment(cls, a, b, steps: int = DEFAULT_STEPS) -> "PolylinePath":
        return cls(np.array([a, b], dtype=float), steps)

    @classmethod
    def rectangle(cls, base, i: int, j: int, eps_i: float, eps_j: float | None = None,
                  steps: int = DEFAULT_STEPS) -> "PolylinePath":
        """Closed loop base -> +eps_i e_i -> +eps_j e_j -> -eps_i e_i -> base."""
        eps_j = eps_i if eps_j is None else eps_j
        base = np.asarray(base, dtype=float)
        ei = np.zeros_like(base)
        ej = np.zeros_like(base)
        ei[i] = eps_i
        ej[j] = eps_j
        return cls(np.array([base, base + ei, base + ei + ej, base + ej, base]), steps)

    def reversed(self) -> "PolylinePath":
        return PolylinePath(self.waypoints[::-1].copy(), self.steps)

    @property
    def is_closed(self) -> bool:
        return bool(np.allclose(self.waypoints[0], self.waypoints[-1], rtol=0, atol=1e-14))

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)))


def _rhs(spec: MetricSpec, x, velocity, V):
    gamma = christoffel_at(spec, x)
    return -np.einsum("kij,i,j...->k...", gamma, velocity, V)


def transport_vector(spec: MetricSpec, path: PolylinePath, v0) -> np.ndarray:
    """Parallel transport of ``v0`` (a vector, or vectors as columns) to the path end."""
    V = np.array(v0, dtype=float)
    for a, b in zip(path.waypoints[:-1], path.waypoints[1:]):
        velocity = b - a
        if not np.any(velocity):
            continue
        h = 1.0 / path.steps
        for s in range(path.steps):
            t = s * h
            x = a + t * velocity
            k1 = _rhs(spec, x, velocity, V)
            k2 = _rhs(spec, x + 0.5 * h * velocity, velocity, V + 0.5 * h * k1)
            k3 = _rhs(spec, x + 0.5 * h * velocity, velocity, V + 0.5 * h * k2)
            k4 = _rhs(spec, x + h * velocity, velocity, V + h * k3)
            V = V + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return V


def transport_matrix(spec: MetricSpec, path: PolylinePath) -> np.ndarray:
    """Matrix of the transport map from the first to the last waypoint."""
    return transport_vector(spec, path, np.eye(spec.n))


def loop_holonomy(spec: MetricSpec, loop: PolylinePath) -> np.ndarray:
    """Holonomy matrix L of a closed path (vectors at the base point as columns)."""
    if not loop.is_closed:
        raise ValueError("loop_holonomy needs a closed path (first waypoint == last)")
    return transport_matrix(spec, loop)
