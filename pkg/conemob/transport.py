"""
Fixed-step classical Runge-Kutta integration of linear transport equations.

Transport of a fiber value `s` along a path `x(t)` for a connection with
coefficient matrices `C_k(x)` solves `ds/dt = -C_k(x(t)) dx^k/dt s`. All
coefficient matrices a step needs (start, midpoint, end) are evaluated in one
batch before integrating.
"""

from __future__ import annotations

import math
import typing as t

import numpy as np
from loguru import logger

CoefficientFn = t.Callable[[np.ndarray], np.ndarray]
"""Maps points `(B, n)` to connection coefficients `(B, n, N, N)`."""

Curve = t.Callable[[float], t.Sequence[float]]
"""A parameterized curve on `[0, 1]`."""

DEFAULT_STEPS_PER_UNIT = 200

CHUNK = 256
"""Points per coefficient evaluation batch."""


def rk4_linear(matrices: np.ndarray, y0: np.ndarray, dt: float) -> np.ndarray:
    """
    Integrate `y' = A(t) y` with the classical 4th order scheme.

    Args:
        matrices: `A` sampled at every half step, shape `(2 * steps + 1, N, N)`.
        y0: Initial value, shape `(N,)` or `(N, M)`.
        dt: Step length.

    Returns:
        The value after `steps` steps.
    """
    y = np.array(y0, dtype=float)
    steps = (matrices.shape[0] - 1) // 2
    for s in range(steps):
        a0, a_half, a1 = matrices[2 * s], matrices[2 * s + 1], matrices[2 * s + 2]
        k1 = a0 @ y
        k2 = a_half @ (y + 0.5 * dt * k1)
        k3 = a_half @ (y + 0.5 * dt * k2)
        k4 = a1 @ (y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def transport_segment(
    coefficients: CoefficientFn,
    start: np.ndarray,
    end: np.ndarray,
    y0: np.ndarray,
    steps_per_unit: int = DEFAULT_STEPS_PER_UNIT,
) -> np.ndarray:
    """Transport along the straight coordinate segment from `start` to `end`."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    velocity = end - start
    length = float(np.linalg.norm(velocity))
    if length == 0.0:
        return np.array(y0, dtype=float)
    steps = max(1, math.ceil(length * steps_per_unit))
    nodes = np.linspace(0.0, 1.0, 2 * steps + 1)
    points = start[None, :] + nodes[:, None] * velocity[None, :]
    matrices = np.concatenate(
        [-np.einsum("bkij,k->bij", coefficients(points[i : i + CHUNK]), velocity) for i in range(0, len(points), CHUNK)]
    )
    return rk4_linear(matrices, y0, 1.0 / steps)


def transport_polyline(
    coefficients: CoefficientFn,
    vertices: np.ndarray,
    y0: np.ndarray,
    steps_per_unit: int = DEFAULT_STEPS_PER_UNIT,
) -> np.ndarray:
    """Transport along consecutive straight segments through `vertices`."""
    vertices = np.asarray(vertices, dtype=float)
    y = np.array(y0, dtype=float)
    for start, end in zip(vertices[:-1], vertices[1:]):
        y = transport_segment(coefficients, start, end, y, steps_per_unit)
    logger.trace(f"Transported along {len(vertices) - 1} segment(s)")
    return y


def transport_curve(
    coefficients: CoefficientFn,
    curve: Curve,
    y0: np.ndarray,
    steps: int,
) -> np.ndarray:
    """
    Transport along a parameterized curve `t -> x(t)`, `t` in `[0, 1]`.

    Velocities come from central differences of the curve.
    """
    nodes = np.linspace(0.0, 1.0, 2 * steps + 1)
    delta = 1e-6
    points = np.asarray([curve(s) for s in nodes], dtype=float)
    velocity = np.asarray(
        [(np.asarray(curve(s + delta)) - np.asarray(curve(s - delta))) / (2 * delta) for s in nodes],
        dtype=float,
    )
    matrices = -np.einsum("bkij,bk->bij", coefficients(points), velocity)
    return rk4_linear(matrices, y0, 1.0 / steps)


def straight_path(start: np.ndarray, end: np.ndarray) -> np.ndarray:
    """Coordinate-wise path from `start` to `end`, one axis at a time."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    vertices = [start.copy()]
    current = start.copy()
    for axis in range(start.size):
        if current[axis] != end[axis]:
            current = current.copy()
            current[axis] = end[axis]
            vertices.append(current)
    if len(vertices) == 1:
        vertices.append(end.copy())
    return np.asarray(vertices)
