"""
Metric algebra and curvature on a chart: Christoffel symbols, the Riemann tensor,
Levi-Civita covariant derivatives and parallel transport.

Index conventions:

- `christoffel[i, j, k]` is `Γ^i_jk`.
- `riemann[i, j, k, l]` is `R^i_jkl = ∂_k Γ^i_lj - ∂_l Γ^i_kj + Γ^i_kp Γ^p_lj - Γ^i_lp Γ^p_kj`.
- Derivative indices are appended last: `nabla_riemann[i, j, k, l, m]` is `R^i_jkl,m`.

Everything is computed from jets, so a batch of points costs one pass.
"""

from __future__ import annotations

import dataclasses
import functools
import typing as t

import numpy as np
from pydantic import BaseModel, ConfigDict

from conemob.error import DegenerateMetricError
from conemob.jets import Jet, contract, jet_inverse
from conemob.transport import DEFAULT_STEPS_PER_UNIT, Curve, transport_curve, transport_polyline
from conemob.util import FloatArray, relative_residual, signature, sym_pack_matrix, sym_unpack_matrix

if t.TYPE_CHECKING:
    from conemob.model import MetricSpec, TensorField

_LETTERS = "abcdefgh"
_UPPER = "ABCDEFGH"


def check_nondegenerate(g: np.ndarray, points: np.ndarray, tolerance: float = 1e-12) -> None:
    """
    Refuse a batch of metric matrices if any is degenerate.

    Raises:
        DegenerateMetricError: At the first offending point.
    """
    g = np.asarray(g, dtype=float)
    n = g.shape[-1]
    determinants = np.linalg.det(g)
    scales = np.max(np.abs(g), axis=(-2, -1)) ** n
    bad = np.abs(determinants) < tolerance * np.maximum(scales, 1e-300)
    if np.any(bad):
        index = tuple(np.argwhere(np.atleast_1d(bad))[0]) if np.ndim(bad) else ()
        point = np.asarray(points, dtype=float)
        point = point[index] if point.ndim > 1 else point
        raise DegenerateMetricError(point, float(np.asarray(determinants)[index]))


def christoffel_jet(metric: Jet, inverse: Jet | None = None) -> Jet:
    """Jet of `Γ^i_jk` (one order below the metric jet)."""
    dg = metric.gradient()
    lowered = (dg.linear("...lkj->...ljk") + dg.linear("...jlk->...ljk") - dg.linear("...jkl->...ljk")) * 0.5
    inverse = jet_inverse(metric) if inverse is None else inverse
    return contract("...il,...ljk->...ijk", inverse, lowered)


def riemann_jet(christoffel: Jet) -> Jet:
    """Jet of `R^i_jkl` from a Christoffel jet (one order lower)."""
    d_gamma = christoffel.gradient()
    linear_part = d_gamma.linear("...iljk->...ijkl") - d_gamma.linear("...ikjl->...ijkl")
    quadratic_part = contract("...ikp,...plj->...ijkl", christoffel, christoffel) - contract(
        "...ilp,...pkj->...ijkl", christoffel, christoffel
    )
    return linear_part + quadratic_part


def covariant_derivative(tensor: Jet, christoffel: Jet, up: int) -> Jet:
    """
    Levi-Civita covariant derivative of a tensor valued jet.

    Args:
        tensor: Jet of shape `batch + (n,) * rank`, upper indices first.
        christoffel: Jet of `Γ^i_jk` over the same batch.
        up: Number of upper indices.

    Returns:
        Jet with one extra (last) lower index, one order lower.
    """
    rank = tensor.coeffs.ndim - christoffel.coeffs.ndim + 3
    indices = _LETTERS[:rank]
    result = tensor.gradient()
    for slot in range(rank):
        replaced = indices[:slot] + "p" + indices[slot + 1 :]
        if slot < up:
            result = result + contract(f"...{indices[slot]}mp,...{replaced}->...{indices}m", christoffel, tensor)
        else:
            result = result - contract(f"...pm{indices[slot]},...{replaced}->...{indices}m", christoffel, tensor)
    return result


def tensor_connection(christoffel: Jet, up: int, down: int) -> Jet:
    """
    Transport coefficients `C_k` of the Levi-Civita connection on tensors of a valence.

    Parallel sections `s` (flattened, row major) satisfy `∂_k s + C_k s = 0`.

    Returns:
        Jet of shape `batch + (n, N, N)` with `N = n ** (up + down)`.
    """
    batch = christoffel.shape[:-3]
    n = christoffel.shape[-1]
    rank = up + down
    size = n**rank
    upper = christoffel.linear("...akp->...kap")
    lower = -christoffel.linear("...pkb->...kbp")
    identity = np.eye(n)
    total: Jet | None = None
    for slot in range(rank):
        block = upper if slot < up else lower
        outs = _LETTERS[:rank]
        ins = _UPPER[:rank]
        operands = [identity] * (rank - 1)
        others = ",".join(f"{outs[s]}{ins[s]}" for s in range(rank) if s != slot)
        subscripts = f"...k{outs[slot]}{ins[slot]}" + (f",{others}" if others else "") + f"->...k{outs}{ins}"
        term = block.linear(subscripts, *operands).reshape(*batch, n, size, size)
        total = term if total is None else total + term
    if total is None:
        return Jet.constant(np.zeros((*batch, n, 1, 1)), christoffel.nvars, christoffel.order)
    return total


def sym2_connection(christoffel: Jet) -> Jet:
    """Transport coefficients on packed symmetric (0,2) tensors, `N = n(n+1)/2`."""
    n = christoffel.shape[-1]
    lower = -christoffel.linear("...pkb->...kbp")
    pack = sym_pack_matrix(n).reshape(-1, n, n)
    unpack = sym_unpack_matrix(n).reshape(n, n, -1)
    first = lower.linear("...kaA,xab,Aby->...kxy", pack, unpack)
    second = lower.linear("...kbB,xab,aBy->...kxy", pack, unpack)
    return first + second


@dataclasses.dataclass(frozen=True)
class MetricJets:
    """
    Jets of the metric and its connection at a batch of points.
    """

    points: np.ndarray
    metric: Jet
    inverse: Jet
    christoffel: Jet

    @functools.cached_property
    def riemann(self) -> Jet:
        return riemann_jet(self.christoffel)


def metric_jets(m: MetricSpec, points: np.ndarray | t.Sequence[float], order: int) -> MetricJets:
    """
    Metric, inverse and Christoffel jets.

    Args:
        m: The metric.
        points: A point `(n,)` or a batch `(..., n)`.
        order: Jet order of the metric (Christoffels are one lower).

    Raises:
        DegenerateMetricError: If the metric degenerates at any point.
    """
    points = np.asarray(points, dtype=float)
    metric = m.jet(points, order)
    check_nondegenerate(metric.value, points)
    inverse = jet_inverse(metric)
    gamma = christoffel_jet(metric, inverse.truncate(order - 1))
    return MetricJets(points, metric, inverse, gamma)


class GeometryAtPoint(BaseModel):
    """
    Metric, connection and curvature at one point.
    """

    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    point: FloatArray
    g: FloatArray
    ginv: FloatArray
    christoffel: FloatArray
    """`Γ^i_jk`."""
    riemann: FloatArray
    """`R^i_jkl`."""
    nabla_riemann: t.Optional[FloatArray] = None
    """`R^i_jkl,m`."""
    nabla2_riemann: t.Optional[FloatArray] = None
    """`R^i_jkl,mq`."""
    signature: tuple[int, int]

    @property
    def riemann_lowered(self) -> np.ndarray:
        """`R_ijkl = g_ip R^p_jkl`."""
        return np.einsum("ip,pjkl->ijkl", self.g, self.riemann)


def christoffel(m: MetricSpec, point: np.ndarray | t.Sequence[float]) -> np.ndarray:
    """
    Christoffel symbols `Γ^i_jk` at a point.

    Raises:
        DegenerateMetricError: If the metric is degenerate at the point.
    """
    return np.asarray(metric_jets(m, point, 1).christoffel.value)


def riemann(
    m: MetricSpec, point: np.ndarray | t.Sequence[float], deriv_order: t.Literal[0, 1, 2] = 0
) -> GeometryAtPoint:
    """
    Curvature at a point, with covariant derivatives of R up to `deriv_order`.

    Raises:
        DegenerateMetricError: If the metric is degenerate at the point.
    """
    if deriv_order not in (0, 1, 2):
        raise ValueError(f"deriv_order must be 0, 1 or 2, got {deriv_order}")
    point = np.asarray(point, dtype=float)
    jets = metric_jets(m, point, 2 + deriv_order)
    curvature = jets.riemann
    nabla: Jet | None = None
    nabla2: Jet | None = None
    if deriv_order >= 1:
        nabla = covariant_derivative(curvature, jets.christoffel, up=1)
    if deriv_order >= 2 and nabla is not None:
        nabla2 = covariant_derivative(nabla, jets.christoffel, up=1)
    g = np.asarray(jets.metric.value)
    return GeometryAtPoint(
        point=point,
        g=g,
        ginv=jets.inverse.value,
        christoffel=jets.christoffel.value,
        riemann=curvature.value,
        nabla_riemann=None if nabla is None else nabla.value,
        nabla2_riemann=None if nabla2 is None else nabla2.value,
        signature=signature(g),
    )


def cov_deriv(m: MetricSpec, field: TensorField, point: np.ndarray | t.Sequence[float]) -> np.ndarray:
    """
    Levi-Civita covariant derivative of a tensor field at a point.

    Returns:
        Array with one extra lower index appended last.
    """
    if list(field.coords) != list(m.coords):
        raise ValueError(f"Field coordinates {field.coords} do not match metric coordinates {m.coords}")
    jets = metric_jets(m, point, 1)
    tensor = field.jet(np.asarray(point, dtype=float), 1)
    return np.asarray(covariant_derivative(tensor, jets.christoffel, up=field.valence[0]).value)


def parallel_transport(
    m: MetricSpec,
    path: np.ndarray | t.Sequence[t.Sequence[float]] | Curve,
    fiber: np.ndarray | t.Sequence[t.Any],
    *,
    valence: tuple[int, int] | None = None,
    steps: int | None = None,
) -> np.ndarray:
    """
    Parallel transport of a tensor along a path.

    Args:
        m: The metric.
        path: Polyline vertices `(K, n)` or a curve `t -> x(t)` on `[0, 1]`.
        fiber: The tensor at the start of the path.
        valence: Valence of the fiber. Vectors default to `(1, 0)`, matrices to `(0, 2)`.
        steps: Integrator steps for a curve (per unit length for a polyline).

    Returns:
        The transported tensor at the end of the path.

    Raises:
        DegenerateMetricError: If the metric degenerates along the path.
    """
    fiber = np.asarray(fiber, dtype=float)
    if valence is None:
        valence = (1, 0) if fiber.ndim == 1 else (0, 2)
    if sum(valence) != fiber.ndim:
        raise ValueError(f"Fiber of shape {fiber.shape} does not have valence {valence}")

    def coefficients(points: np.ndarray) -> np.ndarray:
        jets = metric_jets(m, points, 1)
        return np.asarray(tensor_connection(jets.christoffel, *valence).value)

    y0 = fiber.reshape(-1)
    if callable(path):
        result = transport_curve(coefficients, path, y0, steps or DEFAULT_STEPS_PER_UNIT)
    else:
        result = transport_polyline(coefficients, np.asarray(path, dtype=float), y0, steps or DEFAULT_STEPS_PER_UNIT)
    return result.reshape(fiber.shape)


# Checks


def riemann_symmetry_residuals(geometry: GeometryAtPoint) -> dict[str, float]:
    """
    Relative residuals of the algebraic symmetries of the curvature tensor.

    Keys: `antisymmetry_12`, `antisymmetry_34`, `pair_symmetry`, `bianchi`.
    """
    low = geometry.riemann_lowered
    return {
        "antisymmetry_12": relative_residual(low + low.transpose(1, 0, 2, 3), low),
        "antisymmetry_34": relative_residual(low + low.transpose(0, 1, 3, 2), low),
        "pair_symmetry": relative_residual(low - low.transpose(2, 3, 0, 1), low),
        "bianchi": relative_residual(low + low.transpose(0, 2, 3, 1) + low.transpose(0, 3, 1, 2), low),
    }


def curvature_commutator(endomorphism: np.ndarray, curvature: np.ndarray) -> np.ndarray:
    """`L^i_p R^p_jkl - R^i_pkl L^p_j`, vanishing for parallel `L`."""
    return np.einsum("ip,pjkl->ijkl", endomorphism, curvature) - np.einsum("ipkl,pj->ijkl", curvature, endomorphism)


def christoffel_finite_difference(
    m: MetricSpec, point: np.ndarray | t.Sequence[float], step: float = 1e-5
) -> np.ndarray:
    """Christoffel symbols from central differences of the metric matrix."""
    point = np.asarray(point, dtype=float)
    n = m.dim
    g = m.check_point(point)
    dg = np.zeros((n, n, n))
    for c in range(n):
        shift = np.zeros(n)
        shift[c] = step
        dg[:, :, c] = (m.matrix(point + shift) - m.matrix(point - shift)) / (2 * step)
    lowered = 0.5 * (dg.transpose(0, 2, 1) + dg.transpose(1, 0, 2) - dg.transpose(2, 0, 1))
    return np.einsum("il,ljk->ijk", np.linalg.inv(g), lowered)


def max_curvature(m: MetricSpec, points: np.ndarray) -> float:
    """Largest `|R^i_jkl|` over a batch of points."""
    jets = metric_jets(m, np.asarray(points, dtype=float), 2)
    return float(np.max(np.abs(jets.riemann.value), initial=0.0))
