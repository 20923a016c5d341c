"""Interface transfer strategies: vertex-vertex, spline-vertex and spline-spline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ArgumentError, NumericalError, UnsupportedConfigurationError
from .rbf import Kernel, MappingMatrix, VertexCloud, build_interpolant, eval_interpolant
from .spline import (
    KnotVector,
    SplineField,
    TensorBasis,
    basis_matrix,
    eval_field,
    eval_field_gradient,
    gauss_points,
    greville_abscissae,
    insertion_matrix,
    evaluate,
    tensor_grid,
)

FLUID = "fluid"
STRUCTURE = "structure"


@dataclass(frozen=True)
class InterfaceSide:
    """One side of a coupling interface: a vertex cloud or a spline field."""

    representation: Union[VertexCloud, SplineField]
    role: str = STRUCTURE

    def __post_init__(self) -> None:
        if self.role not in (FLUID, STRUCTURE):
            raise ArgumentError(f"role must be {FLUID!r} or {STRUCTURE!r}")
        if not isinstance(self.representation, (VertexCloud, SplineField)):
            raise ArgumentError("representation must be a VertexCloud or a SplineField")

    @property
    def is_spline(self) -> bool:
        return isinstance(self.representation, SplineField)

    @property
    def parametric_domain(self):
        if not self.is_spline:
            raise ArgumentError("a vertex side has no parametric domain")
        return self.representation.basis.domain

    @property
    def points(self) -> np.ndarray:
        if self.is_spline:
            raise ArgumentError("a spline side exposes a parametric domain, not points")
        return self.representation.points


@dataclass(frozen=True, eq=False)
class SplineSpaceTransform:
    """Linear map between coefficient blocks of two nested spline spaces."""

    source: TensorBasis
    target: TensorBasis
    matrix: np.ndarray

    @property
    def is_identity(self) -> bool:
        return self.source == self.target


# --------------------------------------------------------------------------
# vertex based


def transfer_vertex_vertex(M: MappingMatrix | np.ndarray, source_data) -> np.ndarray:
    """``M @ source_data`` applied per component."""
    E = M.entries if isinstance(M, MappingMatrix) else np.asarray(M, dtype=float)
    data = np.asarray(source_data, dtype=float)
    vector = data.ndim == 1
    data2 = data[:, None] if vector else data
    if data2.shape[0] != E.shape[1]:
        raise ArgumentError(f"mapping expects {E.shape[1]} source rows, got {data2.shape[0]}")
    out = E @ data2
    return out[:, 0] if vector else out


def transfer_spline_vertex_force(
    fluid: VertexCloud, structure_sites, kernel: Kernel = Kernel(), dead_axes=()
) -> np.ndarray:
    """RBF fit of the fluid vertex forces, sampled at structure sites ``(k, d)``."""
    interp = build_interpolant(fluid, kernel, dead_axes)
    return eval_interpolant(interp, np.atleast_2d(np.asarray(structure_sites, dtype=float)))


# --------------------------------------------------------------------------
# spline -> vertex sampling


def _greville_seeds(geometry: SplineField) -> tuple[np.ndarray, np.ndarray]:
    seeds = tensor_grid(*[greville_abscissae(kv) for kv in geometry.basis.directions])
    return seeds, evaluate(geometry, seeds)


def invert_point(
    geometry: SplineField, x, tol: float = 1e-12, max_iter: int = 50, seeds=None
) -> np.ndarray:
    """Parametric coordinates of the point of ``geometry`` closest to ``x``.

    Damped Gauss-Newton on ``|geometry(xi) - x|^2`` seeded from the closest
    Greville point. Raises :class:`NumericalError` when the final distance
    exceeds ``1e-10`` times the geometry's size. ``seeds`` may carry the
    precomputed ``(params, points)`` pair when inverting many points.
    """
    basis = geometry.basis
    x = np.asarray(x, dtype=float)
    lo = np.array([a for a, _ in basis.domain])
    hi = np.array([b for _, b in basis.domain])
    seeds, seed_vals = seeds if seeds is not None else _greville_seeds(geometry)
    xi = seeds[np.argmin(np.linalg.norm(seed_vals - x, axis=1))].copy()
    scale = max(1.0, float(np.ptp(geometry.coefficients, axis=0).max()))

    res = eval_field(geometry, xi) - x
    f = float(res @ res)
    for _ in range(max_iter):
        J = eval_field_gradient(geometry, xi)
        step = np.linalg.lstsq(J, -res, rcond=None)[0]
        t = 1.0
        while True:
            trial = np.clip(xi + t * step, lo, hi)
            r_trial = eval_field(geometry, trial) - x
            f_trial = float(r_trial @ r_trial)
            if f_trial <= f or t < 1e-8:
                break
            t *= 0.5
        moved = np.max(np.abs(trial - xi) / (hi - lo))
        xi, res, f = trial, r_trial, f_trial
        if moved < tol or np.sqrt(f) < tol * scale:
            break
    if np.sqrt(f) > 1e-10 * scale:
        raise NumericalError(f"point inversion failed, residual distance {np.sqrt(f):.3e}")
    return xi


def sample_spline_displacement(
    field: SplineField, queries, geometry: SplineField | None = None
) -> np.ndarray:
    """Evaluate ``field`` at parametric queries, or at physical queries if ``geometry`` is given.

    Returns an ``(k, d)`` block.
    """
    q = np.asarray(queries, dtype=float)
    if geometry is None:
        return evaluate(field, q)
    if geometry.basis != field.basis:
        raise ArgumentError("geometry and field must share one basis")
    q = np.atleast_2d(q)
    seeds = _greville_seeds(geometry)
    params = np.array([invert_point(geometry, x, seeds=seeds) for x in q])
    return evaluate(field, params)


# --------------------------------------------------------------------------
# spline -> spline


def _l2_projection_matrix(fine: KnotVector, coarse: KnotVector) -> np.ndarray:
    """``coarse_coeffs = P @ fine_coeffs`` for the L2 projection onto the coarse space."""
    pts, wts = gauss_points(fine)
    Bc = basis_matrix(coarse, pts)
    Bf = basis_matrix(fine, pts)
    G = Bc.T @ (wts[:, None] * Bc)
    R = Bc.T @ (wts[:, None] * Bf)
    return np.linalg.solve(G, R)


def _direction_matrix(src: KnotVector, tgt: KnotVector) -> np.ndarray:
    if src.degree != tgt.degree:
        raise UnsupportedConfigurationError(
            f"degree mismatch: {src.degree} vs {tgt.degree} (degree elevation is not supported)"
        )
    if src == tgt:
        return np.eye(src.n)
    if tgt.contains(src):
        return insertion_matrix(src, tgt)
    if src.contains(tgt):
        return _l2_projection_matrix(src, tgt)
    raise UnsupportedConfigurationError("knot vectors are not nested")


def build_space_transform(source: TensorBasis, target: TensorBasis) -> SplineSpaceTransform:
    """Exact knot insertion towards a finer space, L2 projection towards a coarser one.

    The decision is made per parametric direction; the full operator is the
    Kronecker product of the directional ones.
    """
    if isinstance(source, KnotVector):
        source = TensorBasis((source,))
    if isinstance(target, KnotVector):
        target = TensorBasis((target,))
    if source.dim != target.dim:
        raise UnsupportedConfigurationError(
            f"parametric dimensions differ: {source.dim} vs {target.dim}"
        )
    mats = [_direction_matrix(s, t) for s, t in zip(source.directions, target.directions)]
    T = mats[0]
    for m in mats[1:]:
        T = np.kron(T, m)
    return SplineSpaceTransform(source, target, T)


def transfer_control_data(T: SplineSpaceTransform, coefficients) -> np.ndarray:
    """Map a source control block ``(n_source, d)`` into the target space."""
    C = np.asarray(coefficients, dtype=float)
    vector = C.ndim == 1
    C2 = C[:, None] if vector else C
    if C2.shape[0] != T.matrix.shape[1]:
        raise ArgumentError(
            f"transform expects {T.matrix.shape[1]} control rows, got {C2.shape[0]}"
        )
    out = C2.copy() if T.is_identity else T.matrix @ C2
    return out[:, 0] if vector else out


def transfer_field(T: SplineSpaceTransform, field: SplineField) -> SplineField:
    if field.basis != T.source:
        raise ArgumentError("field does not live on the transform's source basis")
    if field.is_rational:
        raise ArgumentError("control-point transforms apply to non-rational fields only")
    return SplineField(T.target, transfer_control_data(T, field.coefficients))
