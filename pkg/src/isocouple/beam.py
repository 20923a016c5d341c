"""Load round trips on a planar beam interface for the three transfer strategies.

The structure side is a flat spline patch ``[0, W] x [0, H]`` in the plane
``z = 0``, parametrised by ``(xi_w, xi_h)`` in the unit square; ``xi_h`` is
the normalised height. A load field is mapped to the fluid side and back,
and the recovered structure load is compared with the original.
"""

from __future__ import annotations

import csv
import io
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .coupling import (
    build_space_transform,
    sample_spline_displacement,
    transfer_control_data,
    transfer_spline_vertex_force,
    transfer_vertex_vertex,
)
from .errors import ArgumentError
from .rbf import Kernel, VertexCloud, build_mapping_matrix
from .spline import (
    SplineField,
    TensorBasis,
    collocation_matrix,
    greville_abscissae,
    refine_uniform,
    tensor_grid,
    uniform_knot_vector,
)

STRATEGIES = ("vertex-vertex", "spline-vertex", "spline-spline")
PLANE_NORMAL_AXIS = 2


def constant_load(xi_h):
    """``5e3 e_z``."""
    out = np.zeros((np.size(xi_h), 3))
    out[:, 2] = 5e3
    return out


def linear_load(xi_h):
    """``-xi e_z`` with ``xi`` the normalised height."""
    out = np.zeros((np.size(xi_h), 3))
    out[:, 2] = -np.ravel(xi_h)
    return out


def zero_load(xi_h):
    return np.zeros((np.size(xi_h), 3))


LOADS: dict[str, Callable] = {"constant": constant_load, "linear": linear_load, "zero": zero_load}


@dataclass(frozen=True)
class BeamSetup:
    """Interface patch and its discretisations on both sides.

    Parameters
    ----------
    width, height : float
        Patch size in metres.
    p : int
        Spline degree of the structure patch.
    spans : int
        Elements per direction of the structure patch.
    fluid_grid : (int, int)
        Fluid vertices across the width and along the height.
    fluid_refine : int
        Uniform refinement levels of the fluid-side spline patch.
    kernel : Kernel
    """

    width: float = 0.5
    height: float = 1.0
    p: int = 2
    spans: int = 4
    fluid_grid: tuple[int, int] = (9, 17)
    fluid_refine: int = 1
    kernel: Kernel = Kernel()

    def __post_init__(self) -> None:
        if not (self.width > 0 and self.height > 0):
            raise ArgumentError("patch width and height must be positive")
        if self.p < 1 or self.spans < 1 or self.fluid_refine < 0:
            raise ArgumentError("need p >= 1, spans >= 1 and fluid_refine >= 0")
        if min(self.fluid_grid) < 2:
            raise ArgumentError("the fluid grid needs at least two vertices per direction")

    @property
    def basis(self) -> TensorBasis:
        kv = uniform_knot_vector(self.p, self.spans)
        return TensorBasis((kv, kv))

    @property
    def fluid_basis(self) -> TensorBasis:
        return refine_uniform(self.basis, self.fluid_refine)

    def to_physical(self, xi: np.ndarray) -> np.ndarray:
        xi = np.atleast_2d(xi)
        return np.column_stack([self.width * xi[:, 0], self.height * xi[:, 1], np.zeros(len(xi))])

    def geometry(self, basis: TensorBasis | None = None) -> SplineField:
        """Patch geometry; an affine map has its Greville points as control points."""
        basis = basis or self.basis
        return SplineField(basis, self.to_physical(self.greville(basis)))

    @staticmethod
    def greville(basis: TensorBasis) -> np.ndarray:
        return tensor_grid(*[greville_abscissae(kv) for kv in basis.directions])

    def fluid_vertices(self) -> np.ndarray:
        """Uniform grid of fluid vertices, offset from the structure's Greville points."""
        mw, mh = self.fluid_grid
        return self.to_physical(tensor_grid(np.linspace(0, 1, mw), np.linspace(0, 1, mh)))

    def load_field(self, load: Callable, basis: TensorBasis | None = None) -> SplineField:
        """Interpolate ``load`` at the Greville points; exact for affine loads."""
        basis = basis or self.basis
        xi = self.greville(basis)
        coeffs = np.linalg.solve(collocation_matrix(basis, xi), load(xi[:, 1]))
        return SplineField(basis, coeffs)


@dataclass(frozen=True)
class RoundTrip:
    load: str
    strategy: str
    forward_error: float
    roundtrip_error: float


def relative_error(result: np.ndarray, reference: np.ndarray) -> float:
    """Max-norm error relative to the reference; absolute when the reference is zero."""
    diff = float(np.max(np.abs(result - reference)))
    scale = float(np.max(np.abs(reference)))
    return diff / scale if scale > 0 else diff


def _vertex_vertex(setup: BeamSetup, load: Callable) -> tuple[float, float]:
    xi_s = setup.greville(setup.basis)
    structure = VertexCloud(setup.to_physical(xi_s))
    fluid = VertexCloud(setup.fluid_vertices())
    axes = (PLANE_NORMAL_AXIS,)
    M_sf = build_mapping_matrix(structure, fluid, setup.kernel, axes)
    M_fs = build_mapping_matrix(fluid, structure, setup.kernel, axes)
    f_s = load(xi_s[:, 1])
    f_f = transfer_vertex_vertex(M_sf, f_s)
    back = transfer_vertex_vertex(M_fs, f_f)
    exact_f = load(fluid.points[:, 1] / setup.height)
    return relative_error(f_f, exact_f), relative_error(back, f_s)


def _spline_vertex(setup: BeamSetup, load: Callable) -> tuple[float, float]:
    field = setup.load_field(load)
    fluid_pts = setup.fluid_vertices()
    f_f = sample_spline_displacement(field, fluid_pts, setup.geometry())
    xi_s = setup.greville(setup.basis)
    sites = setup.to_physical(xi_s)
    f_sites = transfer_spline_vertex_force(
        VertexCloud(fluid_pts, f_f), sites, setup.kernel, (PLANE_NORMAL_AXIS,)
    )
    back = np.linalg.solve(collocation_matrix(setup.basis, xi_s), f_sites)
    exact_f = load(fluid_pts[:, 1] / setup.height)
    return relative_error(f_f, exact_f), relative_error(back, field.coefficients)


def _spline_spline(setup: BeamSetup, load: Callable) -> tuple[float, float]:
    field = setup.load_field(load)
    T_sf = build_space_transform(setup.basis, setup.fluid_basis)
    T_fs = build_space_transform(setup.fluid_basis, setup.basis)
    f_f = transfer_control_data(T_sf, field.coefficients)
    back = transfer_control_data(T_fs, f_f)
    exact_f = setup.load_field(load, setup.fluid_basis).coefficients
    return relative_error(f_f, exact_f), relative_error(back, field.coefficients)


_RUNNERS = {
    "vertex-vertex": _vertex_vertex,
    "spline-vertex": _spline_vertex,
    "spline-spline": _spline_spline,
}


def round_trip(setup: BeamSetup, load: str, strategy: str) -> RoundTrip:
    """Map ``load`` structure -> fluid -> structure with one strategy."""
    if load not in LOADS:
        raise ArgumentError(f"unknown load {load!r}; choose from {sorted(LOADS)}")
    if strategy not in _RUNNERS:
        raise ArgumentError(f"unknown strategy {strategy!r}; choose from {list(STRATEGIES)}")
    fwd, back = _RUNNERS[strategy](setup, LOADS[load])
    return RoundTrip(load, strategy, fwd, back)


def run_beam(setup: BeamSetup | None = None, loads=("constant", "linear", "zero")) -> list[RoundTrip]:
    setup = setup or BeamSetup()
    return [round_trip(setup, load, s) for load in loads for s in STRATEGIES]


def to_csv(results: list[RoundTrip]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["load", "strategy", "forward_rel_error", "roundtrip_rel_error"])
    for r in results:
        w.writerow([r.load, r.strategy, f"{r.forward_error:.6e}", f"{r.roundtrip_error:.6e}"])
    return buf.getvalue()
