"""Radial basis function interpolation with a linear polynomial tail.

Each data component ``k`` is fitted independently by

    I_k(x) = sum_i lam_ik * phi(|x - x_i|) + b0_k + bL_k . x

subject to ``sum_i lam_ik = 0`` and ``sum_i lam_ik x_i = 0``. All components
share one LU factorization of the saddle-point matrix ``[[Phi, P], [P^T, 0]]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import ArgumentError, DegenerateGeometryError, FormatError, NumericalError

DUPLICATE_TOL = 1e-12
MAX_CONDITION = 1e15


@dataclass(frozen=True)
class Kernel:
    """Radial kernel choice.

    ``"tps"`` is the polyharmonic spline ``r^2 log r`` in two dimensions and
    ``r^3`` otherwise; ``"gaussian"`` is ``exp(-(shape * r)^2)``.
    """

    name: str = "tps"
    shape: float = 1.0

    def __post_init__(self) -> None:
        if self.name not in ("tps", "gaussian"):
            raise ArgumentError(f"unknown kernel {self.name!r}")
        if self.name == "gaussian" and not self.shape > 0:
            raise ArgumentError("gaussian shape parameter must be positive")

    def __call__(self, r: np.ndarray, dim: int) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.name == "gaussian":
            return np.exp(-((self.shape * r) ** 2))
        if dim == 2:
            out = np.zeros_like(r)
            nz = r > 0
            out[nz] = r[nz] ** 2 * np.log(r[nz])
            return out
        return r**3

    @classmethod
    def parse(cls, spec: str) -> Kernel:
        """``"tps"`` or ``"gaussian:<shape>"``."""
        name, _, shape = spec.partition(":")
        return cls(name, float(shape) if shape else 1.0)


@dataclass(frozen=True, eq=False)
class VertexCloud:
    """Ordered, pairwise distinct points with optional per-point data."""

    points: np.ndarray
    data: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ArgumentError("a vertex cloud needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ArgumentError("point coordinates must be finite")
        if pts.shape[0] > 1 and cKDTree(pts).query_pairs(DUPLICATE_TOL):
            raise ArgumentError("vertex cloud contains coincident points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.data is not None:
            data = np.array(self.data, dtype=float)
            if data.ndim == 1:
                data = data[:, None]
            if data.shape[0] != pts.shape[0]:
                raise ArgumentError(f"{data.shape[0]} data rows for {pts.shape[0]} points")
            data.setflags(write=False)
            object.__setattr__(self, "data", data)

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def with_data(self, data) -> VertexCloud:
        return VertexCloud(self.points, data)


@dataclass(frozen=True, eq=False)
class RbfInterpolant:
    centers: np.ndarray
    lam: np.ndarray
    beta0: np.ndarray
    betaL: np.ndarray
    kernel: Kernel
    axes: tuple[int, ...]
    condition: float


@dataclass(frozen=True, eq=False)
class MappingMatrix:
    entries: np.ndarray
    row_sum_deviation: float
    col_sum_deviation: float

    @classmethod
    def from_entries(cls, entries) -> MappingMatrix:
        M = np.asarray(entries, dtype=float)
        if not np.all(np.isfinite(M)):
            raise NumericalError("mapping matrix has non-finite entries")
        return cls(M, check_consistency(M), check_conservative(M))

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


def _active_axes(d: int, dead_axes) -> tuple[int, ...]:
    dead = set(dead_axes)
    if not dead <= set(range(d)):
        raise ArgumentError(f"dead axes {sorted(dead)} out of range for dimension {d}")
    axes = tuple(a for a in range(d) if a not in dead)
    if not axes:
        raise ArgumentError("all axes marked dead")
    return axes


def _factor(X: np.ndarray, kernel: Kernel):
    N, d = X.shape
    if N < d + 1:
        raise DegenerateGeometryError(f"need at least {d + 1} points in {d}D, got {N}")
    centered = X - X.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[0] == 0 or sv[-1] <= 1e-10 * sv[0]:
        raise DegenerateGeometryError(
            f"points span fewer than {d} dimensions; the linear tail is not unique"
        )
    A = np.zeros((N + d + 1, N + d + 1))
    A[:N, :N] = kernel(cdist(X, X), d)
    A[:N, N] = 1.0
    A[:N, N + 1 :] = X
    A[N, :N] = 1.0
    A[N + 1 :, :N] = X.T
    lu = sla.lu_factor(A, check_finite=False)
    rcond, _ = sla.lapack.dgecon(lu[0], np.linalg.norm(A, 1), norm="1")
    cond = 1.0 / rcond if rcond > 0 else float("inf")
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise NumericalError("RBF saddle-point system is singular", condition=cond)
    return lu, cond


def build_interpolant(cloud: VertexCloud, kernel: Kernel = Kernel(), dead_axes=()) -> RbfInterpolant:
    """Fit every data component of ``cloud`` with one shared factorization.

    Parameters
    ----------
    cloud : VertexCloud
        Must carry data.
    kernel : Kernel
    dead_axes : iterable of int
        Coordinate axes ignored by the fit, e.g. the normal axis of a planar
        interface embedded in 3-D.
    """
    if cloud.data is None:
        raise ArgumentError("cloud carries no data to interpolate")
    axes = _active_axes(cloud.d, dead_axes)
    X = cloud.points[:, axes]
    lu, cond = _factor(X, kernel)
    N, d = X.shape
    rhs = np.vstack([cloud.data, np.zeros((d + 1, cloud.data.shape[1]))])
    sol = sla.lu_solve(lu, rhs, check_finite=False)
    return RbfInterpolant(
        centers=X,
        lam=sol[:N],
        beta0=sol[N],
        betaL=sol[N + 1 :],
        kernel=kernel,
        axes=axes,
        condition=cond,
    )


def _evaluation_block(centers: np.ndarray, kernel: Kernel, Y: np.ndarray) -> np.ndarray:
    d = centers.shape[1]
    return np.hstack([kernel(cdist(Y, centers), d), np.ones((Y.shape[0], 1)), Y])


def eval_interpolant(interp: RbfInterpolant, x) -> np.ndarray:
    """Interpolant value at one point (``m``-vector) or many points (``(k, m)``)."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    Y = np.atleast_2d(arr)[:, interp.axes]
    coef = np.vstack([interp.lam, interp.beta0[None, :], interp.betaL])
    out = _evaluation_block(interp.centers, interp.kernel, Y) @ coef
    return out[0] if single else out


def build_mapping_matrix(
    source: VertexCloud, target: VertexCloud, kernel: Kernel = Kernel(), dead_axes=()
) -> MappingMatrix:
    """Dense consistent mapping: ``target_data = M @ source_data``.

    Column ``i`` is the interpolant of the ``i``-th unit data vector sampled
    at the target points.
    """
    if source.d != target.d:
        raise ArgumentError(f"clouds live in {source.d}D and {target.d}D")
    axes = _active_axes(source.d, dead_axes)
    X = source.points[:, axes]
    lu, _ = _factor(X, kernel)
    N, d = X.shape
    rhs = np.vstack([np.eye(N), np.zeros((d + 1, N))])
    sol = sla.lu_solve(lu, rhs, check_finite=False)
    E = _evaluation_block(X, kernel, target.points[:, axes])
    return MappingMatrix.from_entries(E @ sol)


def _entries(M) -> np.ndarray:
    return M.entries if isinstance(M, MappingMatrix) else np.asarray(M, dtype=float)


def check_consistency(M) -> float:
    """Largest deviation of a row sum from one."""
    E = _entries(M)
    return float(np.max(np.abs(E.sum(axis=1) - 1.0))) if E.size else 0.0


def check_conservative(M) -> float:
    """Largest deviation of a column sum from one (diagnostic only)."""
    E = _entries(M)
    return float(np.max(np.abs(E.sum(axis=0) - 1.0))) if E.size else 0.0


# --------------------------------------------------------------------------
# point-cloud files: one point per line, coordinates then data components.
# An optional first comment "# dim=<d>" fixes the coordinate count.


def read_cloud(path: str | Path, dim: int | None = None) -> VertexCloud:
    text = Path(path).read_text()
    rows = []
    for raw in text.splitlines():
        stripped = raw.strip()
        if stripped.startswith("#"):
            for token in stripped[1:].split():
                key, _, value = token.partition("=")
                if key == "dim" and dim is None:
                    dim = int(value)
            continue
        if stripped:
            try:
                rows.append([float(v) for v in stripped.replace(",", " ").split()])
            except ValueError as exc:
                raise FormatError(f"{path}: {exc}") from exc
    if not rows:
        raise FormatError(f"{path}: no points")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise FormatError(f"{path}: rows have differing column counts {sorted(widths)}")
    table = np.array(rows)
    if dim is None:
        dim = table.shape[1]
    if not 1 <= dim <= table.shape[1]:
        raise FormatError(f"{path}: dim={dim} incompatible with {table.shape[1]} columns")
    data = table[:, dim:] if table.shape[1] > dim else None
    return VertexCloud(table[:, :dim], data)


def write_cloud(cloud: VertexCloud, path: str | Path) -> None:
    cols = cloud.points if cloud.data is None else np.hstack([cloud.points, cloud.data])
    lines = [f"# dim={cloud.d}"] + [" ".join(repr(float(v)) for v in row) for row in cols]
    Path(path).write_text("\n".join(lines) + "\n")
