"""Tensor-product B-spline and NURBS fields on open knot vectors.

Evaluation follows the usual Cox-de Boor recursion in the triangular form
of Piegl & Tiller (The NURBS Book, A2.2/A2.3); refinement uses Boehm's
single-knot insertion. Only open (clamped) knot vectors are supported and
the parametric dimension is 1 or 2.

Coefficients of a two-direction field are stored row-major with the first
direction slowest: control point ``(i, j)`` lives in row ``i * n1 + j``.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ArgumentError, DomainError, NumericalError

# Roundoff allowance when a coordinate lands a hair outside the domain.
_DOMAIN_SLACK = 1e-13
# Collocation / least-squares systems above this condition number are rejected.
MAX_CONDITION = 1e13


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Open knot vector of a given degree.

    Parameters
    ----------
    knots : array_like
        Non-decreasing knot sequence; first and last knots repeated exactly
        ``degree + 1`` times.
    degree : int
        Polynomial degree ``p``.
    """

    knots: np.ndarray
    degree: int

    def __post_init__(self) -> None:
        knots = np.array(self.knots, dtype=float).ravel()
        p = int(self.degree)
        if p < 0:
            raise ArgumentError(f"degree must be non-negative, got {p}")
        if knots.size < 2 * (p + 1):
            raise ArgumentError(
                f"a degree-{p} knot vector needs at least {2 * (p + 1)} knots, got {knots.size}"
            )
        if not np.all(np.isfinite(knots)):
            raise ArgumentError("knots must be finite")
        if np.any(np.diff(knots) < 0):
            raise ArgumentError("knots must be non-decreasing")
        lo, hi = knots[0], knots[-1]
        if not lo < hi:
            raise ArgumentError("knot vector has an empty domain")
        if np.count_nonzero(knots == lo) != p + 1 or np.count_nonzero(knots == hi) != p + 1:
            raise ArgumentError(f"end knots must be repeated exactly {p + 1} times (open form)")
        interior = knots[p + 1 : knots.size - p - 1]
        if interior.size:
            _, counts = np.unique(interior, return_counts=True)
            if counts.max() > p:
                raise ArgumentError(f"interior knot multiplicity exceeds degree {p}")
        object.__setattr__(self, "knots", _readonly(knots))
        object.__setattr__(self, "degree", p)

    @property
    def n(self) -> int:
        """Number of basis functions."""
        return self.knots.size - self.degree - 1

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def breakpoints(self) -> np.ndarray:
        """Distinct knot values, i.e. element boundaries."""
        return np.unique(self.knots)

    @property
    def num_spans(self) -> int:
        return self.breakpoints.size - 1

    def multiplicity(self, u: float) -> int:
        return int(np.count_nonzero(self.knots == u))

    def contains(self, other: KnotVector) -> bool:
        """True when ``other``'s knots form a sub-multiset of ours (same degree and domain)."""
        if other.degree != self.degree or other.domain != self.domain:
            return False
        values, counts = np.unique(other.knots, return_counts=True)
        return all(self.multiplicity(v) >= c for v, c in zip(values, counts))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnotVector):
            return NotImplemented
        return self.degree == other.degree and np.array_equal(self.knots, other.knots)

    def __hash__(self) -> int:
        return hash((self.degree, self.knots.tobytes()))

    def __repr__(self) -> str:
        return f"KnotVector(degree={self.degree}, knots={self.knots.tolist()})"


def uniform_knot_vector(degree: int, spans: int, lo: float = 0.0, hi: float = 1.0) -> KnotVector:
    """Open knot vector with ``spans`` equal elements on ``[lo, hi]``; ``n = spans + degree``."""
    if spans < 1:
        raise ArgumentError(f"spans must be positive, got {spans}")
    # i / spans is correctly rounded, so refinements that share a knot agree bit for bit
    interior = lo + (hi - lo) * (np.arange(1, spans) / spans)
    knots = np.concatenate([np.full(degree + 1, lo), interior, np.full(degree + 1, hi)])
    return KnotVector(knots, degree)


@dataclass(frozen=True, eq=False)
class TensorBasis:
    """Tensor product of one or two univariate B-spline bases."""

    directions: tuple[KnotVector, ...]

    def __post_init__(self) -> None:
        dirs = tuple(self.directions)
        if len(dirs) not in (1, 2):
            raise ArgumentError(f"parametric dimension must be 1 or 2, got {len(dirs)}")
        if not all(isinstance(kv, KnotVector) for kv in dirs):
            raise ArgumentError("directions must be KnotVector instances")
        object.__setattr__(self, "directions", dirs)

    @property
    def dim(self) -> int:
        return len(self.directions)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(kv.n for kv in self.directions)

    @property
    def n_total(self) -> int:
        return int(np.prod(self.shape))

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(kv.degree for kv in self.directions)

    @property
    def domain(self) -> tuple[tuple[float, float], ...]:
        return tuple(kv.domain for kv in self.directions)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TensorBasis):
            return NotImplemented
        return self.directions == other.directions

    def __hash__(self) -> int:
        return hash(self.directions)


@dataclass(frozen=True, eq=False)
class SplineField:
    """Coefficient block over a tensor basis, optionally rational.

    Parameters
    ----------
    basis : TensorBasis
    coefficients : array_like, shape (n_total, d) or (n_total,)
        Control values in physical units. A 1-D array is treated as ``d = 1``.
    weights : array_like, shape (n_total,), optional
        Strictly positive NURBS weights.
    """

    basis: TensorBasis
    coefficients: np.ndarray
    weights: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        basis = self.basis
        if isinstance(basis, KnotVector):
            basis = TensorBasis((basis,))
            object.__setattr__(self, "basis", basis)
        coeffs = np.array(self.coefficients, dtype=float)
        if coeffs.ndim == 1:
            coeffs = coeffs[:, None]
        if coeffs.ndim != 2 or coeffs.shape[0] != basis.n_total:
            raise ArgumentError(
                f"expected {basis.n_total} coefficient rows, got array of shape {coeffs.shape}"
            )
        object.__setattr__(self, "coefficients", _readonly(coeffs))
        if self.weights is not None:
            w = np.array(self.weights, dtype=float).ravel()
            if w.size != basis.n_total:
                raise ArgumentError(f"expected {basis.n_total} weights, got {w.size}")
            if np.any(~(w > 0)):
                raise ArgumentError("weights must be strictly positive")
            object.__setattr__(self, "weights", _readonly(w))

    @property
    def d(self) -> int:
        """Physical dimension (number of components)."""
        return self.coefficients.shape[1]

    @property
    def is_rational(self) -> bool:
        return self.weights is not None

    def grid(self) -> np.ndarray:
        """Coefficients reshaped to ``(*basis.shape, d)``."""
        return self.coefficients.reshape(*self.basis.shape, self.d)


# --------------------------------------------------------------------------
# univariate kernels


def find_span(kv: KnotVector, u: float) -> int:
    """Index ``i`` with ``knots[i] <= u < knots[i+1]``.

    ``u`` equal to the last knot maps to the last non-empty span, ``n - 1``.
    """
    lo, hi = kv.domain
    slack = _DOMAIN_SLACK * (hi - lo)
    if not (lo - slack <= u <= hi + slack):
        raise DomainError(f"u={u!r} outside knot domain [{lo}, {hi}]")
    if u >= hi:
        return kv.n - 1
    if u <= lo:
        return kv.degree
    return int(np.searchsorted(kv.knots, u, side="right")) - 1


def _clamp(kv: KnotVector, u: float) -> float:
    lo, hi = kv.domain
    return min(max(float(u), lo), hi)


def eval_basis(kv: KnotVector, u: float) -> np.ndarray:
    """Values of the ``p + 1`` basis functions that are nonzero on the span of ``u``.

    The first value belongs to basis function ``find_span(kv, u) - p``.
    """
    span = find_span(kv, u)
    return _basis_funs(kv.knots, kv.degree, span, _clamp(kv, u))


def _basis_funs(U: np.ndarray, p: int, i: int, u: float) -> np.ndarray:
    N = np.zeros(p + 1)
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    N[0] = 1.0
    for j in range(1, p + 1):
        left[j] = u - U[i + 1 - j]
        right[j] = U[i + j] - u
        saved = 0.0
        for r in range(j):
            temp = N[r] / (right[r + 1] + left[j - r])
            N[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        N[j] = saved
    return N


def eval_basis_derivatives(kv: KnotVector, u: float, order: int) -> np.ndarray:
    """Derivatives ``0..order`` of the nonzero basis functions at ``u``.

    Returns
    -------
    ders : ndarray, shape (order + 1, p + 1)
        ``ders[k, j]`` is the k-th derivative of basis ``span - p + j``.
    """
    p = kv.degree
    if not 0 <= order <= p:
        raise ArgumentError(f"derivative order must lie in [0, {p}], got {order}")
    span = find_span(kv, u)
    return _ders_basis_funs(kv.knots, p, span, _clamp(kv, u), order)


def _ders_basis_funs(U: np.ndarray, p: int, i: int, u: float, n: int) -> np.ndarray:
    ndu = np.zeros((p + 1, p + 1))
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = u - U[i + 1 - j]
        right[j] = U[i + j] - u
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((n + 1, p + 1))
    ders[0, :] = ndu[:, p]
    a = np.zeros((2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, n + 1):
            d = 0.0
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1
    factor = float(p)
    for k in range(1, n + 1):
        ders[k, :] *= factor
        factor *= p - k
    return ders


def basis_matrix(kv: KnotVector, points: Sequence[float] | np.ndarray, order: int = 0) -> np.ndarray:
    """Dense ``(len(points), n)`` matrix of the ``order``-th derivative of every basis function."""
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    out = np.zeros((pts.size, kv.n))
    p = kv.degree
    for row, u in enumerate(pts):
        span = find_span(kv, u)
        if order == 0:
            vals = _basis_funs(kv.knots, p, span, _clamp(kv, u))
        elif order <= p:
            vals = _ders_basis_funs(kv.knots, p, span, _clamp(kv, u), order)[order]
        else:
            continue
        out[row, span - p : span + 1] = vals
    return out


def greville_abscissae(kv: KnotVector) -> np.ndarray:
    """Knot averages ``mean(knots[i+1 : i+p+1])``, one per basis function."""
    p, U = kv.degree, kv.knots
    if p == 0:
        return 0.5 * (U[:-1] + U[1:])
    return np.array([U[i + 1 : i + p + 1].mean() for i in range(kv.n)])


def gauss_points(kv: KnotVector, per_span: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on every nonzero span (default ``p + 1`` per span)."""
    m = kv.degree + 1 if per_span is None else per_span
    x, w = np.polynomial.legendre.leggauss(m)
    b = kv.breakpoints
    a, c = b[:-1, None], b[1:, None]
    pts = 0.5 * (c - a) * x[None, :] + 0.5 * (c + a)
    wts = 0.5 * (c - a) * w[None, :]
    return pts.ravel(), wts.ravel()


# --------------------------------------------------------------------------
# field evaluation


def _as_point(basis: TensorBasis, xi) -> np.ndarray:
    pt = np.atleast_1d(np.asarray(xi, dtype=float)).ravel()
    if pt.size != basis.dim:
        raise ArgumentError(f"expected a {basis.dim}-component parametric point, got {pt.size}")
    return pt


def _tensor_window(basis: TensorBasis, pt: np.ndarray, order: int):
    """Per-direction (first index, derivative block) pairs."""
    out = []
    for kv, u in zip(basis.directions, pt):
        span = find_span(kv, u)
        k = min(order, kv.degree)
        ders = _ders_basis_funs(kv.knots, kv.degree, span, _clamp(kv, u), k)
        if k < order:
            ders = np.vstack([ders, np.zeros((order - k, kv.degree + 1))])
        out.append((span - kv.degree, ders))
    return out


def _local_block(field_: SplineField, window) -> tuple[np.ndarray, np.ndarray | None]:
    grid = field_.grid()
    slices = tuple(slice(s, s + d.shape[1]) for s, d in window)
    coeffs = grid[slices]
    w = None
    if field_.weights is not None:
        w = field_.weights.reshape(field_.basis.shape)[slices]
    return coeffs, w


def eval_field(field_: SplineField, xi) -> np.ndarray:
    """Value of the field at parametric point ``xi`` (a float for curves)."""
    pt = _as_point(field_.basis, xi)
    window = _tensor_window(field_.basis, pt, 0)
    coeffs, w = _local_block(field_, window)
    N = window[0][1][0]
    for _, d in window[1:]:
        N = np.multiply.outer(N, d[0])
    if w is None:
        return np.tensordot(N, coeffs, axes=N.ndim)
    Nw = N * w
    return np.tensordot(Nw, coeffs, axes=N.ndim) / Nw.sum()


def eval_field_gradient(field_: SplineField, xi) -> np.ndarray:
    """Parametric Jacobian ``d x dim`` of the field at ``xi``."""
    basis = field_.basis
    pt = _as_point(basis, xi)
    window = _tensor_window(basis, pt, 1)
    coeffs, w = _local_block(field_, window)

    def tensor(orders: Sequence[int]) -> np.ndarray:
        T = window[0][1][orders[0]]
        for (_, d), k in zip(window[1:], orders[1:]):
            T = np.multiply.outer(T, d[k])
        return T

    N = tensor([0] * basis.dim)
    grad = np.zeros((field_.d, basis.dim))
    if w is None:
        for a in range(basis.dim):
            orders = [0] * basis.dim
            orders[a] = 1
            dN = tensor(orders)
            grad[:, a] = np.tensordot(dN, coeffs, axes=dN.ndim)
        return grad
    Nw = N * w
    W = Nw.sum()
    value = np.tensordot(Nw, coeffs, axes=N.ndim) / W
    for a in range(basis.dim):
        orders = [0] * basis.dim
        orders[a] = 1
        dNw = tensor(orders) * w
        grad[:, a] = (np.tensordot(dNw, coeffs, axes=N.ndim) - value * dNw.sum()) / W
    return grad


def evaluate(field_: SplineField, points) -> np.ndarray:
    """Evaluate at many parametric points; returns ``(npts, d)``."""
    pts = np.asarray(points, dtype=float)
    if field_.basis.dim == 1:
        pts = pts.reshape(-1, 1)
    return np.array([eval_field(field_, p) for p in pts.reshape(-1, field_.basis.dim)])


def collocation_matrix(basis: TensorBasis, points: np.ndarray) -> np.ndarray:
    """``(npts, n_total)`` matrix of tensor basis values at scattered parametric points."""
    pts = np.asarray(points, dtype=float).reshape(-1, basis.dim)
    rows = []
    for kv, col in zip(basis.directions, pts.T):
        rows.append(basis_matrix(kv, col))
    if basis.dim == 1:
        return rows[0]
    B0, B1 = rows
    return (B0[:, :, None] * B1[:, None, :]).reshape(pts.shape[0], -1)


def tensor_grid(*axes: np.ndarray) -> np.ndarray:
    """Cartesian product of 1-D point sets, first axis slowest; shape ``(npts, len(axes))``."""
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


# --------------------------------------------------------------------------
# refinement


def _boehm(kv: KnotVector, coeffs: np.ndarray, u: float) -> tuple[KnotVector, np.ndarray]:
    """Insert ``u`` once along axis 0 of ``coeffs``."""
    lo, hi = kv.domain
    if not lo < u < hi:
        raise ArgumentError(f"can only insert strictly inside ({lo}, {hi}), got {u}")
    p, U = kv.degree, kv.knots
    s = kv.multiplicity(u)
    if s + 1 > p:
        raise ArgumentError(f"inserting {u} would raise its multiplicity above degree {p}")
    k = int(np.searchsorted(U, u, side="right")) - 1
    n = kv.n
    Q = np.empty((n + 1,) + coeffs.shape[1:])
    Q[: k - p + 1] = coeffs[: k - p + 1]
    for i in range(k - p + 1, k - s + 1):
        alpha = (u - U[i]) / (U[i + p] - U[i])
        Q[i] = alpha * coeffs[i] + (1.0 - alpha) * coeffs[i - 1]
    Q[k - s + 1 :] = coeffs[k - s :]
    new_kv = KnotVector(np.insert(U, k + 1, u), p)
    return new_kv, Q


def insert_knot(field_: SplineField, direction: int, u: float) -> SplineField:
    """Insert one knot ``u`` in ``direction``; the represented function is unchanged."""
    basis = field_.basis
    if not 0 <= direction < basis.dim:
        raise ArgumentError(f"direction {direction} out of range for a {basis.dim}-direction basis")
    grid = field_.grid()
    if field_.weights is not None:
        w = field_.weights.reshape(basis.shape)[..., None]
        grid = np.concatenate([grid * w, w], axis=-1)
    moved = np.moveaxis(grid, direction, 0)
    new_kv, Q = _boehm(basis.directions[direction], moved, float(u))
    Q = np.moveaxis(Q, 0, direction)
    dirs = list(basis.directions)
    dirs[direction] = new_kv
    new_basis = TensorBasis(tuple(dirs))
    flat = Q.reshape(new_basis.n_total, -1)
    if field_.weights is None:
        return SplineField(new_basis, flat)
    weights = flat[:, -1]
    return SplineField(new_basis, flat[:, :-1] / weights[:, None], weights)


def insertion_matrix(coarse: KnotVector, fine: KnotVector) -> np.ndarray:
    """Matrix ``A`` (``fine.n x coarse.n``) with ``fine_coeffs = A @ coarse_coeffs``.

    Requires ``coarse``'s knots to be a sub-multiset of ``fine``'s.
    """
    if not fine.contains(coarse):
        raise ArgumentError("knot vectors are not nested")
    values, counts = np.unique(fine.knots, return_counts=True)
    extra = []
    for v, c in zip(values, counts):
        extra.extend([v] * (c - coarse.multiplicity(v)))
    kv, A = coarse, np.eye(coarse.n)
    for u in extra:
        kv, A = _boehm(kv, A, float(u))
    return A


def refine_uniform(basis: TensorBasis, levels: int) -> TensorBasis:
    """Halve every nonzero span ``levels`` times in each direction."""
    if levels < 0:
        raise ArgumentError(f"levels must be non-negative, got {levels}")
    dirs = []
    for kv in basis.directions:
        knots = kv.knots
        for _ in range(levels):
            b = np.unique(knots)
            knots = np.sort(np.concatenate([knots, 0.5 * (b[:-1] + b[1:])]))
        dirs.append(KnotVector(knots, kv.degree))
    return TensorBasis(tuple(dirs))


# --------------------------------------------------------------------------
# projection

Source = Union[SplineField, Callable, Sequence]


def _solve_checked(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    if A.shape[0] == A.shape[1]:
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise NumericalError("collocation system is singular", condition=float(cond))
        return np.linalg.solve(A, b)
    sv = np.linalg.svd(A, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if A.shape[0] < A.shape[1] or not np.isfinite(cond) or cond > MAX_CONDITION:
        raise NumericalError("least-squares system is rank deficient", condition=cond)
    return np.linalg.lstsq(A, b, rcond=None)[0]


def l2_project(source: Source, target: TensorBasis, method: str = "greville") -> SplineField:
    """Best fit of ``source`` in the span of ``target``.

    Parameters
    ----------
    source : SplineField, callable or sequence of ``(xi, value)`` pairs
        A callable receives one parametric point (a float for curves) and
        returns a scalar or a vector.
    target : TensorBasis
    method : {"greville", "gauss"}
        For function-like sources: square collocation at the tensor Greville
        grid, or least squares over ``p + 1`` Gauss points per span. Discrete
        samples are collocated when there are exactly ``n_total`` of them and
        fitted by least squares otherwise.

    Returns
    -------
    SplineField
        Non-rational field over ``target``; exact whenever ``source`` already
        lies in the target space.
    """
    if isinstance(target, KnotVector):
        target = TensorBasis((target,))
    if isinstance(source, SplineField) or callable(source):
        if method == "greville":
            axes = [greville_abscissae(kv) for kv in target.directions]
        elif method == "gauss":
            axes = [gauss_points(kv)[0] for kv in target.directions]
        else:
            raise ArgumentError(f"unknown projection method {method!r}")
        pts = tensor_grid(*axes)
        if isinstance(source, SplineField):
            vals = evaluate(source, pts)
        else:
            scalar = target.dim == 1
            vals = np.array([np.atleast_1d(source(p[0] if scalar else p)) for p in pts], dtype=float)
    else:
        samples = list(source)
        if not samples:
            raise ArgumentError("no samples given")
        pts = np.array([np.atleast_1d(np.asarray(s[0], dtype=float)) for s in samples])
        vals = np.array([np.atleast_1d(np.asarray(s[1], dtype=float)) for s in samples])
        if pts.shape[0] < target.n_total:
            raise NumericalError(
                f"{pts.shape[0]} samples cannot determine {target.n_total} coefficients",
                condition=float("inf"),
            )
    A = collocation_matrix(target, pts)
    coeffs = _solve_checked(A, vals.reshape(A.shape[0], -1))
    return SplineField(target, coeffs)
