"""Partitioned heat conduction on [0,2]x[0,1] split at x = 1.

The left square runs the Dirichlet participant, the right square the
Neumann participant. Both are tensor-product B-spline Galerkin solvers with
backward Euler in time and unit diffusivity. Knot vectors are laid out in
physical coordinates, so parametric and physical derivatives coincide.

Per coupling iteration the Dirichlet side sends the two control-point
columns nearest the interface (its trace and the adjacent column); the
Neumann side differentiates that strip with the sender's knot vector to
obtain the flux, solves, and returns its own interface trace.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .bus import (
    FIRST,
    SECOND,
    Participant,
    SerialImplicit,
    Transcript,
    Transport,
    make_pair,
    run_coupled,
    run_threads,
)
from .coupling import build_space_transform, transfer_control_data
from .errors import ArgumentError, NumericalError, UnsupportedConfigurationError
from .spline import (
    KnotVector,
    SplineField,
    TensorBasis,
    basis_matrix,
    eval_basis_derivatives,
    gauss_points,
    l2_project,
    uniform_knot_vector,
)

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
INTERFACE_X = 1.0


@dataclass(frozen=True)
class ManufacturedSolution:
    """``u = 1 + x^2 + alpha y^2 + beta t`` with source ``f = beta - 2 - 2 alpha``."""

    alpha: float = 3.0
    beta: float = 1.3

    def u(self, x, y, t):
        return 1.0 + np.asarray(x) ** 2 + self.alpha * np.asarray(y) ** 2 + self.beta * t

    @property
    def source(self) -> float:
        return self.beta - 2.0 - 2.0 * self.alpha

    def flux_x(self, x, y=None, t=None):
        """``du/dx``; on the interface this is the flux along the outward normal of the left square."""
        return 2.0 * np.asarray(x, dtype=float) + 0.0 * np.asarray(y if y is not None else 0.0)


# --------------------------------------------------------------------------
# assembly


def _mass_1d(kv: KnotVector) -> np.ndarray:
    pts, wts = gauss_points(kv)
    B = basis_matrix(kv, pts)
    return B.T @ (wts[:, None] * B)


def _stiffness_1d(kv: KnotVector) -> np.ndarray:
    pts, wts = gauss_points(kv)
    D = basis_matrix(kv, pts, order=1)
    return D.T @ (wts[:, None] * D)


def _integrals_1d(kv: KnotVector) -> np.ndarray:
    pts, wts = gauss_points(kv)
    return basis_matrix(kv, pts).T @ wts


@dataclass(frozen=True, eq=False)
class Operators:
    mass: np.ndarray
    stiffness: np.ndarray
    load: np.ndarray
    mass_y: np.ndarray


@dataclass(frozen=True, eq=False)
class HeatSubdomain:
    """One rectangle of the partition together with its current solution.

    ``coefficients`` has one entry per tensor basis function, first
    direction (x) slowest.
    """

    bounds: tuple[tuple[float, float], tuple[float, float]]
    basis: TensorBasis
    role: str
    solution: ManufacturedSolution
    coefficients: np.ndarray
    t: float = 0.0
    operators: Operators | None = field(default=None, repr=False)

    @property
    def kx(self) -> KnotVector:
        return self.basis.directions[0]

    @property
    def ky(self) -> KnotVector:
        return self.basis.directions[1]

    @property
    def field(self) -> SplineField:
        return SplineField(self.basis, self.coefficients)

    def grid(self) -> np.ndarray:
        return self.coefficients.reshape(self.basis.shape)

    def trace(self) -> SplineField:
        """Interface temperature as a 1-D field in y."""
        col = -1 if self.role == DIRICHLET else 0
        return SplineField(TensorBasis((self.ky,)), self.grid()[col, :])

    def interface_strip(self) -> np.ndarray:
        """``(ny, 2)`` block: interface column and its neighbour (Dirichlet side only)."""
        g = self.grid()
        return np.column_stack([g[-1, :], g[-2, :]])


def make_subdomain(role: str, spans: int, p: int = 2, solution: ManufacturedSolution | None = None) -> HeatSubdomain:
    """Left (Dirichlet) or right (Neumann) unit square with ``spans`` elements per direction."""
    if role not in (DIRICHLET, NEUMANN):
        raise ArgumentError(f"role must be {DIRICHLET!r} or {NEUMANN!r}")
    if p < 2:
        raise ArgumentError("the manufactured solution is quadratic; use degree p >= 2")
    solution = solution or ManufacturedSolution()
    x0 = 0.0 if role == DIRICHLET else INTERFACE_X
    bounds = ((x0, x0 + 1.0), (0.0, 1.0))
    basis = TensorBasis(
        (uniform_knot_vector(p, spans, *bounds[0]), uniform_knot_vector(p, spans, *bounds[1]))
    )
    init = l2_project(lambda q: solution.u(q[0], q[1], 0.0), basis)
    sub = HeatSubdomain(bounds, basis, role, solution, init.coefficients[:, 0].copy(), 0.0)
    return replace(sub, operators=assemble(sub))


def assemble(sub: HeatSubdomain) -> Operators:
    """Mass, stiffness and unit-source load vector.

    Tensor products of 1-D Gauss-Legendre integrals with ``p + 1`` points per
    element per direction, which is the same rule as the full 2-D quadrature.
    """
    kx, ky = sub.kx, sub.ky
    Mx, My = _mass_1d(kx), _mass_1d(ky)
    Kx, Ky = _stiffness_1d(kx), _stiffness_1d(ky)
    mass = np.kron(Mx, My)
    stiffness = np.kron(Kx, My) + np.kron(Mx, Ky)
    load = np.kron(_integrals_1d(kx), _integrals_1d(ky))
    return Operators(mass, stiffness, load, My)


# --------------------------------------------------------------------------
# stepping


def _edge_values(kv: KnotVector, fn) -> np.ndarray:
    return l2_project(fn, TensorBasis((kv,))).coefficients[:, 0]


def _outer_dirichlet(sub: HeatSubdomain, t: float) -> dict[int, float]:
    """Boundary coefficients fixed by the exact solution at time ``t``, excluding the interface column."""
    sol = sub.solution
    (x0, x1), (y0, y1) = sub.bounds
    nx, ny = sub.basis.shape
    fixed: dict[int, float] = {}
    bottom = _edge_values(sub.kx, lambda x: sol.u(x, y0, t))
    top = _edge_values(sub.kx, lambda x: sol.u(x, y1, t))
    for i in range(nx):
        fixed[i * ny] = bottom[i]
        fixed[i * ny + ny - 1] = top[i]
    outer_col = 0 if sub.role == DIRICHLET else nx - 1
    xo = x0 if sub.role == DIRICHLET else x1
    side = _edge_values(sub.ky, lambda y: sol.u(xo, y, t))
    for j in range(ny):
        fixed[outer_col * ny + j] = side[j]
    return fixed


def _backward_euler(sub: HeatSubdomain, dt: float, fixed: dict[int, float], extra_load=None) -> np.ndarray:
    ops = sub.operators or assemble(sub)
    A = ops.mass / dt + ops.stiffness
    rhs = ops.mass @ sub.coefficients / dt + sub.solution.source * ops.load
    if extra_load is not None:
        rhs = rhs + extra_load
    idx = np.array(sorted(fixed))
    vals = np.array([fixed[i] for i in idx])
    free = np.setdiff1d(np.arange(sub.basis.n_total), idx)
    A_ff = A[np.ix_(free, free)]
    cond = np.linalg.cond(A_ff)
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericalError("heat system is singular", condition=float(cond))
    c = np.empty(sub.basis.n_total)
    c[idx] = vals
    c[free] = np.linalg.solve(A_ff, rhs[free] - A[np.ix_(free, idx)] @ vals)
    return c


def _check_dt(dt: float) -> None:
    if not dt > 0:
        raise ArgumentError(f"time step must be positive, got {dt}")


def _to_basis(field_: SplineField, kv: KnotVector) -> np.ndarray:
    target = TensorBasis((kv,))
    if field_.basis == target:
        return field_.coefficients[:, 0]
    T = build_space_transform(field_.basis, target)
    return transfer_control_data(T, field_.coefficients)[:, 0]


def step_dirichlet_side(sub: HeatSubdomain, u_gamma: SplineField, dt: float) -> tuple[HeatSubdomain, SplineField]:
    """Backward-Euler step with ``u = u_gamma`` imposed on the interface.

    ``u_gamma`` may live on any y-knot vector nested with this subdomain's.
    """
    _check_dt(dt)
    if sub.role != DIRICHLET:
        raise ArgumentError("step_dirichlet_side needs the Dirichlet subdomain")
    t = sub.t + dt
    fixed = _outer_dirichlet(sub, t)
    nx, ny = sub.basis.shape
    gamma = _to_basis(u_gamma, sub.ky)
    for j in range(ny):
        fixed[(nx - 1) * ny + j] = gamma[j]
    new = replace(sub, coefficients=_backward_euler(sub, dt, fixed), t=t)
    return new, new.trace()


def interface_flux(strip: np.ndarray, sender: TensorBasis) -> SplineField:
    """Normal derivative ``du/dx`` on the sender's right edge from its two boundary columns.

    Only the last two x basis functions have nonzero slope at a clamped end,
    so the strip determines the derivative exactly.
    """
    strip = np.asarray(strip, dtype=float)
    kx, ky = sender.directions
    if strip.shape != (ky.n, 2):
        raise ArgumentError(f"strip must have shape {(ky.n, 2)}, got {strip.shape}")
    slopes = eval_basis_derivatives(kx, kx.domain[1], 1)[1]
    q = slopes[-1] * strip[:, 0] + slopes[-2] * strip[:, 1]
    return SplineField(TensorBasis((ky,)), q)


def step_neumann_side(
    sub: HeatSubdomain, strip: np.ndarray, sender: TensorBasis, dt: float
) -> tuple[HeatSubdomain, SplineField]:
    """Backward-Euler step with the flux inherited from the Dirichlet side's field."""
    _check_dt(dt)
    if sub.role != NEUMANN:
        raise ArgumentError("step_neumann_side needs the Neumann subdomain")
    t = sub.t + dt
    q = _to_basis(interface_flux(strip, sender), sub.ky)
    ops = sub.operators or assemble(sub)
    nx, ny = sub.basis.shape
    load = np.zeros(sub.basis.n_total)
    # outward normal of this square on the interface is -x, so grad(u).n = -q
    load[:ny] = -(ops.mass_y @ q)
    new = replace(sub, coefficients=_backward_euler(sub, dt, _outer_dirichlet(sub, t), load), t=t)
    return new, new.trace()


def l2_error(sub: HeatSubdomain) -> float:
    """``||u_h - u_exact(t)||`` over the subdomain, Gauss rule with ``p + 3`` points per direction."""
    px, wx = gauss_points(sub.kx, sub.kx.degree + 3)
    py, wy = gauss_points(sub.ky, sub.ky.degree + 3)
    U = basis_matrix(sub.kx, px) @ sub.grid() @ basis_matrix(sub.ky, py).T
    X, Y = np.meshgrid(px, py, indexing="ij")
    err = U - sub.solution.u(X, Y, sub.t)
    return float(np.sqrt(np.einsum("i,j,ij->", wx, wy, err**2)))


def flux_error(q: SplineField, solution: ManufacturedSolution, t: float = 0.0) -> float:
    """Relative L2 error of an interface flux; absolute if the exact flux vanishes."""
    kv = q.basis.directions[0]
    pts, wts = gauss_points(kv)
    qh = basis_matrix(kv, pts) @ q.coefficients[:, 0]
    exact = solution.flux_x(np.full_like(pts, INTERFACE_X), pts, t)
    num = np.sqrt(np.sum(wts * (qh - exact) ** 2))
    den = np.sqrt(np.sum(wts * exact**2))
    return float(num / den) if den >= 1e-14 else float(num)


# --------------------------------------------------------------------------
# coupled participants


class DirichletSolver:
    """First participant: receives the Neumann trace, sends its interface strip."""

    def __init__(self, sub: HeatSubdomain, extrapolate: bool = True):
        self.sub = sub
        self.extrapolate = extrapolate
        self.participant: Participant | None = None
        self._pending: HeatSubdomain | None = None
        self._previous: np.ndarray | None = None
        self.errors: list[float] = []
        self.traces: list[SplineField] = []

    @property
    def peer_ky(self) -> KnotVector:
        return self.participant.peer_interface.directions[1]

    def initial_guess(self) -> np.ndarray:
        return _to_basis(self.sub.trace(), self.peer_ky)[:, None]

    def predict(self, x: np.ndarray, t: float) -> np.ndarray:
        """Starting guess for a window: linear extrapolation of the last two converged traces.

        The end coefficients of the interface trace sit on the outer boundary,
        where the datum is known, so they are set from it directly.
        """
        guess = x.copy()
        if self.extrapolate and self._previous is not None:
            guess = 2.0 * x - self._previous
        self._previous = x.copy()
        (y0, y1) = self.sub.bounds[1]
        sol = self.sub.solution
        guess[0, 0] = sol.u(INTERFACE_X, y0, t)
        guess[-1, 0] = sol.u(INTERFACE_X, y1, t)
        return guess

    def solve(self, received: np.ndarray, t: float, dt: float) -> np.ndarray:
        gamma = SplineField(TensorBasis((self.peer_ky,)), received[:, 0])
        self._pending, _ = step_dirichlet_side(self.sub, gamma, dt)
        return self._pending.interface_strip()

    def commit(self, t: float) -> None:
        self.sub = self._pending
        self.errors.append(l2_error(self.sub))
        self.traces.append(self.sub.trace())


class NeumannSolver:
    """Second participant: differentiates the received strip, returns its trace."""

    def __init__(self, sub: HeatSubdomain):
        self.sub = sub
        self.participant: Participant | None = None
        self._pending: HeatSubdomain | None = None
        self._flux: SplineField | None = None
        self.errors: list[float] = []
        self.fluxes: list[SplineField] = []
        self.traces: list[SplineField] = []

    @property
    def peer(self) -> TensorBasis:
        return self.participant.peer_interface

    def solve(self, received: np.ndarray, t: float, dt: float) -> np.ndarray:
        self._flux = interface_flux(received, self.peer)
        self._pending, trace = step_neumann_side(self.sub, received, self.peer, dt)
        return trace.coefficients

    def commit(self, t: float) -> None:
        self.sub = self._pending
        self.errors.append(l2_error(self.sub))
        self.fluxes.append(self._flux)
        self.traces.append(self.sub.trace())


@dataclass
class HeatRow:
    t: float
    error_dirichlet: float
    error_neumann: float
    flux_error: float
    iterations: int
    cumulative_bytes: int


@dataclass
class HeatReport:
    rows: list[HeatRow]
    transcripts: tuple[Transcript, ...]
    dirichlet: DirichletSolver | None
    neumann: NeumannSolver | None
    transform_identity: bool

    @property
    def max_field_error(self) -> float:
        vals = [v for r in self.rows for v in (r.error_dirichlet, r.error_neumann) if np.isfinite(v)]
        return max(vals)

    @property
    def max_flux_error(self) -> float:
        return max(r.flux_error for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "l2_error_dirichlet", "l2_error_neumann", "flux_rel_error", "subiterations", "cumulative_bytes"])
        for r in self.rows:
            w.writerow([
                f"{r.t:.12g}",
                "" if np.isnan(r.error_dirichlet) else f"{r.error_dirichlet:.6e}",
                "" if np.isnan(r.error_neumann) else f"{r.error_neumann:.6e}",
                "" if np.isnan(r.flux_error) else f"{r.flux_error:.6e}",
                r.iterations,
                r.cumulative_bytes,
            ])
        return buf.getvalue()


def check_nested(r_D: int, r_N: int) -> None:
    if r_D < 1 or r_N < 1:
        raise ArgumentError("refinements must be positive")
    if r_D % r_N and r_N % r_D:
        raise UnsupportedConfigurationError(
            f"interface knot vectors with {r_D} and {r_N} spans are not nested"
        )


def flux_error_series(neumann: NeumannSolver) -> list[float]:
    """Per-step relative L2 flux error of the fluxes the Neumann side actually used."""
    return [flux_error(q, neumann.sub.solution) for q in neumann.fluxes]


def _steps(dt: float, T: float) -> int:
    _check_dt(dt)
    if not T > 0:
        raise ArgumentError(f"end time must be positive, got {T}")
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * T:
        raise ArgumentError(f"T={T} is not a whole number of steps of {dt}")
    return steps


def participant_pair(r_D: int, r_N: int, p: int, solution: ManufacturedSolution, extrapolate: bool = True):
    sub_d = make_subdomain(DIRICHLET, r_D, p, solution)
    sub_n = make_subdomain(NEUMANN, r_N, p, solution)
    return DirichletSolver(sub_d, extrapolate), NeumannSolver(sub_n)


def run_benchmark(
    r_D: int = 2,
    r_N: int = 4,
    p: int = 2,
    dt: float = 0.1,
    T: float = 1.0,
    alpha: float = 3.0,
    beta: float = 1.3,
    transport: str = "inproc",
    omega: float = 0.5,
    tol: float = 1e-14,
    max_iter: int = 100,
    extrapolate: bool = True,
    aitken: bool = True,
) -> HeatReport:
    """Run both participants on their own threads and collect per-step errors.

    ``extrapolate`` starts each window from a linear extrapolation of the
    converged interface history instead of the last converged value;
    ``aitken`` adapts the relaxation factor, starting from ``omega``.
    """
    check_nested(r_D, r_N)
    steps = _steps(dt, T)
    solution = ManufacturedSolution(alpha, beta)
    dsolver, nsolver = participant_pair(r_D, r_N, p, solution, extrapolate)
    scheme = SerialImplicit(dt, omega, tol, max_iter, aitken=aitken)
    ta, tb = make_pair(transport)
    pa, pb = _participants(dsolver, nsolver, ta, tb)
    tr_a, tr_b = run_threads(pa, dsolver, pb, nsolver, scheme, steps)
    flux = flux_error_series(nsolver)
    rows = []
    for k in range(steps):
        s = tr_a.steps[k]
        rows.append(HeatRow(s.t, dsolver.errors[k], nsolver.errors[k], flux[k], s.iterations,
                            s.bytes_sent + s.bytes_received))
    identity = dsolver.sub.ky == nsolver.sub.ky
    return HeatReport(rows, (tr_a, tr_b), dsolver, nsolver, identity)


def _participants(dsolver, nsolver, ta: Transport | None, tb: Transport | None):
    pa = pb = None
    if ta is not None:
        ny = dsolver.sub.basis.shape[1]
        pa = Participant("dirichlet", FIRST, dsolver.sub.basis, ta, (ny, 2))
        dsolver.participant = pa
    if tb is not None:
        ny = nsolver.sub.basis.shape[1]
        pb = Participant("neumann", SECOND, nsolver.sub.basis, tb, (ny, 1))
        nsolver.participant = pb
    return pa, pb


def run_single_participant(
    role: str,
    transport: Transport,
    r: int,
    p: int = 2,
    dt: float = 0.1,
    T: float = 1.0,
    alpha: float = 3.0,
    beta: float = 1.3,
    omega: float = 0.5,
    tol: float = 1e-14,
    max_iter: int = 100,
    extrapolate: bool = True,
    aitken: bool = True,
) -> HeatReport:
    """Run one side of the benchmark over an already connected transport (socket mode)."""
    steps = _steps(dt, T)
    solution = ManufacturedSolution(alpha, beta)
    scheme = SerialImplicit(dt, omega, tol, max_iter, aitken=aitken)
    if role == DIRICHLET:
        solver = DirichletSolver(make_subdomain(DIRICHLET, r, p, solution), extrapolate)
        pa, _ = _participants(solver, None, transport, None)
        part = pa
    elif role == NEUMANN:
        solver = NeumannSolver(make_subdomain(NEUMANN, r, p, solution))
        _, pb = _participants(None, solver, None, transport)
        part = pb
    else:
        raise ArgumentError(f"role must be {DIRICHLET!r} or {NEUMANN!r}")
    try:
        tr = run_coupled(part, solver, scheme, steps)
    finally:
        part.close()
    peer_spans = part.peer_interface.directions[1].num_spans
    check_nested(r, peer_spans)
    nan = float("nan")
    rows = []
    for k, s in enumerate(tr.steps):
        if role == DIRICHLET:
            row = HeatRow(s.t, solver.errors[k], nan, nan, s.iterations, s.bytes_sent + s.bytes_received)
        else:
            row = HeatRow(s.t, nan, solver.errors[k], flux_error(solver.fluxes[k], solution), s.iterations,
                          s.bytes_sent + s.bytes_received)
        rows.append(row)
    d = solver if role == DIRICHLET else None
    n = solver if role == NEUMANN else None
    return HeatReport(rows, (tr,), d, n, False)
