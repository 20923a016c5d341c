"""Communication-overhead experiments over real bus sessions.

Every cell of the sweep opens a session between two participants, runs the
handshake and ``N_t`` exchanges of a ``d``-component block, and compares the
bytes the first participant sent with the closed-form models in
:mod:`isocouple.wire`.

Spline mode announces a square tensor basis with ``n = r + p`` functions per
direction and exchanges ``n**2`` control rows. Vertex mode announces one
vertex per Gauss point (``(p + 1)**2`` per element on an ``r x r`` grid) and
exchanges one row per vertex.
"""

from __future__ import annotations

import csv
import gc
import io
from dataclasses import dataclass

import numpy as np

from .bus import echo_session
from .errors import ArgumentError
from .rbf import VertexCloud
from .spline import TensorBasis, gauss_points, tensor_grid, uniform_knot_vector
from .wire import (
    OverheadParams,
    OverheadReport,
    knot_matrix_entries,
    measured_overhead,
    padded_spline_doubles,
)

R_VALUES = (2, 4, 8, 16, 32, 64, 128)
P_VALUES = (2, 3, 4, 5)
MODES = ("vertex", "spline")


def spline_interface(params: OverheadParams) -> TensorBasis:
    kv = uniform_knot_vector(params.p, params.r)
    return TensorBasis(tuple([kv] * params.pdim))


def vertex_interface(params: OverheadParams) -> VertexCloud:
    """Gauss points of the ``r x r`` element grid, embedded in the plane ``z = 0``."""
    if params.pdim != 2 or params.d != 3:
        raise ArgumentError("vertex interfaces are built for pdim=2, d=3")
    kv = uniform_knot_vector(params.p, params.r)
    pts = gauss_points(kv, params.p + 1)[0]
    grid = tensor_grid(pts, pts)
    return VertexCloud(np.column_stack([grid, np.zeros(len(grid))]))


def _interface(mode: str, params: OverheadParams):
    if mode == "spline":
        iface = spline_interface(params)
        rows = iface.n_total
    elif mode == "vertex":
        iface = vertex_interface(params)
        rows = iface.N
    else:
        raise ArgumentError(f"mode must be 'spline' or 'vertex', got {mode!r}")
    return iface, (rows, params.d)


def _block(shape: tuple[int, int], seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(shape)


@dataclass(frozen=True)
class Cell:
    report: OverheadReport
    padded_doubles: int
    wall_time: float

    @property
    def expected_bytes(self) -> int:
        """Closed-form prediction of the bytes actually sent, padding included."""
        p = self.report.params
        if self.report.mode == "spline":
            return 8 * padded_spline_doubles(p)
        return self.report.theoretical_bytes


def run_cell(mode: str, r: int, p: int, N_t: int = 1, d: int = 3, transport: str = "inproc") -> Cell:
    """One session of ``N_t`` steps; wall time covers the exchanges, not the handshake."""
    params = OverheadParams(N_t=N_t, d=d, pdim=2, p=p, r=r)
    if r < 1 or p < 0 or N_t < 1 or d < 1:
        raise ArgumentError("need r >= 1, p >= 0, N_t >= 1 and d >= 1")
    iface, shape = _interface(mode, params)
    block = _block(shape)
    pa, _, times = echo_session(iface, iface, lambda k: block, N_t, transport, shape)
    report = measured_overhead(mode, params, pa.accounting)
    padded = padded_spline_doubles(params) if mode == "spline" else report.theoretical_doubles
    return Cell(report, padded, float(sum(times)))


def sweep(
    r_values=R_VALUES, p_values=P_VALUES, modes=MODES, N_t: int = 1, transport: str = "inproc"
) -> list[Cell]:
    return [run_cell(m, r, p, N_t, transport=transport) for m in modes for p in p_values for r in r_values]


def sweep_csv(cells: list[Cell]) -> str:
    """Columns mirror the volume panels: KB measured and analytical, NaN count, discrepancy."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([
        "mode", "r", "p", "N_t", "measured_bytes", "measured_kb", "analytical_kb",
        "discrepancy_kb", "nan_entries", "wall_time_s",
    ])
    for c in cells:
        rep = c.report
        w.writerow([
            rep.mode, rep.params.r, rep.params.p, rep.params.N_t, rep.measured_bytes,
            repr(rep.measured_kb), repr(rep.theoretical_kb), repr(rep.discrepancy_kb),
            rep.nan_entries, f"{c.wall_time:.6f}",
        ])
    return buf.getvalue()


def expected_nan_entries(r: int, p: int) -> int:
    """NaN padding of the symmetric ``2 x 2(n + p + 1)`` knot matrix."""
    params = OverheadParams(r=r, p=p)
    return knot_matrix_entries(params) // 2


# --------------------------------------------------------------------------
# timing


@dataclass(frozen=True)
class TimingRow:
    mode: str
    r: int
    p: int
    steps: int
    seconds_per_step: float
    normalized: float


def _session_median(mode: str, r: int, p: int, steps: int) -> float:
    params = OverheadParams(N_t=steps, p=p, r=r)
    iface, shape = _interface(mode, params)
    block = _block(shape)
    enabled = gc.isenabled()
    gc.disable()
    try:
        _, _, times = echo_session(iface, iface, lambda k: block, steps, "inproc", shape)
    finally:
        if enabled:
            gc.enable()
    return float(np.median(times))


def time_exchanges(mode: str, r: int, p: int, steps: int = 1000, repeats: int = 3) -> float:
    """Typical per-step exchange time: the median step of each session, best of ``repeats``.

    Medians and the best session suppress thread-scheduling outliers, which
    otherwise dominate the cost of small exchanges. The collector is paused
    while a session runs, as ``timeit`` does.
    """
    if steps < 1 or repeats < 1:
        raise ArgumentError("steps and repeats must be positive")
    return min(_session_median(mode, r, p, steps) for _ in range(repeats))


def timing_table(r_values=(2, 128), p_values=(2,), modes=MODES, steps: int = 1000, repeats: int = 3):
    """Per-step exchange time, normalised by the smallest ``r`` of each (mode, p) series.

    Sessions of one series are interleaved across ``r`` in every repeat so
    that slow drifts of the host affect numerator and baseline alike.
    """
    if steps < 1 or repeats < 1:
        raise ArgumentError("steps and repeats must be positive")
    rows = []
    for mode in modes:
        for p in p_values:
            rs = sorted(r_values)
            best = {r: np.inf for r in rs}
            for _ in range(repeats):
                for r in rs:
                    best[r] = min(best[r], _session_median(mode, r, p, steps))
            for r in rs:
                rows.append(TimingRow(mode, r, p, steps, best[r], best[r] / best[rs[0]]))
    return rows


def timing_csv(rows: list[TimingRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mode", "r", "p", "steps", "seconds_per_step", "normalized_time"])
    for row in rows:
        w.writerow([row.mode, row.r, row.p, row.steps, f"{row.seconds_per_step:.3e}", f"{row.normalized:.4f}"])
    return buf.getvalue()

