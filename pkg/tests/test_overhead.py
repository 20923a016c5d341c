import csv
import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isocouple.errors import ArgumentError
from isocouple.overhead import (
    expected_nan_entries,
    run_cell,
    spline_interface,
    sweep,
    sweep_csv,
    time_exchanges,
    timing_csv,
    timing_table,
    vertex_interface,
)
from isocouple.wire import OverheadParams, overhead_spline, overhead_vertex, padded_spline_doubles


class TestInterfaces:
    def test_spline_size(self):
        b = spline_interface(OverheadParams(r=4, p=3))
        assert b.shape == (7, 7)

    def test_vertex_size(self):
        cloud = vertex_interface(OverheadParams(r=4, p=3))
        assert cloud.N == 16 * 16
        assert cloud.points.shape[1] == 3

    def test_vertex_needs_planar_interface(self):
        with pytest.raises(ArgumentError):
            vertex_interface(OverheadParams(pdim=3))


class TestCells:
    @pytest.mark.parametrize(
        "mode, r, p, kb",
        [("vertex", 2, 2, 0.84375), ("vertex", 128, 3, 6144), ("spline", 2, 2, 0.59375), ("spline", 128, 5, 418.9296875)],
    )
    def test_spot_values(self, mode, r, p, kb):
        assert run_cell(mode, r, p).report.measured_kb == kb

    def test_spline_printed_value(self):
        assert round(run_cell("spline", 128, 5).report.measured_kb, 2) == 418.93

    @pytest.mark.parametrize("p, nans", [(2, 266), (3, 270), (4, 274), (5, 278)])
    def test_nan_entries(self, p, nans):
        rep = run_cell("spline", 128, p).report
        assert rep.nan_entries == nans == expected_nan_entries(128, p)
        assert rep.discrepancy_bytes == 8 * nans

    def test_vertex_has_no_padding(self):
        rep = run_cell("vertex", 8, 2).report
        assert rep.nan_entries == 0 and rep.discrepancy_bytes == 0

    def test_several_steps(self):
        cell = run_cell("spline", 4, 2, N_t=5)
        assert cell.report.measured_bytes == cell.expected_bytes
        assert cell.report.theoretical_doubles == overhead_spline(OverheadParams(N_t=5, r=4, p=2))

    def test_socket_transport(self):
        a = run_cell("spline", 4, 3, N_t=2, transport="socket").report
        b = run_cell("spline", 4, 3, N_t=2).report
        assert a.measured_bytes == b.measured_bytes

    @pytest.mark.parametrize("kwargs", [dict(r=0), dict(N_t=0), dict(d=0), dict(mode="mesh")])
    def test_bad_arguments(self, kwargs):
        args = dict(mode="spline", r=2, p=2) | kwargs
        with pytest.raises(ArgumentError):
            run_cell(**args)

    @given(r=st.integers(1, 24), p=st.integers(1, 5), N_t=st.integers(1, 3))
    @settings(max_examples=100, deadline=None)
    def test_byte_exact_at_any_size(self, r, p, N_t):
        params = OverheadParams(N_t=N_t, r=r, p=p)
        v = run_cell("vertex", r, p, N_t).report
        s = run_cell("spline", r, p, N_t).report
        assert v.measured_bytes == 8 * overhead_vertex(params)
        assert s.measured_bytes == 8 * padded_spline_doubles(params)
        assert s.discrepancy_bytes == 8 * expected_nan_entries(r, p)


class TestSweep:
    def test_csv(self):
        cells = sweep(r_values=(2, 4), p_values=(2,), modes=("spline",))
        table = list(csv.DictReader(io.StringIO(sweep_csv(cells))))
        assert [int(r["r"]) for r in table] == [2, 4]
        assert float(table[0]["measured_kb"]) == 0.59375
        assert float(table[0]["analytical_kb"]) == 0.484375
        assert int(table[0]["nan_entries"]) == 14


class TestTiming:
    def test_table_shape(self):
        rows = timing_table(r_values=(4, 2), modes=("spline", "vertex"), steps=5, repeats=1)
        assert [(r.mode, r.r) for r in rows] == [("spline", 2), ("spline", 4), ("vertex", 2), ("vertex", 4)]
        assert rows[0].normalized == 1.0 and rows[2].normalized == 1.0
        assert timing_csv(rows).splitlines()[0] == "mode,r,p,steps,seconds_per_step,normalized_time"

    def test_positive(self):
        assert time_exchanges("spline", 2, 2, steps=3, repeats=1) > 0

    def test_bad_steps(self):
        with pytest.raises(ArgumentError):
            time_exchanges("spline", 2, 2, steps=0)
