from dataclasses import replace

import numpy as np
import pytest

from isocouple.errors import ArgumentError, UnsupportedConfigurationError
from isocouple.heat import (
    DIRICHLET,
    NEUMANN,
    ManufacturedSolution,
    assemble,
    check_nested,
    flux_error,
    interface_flux,
    l2_error,
    make_subdomain,
    run_benchmark,
    step_dirichlet_side,
    step_neumann_side,
)
from isocouple.spline import (
    SplineField,
    TensorBasis,
    eval_field,
    eval_field_gradient,
    evaluate,
    l2_project,
)

SOL = ManufacturedSolution()


def exact_at(sub, t):
    """Copy of ``sub`` holding the projection of the exact solution at time ``t``."""
    f = l2_project(lambda q: sub.solution.u(q[0], q[1], t), sub.basis)
    return replace(sub, coefficients=f.coefficients[:, 0].copy(), t=t)


def exact_trace(sub, t, x=1.0):
    return l2_project(lambda y: sub.solution.u(x, y, t), TensorBasis((sub.ky,)))


def random_points(sub, count=50, seed=0):
    rng = np.random.default_rng(seed)
    (x0, x1), (y0, y1) = sub.bounds
    return np.column_stack([rng.uniform(x0, x1, count), rng.uniform(y0, y1, count)])


def max_pointwise_error(sub, count=50):
    pts = random_points(sub, count)
    vals = evaluate(sub.field, pts)[:, 0]
    return np.max(np.abs(vals - sub.solution.u(pts[:, 0], pts[:, 1], sub.t)))


class TestManufacturedSolution:
    def test_source_balances_equation(self):
        # du/dt - laplace(u) = beta - 2 - 2 alpha
        assert SOL.source == pytest.approx(1.3 - 2 - 6)

    def test_flux(self):
        np.testing.assert_allclose(SOL.flux_x(1.0, np.linspace(0, 1, 5)), 2.0)


class TestAssemble:
    @pytest.mark.parametrize("role, spans, p", [(DIRICHLET, 2, 2), (NEUMANN, 4, 3), (DIRICHLET, 3, 4)])
    def test_properties(self, role, spans, p):
        sub = make_subdomain(role, spans, p)
        ops = assemble(sub)
        one = np.ones(sub.basis.n_total)
        np.testing.assert_allclose(ops.stiffness @ one, 0.0, atol=1e-12)
        assert one @ ops.mass @ one == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(ops.mass, ops.mass.T, atol=1e-15)
        np.testing.assert_allclose(ops.stiffness, ops.stiffness.T, atol=1e-13)
        assert np.linalg.eigvalsh(ops.mass).min() > 0
        assert np.linalg.eigvalsh(ops.stiffness).min() > -1e-12
        assert ops.load.sum() == pytest.approx(1.0, abs=1e-12)

    def test_energy_of_x(self):
        sub = make_subdomain(DIRICHLET, 3, 2)
        c = l2_project(lambda q: q[0], sub.basis).coefficients[:, 0]
        assert c @ assemble(sub).stiffness @ c == pytest.approx(1.0, abs=1e-12)


class TestSubdomain:
    def test_initial_condition_exact(self):
        sub = make_subdomain(NEUMANN, 4, 2)
        assert sub.bounds == ((1.0, 2.0), (0.0, 1.0))
        assert max_pointwise_error(sub) < 1e-12
        assert l2_error(sub) < 1e-12

    def test_degree_one_rejected(self):
        with pytest.raises(ArgumentError):
            make_subdomain(DIRICHLET, 2, 1)

    def test_bad_role(self):
        with pytest.raises(ArgumentError):
            make_subdomain("robin", 2)

    def test_traces_sit_on_interface(self):
        d = make_subdomain(DIRICHLET, 2)
        n = make_subdomain(NEUMANN, 2)
        for y in (0.0, 0.3, 1.0):
            u = SOL.u(1.0, y, 0.0)
            assert eval_field(d.trace(), y)[0] == pytest.approx(u, abs=1e-12)
            assert eval_field(n.trace(), y)[0] == pytest.approx(u, abs=1e-12)


class TestDirichletStep:
    def test_exact_one_step(self):
        sub = make_subdomain(DIRICHLET, 2, 2)
        new, trace = step_dirichlet_side(sub, exact_trace(sub, 0.1), 0.1)
        assert new.t == pytest.approx(0.1)
        assert max_pointwise_error(new) < 1e-10
        np.testing.assert_allclose(trace.coefficients, exact_trace(sub, 0.1).coefficients, atol=1e-12)

    def test_nested_trace_basis(self):
        sub = make_subdomain(DIRICHLET, 2, 2)
        finer = make_subdomain(NEUMANN, 4, 2)
        new, _ = step_dirichlet_side(sub, exact_trace(finer, 0.1), 0.1)
        assert max_pointwise_error(new) < 1e-10

    def test_stationary_case(self):
        sol = ManufacturedSolution(0.0, 0.0)
        sub = make_subdomain(DIRICHLET, 3, 2, sol)
        start = sub.coefficients.copy()
        trace = exact_trace(sub, 0.0)
        for _ in range(5):
            sub, _ = step_dirichlet_side(sub, trace, 0.1)
        np.testing.assert_allclose(sub.coefficients, start, atol=1e-12)

    @pytest.mark.parametrize("dt", [0.0, -0.1])
    def test_bad_dt(self, dt):
        sub = make_subdomain(DIRICHLET, 2)
        with pytest.raises(ArgumentError):
            step_dirichlet_side(sub, exact_trace(sub, 0.0), dt)

    def test_wrong_role(self):
        sub = make_subdomain(NEUMANN, 2)
        with pytest.raises(ArgumentError):
            step_dirichlet_side(sub, exact_trace(sub, 0.1), 0.1)


class TestNeumannStep:
    def setup_method(self):
        self.d = make_subdomain(DIRICHLET, 2, 2)
        self.n = make_subdomain(NEUMANN, 4, 2)

    def test_exact_one_step(self):
        strip = exact_at(self.d, 0.1).interface_strip()
        new, trace = step_neumann_side(self.n, strip, self.d.basis, 0.1)
        assert max_pointwise_error(new) < 1e-10
        np.testing.assert_allclose(trace.coefficients, exact_trace(self.n, 0.1).coefficients, atol=1e-10)

    def test_exact_flux_is_two(self):
        q = interface_flux(exact_at(self.d, 0.4).interface_strip(), self.d.basis)
        np.testing.assert_allclose(q.coefficients, 2.0, atol=1e-12)
        assert flux_error(q, SOL) < 1e-12

    def test_constant_field_gives_zero_flux(self):
        strip = np.full((self.d.ky.n, 2), 7.0)
        q = interface_flux(strip, self.d.basis)
        np.testing.assert_array_equal(q.coefficients, 0.0)

    def test_inherited_derivative_matches_native(self):
        sender = exact_at(self.d, 0.3)
        q = interface_flux(sender.interface_strip(), sender.basis)
        for y in np.random.default_rng(1).uniform(0, 1, 20):
            native = eval_field_gradient(sender.field, (1.0, y))[0, 0]
            assert eval_field(q, y)[0] == pytest.approx(native, abs=1e-12)

    def test_strip_shape_checked(self):
        with pytest.raises(ArgumentError):
            interface_flux(np.zeros((3, 2)), self.d.basis)

    def test_bad_dt(self):
        with pytest.raises(ArgumentError):
            step_neumann_side(self.n, self.d.interface_strip(), self.d.basis, 0.0)

    def test_wrong_role(self):
        with pytest.raises(ArgumentError):
            step_neumann_side(self.d, self.d.interface_strip(), self.d.basis, 0.1)


class TestFluxError:
    def test_flux_perturbation_is_half_epsilon(self):
        eps = 1e-6
        kv = make_subdomain(DIRICHLET, 2).ky
        q = SplineField(TensorBasis((kv,)), np.full(kv.n, 2.0 + eps))
        assert flux_error(q, SOL) == pytest.approx(eps / 2, rel=1e-6)

    def test_trace_perturbation_scales_with_end_slope(self):
        # a trace shift of eps changes the end slope by (p / h) * eps
        eps = 1e-6
        d = exact_at(make_subdomain(DIRICHLET, 2, 2), 0.2)
        strip = d.interface_strip().copy()
        strip[:, 0] += eps
        q = interface_flux(strip, d.basis)
        assert flux_error(q, SOL) == pytest.approx((2 / 0.5) * eps / 2, rel=1e-6)

    def test_zero_exact_flux_guard(self):
        # on x = 0 the exact flux vanishes and the absolute error is reported
        class AtOrigin(ManufacturedSolution):
            def flux_x(self, x, y=None, t=None):
                return 0.0 * np.asarray(y)

        kv = make_subdomain(DIRICHLET, 2).ky
        q = SplineField(TensorBasis((kv,)), np.full(kv.n, 3e-3))
        assert flux_error(q, AtOrigin()) == pytest.approx(3e-3, rel=1e-12)


class TestBenchmark:
    def test_default_configuration(self):
        rep = run_benchmark()
        assert len(rep.rows) == 10
        assert rep.rows[-1].t == pytest.approx(1.0)
        assert rep.max_field_error <= 1e-10
        assert rep.max_flux_error <= 1e-12
        assert max(r.iterations for r in rep.rows) <= 10
        assert not rep.transform_identity

    @pytest.mark.parametrize("r_D, r_N", [(2, 2), (4, 2), (2, 8)])
    def test_refinement_mismatch(self, r_D, r_N):
        rep = run_benchmark(r_D, r_N)
        assert rep.max_field_error <= 1e-10
        assert rep.max_flux_error <= 1e-12

    def test_matching_meshes_identity(self):
        rep = run_benchmark(3, 3)
        assert rep.transform_identity
        np.testing.assert_allclose(
            rep.dirichlet.sub.trace().coefficients, rep.neumann.sub.trace().coefficients, atol=1e-12
        )

    def test_interface_continuity(self):
        rep = run_benchmark(2, 4)
        ys = np.random.default_rng(3).uniform(0, 1, 50)
        for td, tn in zip(rep.dirichlet.traces, rep.neumann.traces):
            a = np.array([eval_field(td, y)[0] for y in ys])
            b = np.array([eval_field(tn, y)[0] for y in ys])
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_stationary_run(self):
        rep = run_benchmark(alpha=0.0, beta=0.0)
        assert rep.max_field_error <= 1e-12

    def test_socket_matches_inproc(self):
        a = run_benchmark(transport="inproc", T=0.3)
        b = run_benchmark(transport="socket", T=0.3)
        assert [r.iterations for r in a.rows] == [r.iterations for r in b.rows]
        assert [r.cumulative_bytes for r in a.rows] == [r.cumulative_bytes for r in b.rows]

    def test_bytes_grow(self):
        rep = run_benchmark(T=0.5)
        bytes_ = [r.cumulative_bytes for r in rep.rows]
        assert all(b > a for a, b in zip(bytes_, bytes_[1:]))

    def test_csv(self):
        text = run_benchmark(T=0.2).to_csv().splitlines()
        assert text[0] == "t,l2_error_dirichlet,l2_error_neumann,flux_rel_error,subiterations,cumulative_bytes"
        assert len(text) == 3
        assert text[1].startswith("0.1,")

    def test_non_nested(self):
        with pytest.raises(UnsupportedConfigurationError):
            check_nested(2, 3)
        with pytest.raises(UnsupportedConfigurationError):
            run_benchmark(2, 3)

    @pytest.mark.parametrize("kwargs", [dict(dt=0.0), dict(T=0.25), dict(T=0.0), dict(r_D=0)])
    def test_bad_arguments(self, kwargs):
        with pytest.raises(ArgumentError):
            run_benchmark(**kwargs)
