import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import solve_continuous_lyapunov

from optidamp import DampingObjective, build_problem, modal_transform
from optidamp.checks import fd_gradient, fd_hessian
from optidamp.errors import InputError
from optidamp.lyapunov import dense_lyapunov_oracle, z_matrix
from optidamp.model import assemble_A
from optidamp.objective import kkt_residual

from conftest import random_custom


def _rel(a, b):
    return np.linalg.norm(np.asarray(a) - b) / np.linalg.norm(b)


@pytest.fixture(scope="module")
def toy_obj(toy):
    return DampingObjective(toy)


class TestToyValues:
    def test_base_is_shifted(self, toy_obj):
        assert not toy_obj.base.is_diagonal
        assert np.all(toy_obj.base.nu_base > 0)

    def test_constrained_optimum_value(self, toy_obj):
        assert toy_obj.eval_f([0.0, 2.72]) == pytest.approx(0.73, abs=0.01)

    def test_unconstrained_optimum_value(self, toy_obj):
        assert toy_obj.eval_f([-2.59, 4.75]) == pytest.approx(0.67, abs=0.01)

    def test_frozen_values(self, toy_obj):
        # dense Kronecker oracle values, frozen
        assert toy_obj.eval_f([0.0, 4.75]) == pytest.approx(0.8517973684210529, rel=1e-9)
        assert toy_obj.eval_f([0.0, 2.7218]) == pytest.approx(0.7348836642662948, rel=1e-9)

    def test_kkt_at_constrained_optimum(self, toy_obj):
        g = toy_obj.eval_grad([0.0, 2.7218])
        assert abs(g[1]) <= 1e-2
        assert g[0] >= 0

    def test_unconstrained_stationary(self, toy_obj):
        assert np.linalg.norm(toy_obj.eval_grad([-2.59339464, 4.74842354])) <= 1e-6
        # the rounded point: FD-scale residual
        assert np.linalg.norm(toy_obj.eval_grad([-2.59, 4.75])) <= 1e-3

    def test_defective_point_dense_fallback(self, toy):
        obj = DampingObjective(toy)
        f = obj.eval_f([1.0, 1.0])
        assert obj.dense_fallbacks == 1
        Y = dense_lyapunov_oracle(assemble_A(toy, [1.0, 1.0]), z_matrix(toy))
        assert f == pytest.approx(np.trace(Y), rel=1e-10)
        # the structured path is ill-conditioned next to the Jordan block, so
        # differentiate Schur-based solves instead
        def f_dense(nu):
            return np.trace(solve_continuous_lyapunov(assemble_A(toy, nu), -z_matrix(toy)))

        nu0 = np.array([1.0, 1.0])
        h = 1e-4
        fd = [(f_dense(nu0 + h * e) - f_dense(nu0 - h * e)) / (2 * h) for e in np.eye(2)]
        np.testing.assert_allclose(obj.eval_grad(nu0), fd, rtol=1e-6)
        fd2 = (f_dense(nu0 + [h, 0]) - 2 * f_dense(nu0) + f_dense(nu0 - [h, 0])) / h**2
        assert obj.eval_hessian(nu0)[0, 0] == pytest.approx(fd2, rel=1e-3)


class TestAgainstOracle:
    @pytest.mark.parametrize("name,nu", [
        ("toy", [0.3, 2.0]), ("toy", [4.75, 0.0]), ("damp1a", [1.0]), ("damp1a", [4.4]),
        ("damp1c", [9.6, 39.3]), ("damp1c", [1.0, 1.0]),
    ])
    def test_trace_matches_oracle(self, name, nu, request):
        modal = request.getfixturevalue(name)
        obj = DampingObjective(modal)
        Y = dense_lyapunov_oracle(assemble_A(modal, nu), z_matrix(modal))
        assert obj.eval_f(nu) == pytest.approx(np.trace(Y), rel=1e-8)

    def test_partial_s(self, damp1c):
        modal = damp1c.with_s(5)
        obj = DampingObjective(modal)
        Y = dense_lyapunov_oracle(assemble_A(modal, [2.0, 8.0]), z_matrix(modal))
        assert obj.eval_f([2.0, 8.0]) == pytest.approx(np.trace(Y), rel=1e-8)

    def test_explicit_shifted_base_agrees(self, damp1a):
        a = DampingObjective(damp1a)
        b = DampingObjective(damp1a, nu_base=[2.0])
        for nu in ([0.5], [4.4], [10.0]):
            assert b.eval_f(nu) == pytest.approx(a.eval_f(nu), rel=1e-10)
            np.testing.assert_allclose(b.eval_grad(nu), a.eval_grad(nu), rtol=1e-7)


class TestGradient:
    @pytest.mark.parametrize("name", ["toy", "damp1a", "damp1c"])
    def test_fd_random_points(self, name, request):
        modal = request.getfixturevalue(name)
        obj = DampingObjective(modal)
        rng = np.random.default_rng(7)
        for _ in range(4):
            nu = rng.uniform(0.5, 20.0, modal.k)
            assert _rel(obj.eval_grad(nu), fd_gradient(obj, nu)) <= 1e-4

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**31))
    def test_fd_random_models(self, seed):
        rng = np.random.default_rng(seed)
        modal = modal_transform(build_problem(random_custom(rng, n=5, k=2)))
        obj = DampingObjective(modal)
        nu = rng.uniform(0.1, 5.0, 2)
        assert _rel(obj.eval_grad(nu), fd_gradient(obj, nu)) <= 1e-4

    def test_damp1a_stationary(self, damp1a):
        obj = DampingObjective(damp1a)
        assert abs(obj.eval_grad([4.379])[0]) <= 1e-2


class TestHessian:
    @pytest.mark.parametrize("name,nu", [("damp1a", [2.0]), ("damp1a", [7.0]),
                                         ("toy", [0.5, 3.0]), ("damp1c", [5.0, 20.0])])
    def test_fd(self, name, nu, request):
        obj = DampingObjective(request.getfixturevalue(name))
        H = obj.eval_hessian(nu)
        np.testing.assert_allclose(H, H.T, rtol=1e-12, atol=1e-14)
        assert _rel(H, fd_hessian(obj, nu)) <= 1e-3

    def test_k1_second_difference_of_f(self, damp1a):
        obj = DampingObjective(damp1a)
        nu, h = 3.0, 1e-3
        fd = (obj.eval_f([nu + h]) - 2 * obj.eval_f([nu]) + obj.eval_f([nu - h])) / h**2
        assert obj.eval_hessian([nu])[0, 0] == pytest.approx(fd, rel=1e-3)


class TestKKT:
    def test_interior_stationary(self):
        r = kkt_residual([2.0, 3.0], [0.0, 0.0], 1.0)
        np.testing.assert_array_equal(r.h, 0)
        assert not r.active.any()

    def test_active_nonnegative_gradient(self):
        r = kkt_residual([1.0, 1.0], [0.5, 2.0], 1.0)
        np.testing.assert_array_equal(r.h, 0)
        assert r.active.all()

    def test_arithmetic(self):
        r = kkt_residual([2.0, 2.0], [-1.0, -1.0], [1.0, 1.0])
        np.testing.assert_array_equal(r.h, [-1.0, -1.0])
        assert r.norm == pytest.approx(np.sqrt(2))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=3),
           st.lists(st.floats(0, 10), min_size=3, max_size=3))
    def test_h_is_projected_gradient_step(self, g, gap):
        d = np.zeros(3)
        nu = np.array(gap)
        g = np.array(g)
        r = kkt_residual(nu, g, d)
        np.testing.assert_allclose(r.h, nu - np.maximum(nu - g, d), atol=1e-12)
        assert np.all(np.abs(r.h) <= np.abs(g) + 1e-12)


class TestStrictMin:
    def test_damp1a(self, damp1a):
        ok, ev = DampingObjective(damp1a).strict_min_check([4.379])
        assert ok and ev[0] > 0

    def test_damp1c(self, damp1c):
        ok, ev = DampingObjective(damp1c).strict_min_check([9.6227, 39.322])
        assert ok and ev.size == 2

    def test_all_active(self, toy):
        obj = DampingObjective(toy, d=[1.0, 2.0])
        ok, ev = obj.strict_min_check([1.0, 2.0])
        assert ok and ev.size == 0

    def test_negative_curvature(self, damp1a, monkeypatch):
        obj = DampingObjective(damp1a)
        monkeypatch.setattr(obj, "eval_hessian", lambda nu: np.array([[-1.0]]))
        ok, ev = obj.strict_min_check([4.0])
        assert not ok and ev[0] < 0


class TestValidation:
    def test_bad_shape(self, toy_obj):
        with pytest.raises(InputError):
            toy_obj.eval_f([1.0])

    def test_nonfinite(self, toy_obj):
        with pytest.raises(InputError):
            toy_obj.eval_f([np.nan, 1.0])

    def test_bad_bound(self, toy):
        with pytest.raises(InputError):
            DampingObjective(toy, d=[0.0, 0.0, 0.0])

    def test_cache_single_eig(self, damp1a):
        from optidamp.spectral import eig_count
        obj = DampingObjective(damp1a)
        before = eig_count(thread=True)
        obj.eval_f([2.0])
        obj.eval_grad([2.0])
        obj.eval_hessian([2.0])
        assert eig_count(thread=True) - before == 1
