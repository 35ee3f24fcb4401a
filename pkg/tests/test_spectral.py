import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optidamp.errors import NearDefectiveError, StabilityError
from optidamp.model import assemble_A
from optidamp.spectral import cauchy_matrix, closed_form_base, eig_A, eig_count

from conftest import scalar_modal


def _match(a, b):
    """Sort ``b`` to the order of ``a`` by nearest neighbour."""
    idx = [int(np.argmin(np.abs(b - x))) for x in a]
    assert len(set(idx)) == len(idx)
    return b[idx]


class TestEigA:
    def test_closed_form_eigenvalues_at_zero(self, damp1c):
        fact = eig_A(damp1c, np.zeros(2))
        g, w = damp1c.gamma.astype(complex), damp1c.omega
        ups = np.sqrt(g**2 - 4 * w**2)
        lam0 = np.concatenate([-(g + ups) / 2, -(g - ups) / 2])
        np.testing.assert_allclose(_match(fact.lam, lam0), fact.lam, rtol=1e-12)

    def test_defective_scalar(self):
        # lambda^2 + 2 lambda + 1: double eigenvalue -1
        modal = scalar_modal([1.0], [0.0], [[1.0]])
        with pytest.raises(NearDefectiveError):
            eig_A(modal, [2.0])

    def test_toy_conjugate_closed_and_stable(self, toy):
        fact = eig_A(toy, [0.0, 2.72])
        assert fact.lam.size == 4
        assert np.all(fact.lam.real < 0)
        np.testing.assert_allclose(np.sort_complex(fact.lam), np.sort_complex(fact.lam.conj()),
                                   atol=1e-12)
        # characteristic polynomial of A(nu)
        poly = np.poly(assemble_A(toy, [0.0, 2.72]))
        np.testing.assert_allclose(np.polyval(poly, fact.lam), 0, atol=1e-9)

    def test_toy_diagonalizes(self, toy):
        fact = eig_A(toy, [0.0, 2.72])
        A = assemble_A(toy, [0.0, 2.72])
        D = fact.Tinv @ A @ fact.T
        np.testing.assert_allclose(D, np.diag(fact.lam), atol=1e-8 * np.abs(fact.lam).max())

    def test_toy_one_one_is_defective(self, toy):
        # M - D(1,1) + K is singular at lambda = -1 with a Jordan block
        with pytest.raises(NearDefectiveError):
            eig_A(toy, [1.0, 1.0])

    @pytest.mark.parametrize("nu", [[0.5], [1.0], [4.4], [50.0]])
    def test_inverse_residual(self, damp1a, nu):
        fact = eig_A(damp1a, nu)
        assert fact.inverse_residual() <= 1e-8
        assert fact.diagonalization_residual(damp1a) <= 1e-12

    def test_probe_estimate_tracks_full_norm(self, damp1c):
        fact = eig_A(damp1c, [3.0, 20.0])
        assert fact.inverse_residual(probes=8) <= 10 * max(fact.inverse_residual(), 1e-15)

    def test_unstable_raises(self):
        modal = scalar_modal([1.0, 2.0], [0.0, 1.0], [[0.0], [1.0]])
        with pytest.raises(StabilityError):
            eig_A(modal, [1.0])

    def test_E_is_VT_R(self, damp1c):
        fact = eig_A(damp1c, [1.0, 2.0])
        np.testing.assert_allclose(fact.E, fact.V.T @ damp1c.R, atol=1e-14)


class TestCounter:
    def test_counts_each_call(self, damp1a):
        before, before_t = eig_count(), eig_count(thread=True)
        for nu in ([1.0], [2.0], [3.0]):
            eig_A(damp1a, nu)
        assert eig_count() - before == 3
        assert eig_count(thread=True) - before_t == 3

    def test_failed_call_counts(self, toy):
        before = eig_count(thread=True)
        with pytest.raises(NearDefectiveError):
            eig_A(toy, [1.0, 1.0])
        assert eig_count(thread=True) - before == 1

    def test_thread_local(self, damp1a):
        main_before = eig_count(thread=True)
        seen = []

        def work():
            b = eig_count(thread=True)
            eig_A(damp1a, [1.0])
            eig_A(damp1a, [2.0])
            seen.append(eig_count(thread=True) - b)

        threads = [threading.Thread(target=work) for _ in range(3)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert seen == [2, 2, 2]
        assert eig_count(thread=True) == main_before


class TestCauchy:
    def test_real_double(self):
        np.testing.assert_allclose(cauchy_matrix([-1.0, -1.0]), -0.5 * np.ones((2, 2)))

    def test_complex_pair(self):
        L = cauchy_matrix([-1 + 1j, -1 - 1j])
        assert L[0, 1] == pytest.approx(1 / (-2 - 2j))
        L2 = cauchy_matrix([-1 + 1j, -1 - 1j], conjugate_first=False)
        np.testing.assert_allclose(L2, L.T)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 2**31))
    def test_reconstruction_identity(self, m, seed):
        rng = np.random.default_rng(seed)
        lam = -rng.uniform(0.1, 5, m) + 1j * rng.uniform(-5, 5, m)
        L = cauchy_matrix(lam)
        np.testing.assert_allclose(L * (lam.conj()[:, None] + lam[None, :]), 1.0, rtol=1e-12)

    def test_vanishing_denominator(self):
        with pytest.raises(StabilityError):
            cauchy_matrix([1j, -1j])


class TestClosedFormBase:
    @pytest.mark.parametrize("name", ["damp1a", "damp1c"])
    def test_matches_eig(self, name, request):
        modal = request.getfixturevalue(name)
        lam0, T0, T0inv = closed_form_base(modal)
        np.testing.assert_allclose(T0 @ T0inv, np.eye(2 * modal.n), atol=1e-10)
        A0 = assemble_A(modal, np.zeros(modal.k))
        np.testing.assert_allclose(T0inv @ A0 @ T0, np.diag(lam0),
                                   atol=1e-10 * np.abs(lam0).max())

    def test_scalar_mode(self):
        # omega = 1, gamma = 3: eigenvalues -(3 +- sqrt 5)/2
        lam0, _, _ = closed_form_base(scalar_modal([1.0], [3.0], [[1.0]]))
        np.testing.assert_allclose(np.sort(lam0.real), [-(3 + 5**0.5) / 2, -(3 - 5**0.5) / 2])
        np.testing.assert_allclose(lam0.imag, 0, atol=1e-15)

    def test_defective_base(self):
        with pytest.raises(NearDefectiveError):
            closed_form_base(scalar_modal([1.0], [2.0], [[1.0]]))
