import numpy as np
import pytest
from scipy.integrate import solve_ivp

from vmpomc import ed
from vmpomc.errors import DegenerateNull, NotAState, TooLarge
from vmpomc.models import SY, SZ, ModelSpec


def test_single_spin_decay_spectrum():
    lv = ed.build_dense_liouvillian(ModelSpec(1, h=0.0, gamma_minus=1.0))
    w = np.sort_complex(np.linalg.eigvals(lv.matrix))
    assert np.allclose(sorted(w.real), [-1, -0.5, -0.5, 0])
    assert np.allclose(w.imag, 0)


def test_nn_vs_large_alpha_n2():
    a = ed.build_dense_liouvillian(ModelSpec(2, J=0.5, h=0.7))
    b = ed.build_dense_liouvillian(ModelSpec(2, J=0.5, h=0.7, alpha=1e6))
    assert np.max(np.abs(a.matrix - b.matrix)) < 1e-8


def test_zero_model():
    assert not np.any(ed.build_dense_liouvillian(ModelSpec(3, J=0, h=0, gamma_minus=0)).matrix)


def test_too_large():
    with pytest.raises(TooLarge):
        ed.build_dense_liouvillian(ModelSpec(8))


def test_dark_state():
    rho = ed.steady_state(ed.build_dense_liouvillian(ModelSpec(1, h=0.0)))
    assert np.allclose(rho, np.diag([0, 1]), atol=1e-12)


def test_single_spin_against_time_evolution():
    model = ModelSpec(1, h=0.8, gamma_minus=1.0)
    lv = ed.build_dense_liouvillian(model)
    rho = ed.steady_state(lv)
    v0 = ed.rho_to_vec(np.diag([1.0, 0.0]).astype(complex))
    sol = solve_ivp(lambda t, v: lv.matrix @ v, (0, 50), v0, rtol=1e-10, atol=1e-12)
    rho_t = ed.vec_to_rho(sol.y[:, -1], 1)
    for op in (SZ, SY):
        assert abs(ed.expectation(rho, op) - ed.expectation(rho_t, op)) < 1e-8


@pytest.mark.parametrize("method", ["eig", "lu"])
def test_residual_n4(method):
    lv = ed.build_dense_liouvillian(ModelSpec(4, J=0.5, h=1.0))
    rho = ed.steady_state(lv, method=method)
    assert np.linalg.norm(lv.matrix @ ed.rho_to_vec(rho)) < 1e-10
    assert abs(np.trace(rho) - 1) < 1e-12
    assert np.allclose(rho, rho.conj().T)


def test_methods_agree():
    lv = ed.build_dense_liouvillian(ModelSpec(3, J=0.5, h=0.6, gamma_d_col=0.3, alpha=2.0))
    assert np.allclose(ed.steady_state(lv, "eig"), ed.steady_state(lv, "lu"), atol=1e-10)


def test_degenerate_null():
    # pure dephasing conserves every population: many steady states
    lv = ed.build_dense_liouvillian(ModelSpec(2, J=0.0, h=0.0, gamma_minus=0.0, gamma_d_loc=1.0))
    for method in ("eig", "lu"):
        with pytest.raises(DegenerateNull):
            ed.steady_state(lv, method=method)


def random_rho(rng, dim, rank=None):
    g = rng.normal(size=(dim, rank or dim)) + 1j * rng.normal(size=(dim, rank or dim))
    r = g @ g.conj().T
    return r / np.trace(r)


@pytest.mark.parametrize("model", [ModelSpec(3, J=0.5, h=1.0), ModelSpec(3, alpha=0.5, gamma_d_loc=0.2, gamma_d_col=0.4)])
def test_trace_and_hermiticity_preservation(model, rng):
    L = ed.build_dense_liouvillian(model).matrix
    for _ in range(100):
        rho = random_rho(rng, 8)
        out = ed.vec_to_rho(L @ ed.rho_to_vec(rho), 3)
        assert abs(np.trace(out)) < 1e-10
        assert np.max(np.abs(out - out.conj().T)) < 1e-12


def test_interleave_roundtrip(rng):
    rho = rng.normal(size=(8, 8))
    assert np.array_equal(ed.vec_to_rho(ed.rho_to_vec(rho), 3), rho)
    # super-index of |a><b| at site 0 is most significant
    v = ed.rho_to_vec(np.outer([0, 1], [1, 0]).astype(float))
    assert v[2] == 1


class TestFidelity:
    def test_self(self, rng):
        rho = random_rho(rng, 4)
        assert abs(ed.uhlmann_fidelity(rho, rho) - 1) < 1e-10

    def test_orthogonal(self):
        assert ed.uhlmann_fidelity(np.diag([1.0, 0]), np.diag([0, 1.0])) < 1e-12

    def test_commuting(self):
        assert abs(ed.uhlmann_fidelity(np.eye(2) / 2, np.diag([1.0, 0])) - 0.5) < 1e-12

    def test_symmetric(self, rng):
        a, b = random_rho(rng, 8), random_rho(rng, 8, rank=3)
        assert abs(ed.uhlmann_fidelity(a, b) - ed.uhlmann_fidelity(b, a)) < 1e-10

    def test_not_a_state(self):
        with pytest.raises(NotAState):
            ed.uhlmann_fidelity(np.eye(2), np.eye(2) / 2)

    def test_clipping(self):
        rho = np.diag([1.02, -0.02])
        clipped, weight = ed.psd_clip(rho)
        assert np.isclose(weight, 0.02) and np.allclose(clipped, np.diag([1.0, 0.0]))


def test_dense_observables():
    rho = ed.steady_state(ed.build_dense_liouvillian(ModelSpec(1, h=0.0)))
    assert ed.magnetizations(rho)["sz"] == pytest.approx(-1)
    assert ed.purity(rho) == pytest.approx(1) and ed.renyi2(rho) == pytest.approx(0, abs=1e-12)
