import itertools
import math

import numpy as np
import pytest

from vmpomc.ed import build_dense_liouvillian, rho_to_vec
from vmpomc.models import (
    ModelSpec, bonds, build_one_body, build_two_body_nn, collective_dephasing_amplitude, connections,
    couplings, kac_norm, lindblad_block, long_range_diag_amplitude, ring_distance, SMINUS, SX, SZ)


def s(a, b):
    return 2 * a + b


class TestOneBody:
    def test_pure_decay_elements(self):
        m = build_one_body(ModelSpec(1, h=0.0, gamma_minus=1.0)).matrix
        expected = np.zeros((4, 4))
        expected[s(1, 1), s(0, 0)] = 1
        expected[s(0, 0), s(0, 0)] = -1
        expected[s(0, 1), s(0, 1)] = -0.5
        expected[s(1, 0), s(1, 0)] = -0.5
        assert np.allclose(m, expected, atol=1e-15)

    def test_decay_sparsity(self):
        op = build_one_body(ModelSpec(1, h=0.0, gamma_minus=0.7))
        assert len(op.nonzeros) == 4
        assert sum(r == c for r, c in op.nonzeros) == 3
        assert not op.diagonal_only

    def test_local_dephasing_diagonal(self):
        g = 0.3
        op = build_one_body(ModelSpec(1, h=0.0, gamma_minus=0.0, gamma_d_loc=g))
        assert op.diagonal_only
        assert np.allclose(np.diag(op.matrix), [0, -2 * g, -2 * g, 0])

    def test_all_zero(self):
        op = build_one_body(ModelSpec(1, J=0, h=0, gamma_minus=0))
        assert not np.any(op.matrix)

    def test_against_explicit_kronecker(self):
        """Row-major vec: vec(A rho B) = (A kron B^T) vec(rho)."""
        h, g, gl = 0.7, 0.4, 0.2
        m = build_one_body(ModelSpec(1, h=h, gamma_minus=g, gamma_d_loc=gl)).matrix
        rho = np.array([[0.3, 0.1 - 0.2j], [0.1 + 0.2j, 0.7]])
        H = h * SX
        L = np.sqrt(g) * SMINUS
        D = np.sqrt(gl) * SZ
        out = -1j * (H @ rho - rho @ H)
        for k in (L, D):
            out += k @ rho @ k.conj().T - 0.5 * (k.conj().T @ k @ rho + rho @ k.conj().T @ k)
        assert np.allclose(m @ rho.reshape(-1), out.reshape(-1))

    def test_sminus_lowers_up(self):
        up = np.array([1, 0])
        assert np.allclose(SMINUS @ up, [0, 1])


class TestTwoBody:
    def test_entries(self):
        J = 0.5
        op = build_two_body_nn(ModelSpec(4, J=J))
        assert op.diagonal_only
        m = op.matrix
        assert m[0, 0] == 0
        big = 4 * s(0, 1) + s(0, 0)
        assert np.isclose(m[big, big], -2j * J)

    def test_zero_coupling(self):
        assert not np.any(build_two_body_nn(ModelSpec(4, J=0.0)).matrix)

    def test_block_regrouping(self):
        """Two-site block equals the superoperator acting on a product of local matrices."""
        rng = np.random.default_rng(0)
        H = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        H = H + H.conj().T
        m = lindblad_block(H, (), 2)
        r1 = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        r2 = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        rho = np.kron(r1, r2)
        out = -1j * (H @ rho - rho @ H)
        # per-site super-index X = 4 (2 a1 + b1) + (2 a2 + b2)
        vec_in = np.einsum("ab,cd->abcd", r1, r2).reshape(16)
        out4 = out.reshape(2, 2, 2, 2)  # (a1 a2, b1 b2)
        vec_out = out4.transpose(0, 2, 1, 3).reshape(16)
        assert np.allclose(m @ vec_in, vec_out)


class TestKac:
    @pytest.mark.parametrize("n", [3, 4, 7, 12])
    def test_nearest_neighbour(self, n):
        assert kac_norm(n, math.inf) == 1.0

    def test_large_alpha_limit(self):
        assert abs(kac_norm(6, 1e6) - 1) < 1e-12

    def test_alpha2_n4(self):
        assert np.isclose(kac_norm(4, 2.0), 1.125)

    def test_ring_distance(self):
        assert ring_distance(5).tolist()[0] == [0, 1, 2, 2, 1]


class TestLongRange:
    def test_equal_branches_vanish(self):
        m = ModelSpec(5, alpha=1.5)
        for bits in itertools.product((0, 1), repeat=5):
            assert long_range_diag_amplitude([3 * b for b in bits], m) == 0

    def test_explicit_example(self):
        J = 0.5
        m = ModelSpec(4, J=J, alpha=2.0)
        ket = [1, 1, 1, 1]
        bra = [-1, 1, 1, 1]
        cfg = [s(0, 1), s(0, 0), s(0, 0), s(0, 0)]

        def energy(sig):
            e = 0.0
            for i in range(4):
                for j in range(i + 1, 4):
                    d = min(j - i, 4 - (j - i))
                    e += d**-2.0 * sig[i] * sig[j]
            return e

        want = -1j * (J / 1.125) * (energy(ket) - energy(bra))
        assert np.isclose(long_range_diag_amplitude(cfg, m), want)

    def test_zero_coupling(self):
        assert long_range_diag_amplitude([1, 2, 0, 3], ModelSpec(4, J=0, alpha=2.0)) == 0

    def test_large_alpha_matches_nn_bonds(self):
        n = 6
        nn = ModelSpec(n, J=0.7)
        lr = nn.replace(alpha=1e6)
        block = build_two_body_nn(nn).matrix
        rng = np.random.default_rng(1)
        for _ in range(50):
            x = rng.integers(0, 4, n)
            total = sum(block[4 * x[i] + x[k], 4 * x[i] + x[k]] for i, k in bonds(nn))
            assert abs(long_range_diag_amplitude(x, lr) - total) < 1e-8

    def test_couplings_nn_n2_double_bond(self):
        c = couplings(ModelSpec(2, J=0.5))
        assert np.isclose(c[0, 1], 1.0)
        assert np.allclose(couplings(ModelSpec(2, J=0.5, alpha=1e6)), c)


class TestCollective:
    def test_equal_branches(self):
        assert collective_dephasing_amplitude([0, 3, 3, 0], ModelSpec(4, gamma_d_col=1.0)) == 0

    def test_n2_example(self):
        assert collective_dephasing_amplitude([s(0, 1), s(0, 1)], ModelSpec(2, gamma_d_col=1.0)) == -8

    def test_zero_rate(self):
        assert collective_dephasing_amplitude([1, 2], ModelSpec(2, gamma_d_col=0.0)) == 0

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_matches_dense_diagonal(self, n):
        m = ModelSpec(n, J=0.0, h=0.0, gamma_minus=0.0, gamma_d_col=0.8)
        diag = np.diag(build_dense_liouvillian(m).matrix)
        for k, x in enumerate(itertools.product(range(4), repeat=n)):
            assert abs(collective_dephasing_amplitude(x, m) - diag[k]) < 1e-12


class TestConnections:
    def test_ring_adjacency(self):
        conns = connections(ModelSpec(4), 0)
        pairs = [c.sites for c in conns if len(c.sites) == 2]
        assert conns[0].sites == (0,)
        assert sorted(pairs) == [(0, 1), (3, 0)]

    def test_long_range(self):
        conns = connections(ModelSpec(5, alpha=2.0), 2)
        assert [len(c.sites) for c in conns] == [1, 5]
        assert conns[1].term.kind == "long_range_ising"

    def test_n2_both_bonds(self):
        pairs = [c.sites for c in connections(ModelSpec(2), 0) if len(c.sites) == 2]
        assert pairs == [(0, 1), (1, 0)]


@pytest.mark.parametrize("model", [
    ModelSpec(3, J=0.5, h=1.0, gamma_minus=1.0),
    ModelSpec(4, J=0.5, h=0.3, gamma_minus=0.5, gamma_d_loc=0.2),
    ModelSpec(4, J=0.5, h=1.0, alpha=0.5, gamma_d_col=0.7),
    ModelSpec(2, J=0.2, h=0.4),
])
def test_trace_preservation(model):
    L = build_dense_liouvillian(model).matrix
    eye = np.eye(2**model.n_sites)
    assert np.max(np.abs(rho_to_vec(eye) @ L)) < 1e-12


def test_model_validation():
    with pytest.raises(ValueError):
        ModelSpec(0)
    with pytest.raises(ValueError):
        ModelSpec(3, gamma_minus=-1)
    with pytest.raises(ValueError):
        ModelSpec(3, alpha=0)
    assert ModelSpec(3).nearest_neighbour and not ModelSpec(3, alpha=2).nearest_neighbour
