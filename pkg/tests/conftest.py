import itertools

import numpy as np
import pytest

from vmpomc.ed import build_dense_liouvillian
from vmpomc.mpo import MpoAnsatz, hermitize, normalize_trace


def random_mpo(rng, chi, n, herm=True, scale=0.6):
    a = rng.normal(size=(4, chi, chi)) + 1j * rng.normal(size=(4, chi, chi))
    a = scale * a / np.sqrt(chi)
    a[0] += np.eye(chi)
    a[3] += np.eye(chi)
    mpo = MpoAnsatz(a, n)
    if herm:
        mpo = hermitize(mpo)
    return normalize_trace(mpo)


def naive_amplitude(tensors, cfg):
    chi = tensors.shape[1]
    prod = np.eye(chi, dtype=complex)
    for s in cfg:
        nxt = np.zeros_like(prod)
        for i in range(chi):
            for j in range(chi):
                nxt[i, j] = sum(prod[i, k] * tensors[s][k, j] for k in range(chi))
        prod = nxt
    return sum(prod[i, i] for i in range(chi))


def all_amplitudes(mpo):
    cfgs = np.array(list(itertools.product(range(4), repeat=mpo.n_sites)))
    prods = np.array([np.linalg.multi_dot([np.eye(mpo.chi)] + [mpo.tensors[s] for s in c]) for c in cfgs])
    return cfgs, np.trace(prods, axis1=1, axis2=2)


def amplitude_jacobian(mpo, cfgs, amps):
    """d<x|rho>/da_i for every configuration, by summing environments naively."""
    n, chi = mpo.n_sites, mpo.chi
    jac = np.zeros((len(cfgs), mpo.n_params), complex)
    for k, c in enumerate(cfgs):
        g = np.zeros((4, chi, chi), complex)
        for i in range(n):
            left = np.linalg.multi_dot([np.eye(chi)] + [mpo.tensors[s] for s in c[:i]] + [np.eye(chi)])
            right = np.linalg.multi_dot([np.eye(chi)] + [mpo.tensors[s] for s in c[i + 1:]] + [np.eye(chi)])
            g[c[i]] += (right @ left).T
        jac[k] = g.reshape(-1)
    return jac


class DenseOracle:
    """Naive sum_y <x|L|y> f(y) with the full Liouvillian."""

    def __init__(self, model, mpo, matrix=None):
        self.L = build_dense_liouvillian(model).matrix if matrix is None else matrix
        self.cfgs, self.amps = all_amplitudes(mpo)
        self.index = {tuple(c): k for k, c in enumerate(self.cfgs)}
        self.l_rho = self.L @ self.amps
        self.jac = amplitude_jacobian(mpo, self.cfgs, self.amps)
        self.l_jac = self.L @ self.jac

    def l_loc(self, cfg):
        k = self.index[tuple(cfg)]
        return self.l_rho[k] / self.amps[k]

    def dl_loc(self, cfg):
        k = self.index[tuple(cfg)]
        return self.l_jac[k] / self.amps[k]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_RESULTS = {}


def report(number: int, title: str, ok: bool, detail: str = "") -> bool:
    """Record and print one line for an acceptance criterion."""
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE_RESULTS[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[k])
