"""Exact observables of an MPO by transfer-matrix contraction.

With ``T = A(0) + A(3)`` and ``T_O = sum_{a,b} O_{ba} A(2a+b)``,

    <O_j> = tr(T^j T_O T^(N-1-j)) / tr(T^N),

independently of j by translation invariance. Small-system helpers
(dense reconstruction, enumerated cost) serve as oracles.
"""

from __future__ import annotations

import itertools
import logging
import re

import numpy as np

from .errors import BadSeparation, TooLarge, ZeroTrace
from .estimators import as_local, lindblad_amplitude
from .models import ID2, SX, SY, SZ
from .mpo import D2, MpoAnsatz, doubled_transfer_matrix, partial_products, transfer_matrix

logger = logging.getLogger(__name__)

MAX_ENUM_SITES = 8
MAX_DENSE_SITES = 8
PAULI = {"x": SX, "y": SY, "z": SZ, "i": ID2}
_CORR = re.compile(r"^c([xyzi])([xyzi])_(\d+)$")


def operator_transfer(mpo: MpoAnsatz, op) -> np.ndarray:
    """``T_O = sum_{a,b} op[b, a] A(2a + b)``; ``op = 1`` gives the plain transfer matrix."""
    op = np.asarray(op, dtype=complex)
    a = mpo.tensors
    return op[0, 0] * a[0] + op[1, 0] * a[1] + op[0, 1] * a[2] + op[1, 1] * a[3]


def _chain_ratio(factors: list, t: np.ndarray) -> complex:
    """``tr(prod factors) / tr(T^N)`` where ``factors`` has N matrices, scaled for stability."""
    radius = float(np.max(np.abs(np.linalg.eigvals(t))))
    scale = 1.0 / radius if radius > 0 else 1.0
    num = np.eye(t.shape[0], dtype=complex)
    for f in factors:
        num = num @ (f * scale)
    den = np.trace(np.linalg.matrix_power(t * scale, len(factors)))
    if abs(den) < 1e-300:
        raise ZeroTrace("tr rho vanishes")
    return complex(np.trace(num) / den)


def real_value(z: complex, name: str = "observable") -> float:
    if abs(z.imag) > 1e-6:
        logger.warning("%s has imaginary part %.3g", name, z.imag)
    return float(z.real)


def one_body_expectation(mpo: MpoAnsatz, op) -> complex:
    t = transfer_matrix(mpo)
    return _chain_ratio([operator_transfer(mpo, op)] + [t] * (mpo.n_sites - 1), t)


def site_expectation(mpo: MpoAnsatz, op, site: int) -> complex:
    """``<O>`` with the operator inserted at ``site``; equal for every site."""
    n = mpo.n_sites
    if not 0 <= site < n:
        raise IndexError(site)
    t = transfer_matrix(mpo)
    factors = [t] * n
    factors[site] = operator_transfer(mpo, op)
    return _chain_ratio(factors, t)


def two_body_correlation(mpo: MpoAnsatz, op_a, op_b, r: int) -> complex:
    """``<A_0 B_r>`` on the ring, ``1 <= r <= N-1``."""
    n = mpo.n_sites
    if not 1 <= r <= n - 1:
        raise BadSeparation(f"separation {r} outside 1..{n - 1}")
    t = transfer_matrix(mpo)
    factors = [t] * n
    factors[0] = operator_transfer(mpo, op_a)
    factors[r] = operator_transfer(mpo, op_b)
    return _chain_ratio(factors, t)


def purity(mpo: MpoAnsatz) -> float:
    """``tr rho^2 / (tr rho)^2`` by the doubled transfer matrix."""
    n = mpo.n_sites
    t = transfer_matrix(mpo)
    radius = float(np.max(np.abs(np.linalg.eigvals(t))))
    scale = 1.0 / radius if radius > 0 else 1.0
    tr = np.trace(np.linalg.matrix_power(t * scale, n))
    if abs(tr) < 1e-300:
        raise ZeroTrace("tr rho vanishes")
    z = np.trace(np.linalg.matrix_power(doubled_transfer_matrix(mpo) * scale**2, n))
    return float((z / abs(tr) ** 2).real)


def renyi2(mpo: MpoAnsatz) -> float:
    """Renyi-2 entropy density ``-log2(tr rho^2) / N``."""
    return float(-np.log2(purity(mpo)) / mpo.n_sites)


def born_average(mpo: MpoAnsatz, op) -> complex:
    """Exact mean of ``(1/N) sum_j <beta_j|op|alpha_j>`` with x drawn from ``|<x|rho>|^2 / Z``."""
    op = np.asarray(op, dtype=complex)
    w = np.array([op[s & 1, s >> 1] for s in range(D2)])
    e = doubled_transfer_matrix(mpo)
    return _chain_ratio([doubled_transfer_matrix(mpo, w)] + [e] * (mpo.n_sites - 1), e)


def magnetizations(mpo: MpoAnsatz) -> dict:
    return {f"s{k}": real_value(one_body_expectation(mpo, PAULI[k]), f"s{k}") for k in "xyz"}


def evaluate(mpo: MpoAnsatz, names) -> dict:
    """Named contraction observables: ``sx``, ``sy``, ``sz``, ``purity``, ``renyi2``, ``c<a><b>_<r>``."""
    out = {}
    for name in names:
        if name in ("sx", "sy", "sz"):
            out[name] = real_value(one_body_expectation(mpo, PAULI[name[1]]), name)
        elif name == "purity":
            out[name] = purity(mpo)
        elif name == "renyi2":
            out[name] = renyi2(mpo)
        else:
            m = _CORR.match(name)
            if m is None:
                raise KeyError(f"unknown observable {name!r}")
            a, b, r = m.group(1), m.group(2), int(m.group(3))
            out[name] = real_value(two_body_correlation(mpo, PAULI[a], PAULI[b], r), name)
    return out


def is_observable_name(name: str) -> bool:
    return name in ("sx", "sy", "sz", "purity", "renyi2") or _CORR.match(name) is not None


def all_configs(n_sites: int) -> np.ndarray:
    return np.array(list(itertools.product(range(D2), repeat=n_sites)), dtype=np.int64)


def _amplitude_tensor(mpo: MpoAnsatz) -> np.ndarray:
    """All ``4^N`` amplitudes as an array with one axis of length 4 per site."""
    a = mpo.tensors
    prods = a.copy()  # (4^k, chi, chi)
    for _ in range(mpo.n_sites - 1):
        prods = np.einsum("kij,sjl->ksil", prods, a).reshape(-1, mpo.chi, mpo.chi)
    return np.trace(prods, axis1=1, axis2=2).reshape((D2,) * mpo.n_sites)


def reconstruct_dense(mpo: MpoAnsatz) -> np.ndarray:
    """Dense ``2^N x 2^N`` density matrix ``rho[a, b] = <(a_1 b_1)...(a_N b_N)|rho>``."""
    n = mpo.n_sites
    if n > MAX_DENSE_SITES:
        raise TooLarge(f"dense reconstruction limited to N <= {MAX_DENSE_SITES}")
    amps = _amplitude_tensor(mpo).reshape((2, 2) * n)
    order = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
    return amps.transpose(order).reshape(2**n, 2**n)


def cost_exact(mpo: MpoAnsatz, model) -> float:
    """``sum_x |<x|L|rho>|^2 / sum_x |<x|rho>|^2`` by enumerating every configuration."""
    n = mpo.n_sites
    if n > MAX_ENUM_SITES:
        raise TooLarge(f"cost enumeration limited to N <= {MAX_ENUM_SITES}")
    lind = as_local(model)
    num = 0.0
    den = 0.0
    for x in all_configs(n):
        pp = partial_products(mpo, x)
        q = complex(np.trace(pp.left[-1]))
        den += abs(q) ** 2
        num += abs(lindblad_amplitude(x, mpo, lind, pp)) ** 2
    if den == 0.0:
        raise ZeroTrace("all amplitudes vanish")
    return num / den


def enumerate_probabilities(mpo: MpoAnsatz) -> np.ndarray:
    """Exact ``p(x)`` over :func:`all_configs` order."""
    w = np.abs(_amplitude_tensor(mpo).reshape(-1)) ** 2
    return w / w.sum()
