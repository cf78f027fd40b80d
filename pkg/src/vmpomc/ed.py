"""Exact diagonalization reference: dense Liouvillian, steady state, fidelity.

The Liouvillian is assembled from many-body operators on the full ``2^N``
Hilbert space in the row-major ``vec(rho)`` basis and then permuted into the
interleaved super-index order used by the MPO, so it shares no code with the
local blocks of :mod:`vmpomc.models`.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import DegenerateNull, NotAState, TooLarge
from .models import SMINUS, SX, SZ, ModelSpec, kac_norm

logger = logging.getLogger(__name__)

MAX_DENSE_SITES = 7
#: above this Liouville dimension the steady state comes from a bordered LU solve
EIG_MAX_DIM = 1024


@dataclass(frozen=True, eq=False)
class DenseLiouvillian:
    matrix: np.ndarray
    model: ModelSpec

    @property
    def n_sites(self) -> int:
        return self.model.n_sites


def site_operator(op, site: int, n_sites: int) -> sp.csr_matrix:
    out = sp.identity(1, format="csr", dtype=complex)
    for j in range(n_sites):
        out = sp.kron(out, sp.csr_matrix(op) if j == site else sp.identity(2, dtype=complex), format="csr")
    return out


def hamiltonian(model: ModelSpec) -> sp.csr_matrix:
    n = model.n_sites
    dim = 2**n
    z = [site_operator(SZ, j, n) for j in range(n)]
    h = sp.csr_matrix((dim, dim), dtype=complex)
    for j in range(n):
        h = h + model.h * site_operator(SX, j, n)
    if model.J and n >= 2:
        if np.isinf(model.alpha):
            for j in range(n):
                h = h + model.J * (z[j] @ z[(j + 1) % n])
        else:
            norm = kac_norm(n, model.alpha)
            for i in range(n):
                for j in range(i + 1, n):
                    r = min(j - i, n - (j - i))
                    h = h + (model.J / norm) * r**-model.alpha * (z[i] @ z[j])
    return h


def jump_operators(model: ModelSpec) -> list:
    n = model.n_sites
    jumps = []
    if model.gamma_minus:
        jumps += [np.sqrt(model.gamma_minus) * site_operator(SMINUS, j, n) for j in range(n)]
    if model.gamma_d_loc:
        jumps += [np.sqrt(model.gamma_d_loc) * site_operator(SZ, j, n) for j in range(n)]
    if model.gamma_d_col:
        jumps.append(np.sqrt(model.gamma_d_col) * sum(site_operator(SZ, j, n) for j in range(n)))
    return jumps


def interleave_permutation(n_sites: int) -> np.ndarray:
    """``perm[X] = r``: super-index X = sum_j (2 a_j + b_j) 4^(N-1-j)  ->  row-major r = a 2^N + b."""
    dim = 2**n_sites
    a, b = np.divmod(np.arange(dim * dim), dim)
    x = np.zeros(dim * dim, dtype=np.int64)
    for j in range(n_sites):
        shift = n_sites - 1 - j
        aj = (a >> shift) & 1
        bj = (b >> shift) & 1
        x += (2 * aj + bj) * 4**shift
    perm = np.empty_like(x)
    perm[x] = np.arange(dim * dim)
    return perm


def liouvillian_sparse(h, jumps, n_sites: int) -> sp.csr_matrix:
    dim = 2**n_sites
    eye = sp.identity(dim, dtype=complex, format="csr")
    lv = -1j * (sp.kron(h, eye) - sp.kron(eye, h.T))
    for g in jumps:
        gdg = (g.conj().T @ g).tocsr()
        lv = lv + sp.kron(g, g.conj()) - 0.5 * sp.kron(gdg, eye) - 0.5 * sp.kron(eye, gdg.T)
    perm = interleave_permutation(n_sites)
    return lv.tocsr()[perm][:, perm]


def build_dense_liouvillian(model: ModelSpec) -> DenseLiouvillian:
    if model.n_sites > MAX_DENSE_SITES:
        raise TooLarge(f"dense Liouvillian limited to N <= {MAX_DENSE_SITES}, got {model.n_sites}")
    mat = liouvillian_sparse(hamiltonian(model), jump_operators(model), model.n_sites).toarray()
    return DenseLiouvillian(mat, model)


def vec_to_rho(vec, n_sites: int) -> np.ndarray:
    """Interleaved super-index vector -> ``2^N x 2^N`` matrix."""
    dim = 2**n_sites
    perm = interleave_permutation(n_sites)
    flat = np.empty(dim * dim, dtype=complex)
    flat[perm] = np.asarray(vec)
    return flat.reshape(dim, dim)


def rho_to_vec(rho) -> np.ndarray:
    rho = np.asarray(rho)
    n_sites = int(round(np.log2(rho.shape[0])))
    return rho.reshape(-1)[interleave_permutation(n_sites)]


def _trace_functional(n_sites: int) -> np.ndarray:
    return rho_to_vec(np.eye(2**n_sites)).real


def steady_state(liouvillian: DenseLiouvillian, method: str = "auto", tol: float = 1e-10) -> np.ndarray:
    """Unique null vector of the Liouvillian as a Hermitian, unit-trace density matrix.

    ``method="eig"`` uses the full spectrum; ``"lu"`` replaces one row of L by the
    trace functional and solves the bordered system, flagging a non-unique null
    space through the reciprocal condition number. ``"auto"`` picks eig for
    Liouville dimensions up to 1024.
    """
    mat = liouvillian.matrix
    n = liouvillian.n_sites
    dim = mat.shape[0]
    if method == "auto":
        method = "eig" if dim <= EIG_MAX_DIM else "lu"
    if method == "eig":
        w, v = np.linalg.eig(mat)
        order = np.argsort(np.abs(w))
        if abs(w[order[0]]) > tol:
            raise DegenerateNull(f"no zero eigenvalue: smallest |lambda| = {abs(w[order[0]]):.3g}")
        if dim > 1 and abs(w[order[1]]) < tol:
            raise DegenerateNull(f"two eigenvalues below {tol}: {w[order[:2]]}")
        vec = v[:, order[0]]
    elif method == "lu":
        row = int(np.argmax(_trace_functional(n)))
        bordered = mat.copy()
        bordered[row] = _trace_functional(n)
        rhs = np.zeros(dim, dtype=complex)
        rhs[row] = 1.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(bordered, check_finite=False)
        gecon, = sla.get_lapack_funcs(("gecon",), (lu,))
        rcond, _ = gecon(lu, np.linalg.norm(bordered, 1), norm="1")
        if rcond < 1e-13:
            raise DegenerateNull(f"bordered Liouvillian is singular (rcond = {rcond:.3g})")
        vec = sla.lu_solve((lu, piv), rhs, check_finite=False)
        resid = np.linalg.norm(mat @ vec) / np.linalg.norm(vec)
        if resid > tol * max(1.0, np.linalg.norm(mat, 1)):
            raise DegenerateNull(f"null-vector residual {resid:.3g}")
    else:
        raise ValueError(f"unknown method {method!r}")
    rho = vec_to_rho(vec, n)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho)
    lowest = np.linalg.eigvalsh(rho)[0]
    if lowest < -1e-10:
        logger.warning("steady state has negative eigenvalue %.3g", lowest)
    return rho


def psd_clip(rho, floor: float = -1e-8):
    """Hermitize, clip negative eigenvalues and renormalize.

    Returns the clipped matrix and the total magnitude of removed negative weight.
    """
    rho = np.asarray(rho, dtype=complex)
    if abs(np.trace(rho) - 1) > 1e-6:
        raise NotAState(f"trace {np.trace(rho):.6g} differs from 1")
    herm = 0.5 * (rho + rho.conj().T)
    w, v = np.linalg.eigh(herm)
    clipped = float(-w[w < 0].sum())
    if w[0] < floor:
        logger.info("clipping negative eigenvalues of total weight %.3g", clipped)
    w = np.clip(w, 0, None)
    out = (v * w) @ v.conj().T
    return out / np.trace(out).real, clipped


def _sqrtm_psd(rho):
    w, v = np.linalg.eigh(rho)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def uhlmann_fidelity(rho, sigma) -> float:
    """``(tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``.

    Evaluated as the squared nuclear norm of ``sqrt(rho) sqrt(sigma)``, with both
    square roots from Hermitian eigendecompositions; symmetric by construction.
    """
    rho, _ = psd_clip(rho)
    sigma, _ = psd_clip(sigma)
    s = np.linalg.svd(_sqrtm_psd(rho) @ _sqrtm_psd(sigma), compute_uv=False)
    f = float(np.sum(s) ** 2)
    return min(max(f, 0.0), 1.0)


def expectation(rho, op) -> complex:
    return complex(np.trace(np.asarray(op) @ rho))


def magnetizations(rho) -> dict:
    """Spin-averaged ``<sigma^a>`` of a dense state."""
    n = int(round(np.log2(rho.shape[0])))
    out = {}
    for name, op in (("sx", SX), ("sy", np.array([[0, -1j], [1j, 0]])), ("sz", SZ)):
        total = sum(expectation(rho, site_operator(op, j, n).toarray()) for j in range(n)) / n
        out[name] = total.real
    return out


def correlation(rho, op_a, op_b, r: int, site: int = 0) -> complex:
    n = int(round(np.log2(rho.shape[0])))
    a = site_operator(op_a, site, n)
    b = site_operator(op_b, (site + r) % n, n)
    return expectation(rho, (a @ b).toarray())


def purity(rho) -> float:
    return float(np.real(np.trace(rho @ rho)))


def renyi2(rho) -> float:
    n = np.log2(rho.shape[0])
    return float(-np.log2(purity(rho)) / n)


def cost_dense(vec_rho, liouvillian: DenseLiouvillian) -> float:
    """``<rho|L^dag L|rho> / <rho|rho>`` for a vectorized (interleaved) state."""
    v = np.asarray(vec_rho)
    lv = liouvillian.matrix @ v
    return float(np.vdot(lv, lv).real / np.vdot(v, v).real)
