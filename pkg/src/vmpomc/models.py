"""Liouville-space building blocks of the dissipative Ising Lindbladians.

A Lindbladian term acting on ``n`` neighbouring sites is stored as a dense
``4**n x 4**n`` block in the per-site super-index basis
``X = 4**(n-1) x_1 + ... + x_n`` with ``x = 2*alpha + beta``. Terms that are
diagonal in that basis and act on the whole chain (power-law Ising coupling,
collective dephasing) are never materialized; their matrix elements are
evaluated in closed form from a configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)
#: sigma^- = (sigma^x - i sigma^y)/2 lowers |0> (up) to |1> (down)
SMINUS = 0.5 * (SX - 1j * SY)


@dataclass(frozen=True)
class ModelSpec:
    """Parameters of a translation-invariant dissipative Ising ring.

    ``alpha = inf`` selects nearest-neighbour coupling; a finite ``alpha``
    selects Kac-normalized power-law coupling on ring distances.
    """

    n_sites: int
    J: float = 0.5
    h: float = 1.0
    gamma_minus: float = 1.0
    gamma_d_loc: float = 0.0
    gamma_d_col: float = 0.0
    alpha: float = math.inf

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 1:
            raise ValueError("n_sites must be a positive integer")
        for name in ("gamma_minus", "gamma_d_loc", "gamma_d_col"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive (inf for nearest neighbour)")
        for name in ("J", "h", "gamma_minus", "gamma_d_loc", "gamma_d_col"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def nearest_neighbour(self) -> bool:
        return math.isinf(self.alpha)

    def replace(self, **changes) -> "ModelSpec":
        return type(self)(**{**self.__dict__, **changes})


@dataclass(frozen=True, eq=False)
class LocalSuperOp:
    """Dense superoperator block acting on ``arity`` adjacent sites."""

    arity: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        dim = 4**self.arity
        if m.shape != (dim, dim):
            raise ValueError(f"arity-{self.arity} block must be {dim}x{dim}")
        if not np.all(np.isfinite(m)):
            raise ValueError("superoperator has non-finite entries")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @cached_property
    def nonzeros(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(self.matrix)
        return list(zip(rows.tolist(), cols.tolist()))

    @property
    def diagonal_only(self) -> bool:
        return all(r == c for r, c in self.nonzeros)


@dataclass(frozen=True)
class DiagonalNonlocalTerm:
    """Chain-wide term that is diagonal in the configuration basis."""

    kind: str  # "long_range_ising" | "collective_dephasing"
    params: dict = field(hash=False)

    def amplitude(self, cfg, model: ModelSpec) -> complex:
        if self.kind == "long_range_ising":
            return long_range_diag_amplitude(cfg, model)
        return collective_dephasing_amplitude(cfg, model)


def lindblad_block(hamiltonian, jumps=(), n_sites: int = 1) -> np.ndarray:
    """Vectorized Lindbladian of an ``n_sites``-site block in per-site super-index order.

    Built as ``-i(H (x) 1 - 1 (x) H^T) + sum_k (G (x) G* - G^dag G (x) 1/2 - 1 (x) G^T G*/2)``
    in the row-major ``(ket, bra)`` basis and then regrouped so that the ket and
    bra index of each site are adjacent.
    """
    dim = 2**n_sites
    eye = np.eye(dim)
    h = np.asarray(hamiltonian, dtype=complex)
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for g in jumps:
        g = np.asarray(g, dtype=complex)
        gdg = g.conj().T @ g
        sup = sup + np.kron(g, g.conj()) - 0.5 * np.kron(gdg, eye) - 0.5 * np.kron(eye, gdg.T)
    # (a_1..a_n, b_1..b_n) -> (a_1, b_1, ..., a_n, b_n)
    order = [k for j in range(n_sites) for k in (j, n_sites + j)]
    t = sup.reshape((2,) * (4 * n_sites))
    t = t.transpose(order + [2 * n_sites + k for k in order])
    return t.reshape(dim * dim, dim * dim)


def build_one_body(model: ModelSpec) -> LocalSuperOp:
    """Single-site block: transverse field, spin decay and local dephasing."""
    jumps = []
    if model.gamma_minus:
        jumps.append(math.sqrt(model.gamma_minus) * SMINUS)
    if model.gamma_d_loc:
        jumps.append(math.sqrt(model.gamma_d_loc) * SZ)
    return LocalSuperOp(1, lindblad_block(model.h * SX, jumps, 1))


def build_two_body_nn(model: ModelSpec) -> LocalSuperOp:
    """Bond block ``-iJ(sz sz (x) 1 - 1 (x) (sz sz)^T)``."""
    return LocalSuperOp(2, lindblad_block(model.J * np.kron(SZ, SZ), (), 2))


def ring_distance(n_sites: int) -> np.ndarray:
    i = np.arange(n_sites)
    d = np.abs(i[:, None] - i[None, :])
    return np.minimum(d, n_sites - d)


def kac_norm(n_sites: int, alpha: float) -> float:
    """``(1/N) sum_{i<j} d(i,j)^-alpha`` with ring distance; 1 for ``alpha = inf``."""
    if math.isinf(alpha):
        return 1.0
    d = ring_distance(n_sites)[np.triu_indices(n_sites, 1)].astype(float)
    return float(np.sum(d**-alpha) / n_sites)


def bonds(model: ModelSpec) -> list[tuple[int, int]]:
    """Ordered nearest-neighbour bonds ``(j, j+1 mod N)``; N=2 keeps both (0,1) and (1,0)."""
    if not model.nearest_neighbour or model.n_sites < 2:
        return []
    n = model.n_sites
    return [(j, (j + 1) % n) for j in range(n)]


def couplings(model: ModelSpec) -> np.ndarray:
    """Upper-triangular ``sz_i sz_j`` coefficients of the Ising Hamiltonian."""
    n = model.n_sites
    c = np.zeros((n, n))
    if model.nearest_neighbour:
        for i, j in bonds(model):
            c[min(i, j), max(i, j)] += model.J
        return c
    iu = np.triu_indices(n, 1)
    c[iu] = model.J / kac_norm(n, model.alpha) * ring_distance(n)[iu].astype(float) ** -model.alpha
    return c


def _branch_spins(cfg):
    x = np.asarray(cfg, dtype=np.int64)
    ket = 1 - 2 * (x >> 1)
    bra = 1 - 2 * (x & 1)
    return ket, bra


def long_range_diag_amplitude(cfg, model: ModelSpec) -> complex:
    """``-i [E(ket) - E(bra)]`` for the classical Ising energy on both branches."""
    ket, bra = _branch_spins(cfg)
    c = couplings(model)
    e_ket = ket @ c @ ket
    e_bra = bra @ c @ bra
    return -1j * float(e_ket - e_bra)


def collective_dephasing_amplitude(cfg, model: ModelSpec) -> float:
    """``-(gamma/2) (M_z(ket) - M_z(bra))^2``."""
    ket, bra = _branch_spins(cfg)
    return -0.5 * model.gamma_d_col * float(ket.sum() - bra.sum()) ** 2


def nonlocal_terms(model: ModelSpec) -> list[DiagonalNonlocalTerm]:
    terms = []
    if not model.nearest_neighbour:
        terms.append(
            DiagonalNonlocalTerm(
                "long_range_ising",
                {"J": model.J, "alpha": model.alpha, "kac_norm": kac_norm(model.n_sites, model.alpha)},
            )
        )
    if model.gamma_d_col:
        terms.append(DiagonalNonlocalTerm("collective_dephasing", {"gamma_d_col": model.gamma_d_col}))
    return terms


@dataclass(frozen=True)
class Connection:
    sites: tuple[int, ...]
    term: object


def connections(model: ModelSpec, site: int) -> list[Connection]:
    """Every Lindbladian term touching ``site`` (0-based), periodic bond included."""
    if not 0 <= site < model.n_sites:
        raise IndexError(site)
    out = [Connection((site,), build_one_body(model))]
    two = build_two_body_nn(model) if model.nearest_neighbour else None
    for bond in bonds(model):
        if site in bond:
            out.append(Connection(bond, two))
    everyone = tuple(range(model.n_sites))
    out.extend(Connection(everyone, term) for term in nonlocal_terms(model))
    return out
