"""Local estimator of the Lindbladian and MPO log-derivatives.

For a configuration x with cached partial products the local estimator

    L_loc(x) = sum_y <x|L|y> <y|rho> / <x|rho>

only needs the few y connected to x by the 1-local and 2-local blocks; all
diagonal matrix elements (including the chain-wide power-law Ising and
collective-dephasing terms) enter with amplitude ratio one.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels as K
from .errors import ZeroAmplitude
from .models import LocalSuperOp, ModelSpec, bonds, build_one_body, build_two_body_nn, couplings
from .mpo import MpoAnsatz, PartialProducts, check_config, partial_products


@dataclass(frozen=True, eq=False)
class LocalLindbladian:
    """Lindbladian in the form consumed by the kernels.

    Attributes:
        n_sites: chain length.
        one_body: 4x4 block applied on every site.
        two_body: 16x16 block applied on every bond in ``bond_list`` (or None).
        bond_list: ordered site pairs ``(i, k)``, each adjacent or the wrap bond.
        coupling: upper-triangular ``sz_i sz_j`` coefficients handled as a diagonal term.
        gamma_col: collective dephasing rate.
    """

    n_sites: int
    one_body: LocalSuperOp
    two_body: LocalSuperOp | None = None
    bond_list: tuple = ()
    coupling: np.ndarray | None = None
    gamma_col: float = 0.0

    def __post_init__(self):
        n = self.n_sites
        for i, k in self.bond_list:
            if not (k == i + 1 or (i == n - 1 and k == 0)):
                raise ValueError(f"bond {(i, k)} is neither adjacent nor the wrap bond")
        coup = np.zeros((n, n)) if self.coupling is None else np.triu(np.asarray(self.coupling, float), 1)
        object.__setattr__(self, "coupling", coup)

    @classmethod
    def from_model(cls, model: ModelSpec) -> "LocalLindbladian":
        bl = tuple(bonds(model))
        if model.nearest_neighbour:
            return cls(model.n_sites, build_one_body(model), build_two_body_nn(model) if bl else None,
                       bl, None, model.gamma_d_col)
        return cls(model.n_sites, build_one_body(model), None, (), couplings(model), model.gamma_d_col)

    def kernel_args(self):
        l2 = self.two_body.matrix if self.two_body is not None else np.zeros((16, 16), complex)
        bl = np.array(self.bond_list if self.two_body is not None else [], dtype=np.int64).reshape(-1, 2)
        return (np.ascontiguousarray(self.one_body.matrix), np.ascontiguousarray(l2), bl,
                np.ascontiguousarray(self.coupling), float(self.gamma_col))


@lru_cache(maxsize=64)
def _from_model(model: ModelSpec) -> LocalLindbladian:
    return LocalLindbladian.from_model(model)


def as_local(model) -> LocalLindbladian:
    if isinstance(model, LocalLindbladian):
        return model
    return _from_model(model)


@dataclass(frozen=True, eq=False)
class SampleRecord:
    """Per-sample quantities feeding the Monte Carlo accumulators."""

    cfg: np.ndarray
    amplitude: complex
    l_loc: complex
    delta: np.ndarray
    dl_loc: np.ndarray


class Workspace:
    """Scratch buffers for one (N, chi) shape; not shareable between threads."""

    def __init__(self, n_sites: int, chi: int):
        c = np.complex128
        self.n_sites, self.chi = n_sites, chi
        self.env = np.zeros((max(n_sites, 1), chi, chi), c)
        self.lb = np.zeros((n_sites + 1, chi, chi), c)
        self.rb = np.zeros((n_sites + 1, chi, chi), c)
        self.tmp = np.zeros((chi, chi), c)
        self.tmp2 = np.zeros((chi, chi), c)
        self.bmat = np.zeros((chi, chi), c)
        self.g = np.zeros((4, chi, chi), c)
        self.dg = np.zeros((4, chi, chi), c)


def _evaluate(cfg, mpo: MpoAnsatz, model, partials, need_grad: bool, shortcut: bool = True):
    x = check_config(mpo, cfg)
    lind = as_local(model)
    if lind.n_sites != mpo.n_sites:
        raise ValueError("model and MPO chain lengths differ")
    if partials is None:
        partials = partial_products(mpo, x)
    ws = Workspace(mpo.n_sites, mpo.chi)
    amp, num = K.local_estimate(mpo.tensors, x, partials.left, partials.right, *lind.kernel_args(),
                                shortcut, need_grad, ws.g, ws.dg, ws.env, ws.lb, ws.rb,
                                ws.tmp, ws.tmp2, ws.bmat)
    return x, amp, num, ws


def _checked(x, amp):
    if abs(amp) < 1e-300:
        raise ZeroAmplitude(f"<x|rho> = {amp!r} for x = {x.tolist()}")
    return amp


def local_estimator(cfg, mpo: MpoAnsatz, model, partials: PartialProducts | None = None,
                    shortcut: bool = True) -> complex:
    """``<x|L|rho>/<x|rho>``; ``shortcut=False`` routes diagonal block entries through contractions."""
    x, amp, num, _ = _evaluate(cfg, mpo, model, partials, False, shortcut)
    return complex(num / _checked(x, amp))


def lindblad_amplitude(cfg, mpo: MpoAnsatz, model, partials: PartialProducts | None = None) -> complex:
    """``<x|L|rho>`` without dividing by ``<x|rho>``; defined even where the amplitude vanishes."""
    return complex(_evaluate(cfg, mpo, model, partials, False)[2])


def log_derivative(cfg, mpo: MpoAnsatz, partials: PartialProducts | None = None) -> np.ndarray:
    """``Delta_i(x) = d ln<x|rho> / d a_i`` flattened as ``s*chi^2 + u*chi + v``."""
    x = check_config(mpo, cfg)
    if partials is None:
        partials = partial_products(mpo, x)
    left, right = partials.left, partials.right
    n = mpo.n_sites
    amp = complex(np.trace(left[n]))
    if abs(amp) < 1e-300:
        raise ZeroAmplitude(f"<x|rho> = {amp!r}")
    grad = np.zeros_like(mpo.tensors)
    for i, s in enumerate(x):
        grad[s] += (right[n - 1 - i] @ left[i]).T
    return (grad / amp).reshape(-1)


def local_estimator_gradient(cfg, mpo: MpoAnsatz, model, partials: PartialProducts | None = None,
                             shortcut: bool = True) -> np.ndarray:
    """``dL_loc,i(x) = sum_y <x|L|y> Delta_i(y) <y|rho>/<x|rho>``."""
    x, amp, _, ws = _evaluate(cfg, mpo, model, partials, True, shortcut)
    return (ws.dg / _checked(x, amp)).reshape(-1)


def sample_record(cfg, mpo: MpoAnsatz, model, partials: PartialProducts | None = None) -> SampleRecord:
    x, amp, num, ws = _evaluate(cfg, mpo, model, partials, True)
    _checked(x, amp)
    return SampleRecord(x.copy(), complex(amp), complex(num / amp), (ws.g / amp).reshape(-1),
                        (ws.dg / amp).reshape(-1))
