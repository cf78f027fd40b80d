"""Translation-invariant periodic MPO ansatz for a vectorized density matrix.

The density matrix of an ``N``-site chain is parametrized by four complex
``chi x chi`` matrices ``A(s)`` shared by every site,

    <x|rho> = tr A(x_1) A(x_2) ... A(x_N),

with the Liouville super-index ``s = 2*alpha + beta`` of the ket (``alpha``)
and bra (``beta``) physical indices. Basis state ``0`` is sigma^z = +1 and
``1`` is sigma^z = -1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ZeroTrace

logger = logging.getLogger(__name__)

D = 2
D2 = D * D
#: indices of the diagonal super-states (alpha == beta)
DIAGONAL_STATES = (0, 3)
#: s = 2a+b  ->  2b+a
SWAP_BRA_KET = np.array([0, 2, 1, 3])
CHECKPOINT_HEADER = "VMPOMC-CKPT v1"


def super_index(alpha: int, beta: int) -> int:
    return D * alpha + beta


def split_index(s):
    """Return ``(alpha, beta)`` for super-index (or array of super-indices) ``s``."""
    return s >> 1, s & 1


@dataclass(frozen=True, eq=False)
class MpoAnsatz:
    """Immutable container for the shared MPO tensors.

    Attributes:
        tensors: complex array of shape ``(4, chi, chi)``; ``tensors[s]`` is A(s).
        n_sites: chain length N.
    """

    tensors: np.ndarray
    n_sites: int

    def __post_init__(self):
        t = np.array(self.tensors, dtype=np.complex128, order="C", copy=True)
        if t.ndim != 3 or t.shape[0] != D2 or t.shape[1] != t.shape[2]:
            raise ValueError(f"tensors must have shape (4, chi, chi), got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("MPO tensors contain non-finite entries")
        if int(self.n_sites) < 1:
            raise ValueError("n_sites must be positive")
        t.flags.writeable = False
        object.__setattr__(self, "tensors", t)
        object.__setattr__(self, "n_sites", int(self.n_sites))

    @property
    def chi(self) -> int:
        return self.tensors.shape[1]

    @property
    def d(self) -> int:
        return D

    @property
    def n_params(self) -> int:
        return D2 * self.chi * self.chi

    def params(self) -> np.ndarray:
        """Flat parameter vector, index ``s*chi**2 + u*chi + v``."""
        return self.tensors.reshape(-1).copy()

    def with_params(self, params) -> "MpoAnsatz":
        return MpoAnsatz(np.asarray(params).reshape(self.tensors.shape), self.n_sites)

    def with_n_sites(self, n_sites: int) -> "MpoAnsatz":
        """Same tensors on a chain of a different length, rescaled to unit trace."""
        return normalize_trace(MpoAnsatz(self.tensors, n_sites))

    def __repr__(self):
        return f"MpoAnsatz(n_sites={self.n_sites}, chi={self.chi})"


@dataclass(frozen=True, eq=False)
class PartialProducts:
    """Left and right partial matrix products of one configuration.

    ``left[k] = A(x_1)...A(x_k)`` and ``right[k] = A(x_{N-k+1})...A(x_N)``
    for ``k = 0..N``; index 0 holds the identity.
    """

    left: np.ndarray
    right: np.ndarray


def check_config(mpo: MpoAnsatz, cfg) -> np.ndarray:
    x = np.asarray(cfg, dtype=np.int64)
    if x.shape != (mpo.n_sites,):
        raise ValueError(f"configuration must have length {mpo.n_sites}, got shape {x.shape}")
    if x.size and (x.min() < 0 or x.max() >= D2):
        raise ValueError("super-indices must lie in 0..3")
    return x


def amplitude(mpo: MpoAnsatz, cfg) -> complex:
    """``tr A(x_1) ... A(x_N)``."""
    x = check_config(mpo, cfg)
    prod = mpo.tensors[x[0]]
    for s in x[1:]:
        prod = prod @ mpo.tensors[s]
    return complex(np.trace(prod))


def left_products(mpo: MpoAnsatz, cfg) -> np.ndarray:
    x = check_config(mpo, cfg)
    out = np.empty((mpo.n_sites + 1, mpo.chi, mpo.chi), dtype=np.complex128)
    out[0] = np.eye(mpo.chi)
    for k, s in enumerate(x):
        out[k + 1] = out[k] @ mpo.tensors[s]
    return out


def right_products(mpo: MpoAnsatz, cfg) -> np.ndarray:
    x = check_config(mpo, cfg)
    n = mpo.n_sites
    out = np.empty((n + 1, mpo.chi, mpo.chi), dtype=np.complex128)
    out[0] = np.eye(mpo.chi)
    for k in range(n):
        out[k + 1] = mpo.tensors[x[n - 1 - k]] @ out[k]
    return out


def partial_products(mpo: MpoAnsatz, cfg) -> PartialProducts:
    return PartialProducts(left_products(mpo, cfg), right_products(mpo, cfg))


def transfer_matrix(mpo: MpoAnsatz) -> np.ndarray:
    """Single-site transfer matrix ``sum_alpha A(2*alpha + alpha)``."""
    return mpo.tensors[0] + mpo.tensors[3]


def _trace_power(mat: np.ndarray, n: int) -> complex:
    return complex(np.trace(np.linalg.matrix_power(mat, n)))


def trace_rho(mpo: MpoAnsatz) -> complex:
    """``tr rho = tr T^N``."""
    return _trace_power(transfer_matrix(mpo), mpo.n_sites)


def normalize_trace(mpo: MpoAnsatz, floor: float = 1e-300) -> MpoAnsatz:
    """Rescale every A(s) by the principal N-th root of ``1/tr rho``.

    Raises:
        ZeroTrace: if ``|tr rho|`` is below ``floor``.
    """
    n = mpo.n_sites
    t = transfer_matrix(mpo)
    # pre-scale to unit spectral radius so T^N neither over- nor underflows
    radius = float(np.max(np.abs(np.linalg.eigvals(t))))
    pre = 1.0 / radius if radius > 0 and np.isfinite(1.0 / radius) else 1.0
    tr = _trace_power(t * pre, n)
    if not np.isfinite(tr) or abs(tr) < floor:
        raise ZeroTrace(f"tr rho = {tr!r} (after pre-scaling by {pre:.3g})")
    scale = pre * np.exp(-np.log(tr) / n)
    return MpoAnsatz(mpo.tensors * scale, n)


def doubled_transfer_matrix(mpo: MpoAnsatz, weights=None) -> np.ndarray:
    """``sum_s w_s A(s) (x) conj(A(s))`` (``chi^2 x chi^2``); ``w_s = 1`` by default."""
    a = mpo.tensors
    if weights is None:
        weights = np.ones(D2)
    chi = mpo.chi
    e = np.einsum("s,sij,skl->ikjl", np.asarray(weights, dtype=complex), a, a.conj())
    return e.reshape(chi * chi, chi * chi)


def purity(mpo: MpoAnsatz) -> float:
    """``Z = sum_x |<x|rho>|^2 = tr E^N`` with the doubled transfer matrix E."""
    z = _trace_power(doubled_transfer_matrix(mpo), mpo.n_sites)
    if abs(z.imag) > 1e-8 * max(abs(z.real), 1e-300):
        logger.warning("purity has a relative imaginary part %.3g", abs(z.imag) / abs(z.real))
    return z.real


def hermitize(mpo: MpoAnsatz) -> MpoAnsatz:
    """Symmetrize ``A(2a+b) <- (A(2a+b) + conj(A(2b+a)))/2`` so that rho = rho^dagger."""
    a = mpo.tensors
    return MpoAnsatz(0.5 * (a + a[SWAP_BRA_KET].conj()), mpo.n_sites)


def init_random(chi: int, n_sites: int, seed=None, scale: float = 0.1) -> MpoAnsatz:
    """Random MPO: uniform complex entries in ``[-scale, scale]`` plus an identity bias.

    ``I/chi`` is added to the two diagonal-physical tensors A(0), A(3) so that
    the trace cannot vanish, then the result is trace-normalized.
    """
    if chi < 1:
        raise ValueError("chi must be >= 1")
    rng = np.random.default_rng(seed)
    shape = (D2, chi, chi)
    a = rng.uniform(-scale, scale, shape) + 1j * rng.uniform(-scale, scale, shape)
    for s in DIAGONAL_STATES:
        a[s] += np.eye(chi) / chi
    return normalize_trace(MpoAnsatz(a, n_sites))


def product_mpo(local_rho, n_sites: int) -> MpoAnsatz:
    """chi=1 MPO of the product state ``local_rho^{(x) N}``."""
    r = np.asarray(local_rho, dtype=complex)
    a = np.array([r[0, 0], r[0, 1], r[1, 0], r[1, 1]]).reshape(D2, 1, 1)
    return MpoAnsatz(a, n_sites)


def save_checkpoint(mpo: MpoAnsatz, path) -> None:
    chi = mpo.chi
    lines = [CHECKPOINT_HEADER, f"N={mpo.n_sites} chi={chi} d={D}"]
    for s in range(D2):
        for u in range(chi):
            for v in range(chi):
                z = mpo.tensors[s, u, v]
                lines.append(f"{s} {u} {v} {z.real:.17g} {z.imag:.17g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path, n_sites: int | None = None) -> MpoAnsatz:
    """Read a checkpoint; with ``n_sites`` given, re-target the tensors to that length."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != CHECKPOINT_HEADER:
        raise CheckpointError(f"{path}: expected header {CHECKPOINT_HEADER!r}")
    try:
        fields = dict(item.split("=") for item in lines[1].split())
        n, chi, d = int(fields["N"]), int(fields["chi"]), int(fields["d"])
    except (IndexError, KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed shape line") from exc
    if d != D or chi < 1 or n < 1:
        raise CheckpointError(f"{path}: unsupported shape N={n} chi={chi} d={d}")
    body = [ln for ln in lines[2:] if ln.strip()]
    if len(body) != D2 * chi * chi:
        raise CheckpointError(f"{path}: expected {D2 * chi * chi} entries, found {len(body)}")
    a = np.empty((D2, chi, chi), dtype=np.complex128)
    for k, ln in enumerate(body):
        parts = ln.split()
        try:
            s, u, v = (int(p) for p in parts[:3])
            re, im = float(parts[3]), float(parts[4])
        except (IndexError, ValueError) as exc:
            raise CheckpointError(f"{path}: bad entry line {k + 3}") from exc
        if (s, u, v) != np.unravel_index(k, a.shape):
            raise CheckpointError(f"{path}: entries out of row-major order at line {k + 3}")
        a[s, u, v] = complex(re, im)
    mpo = MpoAnsatz(a, n)
    if n_sites is not None and n_sites != n:
        mpo = mpo.with_n_sites(n_sites)
    return mpo
