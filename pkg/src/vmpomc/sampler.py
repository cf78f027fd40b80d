"""Sequential Metropolis sampling of p(x) = |<x|rho>|^2 / Z.

A chain alternates rightward and leftward sweeps. During a rightward sweep
the right partial products of the previous configuration stay valid for all
sites not yet visited, so each single-site proposal costs one environment
product and one trace; the left products are rebuilt on the fly.

Random numbers come from a counter-based Philox stream per chain, keyed by
``(master_seed, chain_id)``. Results therefore depend on the number of
chains but never on how chains are scheduled onto threads.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import DegenerateAmplitude
from .mpo import D2, MpoAnsatz, check_config

logger = logging.getLogger(__name__)

DEFAULT_BURN_IN = 1000
_AMP_FLOOR = 1e-300
_MAX_RESTARTS = 100
#: sweeps per block of pre-drawn random numbers
_CHUNK = 1 << 15


def chain_rng(master_seed: int, chain_id: int) -> np.random.Generator:
    """Independent Philox stream for one chain."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(chain_id),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(eq=False)
class ChainState:
    """Mutable Markov-chain state owned by a single worker.

    ``left`` and ``right`` both hold valid partial products of ``cfg`` for the
    MPO the chain was last synchronized with; ``direction`` is 0 when the
    next sweep runs rightward and 1 when it runs leftward.
    """

    cfg: np.ndarray
    left: np.ndarray
    right: np.ndarray
    rng: np.random.Generator
    direction: int = 0
    amplitude: complex = 0j
    n_sweeps: int = 0
    n_proposed: int = 0
    n_accepted: int = 0
    n_restarts: int = 0
    chain_id: int = 0
    workspace: dict = field(default_factory=dict, repr=False)

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_proposed if self.n_proposed else float("nan")

    def reset_counters(self) -> None:
        self.n_proposed = self.n_accepted = 0


def _rebuild(state: ChainState, mpo: MpoAnsatz) -> complex:
    K.build_left(mpo.tensors, state.cfg, state.left)
    K.build_right(mpo.tensors, state.cfg, state.right)
    state.amplitude = complex(K.trace(state.left[-1]))
    return state.amplitude


def _dominant_config(mpo: MpoAnsatz) -> np.ndarray:
    norms = np.linalg.norm(mpo.tensors.reshape(D2, -1), axis=1)
    return np.full(mpo.n_sites, int(np.argmax(norms)), dtype=np.int64)


def _reseed(state: ChainState, mpo: MpoAnsatz, site: int | None = None) -> None:
    """Move the chain onto a configuration with non-vanishing amplitude."""
    for _ in range(_MAX_RESTARTS):
        if site is None:
            state.cfg[:] = state.rng.integers(0, D2, mpo.n_sites)
        else:
            state.cfg[site] = state.rng.integers(0, D2)
            site = None
        if abs(_rebuild(state, mpo)) >= _AMP_FLOOR:
            return
    state.cfg[:] = _dominant_config(mpo)
    if abs(_rebuild(state, mpo)) < _AMP_FLOOR:
        raise DegenerateAmplitude("could not find a configuration with non-zero amplitude")


def new_chain(mpo: MpoAnsatz, master_seed: int, chain_id: int = 0, cfg=None) -> ChainState:
    """Fresh chain from a random (or given) configuration with both partial sets built."""
    n, chi = mpo.n_sites, mpo.chi
    rng = chain_rng(master_seed, chain_id)
    x = rng.integers(0, D2, n).astype(np.int64) if cfg is None else check_config(mpo, cfg).copy()
    state = ChainState(
        cfg=x,
        left=np.zeros((n + 1, chi, chi), np.complex128),
        right=np.zeros((n + 1, chi, chi), np.complex128),
        rng=rng,
        chain_id=chain_id,
    )
    if abs(_rebuild(state, mpo)) < _AMP_FLOOR:
        state.cfg[:] = _dominant_config(mpo)
        if abs(_rebuild(state, mpo)) < _AMP_FLOOR:
            _reseed(state, mpo)
    return state


def synchronize(state: ChainState, mpo: MpoAnsatz) -> None:
    """Refresh the cached products after the MPO changed; re-seed on a vanished amplitude."""
    if state.left.shape[1] != mpo.chi or state.left.shape[0] != mpo.n_sites + 1:
        raise ValueError("chain state does not match the MPO shape")
    if abs(_rebuild(state, mpo)) < _AMP_FLOOR:
        state.n_restarts += 1
        _reseed(state, mpo)


def draw_randoms(state: ChainState, n_sweeps: int, n_sites: int):
    """Uniforms and proposal offsets for ``n_sweeps`` sweeps, consumed in order."""
    u = state.rng.random((n_sweeps, n_sites))
    p = state.rng.integers(0, D2 - 1, (n_sweeps, n_sites))
    return u, p


def _env(state: ChainState, chi: int) -> np.ndarray:
    env = state.workspace.get("env")
    if env is None or env.shape[0] != chi:
        env = state.workspace["env"] = np.zeros((chi, chi), np.complex128)
    return env


def run_sweeps(state: ChainState, mpo: MpoAnsatz, n_sweeps: int, record: bool = False):
    """Advance the chain by ``n_sweeps`` sweeps.

    Returns ``(configs, amplitudes)`` of shape (n_sweeps, N) and (n_sweeps,)
    when ``record`` is set, otherwise ``None``. A vanishing amplitude
    re-randomizes the chain and the remaining sweeps continue from there.
    """
    n = mpo.n_sites
    out_cfg = np.zeros((n_sweeps if record else 0, n), np.int64)
    out_q = np.zeros(n_sweeps if record else 0, np.complex128)
    env = _env(state, mpo.chi)
    done = 0
    while done < n_sweeps:
        u, p = draw_randoms(state, min(n_sweeps - done, _CHUNK), n)
        direction, acc, bad = K.run_sweeps(mpo.tensors, state.cfg, state.left, state.right,
                                           state.direction, u, p, env, out_cfg[done:], out_q[done:])
        state.direction = direction
        step = u.shape[0] if bad < 0 else bad + 1
        state.n_sweeps += step
        state.n_proposed += step * n
        state.n_accepted += acc
        done += step
        if bad >= 0:
            logger.debug("chain %d: amplitude underflow, re-seeding", state.chain_id)
            state.n_restarts += 1
            _reseed(state, mpo)
            if record:
                out_cfg[done - 1] = state.cfg
                out_q[done - 1] = state.amplitude
        else:
            state.amplitude = complex(K.trace(state.left[-1]))
    return (out_cfg, out_q) if record else None


def sequential_sweep(state: ChainState, mpo: MpoAnsatz) -> ChainState:
    """One sweep in the chain's current direction; the direction flips afterwards."""
    run_sweeps(state, mpo, 1)
    return state


def burn_in(state: ChainState, mpo: MpoAnsatz, n_sweeps: int = DEFAULT_BURN_IN) -> ChainState:
    if n_sweeps > 0:
        run_sweeps(state, mpo, n_sweeps)
    return state


def sample_configs(state: ChainState, mpo: MpoAnsatz, n_samples: int) -> np.ndarray:
    """``n_samples`` configurations, one sweep apart."""
    return run_sweeps(state, mpo, n_samples, record=True)[0]


def magnetization_series(configs, op) -> np.ndarray:
    """Per-sample estimator ``(1/N) sum_j <beta_j|op|alpha_j>`` of a one-body observable.

    Its exact mean under p(x) is a doubled-transfer-matrix contraction, see
    :func:`vmpomc.observables.born_average`.
    """
    x = np.asarray(configs, dtype=np.int64)
    op = np.asarray(op, dtype=complex)
    table = np.array([op[s & 1, s >> 1] for s in range(D2)])
    return table[x].mean(axis=-1)


def autocorrelation(samples, max_lag: int, mean=None) -> np.ndarray:
    """Normalized autocorrelation ``Gamma(t)`` for ``t = 0..max_lag``.

    ``mean`` should be the exact expectation value; without it the sample mean
    is used, in which case ``Gamma(0) = 1`` exactly. Lags whose denominator
    vanishes (constant series) return NaN.
    """
    o = np.asarray(samples, dtype=complex)
    n = o.shape[0]
    if max_lag < 0 or n <= max_lag:
        raise ValueError("need more samples than max_lag")
    dev = o - (o.mean() if mean is None else mean)
    gamma = np.empty(max_lag + 1, dtype=complex)
    for t in range(max_lag + 1):
        den = np.sum(np.abs(dev[: n - t]) ** 2)
        gamma[t] = np.sum(dev[: n - t] * dev[t:].conj()) / den if den > 0 else np.nan
    if np.isnan(gamma[0]):
        logger.warning("autocorrelation of a constant series is undefined")
    return gamma
