"""Stochastic gradient descent and stochastic reconfiguration for the MPO.

Each iteration freezes the MPO, lets every Markov chain draw its samples,
merges the per-chain accumulators in chain order and applies

    a <- a - delta * f                   (SGD)
    a <- a - delta * (S + eps)^-1 f      (SR)

followed by hermitization and trace normalization.
"""

from __future__ import annotations

import logging
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import _kernels as K
from . import observables as obs
from .errors import NaNGuard, SolveFailure, TooLarge, ZeroAmplitude
from .estimators import Workspace, as_local, sample_record
from .mpo import MpoAnsatz, hermitize, normalize_trace
from .sampler import ChainState, burn_in, draw_randoms, new_chain, synchronize

logger = logging.getLogger(__name__)

METHODS = ("SGD", "SR")
SOLVE_RTOL = 1e-8


@dataclass(frozen=True)
class OptimizerConfig:
    """Hyperparameters of one optimization run.

    ``n_mc`` samples are drawn per chain and iteration by ``n_chains``
    independent chains. ``threads`` only sets the size of the thread pool
    the chains run on and never changes the result. ``exact`` replaces
    sampling by enumeration of all configurations (small N only).
    """

    method: str = "SR"
    epsilon: float = 0.01
    delta0: float = 0.03
    decay: float = 0.998
    n_iterations: int = 1000
    n_mc: int = 160
    n_chains: int = 6
    seed: int = 0
    hermitize: bool = True
    mc_growth: tuple = ()
    burn_in: int = 1000
    burn_in_per_iteration: int = 2
    threads: int | None = None
    max_retries: int = 3
    observables: tuple = ("sx", "sy", "sz")
    exact: bool = False

    def __post_init__(self):
        method = self.method.upper()
        if method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        object.__setattr__(self, "method", method)
        if method == "SR" and not self.epsilon > 0:
            raise ValueError("SR needs a positive epsilon")
        if self.epsilon < 0 or not self.delta0 > 0 or not 0 < self.decay <= 1:
            raise ValueError("need epsilon >= 0, delta0 > 0 and 0 < decay <= 1")
        if self.n_iterations < 0 or self.n_mc < 1 or self.n_chains < 1:
            raise ValueError("need n_iterations >= 0, n_mc >= 1 and n_chains >= 1")
        if self.burn_in < 0 or self.burn_in_per_iteration < 0:
            raise ValueError("burn-in lengths must be non-negative")
        growth = tuple(sorted((int(k), int(m)) for k, m in self.mc_growth))
        if any(m < 1 or k < 0 for k, m in growth):
            raise ValueError("mc_growth entries must be (iteration >= 0, n_mc >= 1)")
        object.__setattr__(self, "mc_growth", growth)
        object.__setattr__(self, "observables", tuple(self.observables))

    def n_mc_at(self, k: int) -> int:
        n = self.n_mc
        for start, value in self.mc_growth:
            if k >= start:
                n = value
        return n

    def replace(self, **changes) -> "OptimizerConfig":
        return type(self)(**{**self.__dict__, **changes})


class MonteCarloAccumulator:
    """Running sums over samples; merged strictly in the order they are added.

    Batches may carry weights (e.g. exact probabilities when enumerating all
    configurations); expectation values divide by the total weight, which
    equals ``n_samples`` for unweighted batches.
    """

    def __init__(self, n_params: int, with_metric: bool = True):
        self.n_params = n_params
        self.with_metric = with_metric
        self.n_samples = 0
        self.total_weight = 0.0
        self.sum_L2 = 0.0
        self.sum_LdL = np.zeros(n_params, complex)
        self.sum_delta = np.zeros(n_params, complex)
        self.sum_deltaconj_delta = np.zeros((n_params, n_params), complex) if with_metric else None

    @property
    def sum_deltaconj(self) -> np.ndarray:
        return self.sum_delta.conj()

    def add(self, l_loc, delta, dl_loc, weights=None) -> "MonteCarloAccumulator":
        """Add a batch: ``l_loc`` (n,), ``delta`` and ``dl_loc`` (n, P)."""
        lloc = np.asarray(l_loc, complex).reshape(-1)
        delta = np.asarray(delta, complex).reshape(lloc.size, self.n_params)
        dl = np.asarray(dl_loc, complex).reshape(lloc.size, self.n_params)
        if weights is None:
            w = None
            self.total_weight += lloc.size
        else:
            w = np.asarray(weights, float).reshape(-1)
            self.total_weight += float(w.sum())
        self.n_samples += lloc.size
        l2 = lloc.real**2 + lloc.imag**2
        wl = lloc if w is None else w * lloc
        self.sum_L2 += float(np.sum(l2 if w is None else w * l2))
        self.sum_LdL += wl @ dl.conj()
        self.sum_delta += delta.sum(axis=0) if w is None else w @ delta
        if self.with_metric:
            wd = delta if w is None else w[:, None] * delta
            self.sum_deltaconj_delta += wd.conj().T @ delta
        return self

    def add_record(self, rec, weight=None) -> "MonteCarloAccumulator":
        return self.add([rec.l_loc], rec.delta[None], rec.dl_loc[None],
                        None if weight is None else [weight])

    def merge(self, other: "MonteCarloAccumulator") -> "MonteCarloAccumulator":
        if other.n_params != self.n_params:
            raise ValueError("accumulators have different parameter counts")
        self.n_samples += other.n_samples
        self.total_weight += other.total_weight
        self.sum_L2 += other.sum_L2
        self.sum_LdL += other.sum_LdL
        self.sum_delta += other.sum_delta
        if self.with_metric:
            self.sum_deltaconj_delta += other.sum_deltaconj_delta
        return self

    @property
    def cost(self) -> float:
        """Same-sample cost estimate ``mean |L_loc|^2``."""
        return self.sum_L2 / self._n()

    def _n(self) -> float:
        if self.n_samples <= 0 or self.total_weight <= 0:
            raise ValueError("accumulator is empty")
        return self.total_weight


def enumerated_accumulator(mpo: MpoAnsatz, model, with_metric: bool = True) -> MonteCarloAccumulator:
    """Exact expectation values: every configuration weighted by ``|<x|rho>|^2``."""
    if mpo.n_sites > obs.MAX_ENUM_SITES:
        raise TooLarge(f"enumeration limited to N <= {obs.MAX_ENUM_SITES}")
    acc = MonteCarloAccumulator(mpo.n_params, with_metric)
    recs = []
    for x in obs.all_configs(mpo.n_sites):
        try:
            recs.append(sample_record(x, mpo, model))
        except ZeroAmplitude:
            continue
    w = np.array([abs(r.amplitude) ** 2 for r in recs])
    acc.add([r.l_loc for r in recs], np.array([r.delta for r in recs]),
            np.array([r.dl_loc for r in recs]), w / w.sum())
    return acc


def gradient(acc: MonteCarloAccumulator) -> np.ndarray:
    """``f_i = E[L_loc conj(dL_i)] - E[conj(Delta_i)] E[|L_loc|^2]``."""
    n = acc._n()
    return acc.sum_LdL / n - (acc.sum_deltaconj / n) * (acc.sum_L2 / n)


def metric_tensor(acc: MonteCarloAccumulator) -> np.ndarray:
    """``S_ij = E[conj(Delta_i) Delta_j] - E[conj(Delta_i)] E[Delta_j]``, exactly Hermitian."""
    if not acc.with_metric:
        raise ValueError("accumulator was built without the metric tensor")
    n = acc._n()
    mean = acc.sum_delta / n
    s = acc.sum_deltaconj_delta / n - np.outer(mean.conj(), mean)
    return 0.5 * (s + s.conj().T)


def regularize(s: np.ndarray, epsilon: float) -> np.ndarray:
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    return s + epsilon * np.eye(s.shape[0])


def solve_update(s_reg: np.ndarray, f: np.ndarray, delta: float) -> np.ndarray:
    """``delta * u`` with ``S_reg u = f`` from a Cholesky factorization."""
    f = np.asarray(f, complex)
    fn = np.linalg.norm(f)
    if fn == 0.0:
        return np.zeros_like(f)
    try:
        factor = sla.cho_factor(s_reg, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolveFailure(f"Cholesky factorization failed: {exc}") from exc
    u = sla.cho_solve(factor, f)
    resid = np.linalg.norm(s_reg @ u - f) / fn
    if not np.isfinite(resid) or resid > SOLVE_RTOL:
        raise SolveFailure(f"relative residual {resid:.3g} exceeds {SOLVE_RTOL:g}")
    return delta * u


def step_schedule(k: int, delta0: float, decay: float) -> float:
    if k < 0:
        raise ValueError("iteration index must be non-negative")
    return delta0 * decay**k


def sr_increment(acc: MonteCarloAccumulator, epsilon: float, delta: float, max_retries: int = 3):
    """SR step with epsilon escalated tenfold on each solver failure; returns (increment, eps used)."""
    f = gradient(acc)
    s = metric_tensor(acc)
    eps = epsilon
    for attempt in range(max_retries + 1):
        try:
            return solve_update(regularize(s, eps), f, delta), eps
        except SolveFailure:
            if attempt == max_retries:
                raise
            logger.warning("SR solve failed with epsilon=%g, retrying with %g", eps, 10 * eps)
            eps *= 10
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    cost: float
    cost_per_site: float
    delta: float
    acceptance_rate: float
    wall_ms: float
    observables: dict
    epsilon: float
    n_samples: int


@dataclass
class OptimizationResult:
    mpo: MpoAnsatz
    trajectory: list = field(default_factory=list)
    chains: list = field(default_factory=list)

    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.trajectory])


class _ChainRunner:
    """Samples and per-sample estimators for one chain, with private scratch space."""

    def __init__(self, state: ChainState, n_sites: int, chi: int):
        self.state = state
        self.ws = Workspace(n_sites, chi)

    def sample(self, mpo: MpoAnsatz, kargs, n_samples: int, n_burn: int):
        st = self.state
        synchronize(st, mpo)
        st.reset_counters()
        burn_in(st, mpo, n_burn)
        n, p = mpo.n_sites, mpo.n_params
        lloc = np.zeros(n_samples, complex)
        amp = np.zeros(n_samples, complex)
        delta = np.zeros((n_samples, p), complex)
        dl = np.zeros((n_samples, p), complex)
        ws = self.ws
        done = 0
        restarts = 0
        while done < n_samples:
            u, r = draw_randoms(st, n_samples - done, n)
            direction, acc, bad = K.run_chain(
                mpo.tensors, st.cfg, st.left, st.right, st.direction, u, r, *kargs,
                lloc[done:], amp[done:], delta[done:], dl[done:],
                ws.env, ws.lb, ws.rb, ws.tmp, ws.tmp2, ws.bmat, ws.g, ws.dg)
            st.direction = direction
            swept = u.shape[0] if bad < 0 else bad + 1
            st.n_sweeps += swept
            st.n_proposed += swept * n
            st.n_accepted += acc
            if bad < 0:
                done = n_samples
            else:
                done += bad
                restarts += 1
                st.n_restarts += 1
                if restarts > 100:
                    raise NaNGuard("chain keeps hitting vanishing amplitudes")
                synchronize(st, mpo)
        st.amplitude = complex(K.trace(st.left[-1]))
        return lloc, delta, dl


def default_threads() -> int:
    env = os.environ.get("VMPOMC_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _check_finite(mpo_params, k, where):
    if not np.all(np.isfinite(mpo_params)):
        bad = int(np.count_nonzero(~np.isfinite(mpo_params)))
        raise NaNGuard(f"iteration {k}: {bad} non-finite entries after {where}; "
                       f"finite max |a| = {np.max(np.abs(np.nan_to_num(mpo_params))):.3g}")


def run_optimization(mpo: MpoAnsatz, model, config: OptimizerConfig, callback=None,
                     chains: list | None = None) -> OptimizationResult:
    """Iterate sampling and parameter updates; returns the final MPO and the trajectory.

    ``callback(record, mpo)`` is invoked after every iteration. Passing the
    ``chains`` of a previous result continues those Markov chains.
    """
    lind = as_local(model)
    if lind.n_sites != mpo.n_sites:
        raise ValueError("model and MPO chain lengths differ")
    kargs = lind.kernel_args()
    result = OptimizationResult(mpo)
    if config.n_iterations == 0:
        return result
    if config.hermitize:
        mpo = normalize_trace(hermitize(mpo))
    if config.exact and mpo.n_sites > obs.MAX_ENUM_SITES:
        raise TooLarge(f"exact optimization limited to N <= {obs.MAX_ENUM_SITES}")
    if chains is None:
        chains = [new_chain(mpo, config.seed, c) for c in range(config.n_chains)]
        first_burn = config.burn_in
    else:
        if len(chains) != config.n_chains:
            raise ValueError("number of supplied chains differs from n_chains")
        first_burn = config.burn_in_per_iteration
    runners = [_ChainRunner(st, mpo.n_sites, mpo.chi) for st in chains]
    result.chains = chains
    sr = config.method == "SR"
    threads = config.threads or default_threads()
    warned = False
    with ThreadPoolExecutor(max_workers=min(threads, len(runners))) as pool:
        for k in range(config.n_iterations):
            t0 = time.perf_counter()
            n_mc = config.n_mc_at(k)
            n_burn = first_burn if k == 0 else config.burn_in_per_iteration
            if sr and not warned and not config.exact and n_mc * config.n_chains < mpo.n_params:
                warnings.warn(f"{n_mc * config.n_chains} samples per iteration for "
                              f"{mpo.n_params} parameters; the metric tensor is rank deficient",
                              RuntimeWarning, stacklevel=2)
                warned = True
            if config.exact:
                acc = enumerated_accumulator(mpo, lind, with_metric=sr)
            else:
                frozen = mpo
                batches = list(pool.map(lambda r: r.sample(frozen, kargs, n_mc, n_burn), runners))
                acc = MonteCarloAccumulator(mpo.n_params, with_metric=sr)
                for lloc, delta, dl in batches:
                    acc.add(lloc, delta, dl)
            step = step_schedule(k, config.delta0, config.decay)
            eps = config.epsilon
            if sr:
                inc, eps = sr_increment(acc, config.epsilon, step, config.max_retries)
            else:
                inc = step * gradient(acc)
            _check_finite(inc, k, "the linear solve")
            new = mpo.params() - inc
            _check_finite(new, k, "the update")
            nxt = MpoAnsatz(new.reshape(mpo.tensors.shape), mpo.n_sites)
            if config.hermitize:
                nxt = hermitize(nxt)
            nxt = normalize_trace(nxt)
            proposed = sum(st.n_proposed for st in chains)
            accepted = sum(st.n_accepted for st in chains)
            record = IterationRecord(
                iteration=k,
                cost=acc.cost,
                cost_per_site=acc.cost / mpo.n_sites,
                delta=step,
                acceptance_rate=accepted / proposed if proposed else float("nan"),
                wall_ms=1e3 * (time.perf_counter() - t0),
                observables=obs.evaluate(mpo, config.observables),
                epsilon=eps,
                n_samples=acc.n_samples,
            )
            result.trajectory.append(record)
            mpo = nxt
            result.mpo = mpo
            if callback is not None:
                callback(record, mpo)
    return result
