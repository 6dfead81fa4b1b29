"""Metropolis Monte Carlo: single steps, hitting times, exit-time
experiments, barrier fits and gate-passage experiments.

Two models share one contract.  ``LandscapeModel`` runs the chain of an
explicit landscape (states are ids); ``BlumeCapelModel`` runs single-flip
dynamics on the torus (states are spin arrays).  Target and gate sets are
given as state ids for the former and as collections of configurations
for the latter; ``BlumeCapelModel`` tests membership through a Zobrist
hash kept up to date flip by flip and confirms every hash hit by a full
comparison.

Every replica owns a ``Philox`` stream keyed by ``(seed, beta index,
replica)`` through ``SeedSequence``, so results do not depend on the order
in which replicas are run.  Each step draws one uniform for the proposal
and, only for uphill moves, a second one for acceptance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numba import njit
from scipy import stats as sps

from .blume_capel import ModelParams, as_config
from .capacity import edge_weights
from .landscape import EnergyLandscape

DEFAULT_CAP = 10 ** 9


class SimulationError(ValueError):
    pass


def replica_rng(seed: int, beta_index: int, replica: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, beta_index, replica])))


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _landscape_run(state, indptr, indices, cum_q, cost, acc, n_steps,
                   target, gate, stop_on_gate, rng):
    """Advance up to ``n_steps``.  Returns (state, steps, hit, gate_step);
    stops at the first visit to ``target`` (and to ``gate`` if asked)."""
    gate_step = 0 if gate[state] else -1
    if target[state]:
        return state, 0, True, gate_step
    if gate_step == 0 and stop_on_gate:
        return state, 0, False, gate_step
    t = 0
    while t < n_steps:
        t += 1
        u = rng.random()
        lo, hi = indptr[state], indptr[state + 1]
        k = lo
        while k < hi and u >= cum_q[k]:
            k += 1
        if k == hi:
            continue  # holding
        if cost[k] > 0.0 and rng.random() >= acc[k]:
            continue
        state = indices[k]
        if gate_step < 0 and gate[state]:
            gate_step = t
            if stop_on_gate:
                return state, t, False, gate_step
        if target[state]:
            return state, t, True, gate_step
    return state, t, False, gate_step


@njit(cache=True)
def _lookup(hashes, configs, key, spins):
    lo, hi = 0, hashes.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if hashes[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    while lo < hashes.shape[0] and hashes[lo] == key:
        same = True
        for i in range(spins.shape[0]):
            if configs[lo, i] != spins[i]:
                same = False
                break
        if same:
            return True
        lo += 1
    return False


@njit(cache=True)
def _in_set(counts_ok, hashes, configs, n0, np_, key, spins):
    if hashes.shape[0] == 0 or not counts_ok[n0, np_]:
        return False
    return _lookup(hashes, configs, key, spins)


@njit(cache=True)
def _bc_run(spins, nbr, delta, acc, n_steps, zob,
            t_ok, t_hash, t_conf, g_ok, g_hash, g_conf, stop_on_gate, rng):
    """Single-flip Metropolis on the torus, in place on ``spins``."""
    V = spins.shape[0]
    n0 = 0
    np_ = 0
    key = np.uint64(0)
    for i in range(V):
        s = spins[i]
        if s == 0:
            n0 += 1
        elif s == 1:
            np_ += 1
        key ^= zob[i, s + 1]
    gate_step = 0 if _in_set(g_ok, g_hash, g_conf, n0, np_, key, spins) else -1
    if _in_set(t_ok, t_hash, t_conf, n0, np_, key, spins):
        return 0, True, gate_step
    if gate_step == 0 and stop_on_gate:
        return 0, False, gate_step
    t = 0
    while t < n_steps:
        t += 1
        k = int(rng.random() * (2 * V))
        site = k // 2
        old = spins[site]
        # the two other values in increasing order
        if old == -1:
            new = 0 if k % 2 == 0 else 1
        elif old == 0:
            new = -1 if k % 2 == 0 else 1
        else:
            new = -1 if k % 2 == 0 else 0
        bond = 0
        for m in range(4):
            sj = spins[nbr[site, m]]
            bond += (new - sj) * (new - sj) - (old - sj) * (old - sj)
        if delta[bond + 16, old + 1, new + 1] > 0.0 and rng.random() >= acc[bond + 16, old + 1, new + 1]:
            continue
        spins[site] = new
        key ^= zob[site, old + 1] ^ zob[site, new + 1]
        if old == 0:
            n0 -= 1
        elif old == 1:
            np_ -= 1
        if new == 0:
            n0 += 1
        elif new == 1:
            np_ += 1
        if gate_step < 0 and _in_set(g_ok, g_hash, g_conf, n0, np_, key, spins):
            gate_step = t
            if stop_on_gate:
                return t, False, gate_step
        if _in_set(t_ok, t_hash, t_conf, n0, np_, key, spins):
            return t, True, gate_step
    return t, False, gate_step


# ---------------------------------------------------------------------------
# models


class LandscapeModel:
    """Metropolis chain on an explicit landscape; ``q_spec`` as in
    :func:`metaland.capacity.edge_weights`."""

    def __init__(self, landscape: EnergyLandscape, q_spec="uniform"):
        self.landscape = landscape
        q = edge_weights(landscape, q_spec)
        # per CSR entry: cumulative proposal probability and directed cost
        qd = q[landscape._csr[4]]
        self.cum_q = np.empty_like(qd)
        for x in range(landscape.n_states):
            lo, hi = landscape.indptr[x], landscape.indptr[x + 1]
            self.cum_q[lo:hi] = np.cumsum(qd[lo:hi])
        if (self.cum_q > 1 + 1e-12).any():
            raise SimulationError("row sum of q exceeds 1")
        self.cost = np.asarray(landscape.out_costs, dtype=float)

    def mask(self, states) -> np.ndarray:
        m = np.zeros(self.landscape.n_states, dtype=np.bool_)
        if states is not None:
            idx = np.fromiter((int(s) for s in states), dtype=np.int64)
            m[idx] = True
        return m

    def prepare(self, spec):
        if isinstance(spec, np.ndarray) and spec.dtype == np.bool_:
            return spec
        return self.mask(spec)

    def run(self, state, beta, n_steps, target, gate, stop_on_gate, rng):
        land = self.landscape
        acc = np.exp(-float(beta) * self.cost)
        s, t, hit, g = _landscape_run(int(state), land.indptr, land.indices, self.cum_q,
                                      self.cost, acc, int(n_steps), target, gate,
                                      stop_on_gate, rng)
        return int(s), int(t), bool(hit), int(g)

    def copy_state(self, state):
        return int(state)


@dataclass(frozen=True)
class ConfigSet:
    """Compiled membership table for a set of configurations."""

    counts_ok: np.ndarray
    hashes: np.ndarray
    configs: np.ndarray
    size: int


class BlumeCapelModel:
    def __init__(self, params: ModelParams, zobrist_seed: int = 0x5EED):
        self.params = params
        L = params.L
        V = L * L
        self.nbr = np.empty((V, 4), dtype=np.int64)
        for i in range(V):
            r, c = divmod(i, L)
            self.nbr[i] = (r * L + (c + 1) % L, r * L + (c - 1) % L,
                           ((r + 1) % L) * L + c, ((r - 1) % L) * L + c)
        # energy change of a flip old -> new whose four bond terms change by b:
        # delta[b + 16, old + 1, new + 1]
        b = np.arange(-16, 17, dtype=float)[:, None, None]
        sp = np.arange(-1, 2, dtype=float)
        old, new = sp[None, :, None], sp[None, None, :]
        self.delta = b - params.lam * (new * new - old * old) - params.h * (new - old)
        rng = np.random.Generator(np.random.Philox(zobrist_seed))
        self.zob = rng.integers(0, 2 ** 63, size=(V, 3), dtype=np.uint64) * np.uint64(2) + \
            rng.integers(0, 2, size=(V, 3), dtype=np.uint64)

    def config_set(self, configs) -> ConfigSet:
        V = self.params.volume
        rows = [as_config(c, self.params).reshape(-1) for c in (configs or [])]
        ok = np.zeros((V + 1, V + 1), dtype=np.bool_)
        if not rows:
            return ConfigSet(ok, np.zeros(0, np.uint64), np.zeros((0, V), np.int8), 0)
        arr = np.unique(np.stack(rows), axis=0).astype(np.int8)
        keys = np.zeros(arr.shape[0], dtype=np.uint64)
        for i in range(V):
            keys ^= self.zob[i, arr[:, i].astype(np.int64) + 1]
        order = np.argsort(keys, kind="stable")
        for row in arr:
            ok[int(np.count_nonzero(row == 0)), int(np.count_nonzero(row == 1))] = True
        return ConfigSet(ok, keys[order], arr[order], arr.shape[0])

    def prepare(self, spec):
        return spec if isinstance(spec, ConfigSet) else self.config_set(spec)

    def run(self, state, beta, n_steps, target, gate, stop_on_gate, rng):
        spins = np.ascontiguousarray(as_config(state, self.params).reshape(-1)).copy()
        p = self.params
        acc = np.exp(-float(beta) * np.maximum(self.delta, 0.0))
        t, hit, g = _bc_run(spins, self.nbr, self.delta, acc, int(n_steps),
                            self.zob, target.counts_ok, target.hashes, target.configs,
                            gate.counts_ok, gate.hashes, gate.configs, stop_on_gate, rng)
        return spins.reshape(p.L, p.L), int(t), bool(hit), int(g)

    def copy_state(self, state):
        return as_config(state, self.params).copy()


def _empty(model):
    return model.prepare(None)


# ---------------------------------------------------------------------------
# single runs


def simulate_step(model, state, rng: np.random.Generator, beta: float):
    """One Metropolis transition."""
    e = _empty(model)
    return model.run(state, beta, 1, e, e, False, rng)[0]


def simulate(model, state, rng, beta: float, n_steps: int):
    e = _empty(model)
    return model.run(state, beta, n_steps, e, e, False, rng)[0]


@dataclass(frozen=True)
class HittingResult:
    steps: int
    censored: bool


def hitting_time(model, start, target, cap: int, rng, beta: float) -> HittingResult:
    """Steps until the chain first enters ``target`` (0 if it starts there);
    censored at ``cap``."""
    if cap < 1:
        raise SimulationError("cap must be at least 1")
    tgt = model.prepare(target)
    _, t, hit, _ = model.run(start, beta, cap, tgt, _empty(model), False, rng)
    return HittingResult(t, not hit)


# ---------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class SimConfig:
    betas: tuple
    replicas: int
    seed: int
    cap: int | None = None
    gamma_hat: float | None = None

    def __post_init__(self):
        b = tuple(float(x) for x in self.betas)
        object.__setattr__(self, "betas", b)
        if not b:
            raise SimulationError("need at least one beta")
        if any(y <= x for x, y in zip(b, b[1:])):
            raise SimulationError("betas must be strictly increasing")
        if int(self.replicas) < 1:
            raise SimulationError("replicas must be at least 1")
        if self.cap is not None and int(self.cap) < 1:
            raise SimulationError("step cap must be at least 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise SimulationError("seed must be a 64-bit unsigned integer")

    def cap_for(self, beta: float) -> int:
        if self.cap is not None:
            return int(self.cap)
        if self.gamma_hat is not None:
            return int(min(100 * math.exp(beta * self.gamma_hat), 2 ** 62))
        return DEFAULT_CAP


@dataclass(frozen=True)
class BetaStats:
    beta: float
    n: int
    censored: int
    mean_tau: float
    median_tau: float
    ln_mean: float

    @property
    def usable(self) -> bool:
        return self.censored < self.n


@dataclass(frozen=True)
class ExitTimeStats:
    rows: tuple
    slope: float
    stderr: float
    intercept: float
    excluded: tuple  # betas with every replica censored
    times: tuple = field(repr=False, default=())  # per-beta arrays, -1 = censored

    def to_csv(self) -> str:
        lines = ["beta,n,censored,mean_tau,median_tau,ln_mean"]
        for r in self.rows:
            lines.append(f"{r.beta:.12g},{r.n},{r.censored},{r.mean_tau:.17g},"
                         f"{r.median_tau:.17g},{r.ln_mean:.17g}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {"slope": self.slope, "stderr": self.stderr, "intercept": self.intercept,
                "excluded_betas": list(self.excluded),
                "censored": {f"{r.beta:.12g}": r.censored for r in self.rows}}

    def to_json(self, **kw) -> str:
        return json.dumps(self.summary(), **kw)


def _beta_stats(beta: float, times: np.ndarray) -> BetaStats:
    ok = times[times >= 0]
    n = times.size
    if ok.size == 0:
        return BetaStats(beta, n, n, math.nan, math.nan, math.nan)
    # integer sum: identical whatever order the replicas finished in
    mean = int(ok.sum()) / ok.size
    return BetaStats(beta, n, n - ok.size, mean, float(np.median(ok)),
                     math.log(mean) if mean > 0 else -math.inf)


def _fit(betas, ln_means):
    if len(betas) < 3:
        raise SimulationError(f"need at least 3 uncensored beta points, got {len(betas)}")
    b = np.asarray(betas, float)
    y = np.asarray(ln_means, float)
    if np.ptp(y) == 0:
        return 0.0, 0.0, float(y[0])
    res = sps.linregress(b, y)
    return float(res.slope), float(res.stderr), float(res.intercept)


def run_replicas(model, start, beta: float, beta_index: int, replicas: Iterable[int], seed: int,
                 cap: int, target, gate=None, stop_on_gate: bool = False) -> dict:
    """Map replica id -> (steps, hit, gate_step)."""
    tgt = model.prepare(target)
    gt = model.prepare(gate)
    out = {}
    for r in replicas:
        _, t, hit, g = model.run(model.copy_state(start), beta, cap, tgt, gt, stop_on_gate,
                                 replica_rng(seed, beta_index, r))
        out[int(r)] = (t, hit, g)
    return out


def exit_time_experiment(model, start, target, config: SimConfig, order=None) -> ExitTimeStats:
    """Independent replicas per beta; ``order`` permutes the replica
    schedule (results must not depend on it)."""
    tgt = model.prepare(target)
    rows, all_times = [], []
    for bi, beta in enumerate(config.betas):
        ids = list(range(config.replicas)) if order is None else list(order)
        res = run_replicas(model, start, beta, bi, ids, config.seed, config.cap_for(beta), tgt)
        times = np.array([res[r][0] if res[r][1] else -1 for r in range(config.replicas)],
                         dtype=np.int64)
        all_times.append(times)
        rows.append(_beta_stats(beta, times))
    usable = [r for r in rows if r.usable]
    excluded = tuple(r.beta for r in rows if not r.usable)
    if len(usable) >= 3:
        slope, se, icpt = _fit([r.beta for r in usable], [r.ln_mean for r in usable])
    else:
        slope = se = icpt = math.nan
    return ExitTimeStats(tuple(rows), slope, se, icpt, excluded, tuple(all_times))


def estimate_barrier(stats) -> tuple[float, float]:
    """Least-squares slope of ln(mean tau) against beta, with its standard
    error.  Accepts ExitTimeStats or a sequence of (beta, mean_tau)."""
    if isinstance(stats, ExitTimeStats):
        pts = [(r.beta, r.ln_mean) for r in stats.rows if r.usable]
    else:
        pts = [(float(b), math.log(m)) for b, m in stats]
    slope, se, _ = _fit([p[0] for p in pts], [p[1] for p in pts])
    return slope, se


@dataclass(frozen=True)
class GateStats:
    beta: float
    fraction: float
    n: int  # replicas that reached a verdict
    censored: int

    def to_csv(self) -> str:
        return ("beta,fraction,n,censored\n"
                f"{self.beta:.12g},{self.fraction:.17g},{self.n},{self.censored}\n")


def gate_passage_experiment(model, start, gate, target, beta: float, replicas: int, seed: int,
                            cap: int = DEFAULT_CAP, beta_index: int = 0) -> GateStats:
    """Fraction of replicas that enter ``gate`` strictly before ``target``.

    A replica stops as soon as either set is reached; those stopped by the
    cap are reported as censored and left out of the fraction."""
    res = run_replicas(model, start, beta, beta_index, range(replicas), seed, cap,
                       target, gate, stop_on_gate=True)
    first, decided = 0, 0
    for t, hit, g in res.values():
        if g >= 0:
            first += 1
            decided += 1
        elif hit:
            decided += 1
    return GateStats(float(beta), first / decided if decided else math.nan, decided,
                     replicas - decided)


def gate_passage_csv(rows: Sequence[GateStats]) -> str:
    lines = ["beta,fraction,n,censored"]
    lines += [f"{r.beta:.12g},{r.fraction:.17g},{r.n},{r.censored}" for r in rows]
    return "\n".join(lines) + "\n"


def occupation(model: LandscapeModel, start: int, beta: float, n_steps: int, seed: int) -> np.ndarray:
    """Visit counts of the states after each of ``n_steps`` steps of one run."""
    return _occupation(int(start), model.landscape.indptr, model.landscape.indices, model.cum_q,
                       model.cost, np.exp(-float(beta) * model.cost), int(n_steps),
                       model.landscape.n_states,
                       replica_rng(seed, 0, 0))


@njit(cache=True)
def _occupation(state, indptr, indices, cum_q, cost, acc, n_steps, n, rng):
    counts = np.zeros(n, dtype=np.int64)
    for _ in range(n_steps):
        u = rng.random()
        lo, hi = indptr[state], indptr[state + 1]
        k = lo
        while k < hi and u >= cum_q[k]:
            k += 1
        if k < hi:
            if not (cost[k] > 0.0 and rng.random() >= acc[k]):
                state = indices[k]
        counts[state] += 1
    return counts
