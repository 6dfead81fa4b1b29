"""Finite-temperature Metropolis chains on an energy landscape: Gibbs
measure, Dirichlet form, equilibrium potentials and capacities.

Off-diagonal transitions are ``p(x, y) = q(x, y) exp(-beta * Delta(x, y))``
and the diagonal takes the remainder.  ``q`` is symmetric and supported on
the landscape edges; whatever is left of a row of ``q`` sits on the
diagonal, so a row of ``q`` including ``q(x, x)`` sums to one.

Everything that can under- or overflow is kept in logs.  Edge conductances
``mu(x) p(x, y) = q exp(-beta w) / Z`` (``w`` the edge height) are stored
relative to the lowest edge height, which leaves linear systems well scaled.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import logsumexp

from .landscape import TOL, EnergyLandscape, LandscapeError, communication_height_sets

DENSE_MAX = 2000
CG_RTOL = 1e-12
GMRES_RTOL = 1e-14
ROW_TOL = 1e-12


class CapacityError(LandscapeError):
    pass


def _as_set(states: Iterable[int], n: int, name: str) -> np.ndarray:
    idx = np.unique(np.fromiter((int(s) for s in states), dtype=np.int64))
    if idx.size == 0:
        raise CapacityError(f"{name} must be nonempty")
    if idx[0] < 0 or idx[-1] >= n:
        raise CapacityError(f"{name} has a state out of range")
    return idx


# ---------------------------------------------------------------------------
# chain


def edge_weights(land: EnergyLandscape, q_spec="uniform") -> np.ndarray:
    """Per-edge connectivity weights (aligned with ``land.edges``).

    ``q_spec`` may be ``"uniform"`` (``1 / max degree``), a scalar, a
    length-``M`` array, or a dict keyed by ``(i, j)`` pairs (either order)
    that must cover exactly the edges."""
    m = land.n_edges
    if isinstance(q_spec, str):
        if q_spec != "uniform":
            raise CapacityError(f"unknown q spec {q_spec!r}")
        deg = np.diff(land.indptr)
        return np.full(m, 1.0 / max(int(deg.max(initial=0)), 1))
    if isinstance(q_spec, dict):
        key = {(min(i, j), max(i, j)): k for k, (i, j) in enumerate(land.edges.tolist())}
        q = np.full(m, np.nan)
        for (i, j), v in q_spec.items():
            k = key.get((min(i, j), max(i, j)))
            if k is None:
                raise CapacityError(f"q is positive on non-edge ({i}, {j})")
            if not math.isnan(q[k]) and q[k] != v:
                raise CapacityError(f"q is not symmetric on ({i}, {j})")
            q[k] = v
        if np.isnan(q).any():
            k = int(np.flatnonzero(np.isnan(q))[0])
            raise CapacityError(f"q missing on edge {tuple(land.edges[k].tolist())}")
        return q
    q = np.asarray(q_spec, dtype=float)
    if q.ndim == 0:
        return np.full(m, float(q))
    if q.shape != (m,):
        raise CapacityError(f"expected {m} edge weights, got shape {q.shape}")
    return q.copy()


@dataclass(frozen=True, eq=False)
class ChainSpec:
    landscape: EnergyLandscape
    q: np.ndarray  # per undirected edge
    beta: float

    @property
    def n_states(self) -> int:
        return self.landscape.n_states

    @cached_property
    def _directed(self):
        """Directed edge list (src, dst, log p) with p = q exp(-beta Delta)."""
        land = self.landscape
        e = land.edges
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        cost = np.concatenate([land.directed_costs[:, 0], land.directed_costs[:, 1]])
        qq = np.concatenate([self.q, self.q])
        with np.errstate(divide="ignore"):
            logp = np.log(qq) - self.beta * cost
        return src, dst, logp

    @cached_property
    def diagonal(self) -> np.ndarray:
        src, _, logp = self._directed
        return 1.0 - np.bincount(src, weights=np.exp(logp), minlength=self.n_states)

    def transition_matrix(self, dense: bool | None = None):
        src, dst, logp = self._directed
        n = self.n_states
        P = sp.csr_matrix((np.exp(logp), (src, dst)), shape=(n, n)) + sp.diags(self.diagonal)
        if dense or (dense is None and n <= DENSE_MAX):
            return P.toarray()
        return P.tocsr()

    @cached_property
    def _conductance(self):
        """(w_min, c) with c_e = q_e exp(-beta (w_e - w_min)), so that
        mu(x) p(x, y) = c_e exp(-beta w_min) / Z."""
        w = self.landscape.edge_heights
        wmin = float(w.min()) if w.size else 0.0
        with np.errstate(divide="ignore"):
            c = np.exp(np.log(self.q) - self.beta * (w - wmin))
        return wmin, c

    @cached_property
    def gibbs(self) -> "GibbsMeasure":
        return gibbs_measure(self.landscape, self.beta)

    def detailed_balance_residual(self) -> float:
        """Largest relative mismatch of mu(x) p(x, y) against mu(y) p(y, x)."""
        src, dst, logp = self._directed
        logmu = self.gibbs.log_probabilities
        m = self.landscape.n_edges
        a = logmu[src[:m]] + logp[:m]
        b = logmu[dst[:m]] + logp[m:]
        ok = np.isfinite(a) | np.isfinite(b)
        if not ok.any():
            return 0.0
        return float(np.max(np.abs(np.expm1(a[ok] - b[ok]))))


def build_chain(land: EnergyLandscape, q_spec="uniform", beta: float = 1.0, *,
                full_rows: bool = False) -> ChainSpec:
    """Metropolis-type chain at inverse temperature ``beta``.

    With ``full_rows`` the off-diagonal part of every row of ``q`` must sum
    to exactly one (no holding in ``q`` itself)."""
    if not beta > 0:
        raise CapacityError("beta must be positive")
    q = edge_weights(land, q_spec)
    if (q <= 0).any() or not np.isfinite(q).all():
        raise CapacityError("q must be positive on every edge")
    e = land.edges
    rows = np.bincount(e[:, 0], weights=q, minlength=land.n_states) + \
        np.bincount(e[:, 1], weights=q, minlength=land.n_states)
    if (rows > 1 + ROW_TOL).any():
        x = int(np.argmax(rows))
        raise CapacityError(f"row sum of q exceeds 1 at state {x} ({rows[x]:.15g})")
    if full_rows and (np.abs(rows - 1) > ROW_TOL).any():
        x = int(np.argmax(np.abs(rows - 1)))
        raise CapacityError(f"row sum of q is {rows[x]:.15g} != 1 at state {x}")
    chain = ChainSpec(land, q, float(beta))
    if (chain.diagonal < -ROW_TOL).any():
        raise CapacityError("q inconsistent with Delta: negative holding probability")
    return chain


# ---------------------------------------------------------------------------
# measure and form


@dataclass(frozen=True, eq=False)
class GibbsMeasure:
    beta: float
    log_probabilities: np.ndarray
    log_z: float

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_probabilities)

    def log_mass(self, states) -> float:
        idx = list(states)
        return float(logsumexp(self.log_probabilities[idx])) if idx else -math.inf

    def mass(self, states) -> float:
        return math.exp(self.log_mass(states))


def gibbs_measure(land: EnergyLandscape, beta: float) -> GibbsMeasure:
    if beta < 0:
        raise CapacityError("beta must be nonnegative")
    a = -beta * land.energy
    log_z = float(logsumexp(a))
    return GibbsMeasure(float(beta), a - log_z, log_z)


def _log_form(chain: ChainSpec, h: np.ndarray) -> float:
    wmin, c = chain._conductance
    e = chain.landscape.edges
    s = float(np.sum(c * (h[e[:, 0]] - h[e[:, 1]]) ** 2))
    if s == 0:
        return -math.inf
    return math.log(s) - chain.beta * wmin - chain.gibbs.log_z


def dirichlet_form(chain: ChainSpec, h) -> float:
    h = np.asarray(h, dtype=float)
    if h.shape != (chain.n_states,):
        raise CapacityError("h must have one value per state")
    return math.exp(_log_form(chain, h))


# ---------------------------------------------------------------------------
# linear solves


def _conductances(chain: ChainSpec, dense: bool):
    _, c = chain._conductance
    e = chain.landscape.edges
    n = chain.n_states
    if dense:
        C = np.zeros((n, n))
        C[e[:, 0], e[:, 1]] = c
        C[e[:, 1], e[:, 0]] = c
        return C
    return sp.csr_matrix((np.concatenate([c, c]), (np.concatenate([e[:, 0], e[:, 1]]),
                                                  np.concatenate([e[:, 1], e[:, 0]]))), shape=(n, n))


def _eliminate(C: np.ndarray, fixed: np.ndarray, values: np.ndarray, source: np.ndarray) -> np.ndarray:
    """Solve ``sum_j C[x, j] (u[x] - u[j]) = source[x]`` off ``fixed`` by
    star-mesh elimination; ``values`` and ``source`` may carry several
    columns.

    Every update adds nonnegative terms and every pivot is a sum of
    conductances, so nothing cancels: the result is accurate entrywise even
    when conductances span hundreds of orders of magnitude."""
    n = C.shape[0]
    W = C.copy()
    b = np.array(source, dtype=float, copy=True)
    alive = np.ones(n, dtype=bool)
    is_fixed = np.zeros(n, dtype=bool)
    is_fixed[fixed] = True
    steps = []
    for k in np.flatnonzero(~is_fixed):
        alive[k] = False
        idx = np.flatnonzero(alive)
        w = W[k, idx]
        d = w.sum()
        if not d > 0:
            raise CapacityError("singular system: a state cannot reach the boundary")
        nz = np.flatnonzero(w)
        sub = idx[nz]
        r = w[nz] / d
        W[np.ix_(sub, sub)] += np.outer(w[nz], r)
        W[sub, sub] = 0.0
        b[sub] += np.multiply.outer(r, b[k])
        steps.append((k, sub, r, b[k] / d))
    u = np.zeros((n,) + b.shape[1:])
    u[fixed] = values
    for k, sub, r, s0 in reversed(steps):
        u[k] = s0 + r @ u[sub]
    return u


def _conductance_solve(chain: ChainSpec, fixed, values, source=None) -> np.ndarray:
    """Harmonic extension (``source = 0``) or Poisson solve for the
    conductance Laplacian with Dirichlet data on ``fixed``.  Direct
    elimination up to DENSE_MAX free states, Jacobi-preconditioned
    conjugate gradients above."""
    n = chain.n_states
    fixed = np.asarray(fixed)
    values = np.asarray(values, dtype=float)
    source = np.zeros((n,) + values.shape[1:]) if source is None else np.asarray(source, dtype=float)
    free = np.setdiff1d(np.arange(n), fixed)
    if free.size <= DENSE_MAX:
        return _eliminate(_conductances(chain, True), fixed, values, source)
    W = _conductances(chain, False)
    Lap = (sp.diags(np.asarray(W.sum(axis=1)).ravel()) - W).tocsr()
    A = Lap[free][:, free]
    d = A.diagonal()
    if (d <= 0).any():
        raise CapacityError("singular system: isolated state")
    u = np.zeros(source.shape)
    u[fixed] = values
    rhs = source[free] - Lap[free][:, fixed] @ u[fixed]
    cols = rhs.reshape(free.size, -1)
    out = np.empty_like(cols)
    for c in range(cols.shape[1]):
        x, info = spla.cg(A, cols[:, c], rtol=CG_RTOL, atol=0.0, maxiter=50 * free.size,
                          M=sp.diags(1.0 / d))
        if info != 0:
            raise CapacityError(f"conjugate gradients did not converge (info={info})")
        out[:, c] = x
    u[free] = out.reshape(rhs.shape)
    return u


def _general_solve(A, b: np.ndarray) -> np.ndarray:
    if b.size == 0:
        return b.copy()
    if b.size <= DENSE_MAX:
        A = A.toarray() if sp.issparse(A) else A
        try:
            return sla.solve(A, b)
        except sla.LinAlgError as exc:
            raise CapacityError(f"singular system: {exc}") from None
    A = A.tocsc()
    try:
        ilu = spla.spilu(A, drop_tol=1e-6, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve)
    except RuntimeError:  # exactly singular pivot in the incomplete factors
        M = None
    x, info = spla.gmres(A, b, rtol=GMRES_RTOL, atol=0.0, restart=100,
                         maxiter=50 * b.size, M=M)
    if info != 0:
        raise CapacityError(f"GMRES did not converge (info={info})")
    return x


def _boundary(chain: ChainSpec, A, B):
    n = chain.n_states
    a = _as_set(A, n, "A")
    b = _as_set(B, n, "B")
    if np.intersect1d(a, b).size:
        raise CapacityError("A and B must be disjoint")
    interior = np.setdiff1d(np.arange(n), np.union1d(a, b))
    return a, b, interior


def _potential_pair(chain: ChainSpec, A, B) -> np.ndarray:
    """Columns ``h*_{A,B}`` and ``h*_{B,A}``, solved together so that each
    is accurate near zero."""
    a, b, _ = _boundary(chain, A, B)
    fixed = np.union1d(a, b)
    vals = np.zeros((fixed.size, 2))
    vals[np.isin(fixed, a), 0] = 1.0
    vals[np.isin(fixed, b), 1] = 1.0
    u = _conductance_solve(chain, fixed, vals, np.zeros((chain.n_states, 2)))
    return np.clip(u, 0.0, 1.0, out=u)  # weights sum to one only up to rounding


def potential_harmonic(chain: ChainSpec, A, B) -> np.ndarray:
    """Minimizer of the Dirichlet form with h = 1 on A and h = 0 on B, from
    the symmetric conductance Laplacian."""
    return _potential_pair(chain, A, B)[:, 0]


def _jump_matrix(chain: ChainSpec) -> sp.csr_matrix:
    """Embedded jump chain ``p(x, y) / (1 - p(x, x))``, normalized in logs so
    that rows stay well scaled however small the escape probability."""
    src, dst, logp = chain._directed
    n = chain.n_states
    s, lp = src, logp
    top = np.full(n, -np.inf)
    np.maximum.at(top, s, lp)
    lse = top + np.log(np.bincount(s, weights=np.exp(lp - top[s]), minlength=n)
                       .clip(min=np.finfo(float).tiny))
    return sp.csr_matrix((np.exp(logp - lse[src]), (src, dst)), shape=(n, n))


def _state_reduction(R: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Censor the jump chain ``R`` (rows sum to one off the diagonal) onto
    ``keep`` by removing the other states one at a time.  The escape
    probability of a removed state is the sum of its off-diagonal entries
    rather than ``1 - R[k, k]``, so no cancellation occurs.  Returns the
    reduced matrix together with the removal record for back substitution."""
    R = R.copy()
    np.fill_diagonal(R, 0.0)
    n = R.shape[0]
    alive = np.ones(n, dtype=bool)
    kept = np.zeros(n, dtype=bool)
    kept[keep] = True
    record = []
    for k in np.flatnonzero(~kept):
        alive[k] = False
        idx = np.flatnonzero(alive)
        out = R[k, idx]
        esc = out.sum()
        if not esc > 0:
            raise CapacityError("singular system: a state cannot reach the absorbing set")
        row = out / esc
        into = R[idx, k]
        src = np.flatnonzero(into)
        if src.size:
            R[np.ix_(idx[src], idx)] += np.outer(into[src], row)
            R[idx[src], idx[src]] = 0.0
        record.append((k, idx, row))
    return R, record


def potential_absorbing(chain: ChainSpec, A, B) -> np.ndarray:
    """``P_x(tau_A < tau_B)`` from the absorbing chain.

    Holding steps do not change which set is hit first, so the embedded
    jump chain is used; A and B are made absorbing and the remaining states
    are removed by state reduction, then ``h(k) = sum_j r(k, j) h(j)`` is
    rebuilt backwards.  Large chains fall back to ILU-preconditioned GMRES on
    ``(I - Q) h = R 1``."""
    a, b, inner = _boundary(chain, A, B)
    h = np.zeros(chain.n_states)
    h[a] = 1.0
    if not inner.size:
        return h
    P = _jump_matrix(chain)
    if inner.size <= DENSE_MAX:
        _, record = _state_reduction(P.toarray(), np.union1d(a, b))
        for k, idx, row in reversed(record):
            h[k] = min(row @ h[idx], 1.0)
        return h
    Q = P[inner][:, inner]
    rhs = np.asarray(P[inner][:, a].sum(axis=1)).ravel()
    h[inner] = np.clip(_general_solve(sp.identity(inner.size, format="csr") - Q, rhs), 0.0, 1.0)
    return h


@dataclass(frozen=True)
class PotentialCheck:
    potential: np.ndarray
    absorbing: np.ndarray
    residual: float  # largest entrywise relative difference

    @property
    def ok(self) -> bool:
        return self.residual <= 1e-10


def equilibrium_potential(chain: ChainSpec, A, B, *, cross_check: bool = False):
    """``h*_{A,B}``; with ``cross_check`` also the absorbing-chain route and
    the normwise difference between the two."""
    h = potential_harmonic(chain, A, B)
    if not cross_check:
        return h
    g = potential_absorbing(chain, A, B)
    return PotentialCheck(h, g, relative_difference(h, g))


def relative_difference(u: np.ndarray, v: np.ndarray, floor: float = 1e-290) -> float:
    """Max over entries of ``|u - v| / max(|u|, |v|)``; entries where both
    are below ``floor`` count as equal."""
    m = np.maximum(np.abs(u), np.abs(v))
    big = m > floor
    if not big.any():
        return 0.0
    return float(np.max(np.abs(u[big] - v[big]) / m[big]))


# ---------------------------------------------------------------------------
# capacity


@dataclass(frozen=True, eq=False)
class CapacityResult:
    A: list
    B: list
    beta: float
    log_capacity: float
    potential: np.ndarray

    @property
    def capacity(self) -> float:
        return math.exp(self.log_capacity)

    def to_dict(self) -> dict:
        return {"A": self.A, "B": self.B, "beta": self.beta, "capacity": self.capacity,
                "log_capacity": self.log_capacity, "potential": self.potential.tolist()}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _log_form_pair(chain: ChainSpec, hh: np.ndarray) -> float:
    """Dirichlet form of ``hh[:, 0]`` where ``hh[:, 1]`` is its complement;
    each edge difference is read off the column with smaller values."""
    wmin, c = chain._conductance
    e = chain.landscape.edges
    x, y = e[:, 0], e[:, 1]
    use_h = np.maximum(hh[x, 0], hh[y, 0]) <= np.maximum(hh[x, 1], hh[y, 1])
    diff = np.where(use_h, hh[x, 0] - hh[y, 0], hh[y, 1] - hh[x, 1])
    s = float(np.sum(c * diff ** 2))
    if s == 0:
        return -math.inf
    return math.log(s) - chain.beta * wmin - chain.gibbs.log_z


def capacity_of(chain: ChainSpec, A, B) -> CapacityResult:
    hh = _potential_pair(chain, A, B)
    return CapacityResult(sorted(int(x) for x in set(A)), sorted(int(x) for x in set(B)),
                          chain.beta, _log_form_pair(chain, hh), hh[:, 0])


def log_capacity(chain: ChainSpec, A, B) -> float:
    return capacity_of(chain, A, B).log_capacity


# ---------------------------------------------------------------------------
# bounds and metastability diagnostics


@dataclass(frozen=True)
class BoundsProbe:
    betas: np.ndarray
    log_g: np.ndarray
    phi: float

    @property
    def g(self) -> np.ndarray:
        return np.exp(self.log_g)

    @property
    def g_min(self) -> float:
        return float(np.exp(self.log_g.min()))

    @property
    def g_max(self) -> float:
        return float(np.exp(self.log_g.max()))

    @property
    def final_slope(self) -> float:
        return float(abs((self.log_g[-1] - self.log_g[-2]) / (self.betas[-1] - self.betas[-2])))

    @property
    def bounded(self) -> bool:
        return bool(np.isfinite(self.log_g).all()) and 0 < self.g_min <= self.g_max < math.inf

    def to_csv(self) -> str:
        lines = ["beta,g,log_g"]
        for b, lg in zip(self.betas, self.log_g):
            lines.append(f"{b:.12g},{math.exp(lg) if lg < 700 else math.inf:.17g},{lg:.17g}")
        return "\n".join(lines) + "\n"


def easy_bounds_probe(land: EnergyLandscape, q_spec, A, B, beta_grid) -> BoundsProbe:
    """``g(beta) = exp(beta Phi(A, B)) Z CAP(A, B)`` over a grid, in logs."""
    betas = np.asarray(list(beta_grid), dtype=float)
    if betas.size < 4:
        raise CapacityError("beta grid needs at least 4 points")
    if (np.diff(betas) <= 0).any():
        raise CapacityError("beta grid must be increasing")
    phi = communication_height_sets(land, A, B)
    out = []
    for beta in betas:
        chain = build_chain(land, q_spec, beta)
        out.append(beta * phi + chain.gibbs.log_z + log_capacity(chain, A, B))
    return BoundsProbe(betas, np.array(out), phi)


def log_pta_ratio(land: EnergyLandscape, q_spec, M, beta: float) -> float:
    n = land.n_states
    m = _as_set(M, n, "M")
    if m.size == 1:
        raise CapacityError("denominator undefined: M has a single state")
    if m.size == n:
        raise CapacityError("M must not be the whole state space")
    chain = build_chain(land, q_spec, beta)
    logmu = chain.gibbs.log_probabilities
    out = np.setdiff1d(np.arange(n), m)
    num = max(logmu[x] - log_capacity(chain, [x], m) for x in out)
    den = min(logmu[x] - log_capacity(chain, [x], m[m != x]) for x in m)
    return float(num - den)


def pta_ratio(land: EnergyLandscape, q_spec, M, beta: float) -> float:
    """Measure-to-capacity ratio outside M over the one inside M."""
    return math.exp(log_pta_ratio(land, q_spec, M, beta))


@dataclass(frozen=True)
class PtaDecay:
    betas: np.ndarray
    log_ratio: np.ndarray
    slope: float
    threshold: float = -0.01

    @property
    def decays(self) -> bool:
        return self.slope < self.threshold


def pta_decay(land: EnergyLandscape, q_spec, M, beta_grid, threshold: float = -0.01) -> PtaDecay:
    """Least-squares slope of ``log pta_ratio`` against beta."""
    betas = np.asarray(list(beta_grid), dtype=float)
    if betas.size < 2:
        raise CapacityError("need at least two beta values")
    lr = np.array([log_pta_ratio(land, q_spec, M, b) for b in betas])
    slope = float(np.polyfit(betas, lr, 1)[0])
    return PtaDecay(betas, lr, slope, threshold)


def harmonic_measure(chain: ChainSpec, M) -> tuple[np.ndarray, np.ndarray]:
    """``P_y(tau_z = tau_M)`` for every y (rows) and z in M (columns)."""
    m = _as_set(M, chain.n_states, "M")
    if m.size == 1:
        return m, np.ones((chain.n_states, 1))
    cols = [potential_absorbing(chain, [z], m[m != z]) for z in m]
    return m, np.stack(cols, axis=1)


def valley_of(chain: ChainSpec, M, x: int) -> list[int]:
    m = _as_set(M, chain.n_states, "M")
    if x not in m:
        raise CapacityError("x must belong to M")
    m, hm = harmonic_measure(chain, m)
    col = int(np.flatnonzero(m == x)[0])
    best = hm.max(axis=1)
    return [int(y) for y in np.flatnonzero(hm[:, col] >= best - TOL * np.maximum(best, 1e-300))]


@dataclass(frozen=True)
class HittingEstimate:
    exact: float
    estimate: float

    @property
    def ratio(self) -> float:
        return self.exact / self.estimate if self.estimate else math.nan


def mean_hitting_times(chain: ChainSpec, J) -> np.ndarray:
    """``E_y[tau_J]`` for every y, from ``(I - Q) t = 1`` off J.

    Multiplying row x by mu(x) turns the system into a Poisson problem for
    the conductance Laplacian with source mu, zero on J."""
    j = _as_set(J, chain.n_states, "J")
    wmin, _ = chain._conductance
    # conductances are mu p scaled by exp(beta wmin + log Z); scale the source alike
    log_src = chain.gibbs.log_probabilities + chain.beta * wmin + chain.gibbs.log_z
    top = float(log_src.max())
    t = _conductance_solve(chain, j, np.zeros(j.size), np.exp(log_src - top))
    return t * math.exp(top)


def mean_hitting_exact(chain: ChainSpec, x: int, J, M=None) -> HittingEstimate:
    """Exact ``E_x[tau_J]`` next to the estimate ``mu(A(x)) / CAP(x, J)``,
    where the valley ``A(x)`` is taken with respect to ``M`` (default
    ``J`` plus ``x``)."""
    j = _as_set(J, chain.n_states, "J")
    if x in j:
        return HittingEstimate(0.0, 0.0)
    exact = float(mean_hitting_times(chain, j)[x])
    M = np.union1d(j, [x]) if M is None else M
    valley = valley_of(chain, M, x)
    est = math.exp(chain.gibbs.log_mass(valley) - log_capacity(chain, [x], j))
    return HittingEstimate(exact, est)
