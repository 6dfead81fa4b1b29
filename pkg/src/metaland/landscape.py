"""Finite reversible energy landscapes and their variational quantities.

A landscape is a connected undirected graph over states ``0..N-1`` with an
energy per state and two directed transition costs per edge.  In metropolis
mode the costs are derived as ``[H(y) - H(x)]_+``.  Every transition
``x -> y`` has a height ``H(x) + cost(x, y)``, which by reversibility does not
depend on the direction; communication heights are min-max (bottleneck)
path values over these edge heights.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

TOL = 1e-9


class LandscapeError(ValueError):
    pass


class LandscapeParseError(LandscapeError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class EnumerationBoundError(LandscapeError):
    pass


# ---------------------------------------------------------------------------
# the landscape container


@dataclass(frozen=True, eq=False)
class EnergyLandscape:
    """Immutable landscape.  ``edges[k] = (i, j)`` carries
    ``costs[k] = (cost(i, j), cost(j, i))``; ``costs is None`` selects
    metropolis mode."""

    energy: np.ndarray
    edges: np.ndarray
    costs: np.ndarray | None = None

    def __post_init__(self):
        energy = np.array(self.energy, dtype=float).reshape(-1)
        if energy.size < 1:
            raise LandscapeError("a landscape needs at least one state")
        edges = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        n = energy.size
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise LandscapeError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise LandscapeError("self-loops are not transitions")
        lo = np.minimum(edges[:, 0], edges[:, 1])
        hi = np.maximum(edges[:, 0], edges[:, 1])
        keys = lo * n + hi
        if np.unique(keys).size != keys.size:
            raise LandscapeError("duplicate edge")
        costs = self.costs
        if costs is not None:
            costs = np.array(costs, dtype=float).reshape(-1, 2)
            if costs.shape[0] != edges.shape[0]:
                raise LandscapeError("one cost pair per edge is required")
            costs.setflags(write=False)
        energy.setflags(write=False)
        edges.setflags(write=False)
        object.__setattr__(self, "energy", energy)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "costs", costs)

    @classmethod
    def metropolis(cls, energy, edges) -> "EnergyLandscape":
        return cls(energy, edges, None)

    @classmethod
    def explicit(cls, energy, edges, costs) -> "EnergyLandscape":
        return cls(energy, edges, costs)

    @property
    def mode(self) -> str:
        return "metropolis" if self.costs is None else "explicit"

    @property
    def n_states(self) -> int:
        return int(self.energy.size)

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @cached_property
    def directed_costs(self) -> np.ndarray:
        """``(M, 2)`` array of ``(cost(i, j), cost(j, i))``."""
        if self.costs is not None:
            return self.costs
        hi, hj = self.energy[self.edges[:, 0]], self.energy[self.edges[:, 1]]
        out = np.stack([np.maximum(hj - hi, 0.0), np.maximum(hi - hj, 0.0)], axis=1)
        out.setflags(write=False)
        return out

    @cached_property
    def edge_heights(self) -> np.ndarray:
        """Height ``H(x) + cost(x, y)`` of each edge.  The two directions
        agree on a reversible landscape; the larger one is kept so that small
        residuals never lower a barrier."""
        i, j = self.edges[:, 0], self.edges[:, 1]
        c = self.directed_costs
        out = np.maximum(self.energy[i] + c[:, 0], self.energy[j] + c[:, 1])
        out.setflags(write=False)
        return out

    @cached_property
    def _csr(self):
        n = self.n_states
        i, j = self.edges[:, 0], self.edges[:, 1]
        src = np.concatenate([i, j])
        dst = np.concatenate([j, i])
        c = self.directed_costs
        cost = np.concatenate([c[:, 0], c[:, 1]])
        w = np.concatenate([self.edge_heights, self.edge_heights])
        eid = np.concatenate([np.arange(i.size), np.arange(i.size)])
        order = np.argsort(src, kind="stable")
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        arrays = (indptr, dst[order], cost[order], w[order], eid[order])
        for a in arrays:
            a.setflags(write=False)
        return arrays

    @property
    def indptr(self) -> np.ndarray:
        return self._csr[0]

    @property
    def indices(self) -> np.ndarray:
        return self._csr[1]

    @property
    def out_costs(self) -> np.ndarray:
        """Directed costs aligned with :attr:`indices`."""
        return self._csr[2]

    @property
    def out_heights(self) -> np.ndarray:
        return self._csr[3]

    def neighbors(self, x: int) -> np.ndarray:
        p = self.indptr
        return self.indices[p[x]:p[x + 1]]

    @cached_property
    def _edge_lookup(self) -> dict:
        return {(int(a), int(b)): k for k, (a, b) in enumerate(self.edges)}

    def cost(self, x: int, y: int) -> float:
        k = self._edge_lookup.get((x, y))
        if k is not None:
            return float(self.directed_costs[k, 0])
        k = self._edge_lookup.get((y, x))
        if k is not None:
            return float(self.directed_costs[k, 1])
        raise LandscapeError(f"({x}, {y}) is not an edge")

    def has_edge(self, x: int, y: int) -> bool:
        return (x, y) in self._edge_lookup or (y, x) in self._edge_lookup


def chain(energies: Sequence[float]) -> EnergyLandscape:
    """Metropolis landscape on a path graph ``0 - 1 - ... - n-1``."""
    n = len(energies)
    edges = [(k, k + 1) for k in range(n - 1)]
    return EnergyLandscape.metropolis(energies, np.array(edges, dtype=np.int64).reshape(-1, 2))


def random_landscape(rng: np.random.Generator, n: int, *, extra_edges: float = 1.0,
                     explicit: bool = False, levels: int | None = 12) -> EnergyLandscape:
    """Random connected reversible landscape: a random spanning tree plus
    about ``extra_edges * n`` chords.  Energies are drawn from a small integer
    grid (``levels``) so that degenerate ties actually occur; explicit mode adds
    a nonnegative symmetric surcharge on top of the metropolis costs."""
    if levels is None:
        energy = rng.uniform(0.0, 10.0, size=n)
    else:
        energy = rng.integers(0, levels, size=n).astype(float)
    perm = rng.permutation(n)
    edges = set()
    for k in range(1, n):
        a, b = int(perm[k]), int(perm[rng.integers(0, k)])
        edges.add((min(a, b), max(a, b)))
    for _ in range(int(extra_edges * n)):
        a, b = (int(v) for v in rng.integers(0, n, size=2))
        if a != b:
            edges.add((min(a, b), max(a, b)))
    e = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)
    if not explicit:
        return EnergyLandscape.metropolis(energy, e)
    extra = rng.integers(0, 4, size=e.shape[0]).astype(float)
    hi, hj = energy[e[:, 0]], energy[e[:, 1]]
    top = np.maximum(hi, hj) + extra
    costs = np.stack([top - hi, top - hj], axis=1)
    return EnergyLandscape.explicit(energy, e, costs)


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    passed: bool
    connected: bool
    n_components: int
    max_residual: float
    bad_edges: list = field(default_factory=list)      # (i, j, residual)
    negative_costs: list = field(default_factory=list)  # (i, j, cost)
    messages: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "connected": self.connected,
            "n_components": self.n_components,
            "max_residual": self.max_residual,
            "bad_edges": [list(e) for e in self.bad_edges],
            "negative_costs": [list(e) for e in self.negative_costs],
            "messages": list(self.messages),
        }


def _components(n: int, edges: np.ndarray) -> np.ndarray:
    uf = UnionFind(n)
    for a, b in edges:
        uf.union(int(a), int(b))
    return np.array([uf.find(x) for x in range(n)])


def validate_landscape(land: EnergyLandscape) -> ValidationReport:
    roots = _components(land.n_states, land.edges)
    n_comp = int(np.unique(roots).size)
    c = land.directed_costs
    i, j = land.edges[:, 0], land.edges[:, 1]
    resid = np.abs(land.energy[i] + c[:, 0] - c[:, 1] - land.energy[j])
    bad = [(int(a), int(b), float(r)) for a, b, r in zip(i, j, resid) if r > TOL]
    neg = []
    for (a, b), (cab, cba) in zip(land.edges, c):
        if cab < 0:
            neg.append((int(a), int(b), float(cab)))
        if cba < 0:
            neg.append((int(b), int(a), float(cba)))
    msgs = []
    if n_comp != 1:
        msgs.append(f"not connected: {n_comp} components")
    for a, b, r in bad:
        msgs.append(f"edge ({a}, {b}) violates reversibility by {r:g}")
    for a, b, v in neg:
        msgs.append(f"negative cost on ({a}, {b}): {v:g}")
    return ValidationReport(
        passed=n_comp == 1 and not bad and not neg,
        connected=n_comp == 1,
        n_components=n_comp,
        max_residual=float(resid.max()) if resid.size else 0.0,
        bad_edges=bad,
        negative_costs=neg,
        messages=msgs,
    )


# ---------------------------------------------------------------------------
# heights


def path_height(land: EnergyLandscape, path: Sequence[int]) -> float:
    if len(path) < 2:
        raise LandscapeError("no transition: a path needs at least two states")
    best = -math.inf
    for x, y in zip(path[:-1], path[1:]):
        best = max(best, land.energy[x] + land.cost(int(x), int(y)))
    return float(best)


def _minimax_search(land: EnergyLandscape, sources: Iterable[int], stop=None,
                    limit: float | None = None):
    """Bottleneck Dijkstra.  Returns ``(level, hit)``: ``level[y]`` is the
    communication height from the source set to ``y`` for every settled ``y``
    (``inf`` otherwise) and ``hit`` is the first settled state in the boolean
    mask ``stop`` (``None`` if the search ran out).  Edges above ``limit`` are
    ignored."""
    n = land.n_states
    level = np.full(n, np.inf)
    done = np.zeros(n, dtype=bool)
    heap = []
    for s in sources:
        s = int(s)
        h = float(land.energy[s])
        if h < level[s]:
            level[s] = h
            heap.append((h, s))
    heapq.heapify(heap)
    indptr, indices, heights = land.indptr, land.indices, land.out_heights
    while heap:
        lv, x = heapq.heappop(heap)
        if done[x]:
            continue
        done[x] = True
        if stop is not None and stop[x]:
            level[~done] = np.inf
            return level, x
        for k in range(indptr[x], indptr[x + 1]):
            w = heights[k]
            if limit is not None and w > limit + TOL:
                continue
            y = indices[k]
            nl = lv if lv > w else w
            if nl < level[y]:
                level[y] = nl
                heapq.heappush(heap, (nl, int(y)))
    level[~done] = np.inf
    return level, None


def _state_list(land: EnergyLandscape, states: Iterable[int]) -> list[int]:
    out = [int(x) for x in states]
    if not out:
        raise LandscapeError("empty set")
    bad = [x for x in out if not 0 <= x < land.n_states]
    if bad:
        raise LandscapeError(f"state {bad[0]} out of range")
    return out


def communication_height(land: EnergyLandscape, y: int, z: int) -> float:
    _state_list(land, (y, z))
    if y == z:
        return float(land.energy[y])
    stop = np.zeros(land.n_states, dtype=bool)
    stop[z] = True
    level, hit = _minimax_search(land, [y], stop)
    if hit is None:
        raise LandscapeError("states are not connected")
    return float(level[z])


def communication_height_sets(land: EnergyLandscape, Y: Iterable[int], Z: Iterable[int]) -> float:
    Y, Z = _state_list(land, Y), _state_list(land, Z)
    stop = np.zeros(land.n_states, dtype=bool)
    stop[Z] = True
    level, hit = _minimax_search(land, Y, stop)
    if hit is None:
        raise LandscapeError("sets are not connected")
    return float(level[hit])


def communication_heights_to(land: EnergyLandscape, Z: Iterable[int]) -> np.ndarray:
    """``Phi(x, Z)`` for every state ``x`` (one multi-source search)."""
    level, _ = _minimax_search(land, _state_list(land, Z))
    return level


def minima_of(land: EnergyLandscape, Y: Iterable[int]) -> list[int]:
    Y = sorted(set(_state_list(land, Y)))
    e = land.energy[Y]
    m = e.min()
    return [y for y, v in zip(Y, e) if v <= m + TOL]


def ground_states(land: EnergyLandscape) -> list[int]:
    m = land.energy.min()
    return [int(x) for x in np.flatnonzero(land.energy <= m + TOL)]


def stability_level(land: EnergyLandscape, x: int) -> float:
    """``V_x``: the lowest barrier, measured from ``H(x)``, that separates
    ``x`` from the strictly lower states."""
    lower = land.energy < land.energy[x] - TOL
    if not lower.any():
        raise LandscapeError("ground state has no stability level")
    level, hit = _minimax_search(land, [x], lower)
    return float(level[hit] - land.energy[x])


# ---------------------------------------------------------------------------
# relaxation analysis


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        a, b = self.find(a), self.find(b)
        if a == b:
            return a
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        return a


@dataclass
class RelaxationReport:
    n_states: int
    gamma_m: float | None
    metastable_set: list[int]
    ground_states: list[int]
    stability: dict[int, float]
    partition_m: list[list[int]]
    partition_s: list[list[int]]
    trivial: bool = False

    @property
    def fully_attracted(self) -> bool:
        return self.trivial or (self.gamma_m is not None and abs(self.gamma_m) <= TOL)

    def to_dict(self) -> dict:
        return {
            "gamma_m": self.gamma_m,
            "trivial": self.trivial,
            "metastable_set": list(self.metastable_set),
            "ground_states": list(self.ground_states),
            "stability": {str(k): v for k, v in sorted(self.stability.items())},
            "partition_m": [list(c) for c in self.partition_m],
            "partition_s": [list(c) for c in self.partition_s],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def agrees_with(self, other: "RelaxationReport", tol: float = TOL) -> bool:
        if self.trivial != other.trivial:
            return False
        if self.trivial:
            return self.ground_states == other.ground_states
        if abs(self.gamma_m - other.gamma_m) > tol:
            return False
        if self.metastable_set != other.metastable_set or self.ground_states != other.ground_states:
            return False
        if self.stability.keys() != other.stability.keys():
            return False
        return all(abs(self.stability[k] - other.stability[k]) <= tol for k in self.stability)


def _report(land, stability, partition_fn) -> RelaxationReport:
    xs = ground_states(land)
    if not stability:
        return RelaxationReport(land.n_states, None, [], xs, {}, [], [sorted(xs)], trivial=True)
    gamma = max(stability.values())
    xm = sorted(x for x, v in stability.items() if v >= gamma - TOL)
    part_m, part_s = partition_fn(xm, xs, gamma)
    return RelaxationReport(land.n_states, float(gamma), xm, xs, stability, part_m, part_s)


def _classes(members: list[int], related) -> tuple[list[list[int]], bool]:
    """Connected components of the relation graph on ``members`` and whether
    the relation was transitive (every component a clique)."""
    uf = UnionFind(len(members))
    pairs = set()
    for a, b in combinations(range(len(members)), 2):
        if related(members[a], members[b]):
            uf.union(a, b)
            pairs.add((a, b))
    groups: dict[int, list[int]] = {}
    for k in range(len(members)):
        groups.setdefault(uf.find(k), []).append(k)
    transitive = all((a, b) in pairs for g in groups.values() for a, b in combinations(g, 2))
    classes = sorted(sorted(members[k] for k in g) for g in groups.values())
    return classes, transitive


def _merge_sweep(land: EnergyLandscape):
    """Kruskal sweep over edges in increasing height, equal heights batched.
    Returns the stability level of every non-ground state and the spanning
    forest edges ``(a, b, height)``."""
    n = land.n_states
    energy = land.energy
    heights = land.edge_heights
    order = np.argsort(heights, kind="stable")
    uf = UnionFind(n)
    comp_min = energy.tolist()
    # unresolved members of a component are exactly the states at its minimum
    pending: list[list[int] | None] = [[x] for x in range(n)]
    stab: dict[int, float] = {}
    tree = []
    k, m = 0, order.size
    while k < m:
        w = heights[order[k]]
        stop = k
        while stop < m and heights[order[stop]] <= w + TOL:
            stop += 1
        touched = set()
        for idx in order[k:stop]:
            a, b = (int(v) for v in land.edges[idx])
            ra, rb = uf.find(a), uf.find(b)
            if ra == rb:
                continue
            tree.append((a, b, float(heights[idx])))
            root = uf.union(ra, rb)
            other = rb if root == ra else ra
            mn = min(comp_min[ra], comp_min[rb])
            comp_min[root] = mn
            pend = (pending[ra] or []) + (pending[rb] or [])
            pending[other] = None
            pending[root] = pend
            touched.add(root)
        for root in touched:
            root = uf.find(root)
            pend = pending[root]
            if not pend:
                continue
            mn = comp_min[root]
            keep = []
            for x in pend:
                if energy[x] > mn + TOL:
                    stab[x] = float(w - energy[x])
                else:
                    keep.append(x)
            pending[root] = keep
        k = stop
    return stab, tree


class _SpanningTree:
    """Minimum spanning tree of edge heights; the max height along the tree
    path is the communication height (min-max path property)."""

    def __init__(self, land: EnergyLandscape, tree_edges):
        self.land = land
        self.adj: list[list[tuple[int, float]]] = [[] for _ in range(land.n_states)]
        for a, b, w in tree_edges:
            self.adj[a].append((b, w))
            self.adj[b].append((a, w))

    def heights_from(self, x: int) -> np.ndarray:
        out = np.full(self.land.n_states, np.inf)
        out[x] = self.land.energy[x]
        stack = [x]
        while stack:
            y = stack.pop()
            for z, w in self.adj[y]:
                if out[z] == np.inf:
                    out[z] = max(out[y], w)
                    stack.append(z)
        return out


def relaxation_analysis(land: EnergyLandscape) -> RelaxationReport:
    """Stability levels of all states from a single merge sweep."""
    stab, tree_edges = _merge_sweep(land)
    tree = _SpanningTree(land, tree_edges)
    energy = land.energy

    def partition(xm, xs, gamma):
        cache = {}

        def phi(a, b):
            if a not in cache:
                cache[a] = tree.heights_from(a)
            return cache[a][b]

        def related(a, b):
            p = phi(a, b)
            return p - energy[a] < gamma - TOL and p - energy[b] < gamma - TOL

        return _classes(xm, related)[0], _classes(xs, related)[0]

    return _report(land, stab, partition)


def equivalence_partition(land: EnergyLandscape, gamma_m: float, metastable=None, ground=None):
    """Classes of ``x ~ y  <=>  Phi(x,y) - H(x) < gamma_m  and  Phi(x,y) - H(y) < gamma_m``
    on the metastable set and on the ground states.  Returns
    ``(partition_m, partition_s, transitive)``."""
    if ground is None:
        ground = ground_states(land)
    if metastable is None:
        metastable = relaxation_bruteforce(land).metastable_set
    energy = land.energy
    cache = {}

    def related(a, b):
        if a not in cache:
            cache[a] = _minimax_search(land, [a])[0]
        p = cache[a][b]
        return p - energy[a] < gamma_m - TOL and p - energy[b] < gamma_m - TOL

    pm, tm = _classes(sorted(metastable), related)
    ps, ts = _classes(sorted(ground), related)
    return pm, ps, tm and ts


def relaxation_bruteforce(land: EnergyLandscape) -> RelaxationReport:
    """Same contract as :func:`relaxation_analysis`, one bottleneck search
    per state.  Kept independent of the sweep as a cross-check."""
    energy = land.energy
    stab = {}
    for x in range(land.n_states):
        lower = energy < energy[x] - TOL
        if not lower.any():
            continue
        level, hit = _minimax_search(land, [x], lower)
        stab[x] = float(level[hit] - energy[x])

    def partition(xm, xs, gamma):
        pm, ps, _ = equivalence_partition(land, gamma, xm, xs)
        return pm, ps

    return _report(land, stab, partition)


# ---------------------------------------------------------------------------
# condition checkers


@dataclass
class Verdict:
    passed: bool
    clause: str | None = None
    violator: int | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.passed


def check_sufficient_conditions(land: EnergyLandscape, A: Iterable[int], a: float,
                                mode: str = "path") -> Verdict:
    """Test the hypotheses under which ``(A, a)`` must equal the metastable
    set and the relaxation height.  ``mode='path'`` compares the barrier to
    the ground states outside ``A``; ``mode='stability'`` compares ``V_x``."""
    if mode not in ("path", "stability"):
        raise ValueError(f"unknown mode {mode!r}")
    A = sorted(set(int(x) for x in A))
    if not A:
        raise LandscapeError("A must be nonempty")
    _state_list(land, A)
    if a <= 0:
        raise LandscapeError("a must be positive")
    xs = ground_states(land)
    if set(A) & set(xs):
        raise LandscapeError("A must avoid ground states")
    to_ground = communication_heights_to(land, xs)
    energy = land.energy
    for x in A:
        v = to_ground[x] - energy[x]
        if abs(v - a) > TOL:
            return Verdict(False, "1", x, f"Phi(x, X_s) - H(x) = {v:g} != {a:g}")
    rest = sorted(set(range(land.n_states)) - set(A) - set(xs))
    for x in rest:
        v = to_ground[x] - energy[x] if mode == "path" else stability_level(land, x)
        if not v < a - TOL:
            name = "Phi(x, X_s) - H(x)" if mode == "path" else "V_x"
            return Verdict(False, "2", x, f"{name} = {v:g} is not < {a:g}")
    return Verdict(True)


def verify_necessity(land: EnergyLandscape, report: RelaxationReport | None = None) -> Verdict:
    if report is None:
        report = relaxation_analysis(land)
    if report.trivial:
        raise LandscapeError("trivial landscape: every state is a ground state")
    to_ground = communication_heights_to(land, report.ground_states)
    energy = land.energy
    g = report.gamma_m
    xm = set(report.metastable_set)
    for x in range(land.n_states):
        if x in report.ground_states:
            continue
        v = to_ground[x] - energy[x]
        if x in xm and abs(v - g) > TOL:
            return Verdict(False, "1", x, f"Phi(x, X_s) - H(x) = {v:g} != Gamma_m = {g:g}")
        if x not in xm and not v < g - TOL:
            return Verdict(False, "2", x, f"Phi(x, X_s) - H(x) = {v:g} is not < {g:g}")
    return Verdict(True)


@dataclass
class CandidateSet:
    states: list[int]
    choice_count: int


def pta_candidate_set(report: RelaxationReport) -> CandidateSet:
    """One representative (lowest id) per class of the metastable set and of
    the ground states, plus the number of equally valid choices."""
    if report.trivial or not report.partition_m or not report.partition_s:
        raise LandscapeError("empty partitions")
    if len(report.metastable_set) + len(report.ground_states) >= report.n_states:
        raise LandscapeError("necessity check needs a state outside X_m and X_s")
    classes = report.partition_m + report.partition_s
    return CandidateSet(sorted(min(c) for c in classes), math.prod(len(c) for c in classes))


# ---------------------------------------------------------------------------
# saddles and gates


def _level_component(land: EnergyLandscape, sigma: int, phi: float) -> np.ndarray:
    level, _ = _minimax_search(land, [sigma], limit=phi)
    return level <= phi + TOL


def optimal_saddles(land: EnergyLandscape, sigma: int, eta: int) -> list[int]:
    """States at energy ``Phi(sigma, eta)`` visited by at least one optimal
    path.  With no interior barrier the higher endpoint(s) are returned."""
    if sigma == eta:
        raise LandscapeError("sigma and eta must differ")
    phi = communication_height(land, sigma, eta)
    energy = land.energy
    ends = [x for x in (sigma, eta) if abs(energy[x] - phi) <= TOL]
    if ends:
        return sorted(ends)
    reach = _level_component(land, sigma, phi)
    return [int(z) for z in np.flatnonzero(reach & (np.abs(energy - phi) <= TOL))]


def _connected_avoiding(land, sigma, eta, phi, blocked: np.ndarray) -> bool:
    if blocked[sigma] or blocked[eta]:
        return False
    seen = np.zeros(land.n_states, dtype=bool)
    seen[sigma] = True
    stack = [sigma]
    indptr, indices, heights = land.indptr, land.indices, land.out_heights
    while stack:
        x = stack.pop()
        if x == eta:
            return True
        for k in range(indptr[x], indptr[x + 1]):
            y = indices[k]
            if not seen[y] and not blocked[y] and heights[k] <= phi + TOL:
                seen[y] = True
                stack.append(int(y))
    return False


def is_gate(land: EnergyLandscape, Y: Iterable[int], sigma: int, eta: int) -> bool:
    Y = set(int(y) for y in Y)
    if not Y:
        raise LandscapeError("Y must be nonempty")
    _state_list(land, Y)
    phi = communication_height(land, sigma, eta)
    if any(abs(land.energy[y] - phi) > TOL for y in Y):
        return False
    blocked = np.zeros(land.n_states, dtype=bool)
    blocked[list(Y)] = True
    return not _connected_avoiding(land, sigma, eta, phi, blocked)


def _quotient(land, sigma, phi, saddles):
    """Contract the saddle-free parts of the level set ``{Phi <= phi}``
    around sigma.  Saddles keep their own node; every other reachable state
    maps to the root of its saddle-free component.  Returns the node map
    and an adjacency dict over node ids."""
    reach = _level_component(land, sigma, phi)
    sad = np.zeros(land.n_states, dtype=bool)
    sad[saddles] = True
    e = land.edges
    live = (land.edge_heights <= phi + TOL) & reach[e[:, 0]] & reach[e[:, 1]]
    a, b = e[live, 0], e[live, 1]
    uf = UnionFind(land.n_states)
    for x, y in zip(a[~sad[a] & ~sad[b]].tolist(), b[~sad[a] & ~sad[b]].tolist()):
        uf.union(x, y)
    node = {}

    def label(x):
        if x not in node:
            node[x] = x if sad[x] else uf.find(x)
        return node[x]

    adj: dict[int, set] = {}
    for x, y in zip(a.tolist(), b.tolist()):
        if sad[x] or sad[y]:
            p, q = label(x), label(y)
            if p != q:
                adj.setdefault(p, set()).add(q)
                adj.setdefault(q, set()).add(p)
    return label, adj


def _quotient_path(adj, s, t, blocked, saddle):
    """Fewest-saddle path from s to t avoiding ``blocked`` (0-1 BFS)."""
    from collections import deque

    if s in blocked or t in blocked:
        return None
    dist = {s: int(s in saddle)}
    prev = {s: None}
    dq = deque([s])
    while dq:
        x = dq.popleft()
        for y in adj.get(x, ()):
            if y in blocked:
                continue
            w = int(y in saddle)
            nd = dist[x] + w
            if nd < dist.get(y, 1 << 60):
                dist[y] = nd
                prev[y] = x
                if w:
                    dq.append(y)
                else:
                    dq.appendleft(y)
    if t not in dist:
        return None
    path = [t]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return path[::-1]


def minimal_gates(land: EnergyLandscape, sigma: int, eta: int, max_saddles: int = 25) -> list[list[int]]:
    """All inclusion-minimal gates for the pair.

    The level set around sigma is contracted so that only saddles keep
    their identity; gates are then the minimal hitting sets of the
    sigma-eta paths of that small graph.  They are enumerated by taking a
    path crossing the fewest saddles outside the current partial gate and
    branching on which of its saddles joins the gate."""
    saddles = optimal_saddles(land, sigma, eta)
    if len(saddles) > max_saddles:
        raise EnumerationBoundError(
            f"saddle set has {len(saddles)} members; exceeds enumeration bound {max_saddles}")
    if not saddles:
        return []
    phi = communication_height(land, sigma, eta)
    label, adj = _quotient(land, sigma, phi, saddles)
    s, t = label(sigma), label(eta)
    saddle = set(saddles)

    def gate(Y):
        return _quotient_path(adj, s, t, Y, saddle) is None

    if not gate(saddle):
        return []
    found: set[frozenset] = set()
    seen: set[frozenset] = set()

    def grow(Y: frozenset):
        if Y in seen or any(g <= Y for g in found):
            return
        seen.add(Y)
        path = _quotient_path(adj, s, t, Y, saddle)
        if path is None:
            if all(not gate(Y - {y}) for y in Y):
                found.add(Y)
            return
        for z in dict.fromkeys(p for p in path if p in saddle):
            grow(Y | {z})

    grow(frozenset())
    return sorted(sorted(g) for g in found)


def essential_saddles(gates: list[list[int]]) -> list[int]:
    return sorted(set().union(*gates)) if gates else []


# ---------------------------------------------------------------------------
# text format


def parse_landscape(text: str) -> EnergyLandscape:
    header = None
    mode = None
    n = None
    energy: dict[int, float] = {}
    edges, costs = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if header is None:
                if tok != ["landscape", "v1"]:
                    raise LandscapeParseError(lineno, "expected header 'landscape v1'")
                header = True
            elif tok[0] == "mode":
                if len(tok) != 2 or tok[1] not in ("metropolis", "explicit"):
                    raise LandscapeParseError(lineno, "mode must be metropolis or explicit")
                mode = tok[1]
            elif tok[0] == "states":
                if len(tok) != 2:
                    raise LandscapeParseError(lineno, "expected 'states N'")
                n = int(tok[1])
                if n < 1:
                    raise LandscapeParseError(lineno, "need at least one state")
            elif tok[0] == "s":
                if n is None:
                    raise LandscapeParseError(lineno, "'states' must precede state lines")
                if len(tok) != 3:
                    raise LandscapeParseError(lineno, "expected 's <id> <H>'")
                sid = int(tok[1])
                if not 0 <= sid < n:
                    raise LandscapeParseError(lineno, f"state id {sid} out of range")
                if sid in energy:
                    raise LandscapeParseError(lineno, f"state {sid} defined twice")
                energy[sid] = float(tok[2])
            elif tok[0] == "e":
                if mode is None or n is None:
                    raise LandscapeParseError(lineno, "'mode' and 'states' must precede edges")
                want = 5 if mode == "explicit" else 3
                if len(tok) != want:
                    raise LandscapeParseError(
                        lineno, "explicit edges need 'e i j dij dji'" if mode == "explicit"
                        else "metropolis edges take 'e i j'")
                i, j = int(tok[1]), int(tok[2])
                if not (0 <= i < n and 0 <= j < n):
                    raise LandscapeParseError(lineno, "edge endpoint out of range")
                if i == j:
                    raise LandscapeParseError(lineno, "self-loop")
                edges.append((i, j))
                if mode == "explicit":
                    costs.append((float(tok[3]), float(tok[4])))
            else:
                raise LandscapeParseError(lineno, f"unknown record {tok[0]!r}")
        except ValueError as exc:
            if isinstance(exc, LandscapeParseError):
                raise
            raise LandscapeParseError(lineno, f"bad number: {exc}") from None
    if header is None:
        raise LandscapeParseError(1, "empty input")
    if mode is None or n is None:
        raise LandscapeParseError(0, "missing 'mode' or 'states'")
    missing = sorted(set(range(n)) - set(energy))
    if missing:
        raise LandscapeParseError(0, f"states without energy: {missing[:5]}")
    e = np.array([energy[k] for k in range(n)])
    ed = np.array(edges, dtype=np.int64).reshape(-1, 2)
    try:
        if mode == "explicit":
            return EnergyLandscape.explicit(e, ed, np.array(costs).reshape(-1, 2))
        return EnergyLandscape.metropolis(e, ed)
    except LandscapeError as exc:
        raise LandscapeParseError(0, str(exc)) from None


def load_landscape(path) -> EnergyLandscape:
    with open(path, encoding="utf-8") as fh:
        return parse_landscape(fh.read())


def format_landscape(land: EnergyLandscape) -> str:
    out = ["landscape v1", f"mode {land.mode}", f"states {land.n_states}"]
    out += [f"s {k} {v!r}" for k, v in enumerate(land.energy.tolist())]
    if land.costs is None:
        out += [f"e {a} {b}" for a, b in land.edges.tolist()]
    else:
        out += [f"e {a} {b} {c!r} {d!r}" for (a, b), (c, d)
                in zip(land.edges.tolist(), land.costs.tolist())]
    return "\n".join(out) + "\n"
