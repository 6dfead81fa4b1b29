"""Blume-Capel model on an ``L x L`` torus with spins in {-1, 0, +1}.

    H(s) = sum_<ij> (s_i - s_j)^2 - lam * sum_i s_i^2 - h * sum_i s_i

Configurations are ``int8`` arrays of shape ``(L, L)``; site ``i`` is
``(i // L, i % L)``.  The torus carries ``2 L^2`` bonds (one to the right
and one below every site), so each site has four bond slots even for
``L = 2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .landscape import EnergyLandscape
from .polyomino import Polyomino, surrounding_rectangle

MINUS, ZERO, PLUS = -1, 0, 1


class BlumeCapelError(ValueError):
    pass


class MemoryBudgetError(BlumeCapelError):
    def __init__(self, required: int, budget: int):
        super().__init__(f"enumeration needs about {required:,} bytes; budget is {budget:,}")
        self.required = required
        self.budget = budget


@dataclass(frozen=True)
class ConditionReport:
    ok: bool
    violations: tuple[str, ...]
    ratio_2_over_h: float
    min_volume: float

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": list(self.violations),
                "two_over_h": self.ratio_2_over_h, "min_volume_49_over_h4": self.min_volume}


@dataclass(frozen=True)
class ModelParams:
    L: int
    h: float
    lam: float = 0.0

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise BlumeCapelError("torus side L must be an integer >= 2")
        object.__setattr__(self, "L", int(self.L))

    @property
    def volume(self) -> int:
        return self.L * self.L

    @property
    def condition(self) -> ConditionReport:
        h = self.h
        v = []
        if not 0 < h < 1:
            v.append("h must lie in (0, 1)")
        two_h = 2 / h if h else math.inf
        if h and abs(two_h - round(two_h)) < 1e-12:
            v.append("2/h must not be an integer")
        need = 49 / h ** 4 if h else math.inf
        if self.volume < need:
            v.append(f"|Lambda| = {self.volume} < 49/h^4 = {need:.6g}")
        return ConditionReport(not v, tuple(v), two_h, need)

    @property
    def condition_ok(self) -> bool:
        return self.condition.ok


def _require_zero_lambda(params: ModelParams):
    if params.lam != 0:
        raise BlumeCapelError("only the zero chemical potential model is supported here")


# ---------------------------------------------------------------------------
# configurations and energies


def uniform(params: ModelParams, spin: int) -> np.ndarray:
    return np.full((params.L, params.L), spin, dtype=np.int8)


def as_config(config, params: ModelParams) -> np.ndarray:
    a = np.asarray(config, dtype=np.int8).reshape(params.L, params.L)
    if not np.isin(a, (-1, 0, 1)).all():
        raise BlumeCapelError("spins must be -1, 0 or +1")
    return a


def hamiltonian(config, params: ModelParams) -> float:
    s = as_config(config, params).astype(np.int64)
    bonds = ((s - np.roll(s, -1, axis=1)) ** 2).sum() + ((s - np.roll(s, -1, axis=0)) ** 2).sum()
    return float(bonds) - params.lam * float((s * s).sum()) - params.h * float(s.sum())


def neighbor_sites(params: ModelParams, site: int) -> tuple[int, int, int, int]:
    L = params.L
    r, c = divmod(site, L)
    return (r * L + (c + 1) % L, r * L + (c - 1) % L, ((r + 1) % L) * L + c, ((r - 1) % L) * L + c)


def single_flip_delta(config, site, new_spin: int, params: ModelParams) -> float:
    """``H(s') - H(s)`` where ``s'`` has ``new_spin`` at ``site``; only the
    four bonds of the site enter."""
    if new_spin not in (-1, 0, 1):
        raise BlumeCapelError("new spin must be -1, 0 or +1")
    flat = np.asarray(config).reshape(-1)
    if isinstance(site, tuple):
        site = site[0] * params.L + site[1]
    old = int(flat[site])
    bond = 0
    for j in neighbor_sites(params, site):
        sj = int(flat[j])
        bond += (new_spin - sj) ** 2 - (old - sj) ** 2
    return bond - params.lam * (new_spin * new_spin - old * old) - params.h * (new_spin - old)


def to_text(config) -> str:
    sym = {-1: "-", 0: "0", 1: "+"}
    return "\n".join("".join(sym[int(v)] for v in row) for row in np.asarray(config))


def from_text(text: str) -> np.ndarray:
    val = {"-": -1, "0": 0, "+": 1}
    rows = [r.strip() for r in text.strip().splitlines() if r.strip()]
    if any(len(r) != len(rows) for r in rows):
        raise BlumeCapelError("snapshot must be a square grid")
    try:
        return np.array([[val[ch] for ch in r] for r in rows], dtype=np.int8)
    except KeyError as exc:
        raise BlumeCapelError(f"unknown spin symbol {exc}") from None


# ---------------------------------------------------------------------------
# dynamics adapter


@dataclass(frozen=True)
class SingleFlipDynamics:
    """Single-site proposals: every site offers its two other spin values,
    each with probability ``1 / (2 |Lambda|)``."""

    params: ModelParams

    @property
    def q(self) -> float:
        return 1.0 / (2 * self.params.volume)

    @property
    def n_proposals(self) -> int:
        return 2 * self.params.volume

    def proposals(self, config):
        flat = np.asarray(config).reshape(-1)
        q = self.q
        for i in range(self.params.volume):
            for a in (-1, 0, 1):
                if a != flat[i]:
                    yield i, a, q

    def energy(self, config) -> float:
        return hamiltonian(config, self.params)

    def delta(self, config, site: int, new_spin: int) -> float:
        return single_flip_delta(config, site, new_spin, self.params)

    def transition_row(self, config, beta: float) -> tuple[list, float]:
        """Off-diagonal Metropolis probabilities and the diagonal remainder."""
        out = []
        for i, a, q in self.proposals(config):
            d = self.delta(config, i, a)
            out.append((i, a, q * math.exp(-beta * max(d, 0.0))))
        return out, 1.0 - math.fsum(p for *_, p in out)


def neighbor_generator(params: ModelParams) -> SingleFlipDynamics:
    return SingleFlipDynamics(params)


# ---------------------------------------------------------------------------
# critical quantities and droplets


@dataclass(frozen=True)
class CriticalQuantities:
    lc: int
    gamma_c: float
    area: int
    condition: ConditionReport
    bracket_ok: bool

    def to_dict(self) -> dict:
        return {"lc": self.lc, "gamma_c": self.gamma_c, "critical_area": self.area,
                "lc_bracket_ok": self.bracket_ok, "condition": self.condition.to_dict()}


def critical_length(h: float) -> int:
    if h <= 0:
        raise BlumeCapelError("h must be positive")
    return math.floor(2 / h) + 1


def critical_quantities(params: ModelParams) -> CriticalQuantities:
    _require_zero_lambda(params)
    h = params.h
    lc = critical_length(h)
    area = lc * (lc - 1) + 1
    gamma = 4 * lc - h * area
    cond = params.condition
    bracket = 2 / h < lc < 2 / h + 1 and lc >= 3
    if cond.ok and not bracket:
        raise BlumeCapelError("critical length bracket fails although the condition holds")
    return CriticalQuantities(lc, gamma, area, cond, bracket)


@dataclass(frozen=True)
class DropletSpec:
    """Rectangle anchored at ``(row, col)`` (its top-left site).

    ``orientation='v'``: ``lc`` rows by ``lc - 1`` columns, longest sides
    are the left and right ones; ``'h'``: ``lc - 1`` rows by ``lc``
    columns, longest sides top and bottom.  ``side`` picks the longest side
    carrying the protuberance (``'low'`` = left/top, ``'high'`` =
    right/bottom) and ``offset`` its position along that side.  ``phase``
    ``'P'`` puts zeros in a sea of minuses, ``'Q'`` pluses in zeros."""

    row: int = 0
    col: int = 0
    orientation: str = "h"
    side: str = "high"
    offset: int = 0
    phase: str = "P"


def _phase_spins(phase: str) -> tuple[int, int]:
    if phase == "P":
        return MINUS, ZERO
    if phase == "Q":
        return ZERO, PLUS
    raise BlumeCapelError(f"unknown phase {phase!r}")


def droplet_sites(spec: DropletSpec, L: int, lc: int) -> list[int]:
    if L < lc + 2:
        raise BlumeCapelError(f"droplet does not fit: L = {L} < lc + 2 = {lc + 2}")
    if spec.orientation == "v":
        rows, cols = lc, lc - 1
    elif spec.orientation == "h":
        rows, cols = lc - 1, lc
    else:
        raise BlumeCapelError("orientation must be 'h' or 'v'")
    if not 0 <= spec.offset < lc:
        raise BlumeCapelError(f"offset must lie in [0, {lc})")
    if spec.side not in ("low", "high"):
        raise BlumeCapelError("side must be 'low' or 'high'")
    cells = [(spec.row + r, spec.col + c) for r in range(rows) for c in range(cols)]
    if spec.orientation == "v":
        pc = spec.col - 1 if spec.side == "low" else spec.col + cols
        cells.append((spec.row + spec.offset, pc))
    else:
        pr = spec.row - 1 if spec.side == "low" else spec.row + rows
        cells.append((pr, spec.col + spec.offset))
    return sorted((r % L) * L + c % L for r, c in cells)


def droplet_config(spec: DropletSpec, params: ModelParams) -> np.ndarray:
    lc = critical_length(params.h)
    bg, fg = _phase_spins(spec.phase)
    out = uniform(params, bg).reshape(-1)
    out[droplet_sites(spec, params.L, lc)] = fg
    return out.reshape(params.L, params.L)


def all_droplet_specs(L: int, lc: int, phase: str = "P"):
    for r in range(L):
        for c in range(L):
            for o in ("h", "v"):
                for side in ("low", "high"):
                    for off in range(lc):
                        yield DropletSpec(r, c, o, side, off, phase)


@lru_cache(maxsize=32)
def critical_droplet_shapes(L: int, lc: int) -> frozenset:
    """Foreground site sets of every critical droplet on the torus."""
    return frozenset(tuple(droplet_sites(s, L, lc)) for s in all_droplet_specs(L, lc))


def is_critical_droplet(config, params: ModelParams, which: str = "P_c") -> bool:
    lc = critical_length(params.h)
    if params.L < lc + 2:
        return False
    bg, fg = _phase_spins({"P_c": "P", "Q_c": "Q"}[which])
    flat = np.asarray(config).reshape(-1)
    fore = np.flatnonzero(flat == fg)
    if fore.size != lc * (lc - 1) + 1 or np.count_nonzero(flat == bg) != flat.size - fore.size:
        return False
    return tuple(int(i) for i in fore) in critical_droplet_shapes(params.L, lc)


def manifold_membership(config, params: ModelParams, which: str = "X_minus") -> bool:
    """``X_minus``: exactly ``|Lambda| - A_c`` minus spins; ``X_zero``: no
    minus spins and exactly ``A_c`` pluses, with ``A_c = lc (lc - 1) + 1``."""
    lc = critical_length(params.h)
    area = lc * (lc - 1) + 1
    flat = np.asarray(config).reshape(-1)
    if which == "X_minus":
        return int(np.count_nonzero(flat == MINUS)) == flat.size - area
    if which == "X_zero":
        return not (flat == MINUS).any() and int(np.count_nonzero(flat == PLUS)) == area
    raise BlumeCapelError(f"unknown manifold {which!r}")


def droplet_energy(poly: Polyomino, params: ModelParams, phase: str = "P") -> float:
    """Energy above the background phase of a droplet whose foreground cells
    form ``poly``: perimeter minus the bulk gain per cell."""
    w, hgt = surrounding_rectangle(poly)
    if w > params.L - 1 or hgt > params.L - 1:
        raise BlumeCapelError("formula invalid for winding sets")
    _phase_spins(phase)
    gain = params.h - params.lam if phase == "P" else params.h + params.lam
    return poly.perimeter - gain * poly.area


def droplet_from_polyomino(poly: Polyomino, params: ModelParams, phase: str = "P",
                           at: tuple[int, int] = (0, 0)) -> np.ndarray:
    bg, fg = _phase_spins(phase)
    out = uniform(params, bg)
    L = params.L
    for x, y in poly.cells:
        out[(at[0] + y) % L, (at[1] + x) % L] = fg
    return out


# ---------------------------------------------------------------------------
# reference path


@dataclass
class ReferencePath:
    """The d -> 0 -> u path stored as a start configuration and a list of
    single-site flips, with the energy of every visited configuration."""

    params: ModelParams
    start: np.ndarray
    flips: list[tuple[int, int]]
    energies: np.ndarray
    zero_index: int  # position of the all-zero configuration

    def __len__(self) -> int:
        return len(self.flips) + 1

    def configs(self):
        cur = self.start.copy().reshape(-1)
        yield cur.reshape(self.params.L, self.params.L).copy()
        for site, spin in self.flips:
            cur[site] = spin
            yield cur.reshape(self.params.L, self.params.L).copy()

    def config_at(self, k: int) -> np.ndarray:
        cur = self.start.copy().reshape(-1)
        for site, spin in self.flips[:k]:
            cur[site] = spin
        return cur.reshape(self.params.L, self.params.L)

    def legs(self) -> tuple[slice, slice]:
        return slice(0, self.zero_index + 1), slice(self.zero_index, len(self))

    def step_costs(self) -> np.ndarray:
        return np.diff(self.energies)


def _growth_order(L: int) -> list[tuple[int, int]]:
    """Cells of the torus in the order they join a growing droplet anchored
    at the top-left site: square -> add a column on the right, wider ->
    add a row at the bottom; each new slice starts at its lowest
    ``(row, col)`` cell and is filled in scan order."""
    order = [(0, 0)]
    w = h = 1
    while w < L or h < L:
        if (w <= h and w < L) or h == L:
            order += [(r, w) for r in range(h)]
            w += 1
        else:
            order += [(h, c) for c in range(w)]
            h += 1
    return order


def reference_path(params: ModelParams) -> ReferencePath:
    _require_zero_lambda(params)
    lc = critical_length(params.h)
    L = params.L
    if L < lc + 2:
        raise BlumeCapelError(f"L = {L} too small: need L >= lc + 2 = {lc + 2}")
    cells = [r * L + c for r, c in _growth_order(L)]
    flips = [(s, ZERO) for s in cells] + [(s, PLUS) for s in cells]
    start = uniform(params, MINUS)
    energies = np.empty(len(flips) + 1)
    cur = start.reshape(-1).copy()
    e = hamiltonian(start, params)
    energies[0] = e
    for k, (site, spin) in enumerate(flips, start=1):
        e += single_flip_delta(cur, site, spin, params)
        cur[site] = spin
        energies[k] = e
    return ReferencePath(params, start, flips, energies, zero_index=len(cells))


# ---------------------------------------------------------------------------
# exhaustive enumeration


def encode(config) -> int:
    digits = np.asarray(config).reshape(-1).astype(np.int64) + 1
    return int((digits * 3 ** np.arange(digits.size, dtype=np.int64)).sum())


def decode(state: int, params: ModelParams) -> np.ndarray:
    n = params.volume
    out = np.empty(n, dtype=np.int8)
    for i in range(n):
        state, d = divmod(state, 3)
        out[i] = d - 1
    return out.reshape(params.L, params.L)


def enumeration_bytes(params: ModelParams) -> int:
    n = 3 ** params.volume
    edges = n * params.volume
    # energies + spins + edge list + heights + two directed CSR copies
    return n * (8 + params.volume) + edges * (16 + 8 + 2 * (8 + 8 + 8 + 8))


@dataclass
class TorusLandscape:
    params: ModelParams
    landscape: EnergyLandscape
    spins: np.ndarray  # (N, L*L) int8, row k decodes state k

    def state_of(self, config) -> int:
        return encode(config)

    def config_of(self, state: int) -> np.ndarray:
        return self.spins[state].reshape(self.params.L, self.params.L).copy()

    def uniform_state(self, spin: int) -> int:
        return encode(uniform(self.params, spin))


def enumerate_torus(params: ModelParams, memory_budget: int = 2 * 1024 ** 3) -> TorusLandscape:
    """Every configuration as a state (base-3 digits row-major, spin =
    digit - 1, site 0 least significant), single flips as edges, metropolis
    costs."""
    need = enumeration_bytes(params)
    if need > memory_budget:
        raise MemoryBudgetError(need, memory_budget)
    V = params.volume
    n = 3 ** V
    ids = np.arange(n, dtype=np.int64)
    spins = np.empty((n, V), dtype=np.int8)
    rest = ids.copy()
    for i in range(V):
        spins[:, i] = rest % 3 - 1
        rest //= 3
    L = params.L
    grid = spins.reshape(n, L, L).astype(np.int64)
    bonds = ((grid - np.roll(grid, -1, axis=2)) ** 2).sum(axis=(1, 2)) + \
        ((grid - np.roll(grid, -1, axis=1)) ** 2).sum(axis=(1, 2))
    energy = bonds - params.lam * (grid * grid).sum(axis=(1, 2)) - params.h * grid.sum(axis=(1, 2))
    del grid
    src, dst = [], []
    for i in range(V):
        p = 3 ** i
        digit = spins[:, i].astype(np.int64) + 1
        for step in (1, 2):
            ok = digit + step <= 2
            src.append(ids[ok])
            dst.append(ids[ok] + step * p)
    edges = np.stack([np.concatenate(src), np.concatenate(dst)], axis=1)
    if not params.condition_ok:
        warnings.warn("Blume-Capel parameters violate the standing condition: "
                      + "; ".join(params.condition.violations), stacklevel=2)
    return TorusLandscape(params, EnergyLandscape.metropolis(energy, edges), spins)
