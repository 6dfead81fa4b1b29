import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metaland import blume_capel as bc
from metaland import landscape as ls
from metaland.polyomino import Polyomino, minimal_shape

P07 = bc.ModelParams(15, 0.7)


def configs(L):
    return st.lists(st.integers(-1, 1), min_size=L * L, max_size=L * L).map(
        lambda v: np.array(v, dtype=np.int8).reshape(L, L))


def test_uniform_energies():
    for L, h in ((3, 0.7), (15, 0.7), (8, 0.45)):
        p = bc.ModelParams(L, h)
        assert bc.hamiltonian(bc.uniform(p, 1), p) == pytest.approx(-L * L * h, abs=1e-12)
        assert bc.hamiltonian(bc.uniform(p, 0), p) == 0
        assert bc.hamiltonian(bc.uniform(p, -1), p) == pytest.approx(L * L * h, abs=1e-12)


def test_single_zero_in_minus_sea():
    s = bc.uniform(P07, -1)
    s[4, 7] = 0
    assert bc.hamiltonian(s, P07) - bc.hamiltonian(bc.uniform(P07, -1), P07) == pytest.approx(3.3)


def test_chemical_potential_term():
    p0 = bc.ModelParams(6, 0.3)
    p1 = bc.ModelParams(6, 0.3, lam=0.25)
    s = np.random.default_rng(0).integers(-1, 2, size=(6, 6))
    nonzero = np.count_nonzero(s)
    assert bc.hamiltonian(s, p1) == pytest.approx(bc.hamiltonian(s, p0) - 0.25 * nonzero)


def test_hand_checked_flip_values():
    p = bc.ModelParams(5, 0.7)
    s = bc.uniform(p, -1)
    s[2, 3] = 1  # right neighbour of (2, 2) is plus, the rest minus
    assert bc.single_flip_delta(s, 12, 0, p) == pytest.approx(-0.7)
    s = bc.uniform(p, 0)
    s[1, 2] = s[3, 2] = 1
    assert bc.single_flip_delta(s, (2, 2), 1, p) == pytest.approx(-0.7)
    assert bc.single_flip_delta(bc.uniform(p, -1), 0, 0, p) == pytest.approx(4 - 0.7)
    with pytest.raises(bc.BlumeCapelError):
        bc.single_flip_delta(s, 0, 2, p)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([8, 15]), st.data())
def test_flip_delta_matches_recompute(L, data):
    p = bc.ModelParams(L, 0.7)
    s = data.draw(configs(L))
    site = data.draw(st.integers(0, L * L - 1))
    new = data.draw(st.integers(-1, 1))
    t = s.copy()
    t.flat[site] = new
    assert bc.single_flip_delta(s, site, new, p) == pytest.approx(
        bc.hamiltonian(t, p) - bc.hamiltonian(s, p), abs=1e-11)


@settings(max_examples=50, deadline=None)
@given(configs(6), st.integers(0, 5), st.integers(0, 5), st.integers(0, 7))
def test_energy_lattice_symmetries(s, dr, dc, g):
    p = bc.ModelParams(6, 0.45)
    e = bc.hamiltonian(s, p)
    t = np.roll(s, (dr, dc), axis=(0, 1))
    t = np.rot90(t, g % 4)
    if g >= 4:
        t = t.T
    assert bc.hamiltonian(t, p) == pytest.approx(e, abs=1e-12)


def test_text_roundtrip():
    s = np.random.default_rng(1).integers(-1, 2, size=(4, 4)).astype(np.int8)
    np.testing.assert_array_equal(bc.from_text(bc.to_text(s)), s)
    with pytest.raises(bc.BlumeCapelError):
        bc.from_text("-0\n+")
    with pytest.raises(bc.BlumeCapelError):
        bc.from_text("-x\n++")


def test_params_validation():
    with pytest.raises(bc.BlumeCapelError):
        bc.ModelParams(1, 0.5)
    with pytest.raises(bc.BlumeCapelError):
        bc.as_config(np.full((15, 15), 3), P07)


def test_condition_report():
    # 49 / 0.7^4 is about 204.1
    assert bc.ModelParams(15, 0.7).condition_ok
    assert not bc.ModelParams(14, 0.7).condition_ok
    assert bc.ModelParams(15, 0.7).condition.min_volume == pytest.approx(49 / 0.7 ** 4)
    assert not bc.ModelParams(15, 0.45).condition_ok
    r = bc.ModelParams(100, 0.5).condition
    assert not r.ok and any("integer" in v for v in r.violations)
    assert not bc.ModelParams(100, 1.2).condition_ok


def test_neighbor_generator():
    p = bc.ModelParams(4, 0.7)
    dyn = bc.neighbor_generator(p)
    s = np.random.default_rng(2).integers(-1, 2, size=(4, 4))
    props = list(dyn.proposals(s))
    assert len(props) == dyn.n_proposals == 32
    assert math.fsum(q for *_, q in props) == pytest.approx(1.0)
    assert all(a != s.flat[i] for i, a, _ in props)
    row, diag = dyn.transition_row(s, 1.0)
    assert 0 <= diag < 1
    # symmetry of q: the reverse flip is proposed with the same weight
    i, a, q = props[5]
    t = s.copy()
    t.flat[i] = a
    back = {(j, b): w for j, b, w in dyn.proposals(t)}
    assert back[(i, int(s.flat[i]))] == q


@pytest.mark.parametrize("h, lc, gamma", [(0.7, 3, 7.1), (0.45, 5, 10.55)])
def test_critical_quantities(h, lc, gamma):
    q = bc.critical_quantities(bc.ModelParams(15, h))
    assert q.lc == lc
    assert q.gamma_c == pytest.approx(gamma, abs=1e-12)
    assert q.area == lc * (lc - 1) + 1
    assert q.bracket_ok


def test_critical_quantities_small_field():
    q = bc.critical_quantities(bc.ModelParams(15, 0.01))
    assert q.gamma_c / (4 / 0.01) == pytest.approx(1.004975, abs=1e-9)


def test_zero_lambda_operations_refuse_chemical_potential():
    p = bc.ModelParams(15, 0.7, lam=0.1)
    with pytest.raises(bc.BlumeCapelError):
        bc.critical_quantities(p)
    with pytest.raises(bc.BlumeCapelError):
        bc.reference_path(p)
    with pytest.raises(bc.BlumeCapelError):
        bc.critical_length(0.0)


def test_droplet_counts():
    # L^2 anchors x 2 orientations x 2 longest sides x lc offsets, all distinct
    assert len(bc.critical_droplet_shapes(15, 3)) == 15 * 15 * 12
    assert len(bc.critical_droplet_shapes(8, 3)) == 8 * 8 * 12
    assert len(bc.critical_droplet_shapes(9, 5)) == 9 * 9 * 20


@pytest.mark.parametrize("h", [0.7, 0.45])
def test_droplet_energies(h):
    p = bc.ModelParams(15, h)
    q = bc.critical_quantities(p)
    for spec in [bc.DropletSpec(), bc.DropletSpec(3, 13, "v", "low", q.lc - 1),
                 bc.DropletSpec(14, 14, "h", "low", 1)]:
        P = bc.droplet_config(spec, p)
        assert bc.hamiltonian(P, p) - bc.hamiltonian(bc.uniform(p, -1), p) == pytest.approx(
            q.gamma_c, abs=1e-12)
        Q = bc.droplet_config(bc.DropletSpec(spec.row, spec.col, spec.orientation, spec.side,
                                             spec.offset, "Q"), p)
        assert bc.hamiltonian(Q, p) == pytest.approx(q.gamma_c, abs=1e-12)
        assert bc.is_critical_droplet(P, p, "P_c") and bc.is_critical_droplet(Q, p, "Q_c")
        assert not bc.is_critical_droplet(P, p, "Q_c")
        assert bc.manifold_membership(P, p, "X_minus") and bc.manifold_membership(Q, p, "X_zero")


def test_droplet_fit_and_spec_errors():
    with pytest.raises(bc.BlumeCapelError, match="does not fit"):
        bc.droplet_config(bc.DropletSpec(), bc.ModelParams(4, 0.7))
    with pytest.raises(bc.BlumeCapelError):
        bc.droplet_config(bc.DropletSpec(offset=3), P07)
    with pytest.raises(bc.BlumeCapelError):
        bc.droplet_config(bc.DropletSpec(orientation="d"), P07)


def test_non_critical_shapes_rejected():
    d = bc.uniform(P07, -1)
    # protuberance on a shortest side
    s = d.copy()
    s[5:7, 5:8] = 0
    s[5, 4] = 0
    assert not bc.is_critical_droplet(s, P07)
    # protuberance away from the rectangle
    s = d.copy()
    s[5:7, 5:8] = 0
    s[9, 9] = 0
    assert not bc.is_critical_droplet(s, P07)
    # lc x lc square
    s = d.copy()
    s[5:8, 5:8] = 0
    assert not bc.is_critical_droplet(s, P07)
    # right shape in the wrong sea
    s = bc.droplet_config(bc.DropletSpec(), P07)
    s[s == -1] = 1
    assert not bc.is_critical_droplet(s, P07)
    assert not bc.manifold_membership(d, P07, "X_minus")
    assert not bc.is_critical_droplet(bc.uniform(bc.ModelParams(4, 0.7), -1), bc.ModelParams(4, 0.7))


def test_protuberance_shift_keeps_energy():
    e = {bc.hamiltonian(bc.droplet_config(bc.DropletSpec(2, 2, "h", "high", k), P07), P07)
         for k in range(3)}
    assert max(e) - min(e) < 1e-12


def test_droplet_energy_formula():
    assert bc.droplet_energy(Polyomino.rectangle(2, 2), P07) == pytest.approx(8 - 4 * 0.7)
    assert bc.droplet_energy(Polyomino.rectangle(1, 1), P07) == pytest.approx(4 - 0.7)
    assert bc.droplet_energy(minimal_shape(7).polyomino, P07) == pytest.approx(7.1)
    with pytest.raises(bc.BlumeCapelError, match="winding"):
        bc.droplet_energy(Polyomino.rectangle(15, 1), P07)


@settings(max_examples=60, deadline=None)
@given(st.sets(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=1, max_size=25),
       st.sampled_from(["P", "Q"]))
def test_droplet_energy_matches_hamiltonian(cells, phase):
    p = bc.ModelParams(10, 0.45)
    poly = Polyomino.from_cells(cells)
    s = bc.droplet_from_polyomino(poly, p, phase, at=(2, 1))
    bg = -1 if phase == "P" else 0
    excess = bc.hamiltonian(s, p) - bc.hamiltonian(bc.uniform(p, bg), p)
    assert excess == pytest.approx(bc.droplet_energy(poly, p, phase), abs=1e-11)


@pytest.mark.parametrize("h", [0.7, 0.45])
def test_reference_path(h):
    p = bc.ModelParams(15, h)
    q = bc.critical_quantities(p)
    path = bc.reference_path(p)
    cfgs = list(path.configs())
    assert len(cfgs) == len(path) == 2 * 225 + 1
    np.testing.assert_array_equal(cfgs[path.zero_index], bc.uniform(p, 0))
    np.testing.assert_array_equal(cfgs[-1], bc.uniform(p, 1))
    # energies recorded along the path agree with direct evaluation
    for k in (0, 5, 100, path.zero_index, 400, len(path) - 1):
        assert path.energies[k] == pytest.approx(bc.hamiltonian(cfgs[k], p), abs=1e-10)
    costs = path.step_costs()
    assert costs[0] == pytest.approx(4 - h) and costs[1] == pytest.approx(2 - h)
    for leg, base, which in ((path.legs()[0], -1, "P_c"), (path.legs()[1], 0, "Q_c")):
        e = path.energies[leg] - bc.hamiltonian(bc.uniform(p, base), p)
        top = e.max()
        assert top == pytest.approx(q.gamma_c, abs=1e-12)
        where = np.flatnonzero(np.abs(e - top) <= 1e-9)
        assert where.size == 1
        assert bc.is_critical_droplet(cfgs[leg.start + int(where[0])], p, which)


def test_reference_path_too_small():
    with pytest.raises(bc.BlumeCapelError):
        bc.reference_path(bc.ModelParams(4, 0.7))


def test_encoding_roundtrip():
    p = bc.ModelParams(3, 0.7)
    rng = np.random.default_rng(6)
    for _ in range(20):
        s = rng.integers(-1, 2, size=(3, 3)).astype(np.int8)
        np.testing.assert_array_equal(bc.decode(bc.encode(s), p), s)
    assert bc.encode(bc.uniform(p, -1)) == 0
    assert bc.encode(bc.uniform(p, 1)) == 3 ** 9 - 1


def test_enumeration_small_torus():
    p = bc.ModelParams(2, 0.7)
    with pytest.warns(UserWarning, match="condition"):
        tl = bc.enumerate_torus(p)
    land = tl.landscape
    assert land.n_states == 81 and land.n_edges == 81 * 8 // 2
    for k in (0, 17, 80):
        assert land.energy[k] == pytest.approx(bc.hamiltonian(tl.config_of(k), p))
    # every edge is a single flip
    diff = (tl.spins[land.edges[:, 0]] != tl.spins[land.edges[:, 1]]).sum(axis=1)
    assert (diff == 1).all()
    r = ls.relaxation_analysis(land)
    assert r.agrees_with(ls.relaxation_bruteforce(land))
    assert r.ground_states == [tl.uniform_state(1)]


def test_enumeration_memory_budget():
    with pytest.raises(bc.MemoryBudgetError) as err:
        bc.enumerate_torus(bc.ModelParams(4, 0.7))
    assert err.value.required > 2 * 1024 ** 3
    with pytest.raises(bc.MemoryBudgetError):
        bc.enumerate_torus(bc.ModelParams(3, 0.7), memory_budget=1000)


def test_enumerated_3x3(torus3):
    land = torus3.landscape
    assert land.n_states == 19683 and land.n_edges == 19683 * 18 // 2
    p = torus3.params
    for spin in (-1, 0, 1):
        k = torus3.uniform_state(spin)
        assert land.energy[k] == pytest.approx(bc.hamiltonian(bc.uniform(p, spin), p))
    r = ls.relaxation_analysis(land)
    d, z, u = (torus3.uniform_state(s) for s in (-1, 0, 1))
    assert r.gamma_m == pytest.approx(5.2, abs=1e-9)
    assert r.metastable_set == [d, z]
    assert r.ground_states == [u]
