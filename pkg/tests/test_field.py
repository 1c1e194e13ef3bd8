import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from safefield.field import (AgentSpec, EntryLayout, FieldParameter, GridScenarioConfig, ScenarioError,
                             StreamIndex, build_grid_scenario, censored_measurement_matrix, coupling_set,
                             interested_agents, lattice_positions, stacked_rows, validate_agent)


def canonical(cells, M):
    cells = np.asarray(cells)
    return sp.csr_matrix((np.ones(cells.size), (np.arange(cells.size), cells)), shape=(cells.size, M))


def test_field_grid_roundtrip():
    f = FieldParameter(np.arange(12.0), (3, 4))
    assert f.M == 12
    for m in range(12):
        assert f.index(*f.coords(m)) == m
    assert f.index(2, 1) == 9
    assert f.as_image()[2, 1] == 9.0
    with pytest.raises(ScenarioError):
        FieldParameter(np.arange(5.0), (2, 3))
    with pytest.raises(IndexError):
        f.index(3, 0)


class TestCouplingSet:
    def test_zero_matrix(self):
        assert coupling_set(sp.csr_matrix((2, 5))).size == 0

    def test_canonical_row(self):
        assert coupling_set(canonical([3], 5)).tolist() == [3]

    def test_two_columns(self):
        H = np.zeros((2, 4))
        H[0, 0], H[1, 3], H[0, 3] = 0.6, 1.0, 0.8
        assert coupling_set(H).tolist() == [0, 3]

    def test_explicit_zero_ignored(self):
        H = sp.csr_matrix((np.array([0.0, 1.0]), (np.array([0, 0]), np.array([1, 2]))), shape=(1, 4))
        assert coupling_set(H).tolist() == [2]


class TestValidateAgent:
    def test_ok(self):
        assert validate_agent(AgentSpec(0, canonical([1, 2], 4), [0, 1, 2])) == []

    def test_row_norm(self):
        H = sp.csr_matrix(np.array([[2.0, 0, 0]]))
        problems = validate_agent(AgentSpec(0, H, [0]))
        assert any(p.startswith("row norm") for p in problems)

    def test_coupling_not_subset(self):
        H = sp.csr_matrix(np.array([[0.6, 0.8, 0.0]]))
        problems = validate_agent(AgentSpec(0, H, [1]))
        assert any(p.startswith("coupling not subset") for p in problems)

    def test_unsorted_interest(self):
        problems = validate_agent(AgentSpec(0, canonical([0], 3), [2, 0]))
        assert "interest not strictly ascending" in problems


class TestInterestedAgents:
    def agents(self):
        M = 3
        return [AgentSpec(0, canonical([0], M), [0, 1]),
                AgentSpec(1, canonical([1], M), [1]),
                AgentSpec(2, canonical([2], M), [2])]

    def test_toy(self):
        assert interested_agents(1, self.agents()) == [0, 1]

    def test_all(self):
        ag = [AgentSpec(n, canonical([0], 2), [0, 1]) for n in range(4)]
        assert interested_agents(1, ag) == [0, 1, 2, 3]

    def test_none(self):
        ag = [AgentSpec(0, canonical([0], 2), [0])]
        assert interested_agents(1, ag) == []

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            interested_agents(5, self.agents())


def test_censored_matrix_full_interest_is_unchanged():
    H = sp.random(3, 6, density=0.5, random_state=0, format="csr")
    a = AgentSpec(0, H, np.arange(6))
    assert np.array_equal(censored_measurement_matrix(a).toarray(), a.H.toarray())


def test_censored_matrix_single_cell():
    a = AgentSpec(0, canonical([3], 6), [3])
    assert censored_measurement_matrix(a).toarray().tolist() == [[1.0]]


def test_censored_matrix_keeps_interest_order():
    a = AgentSpec(0, canonical([4, 1], 6), [1, 2, 4])
    assert censored_measurement_matrix(a).toarray().tolist() == [[0, 0, 1], [1, 0, 0]]


@given(st.lists(st.integers(0, 6), min_size=1, max_size=12))
def test_stream_index_roundtrip(counts):
    idx = StreamIndex(counts)
    assert idx.P == sum(counts)
    for p in range(idx.P):
        assert idx.to_global(*idx.to_local(p)) == p
    for n, c in enumerate(counts):
        for r in range(c):
            assert idx.to_local(idx.to_global(n, r)) == (n, r)


def test_stream_index_streams_of():
    idx = StreamIndex([2, 0, 3])
    assert idx.streams_of([2, 0]).tolist() == [0, 1, 2, 3, 4]
    assert idx.streams_of([]).size == 0


class TestGridScenario:
    def test_single_agent_covers_small_grid(self):
        agents, pos = build_grid_scenario(GridScenarioConfig(2, 2, 1, 1, 1, 1))
        assert len(agents) == 1
        assert agents[0].interest.tolist() == [0, 1, 2, 3]
        assert agents[0].coupling.tolist() == [0, 1, 2, 3]

    def test_six_by_six_coverage_matches_brute_force(self):
        cfg = GridScenarioConfig(6, 6, 2, 2, 1, 2)
        agents, pos = build_grid_scenario(cfg)
        assert len(agents) == 4
        for m in range(36):
            i, j = divmod(m, 6)
            expect = [n for n, (r, c) in enumerate(pos) if abs(i - r) <= 2 and abs(j - c) <= 2]
            assert interested_agents(m, agents) == expect
            assert len(expect) >= 1

    def test_full_scale_sizes(self):
        agents, pos = build_grid_scenario(GridScenarioConfig(230, 230, 25, 25, 14, 28))
        assert len(agents) == 625
        assert agents[0].M == 52900
        assert max(a.n_streams for a in agents) == 29 * 29
        assert max(a.interest.size for a in agents) == 57 * 57
        assert len(np.unique(pos, axis=0)) == 625

    def test_lattice_positions_uniform(self):
        pos = lattice_positions(GridScenarioConfig(230, 230, 25, 25))
        rows = np.unique(pos[:, 0])
        assert rows[0] == 4 and rows[-1] == 225
        assert set(np.diff(rows)) <= {9, 10}

    def test_uncovered_cells_rejected(self):
        with pytest.raises(ScenarioError):
            build_grid_scenario(GridScenarioConfig(20, 20, 2, 2, 1, 2))

    def test_sense_wider_than_interest_rejected(self):
        with pytest.raises(ScenarioError):
            build_grid_scenario(GridScenarioConfig(6, 6, 2, 2, 3, 2))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(3, 12), st.integers(3, 12), st.integers(1, 3), st.integers(1, 3),
           st.integers(0, 2), st.integers(0, 3))
    def test_generated_agents_are_valid(self, h, w, r, c, hs, extra):
        cfg = GridScenarioConfig(h, w, r, c, hs, hs + extra)
        try:
            agents, _ = build_grid_scenario(cfg)
        except ScenarioError:
            return
        for a in agents:
            assert validate_agent(a) == []
            assert np.all(np.isin(a.coupling, a.interest))
        norms = np.sqrt(np.asarray(stacked_rows(agents).multiply(stacked_rows(agents)).sum(axis=1)).ravel())
        assert np.all(np.abs(norms - 1) <= 1e-12)
        layout = EntryLayout(agents, h * w)
        assert np.all(layout.J_size >= 1)


def test_entry_layout_split_stack():
    agents = [AgentSpec(0, canonical([0], 4), [0, 2]), AgentSpec(1, canonical([3], 4), [1, 3])]
    lay = EntryLayout(agents, 4)
    x = lay.stack([np.array([1.0, 2.0]), np.array([3.0, 4.0])])
    assert lay.comp.tolist() == [0, 2, 1, 3]
    assert [v.tolist() for v in lay.split(x)] == [[1, 2], [3, 4]]
    assert lay.restrict(np.array([10.0, 11, 12, 13])).tolist() == [10, 12, 11, 13]
