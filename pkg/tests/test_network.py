import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from safefield.field import AgentSpec, GridScenarioConfig, build_grid_scenario
from safefield.network import (TopologyError, TopologyModel, check_component_connectivity, complete,
                               fiedler_value, induced_subgraph, laplacian, mean_laplacian, mesh,
                               parse_topology, sample_graph)


def path3(rho=1.0):
    return TopologyModel(3, [[0, 1], [1, 2]], rho)


class TestModel:
    def test_rejects_self_loop(self):
        with pytest.raises(TopologyError):
            TopologyModel(3, [[1, 1]], 1.0)

    def test_rejects_duplicate_either_direction(self):
        with pytest.raises(TopologyError):
            TopologyModel(3, [[0, 1], [1, 0]], 1.0)

    @pytest.mark.parametrize("rho", [0.0, 1.5, -0.1])
    def test_rejects_bad_activation(self, rho):
        with pytest.raises(TopologyError):
            path3(rho)

    def test_mesh_edge_count(self):
        g = mesh(5, 4)
        assert g.N == 20 and g.n_edges == 5 * 3 + 4 * 4

    def test_parse(self):
        assert parse_topology("mesh(25, 25)").n_edges == 2 * 25 * 24
        assert parse_topology("complete(4)").n_edges == 6
        assert parse_topology([[0, 2]], 0.5, n_agents=3).activation.tolist() == [0.5]
        with pytest.raises(TopologyError):
            parse_topology("ring(4)")

    def test_per_edge_activation_follows_sorting(self):
        g = TopologyModel(3, [[1, 2], [0, 1]], [0.2, 0.7])
        assert g.edges.tolist() == [[0, 1], [1, 2]]
        assert g.activation.tolist() == [0.7, 0.2]


class TestSampling:
    def test_always_on_returns_base_and_uses_no_randomness(self):
        rng = np.random.default_rng(0)
        state = rng.bit_generator.state
        g = path3()
        for t in range(5):
            s = sample_graph(g, rng, t)
            assert np.array_equal(s.edges, g.edges)
        assert rng.bit_generator.state == state
        L = laplacian(sample_graph(g, rng, 0), 3)
        assert np.array_equal(L, laplacian(sample_graph(g, rng, 9), 3))

    def test_half_probability_frequency(self):
        g = TopologyModel(2, [[0, 1]], 0.5)
        rng = np.random.default_rng(1)
        freq = np.mean([sample_graph(g, rng, t).active[0] for t in range(10_000)])
        assert abs(freq - 0.5) <= 0.02

    def test_samples_are_subsets(self):
        g = mesh(3, 3, 0.4)
        rng = np.random.default_rng(2)
        base = {tuple(e) for e in g.edges}
        for t in range(50):
            assert {tuple(e) for e in sample_graph(g, rng, t).edges} <= base


class TestLaplacian:
    def test_empty(self):
        assert np.array_equal(laplacian(np.zeros((0, 2)), 3), np.zeros((3, 3)))

    def test_single_edge(self):
        assert laplacian([[0, 1]], 2).tolist() == [[1, -1], [-1, 1]]

    def test_triangle(self):
        L = laplacian([[0, 1], [1, 2], [0, 2]], 3)
        assert np.all(np.diag(L) == 2) and L[0, 1] == -1
        assert np.allclose(np.linalg.eigvalsh(L), [0, 3, 3])

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 8), st.floats(0.1, 1.0), st.integers(0, 2**31))
    def test_sampled_laplacians_are_psd_with_zero_rows(self, n, rho, seed):
        g = complete(n, rho)
        L = laplacian(sample_graph(g, np.random.default_rng(seed), 0), n)
        assert np.array_equal(L, L.T)
        assert np.allclose(L.sum(axis=1), 0)
        assert np.linalg.eigvalsh(L)[0] >= -1e-9


class TestMeanLaplacian:
    def test_always_on(self):
        g = mesh(2, 3)
        assert np.array_equal(mean_laplacian(g), laplacian(g.edges, g.N))

    def test_single_edge(self):
        g = TopologyModel(2, [[0, 1]], 0.3)
        assert np.allclose(mean_laplacian(g), [[0.3, -0.3], [-0.3, 0.3]])

    def test_monte_carlo(self):
        g = TopologyModel(3, [[0, 1], [1, 2], [0, 2]], [0.2, 0.5, 0.9])
        rng = np.random.default_rng(3)
        n = 100_000
        draws = rng.random((n, 3)) < g.activation
        counts = draws.mean(axis=0)
        emp = laplacian(g.edges, 3, counts)
        assert np.max(np.abs(emp - mean_laplacian(g))) < 0.01
        # same check through the sampler itself on fewer draws
        acc = sum(laplacian(sample_graph(g, rng, t), 3) for t in range(5000)) / 5000
        # a diagonal entry sums two Bernoulli edges: variance at most 2 * 1/4
        assert np.max(np.abs(acc - mean_laplacian(g))) < 3 * np.sqrt(0.5 / 5000)


class TestInducedSubgraph:
    def test_full_set_is_identity(self):
        g = mesh(3, 3)
        sub = induced_subgraph(g, np.arange(9))
        assert np.array_equal(sub.edges, g.edges)
        assert np.array_equal(sub.activation, g.activation)

    def test_path_endpoints_have_no_edge(self):
        sub = induced_subgraph(path3(), [0, 2])
        assert sub.N == 2 and sub.n_edges == 0
        assert sub.labels.tolist() == [0, 2]

    def test_relabels_ascending(self):
        g = TopologyModel(5, [[4, 2], [2, 0]], 1.0)
        sub = induced_subgraph(g, [4, 2, 0])
        assert sub.edges.tolist() == [[0, 1], [1, 2]]


class TestFiedler:
    @pytest.mark.parametrize("n", [2, 3, 5, 8])
    def test_complete(self, n):
        assert abs(fiedler_value(laplacian(complete(n).edges, n)) - n) <= 1e-9

    def test_disconnected(self):
        assert abs(fiedler_value(laplacian([[0, 1]], 3))) <= 1e-9

    def test_triangle(self):
        assert abs(fiedler_value(laplacian([[0, 1], [1, 2], [0, 2]], 3)) - 3) <= 1e-9

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError):
            fiedler_value(np.array([[1.0, -1.0], [0.0, 0.0]]))


def _canon(cells, M):
    cells = np.asarray(cells)
    return sp.csr_matrix((np.ones(cells.size), (np.arange(cells.size), cells)), shape=(cells.size, M))


class TestComponentConnectivity:
    def test_connected_triangle(self):
        agents = [AgentSpec(n, _canon([0], 1), [0]) for n in range(3)]
        rep = check_component_connectivity(complete(3), agents)
        assert rep.ok and abs(rep.lambda2[0] - 3) < 1e-9

    def test_two_isolated_vertices(self):
        agents = [AgentSpec(0, _canon([0], 2), [0]), AgentSpec(1, _canon([1], 2), [1]),
                  AgentSpec(2, _canon([0], 2), [0])]
        rep = check_component_connectivity(path3(), agents)
        assert not rep.ok
        assert rep.failing.tolist() == [0]
        assert abs(rep.lambda2[0]) <= 1e-9
        # component 1 has a single interested agent
        assert rep.passed[1] and np.isnan(rep.lambda2[1])

    def test_desk_scenario_all_connected(self):
        agents, _ = build_grid_scenario(GridScenarioConfig(10, 10, 5, 4, 1, 2))
        assert check_component_connectivity(mesh(5, 4), agents).ok
