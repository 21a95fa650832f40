"""Sector graph tests: membership, adjacency, degrees, paths, serialization."""

import math

import numpy as np
import pytest

from uowlab.netgraph import (
    DirectedSectorGraph,
    NodeSector,
    deploy,
    graph_from_text,
    graph_to_text,
    in_sector,
    is_k_connected,
    sector_adjacency,
    shortest_path_distances,
)

TWO_PI = 2.0 * math.pi


def rotation_frame_oracle(sector: NodeSector, point) -> bool:
    """Independent membership test: rotate into the sector's frame first."""
    delta = np.asarray(point, dtype=float) - sector.coords
    dist = math.hypot(delta[0], delta[1])
    if dist == 0.0 or dist > sector.radius:
        return False
    c, s = math.cos(-sector.orientation), math.sin(-sector.orientation)
    local = np.array([c * delta[0] - s * delta[1], s * delta[0] + c * delta[1]])
    return abs(math.atan2(local[1], local[0])) <= sector.scan_angle / 2.0


class TestNodeSector:
    def test_orientation_normalized(self):
        n = NodeSector(np.array([0.0, 0.0]), orientation=-math.pi / 2,
                       scan_angle=1.0, radius=1.0)
        assert n.orientation == pytest.approx(3 * math.pi / 2)

    def test_validation(self):
        with pytest.raises(ValueError, match="scan_angle"):
            NodeSector(np.zeros(2), 0.0, 0.0, 1.0)
        with pytest.raises(ValueError, match="scan_angle"):
            NodeSector(np.zeros(2), 0.0, TWO_PI + 0.1, 1.0)
        with pytest.raises(ValueError, match="radius"):
            NodeSector(np.zeros(2), 0.0, 1.0, 0.0)
        with pytest.raises(ValueError, match="coords"):
            NodeSector(np.zeros(3), 0.0, 1.0, 1.0)


class TestInSector:
    def test_boundary_point_along_axis_included(self):
        n = NodeSector(np.array([1.0, 2.0]), orientation=0.0,
                       scan_angle=math.pi / 2, radius=10.0)
        assert in_sector(n, [11.0, 2.0])          # exactly at range limit
        assert not in_sector(n, [11.0 + 1e-9, 2.0])

    def test_point_behind_is_outside(self):
        n = NodeSector(np.zeros(2), orientation=0.0, scan_angle=math.pi / 2,
                       radius=10.0)
        assert not in_sector(n, [-1.0, 0.0])

    def test_own_position_excluded(self):
        n = NodeSector(np.array([3.0, 4.0]), 0.0, TWO_PI, 5.0)
        assert not in_sector(n, [3.0, 4.0])

    def test_agrees_with_rotation_frame_oracle(self):
        rng = np.random.default_rng(2024)
        mismatches = 0
        for _ in range(100_000):
            sector = NodeSector(
                coords=rng.uniform(-5, 5, 2),
                orientation=rng.uniform(0, TWO_PI),
                scan_angle=rng.uniform(0.05, TWO_PI),
                radius=rng.uniform(0.1, 8.0),
            )
            point = rng.uniform(-10, 10, 2)
            if in_sector(sector, point) != rotation_frame_oracle(sector, point):
                mismatches += 1
        assert mismatches == 0


class TestDeploy:
    def test_single_node_has_empty_adjacency(self):
        g = deploy(1, 10.0, math.pi, 5.0, np.random.default_rng(0))
        assert g.adjacency.shape == (1, 1)
        assert not g.adjacency.any()

    def test_full_disk_graph_is_symmetric(self):
        g = deploy(60, 50.0, TWO_PI, 15.0, np.random.default_rng(1))
        assert np.array_equal(g.adjacency, g.adjacency.T)

    def test_fixed_seed_reproducible(self):
        g1 = deploy(40, 100.0, 2.0, 20.0, np.random.default_rng(99))
        g2 = deploy(40, 100.0, 2.0, 20.0, np.random.default_rng(99))
        assert np.array_equal(g1.positions(), g2.positions())
        assert np.array_equal(g1.adjacency, g2.adjacency)
        assert graph_to_text(g1) == graph_to_text(g2)

    def test_adjacency_matches_in_sector(self):
        g = deploy(50, 80.0, 2.4, 25.0, np.random.default_rng(7))
        for i in range(g.size):
            for j in range(g.size):
                if i == j:
                    continue
                assert g.adjacency[i, j] == in_sector(g.nodes[i], g.nodes[j].coords)

    def test_poisson_count_law(self):
        g = deploy(30, 50.0, 1.0, 10.0, np.random.default_rng(5),
                   count_law="poisson")
        assert g.size == np.random.default_rng(5).poisson(30)

    def test_angle_and_radius_monotonicity(self):
        rng = np.random.default_rng(11)
        positions = rng.uniform(0, 60, (40, 2))
        orientations = rng.uniform(0, TWO_PI, 40)

        def edges(phi, radius):
            return sector_adjacency(positions, orientations,
                                    np.full(40, phi), np.full(40, radius), 60.0)

        narrow = edges(0.8, 20.0)
        assert not (narrow & ~edges(1.7, 20.0)).any()   # wider angle keeps edges
        assert not (narrow & ~edges(0.8, 30.0)).any()   # longer reach keeps edges

    def test_full_disk_reduces_to_unit_disk_graph(self):
        g = deploy(80, 100.0, TWO_PI, 22.0, np.random.default_rng(3))
        pos = g.positions()
        d2 = ((pos[None, :, :] - pos[:, None, :]) ** 2).sum(axis=2)
        disk = (d2 <= 22.0 ** 2) & (d2 > 0)
        assert np.array_equal(g.adjacency, disk)

    def test_torus_wraps_across_border(self):
        nodes = [
            NodeSector(np.array([1.0, 50.0]), orientation=math.pi, scan_angle=math.pi / 2,
                       radius=5.0),
            NodeSector(np.array([99.0, 50.0]), orientation=0.0, scan_angle=math.pi / 2,
                       radius=5.0),
        ]
        bounded = DirectedSectorGraph.from_nodes(nodes, 100.0, torus=False)
        wrapped = DirectedSectorGraph.from_nodes(nodes, 100.0, torus=True)
        assert not bounded.adjacency.any()
        assert wrapped.adjacency[0, 1] and wrapped.adjacency[1, 0]

    def test_validation(self):
        with pytest.raises(ValueError, match="M"):
            deploy(0, 10.0, 1.0, 1.0, np.random.default_rng(0))
        with pytest.raises(ValueError, match="area_side"):
            deploy(5, 0.0, 1.0, 1.0, np.random.default_rng(0))
        with pytest.raises(ValueError, match="count_law"):
            deploy(5, 10.0, 1.0, 1.0, np.random.default_rng(0), count_law="magic")


def seven_node_star_fixture():
    """Hand-placed star: node 0 covers {1, 2, 3}; {4, 5, 6} cover node 0."""
    quarter = math.pi / 2
    nodes = [
        NodeSector(np.array([0.0, 0.0]), 0.0, quarter, 10.0),
        NodeSector(np.array([8.0, 1.0]), 0.0, quarter, 10.0),
        NodeSector(np.array([6.0, -2.0]), 0.0, quarter, 10.0),
        NodeSector(np.array([9.0, 3.0]), 0.0, quarter, 10.0),
        NodeSector(np.array([-5.0, 5.0]), math.atan2(-5.0, 5.0), quarter, 10.0),
        NodeSector(np.array([-7.0, -2.0]), math.atan2(2.0, 7.0), quarter, 10.0),
        NodeSector(np.array([2.0, -8.0]), math.atan2(8.0, -2.0), quarter, 10.0),
    ]
    return DirectedSectorGraph.from_nodes(nodes, area_side=30.0)


class TestNeighborQueries:
    def test_star_fixture_descendants_antecedents(self):
        g = seven_node_star_fixture()
        assert set(g.descendants(0)) == {1, 2, 3}
        assert set(g.antecedents(0)) == {4, 5, 6}

    def test_full_disk_descendants_equal_antecedents(self):
        g = deploy(40, 60.0, TWO_PI, 18.0, np.random.default_rng(21))
        for i in range(g.size):
            assert np.array_equal(g.descendants(i), g.antecedents(i))

    def test_transpose_consistency_random_graphs(self):
        rng = np.random.default_rng(77)
        for _ in range(100):
            g = deploy(int(rng.integers(2, 25)), 50.0,
                       rng.uniform(0.2, TWO_PI), rng.uniform(2, 30), rng)
            for i in range(g.size):
                for j in g.descendants(i):
                    assert i in g.antecedents(int(j))

    def test_index_out_of_range(self):
        g = deploy(3, 10.0, 1.0, 5.0, np.random.default_rng(0))
        with pytest.raises(IndexError):
            g.descendants(3)
        with pytest.raises(IndexError):
            g.antecedents(-1)


class TestKConnectivity:
    def test_two_facing_nodes(self):
        nodes = [
            NodeSector(np.array([0.0, 0.0]), 0.0, math.pi / 3, 5.0),
            NodeSector(np.array([3.0, 0.0]), math.pi, math.pi / 3, 5.0),
        ]
        g = DirectedSectorGraph.from_nodes(nodes, 10.0)
        assert is_k_connected(g, 1)
        assert not is_k_connected(g, 2)

    def test_isolated_node_breaks_connectivity(self):
        nodes = [
            NodeSector(np.array([0.0, 0.0]), 0.0, TWO_PI, 5.0),
            NodeSector(np.array([3.0, 0.0]), 0.0, TWO_PI, 5.0),
            NodeSector(np.array([40.0, 40.0]), 0.0, TWO_PI, 5.0),
        ]
        g = DirectedSectorGraph.from_nodes(nodes, 50.0)
        for k in (1, 2, 3):
            assert not is_k_connected(g, k)

    def test_against_brute_force_recount(self):
        rng = np.random.default_rng(13)
        for _ in range(500):
            g = deploy(int(rng.integers(1, 9)), 20.0,
                       rng.uniform(0.3, TWO_PI), rng.uniform(2, 25), rng)
            k = int(rng.integers(1, 4))
            out_ok = all(sum(bool(g.adjacency[i, j]) for j in range(g.size)) >= k
                         for i in range(g.size))
            in_ok = all(sum(bool(g.adjacency[j, i]) for j in range(g.size)) >= k
                        for i in range(g.size))
            assert is_k_connected(g, k) == (out_ok and in_ok)

    def test_k_validation(self):
        g = deploy(2, 10.0, 1.0, 5.0, np.random.default_rng(0))
        with pytest.raises(ValueError, match="k"):
            is_k_connected(g, 0)


def naive_relaxation(weights):
    """Independent cubic-time all-pairs relaxation."""
    M = len(weights)
    dist = [[weights[i][j] for j in range(M)] for i in range(M)]
    for i in range(M):
        dist[i][i] = 0.0
    for mid in range(M):
        for i in range(M):
            for j in range(M):
                alt = dist[i][mid] + dist[mid][j]
                if alt < dist[i][j]:
                    dist[i][j] = alt
    return np.array(dist)


class TestShortestPaths:
    def test_unit_clique(self):
        g = deploy(8, 10.0, TWO_PI, 100.0, np.random.default_rng(1))
        dist = shortest_path_distances(g, np.where(g.adjacency, 1.0, np.inf))
        off = ~np.eye(8, dtype=bool)
        assert np.all(dist[off] == 1.0)
        assert np.all(dist.diagonal() == 0.0)

    def test_three_node_chain(self):
        nodes = [
            NodeSector(np.array([0.0, 0.0]), 0.0, 0.5, 2.5),
            NodeSector(np.array([2.0, 0.0]), 0.0, 0.5, 3.5),
            NodeSector(np.array([5.0, 0.0]), 0.0, 0.5, 2.0),
        ]
        g = DirectedSectorGraph.from_nodes(nodes, 10.0)
        weights = np.where(g.adjacency, np.array([[0, 2, 0], [0, 0, 3], [0, 0, 0.]]),
                           np.inf)
        dist = shortest_path_distances(g, weights)
        assert dist[0, 2] == 5.0
        assert math.isinf(dist[2, 0])

    def test_against_naive_relaxation(self):
        rng = np.random.default_rng(55)
        for _ in range(200):
            M = int(rng.integers(2, 31))
            g = deploy(M, 40.0, rng.uniform(0.3, TWO_PI), rng.uniform(3, 25), rng)
            weights = np.where(g.adjacency, rng.uniform(0.1, 5.0, (M, M)), np.inf)
            expected = naive_relaxation(weights.tolist())
            assert np.allclose(shortest_path_distances(g, weights), expected,
                               rtol=1e-12, atol=0.0, equal_nan=False)

    def test_negative_weights_rejected(self):
        g = deploy(3, 10.0, TWO_PI, 20.0, np.random.default_rng(0))
        weights = np.where(g.adjacency, -1.0, np.inf)
        with pytest.raises(ValueError, match="negative"):
            shortest_path_distances(g, weights)


class TestSerialization:
    def test_round_trip(self):
        g = deploy(25, 70.0, 1.9, 18.0, np.random.default_rng(31), torus=True)
        text = graph_to_text(g)
        g2 = graph_from_text(text)
        assert g2.area_side == g.area_side
        assert g2.torus == g.torus
        assert np.array_equal(g2.positions(), g.positions())
        assert np.array_equal(g2.adjacency, g.adjacency)
        assert graph_to_text(g2) == text

    def test_bad_edge_rejected(self):
        g = deploy(3, 10.0, 1.0, 5.0, np.random.default_rng(0))
        text = graph_to_text(g).replace("edges 0", "edges 1") + "0 7\n"
        with pytest.raises(ValueError, match="edge"):
            graph_from_text(text)

    def test_truncated_rejected(self):
        with pytest.raises(ValueError, match="truncated|expected"):
            graph_from_text("area_side 10.0\ntorus 0\nnodes 2\n")
