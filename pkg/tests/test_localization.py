"""Localization pipeline tests: observation, completion, MDS, Procrustes, e2e."""

import math
import warnings

import numpy as np
import pytest

from uowlab.localization import (
    AnchorSet,
    CollinearAnchorWarning,
    DegenerateEmbeddingWarning,
    ObservedDistanceMatrix,
    SparseObservationWarning,
    complete_matrix,
    completion_gradient,
    completion_objective,
    localize,
    mds_embed,
    observe_distances,
    positions_from_text,
    positions_to_text,
    procrustes_align,
)
from uowlab.netgraph import DirectedSectorGraph, NodeSector, deploy

TWO_PI = 2.0 * math.pi


def pairwise_distances(points):
    points = np.asarray(points, dtype=float)
    deltas = points[None, :, :] - points[:, None, :]
    return np.sqrt((deltas ** 2).sum(axis=2))


def planar_observation(points, density, rng, noise=0.0):
    """Exact or noisy observation with a symmetric uniform mask."""
    M = len(points)
    true = pairwise_distances(points)
    upper = np.triu(rng.uniform(size=(M, M)) < density, k=1)
    mask = upper | upper.T | np.eye(M, dtype=bool)
    values = true.copy()
    if noise > 0:
        values = values + rng.standard_normal((M, M)) * noise * values
        values = np.maximum(values, 1e-9)
    values = np.where(mask, values, np.nan)
    np.fill_diagonal(values, 0.0)
    return ObservedDistanceMatrix(values=values, mask=mask), true


def dense_scenario(M=40, seed=2, noise=0.0, radius=200.0, scan=TWO_PI):
    rng = np.random.default_rng(seed)
    graph = deploy(M, 100.0, scan, radius, rng)
    obs = observe_distances(graph, noise, rng)
    anchors = AnchorSet.random(graph, 5, rng)
    return graph, obs, anchors


class TestObserveDistances:
    def test_zero_noise_is_exact(self):
        graph, obs, _ = dense_scenario(M=20)
        true = pairwise_distances(graph.positions())
        assert np.array_equal(obs.values[obs.mask], true[obs.mask])

    def test_full_disk_long_range_masks_everything(self):
        graph, obs, _ = dense_scenario(M=15, radius=1000.0)
        assert obs.mask.all()

    def test_mask_matches_link_union(self):
        rng = np.random.default_rng(8)
        graph = deploy(30, 100.0, 2.0, 30.0, rng)
        obs = observe_distances(graph, 0.0, rng)
        expected = graph.adjacency | graph.adjacency.T | np.eye(30, dtype=bool)
        assert np.array_equal(obs.mask, expected)

    def test_directions_draw_independent_noise(self):
        rng = np.random.default_rng(9)
        graph = deploy(20, 50.0, TWO_PI, 100.0, rng)
        obs = observe_distances(graph, 0.05, rng)
        off = obs.mask & ~np.eye(20, dtype=bool)
        assert np.any(obs.values[off] != obs.values.T[off])

    def test_noise_scale_matches_configuration(self):
        nodes = [NodeSector(np.array([0.0, 0.0]), 0.0, TWO_PI, 100.0),
                 NodeSector(np.array([30.0, 0.0]), 0.0, TWO_PI, 100.0)]
        graph = DirectedSectorGraph.from_nodes(nodes, 100.0)
        rng = np.random.default_rng(10)
        draws = np.array([observe_distances(graph, 0.05, rng).values[0, 1]
                          for _ in range(10_000)])
        assert draws.std() == pytest.approx(0.05 * 30.0, rel=0.05)
        assert draws.mean() == pytest.approx(30.0, rel=0.01)

    def test_negative_noise_rejected(self):
        graph, _, _ = dense_scenario(M=5)
        with pytest.raises(ValueError, match="noise_pct"):
            observe_distances(graph, -0.1, np.random.default_rng(0))

    def test_matrix_invariants_enforced(self):
        with pytest.raises(ValueError, match="diagonal"):
            ObservedDistanceMatrix(values=np.ones((3, 3)),
                                   mask=np.ones((3, 3), dtype=bool))


class TestCompleteMatrix:
    def test_fully_observed_is_fixed_point(self):
        rng = np.random.default_rng(3)
        points = rng.uniform(0, 5, (20, 2))
        obs, true = planar_observation(points, 1.1, rng)
        result = complete_matrix(obs)
        assert result.converged
        rel = np.abs(result.matrix - true ** 2).max() / (true ** 2).max()
        assert rel < 1e-8

    def test_recovers_unobserved_at_sixty_percent(self):
        rng = np.random.default_rng(7)
        points = rng.uniform(0, 10, (30, 2))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SparseObservationWarning)
            obs, true = planar_observation(points, 0.6, rng)
            result = complete_matrix(obs)
        assert result.masked_residual < 1e-6
        unobserved = ~obs.mask
        rel_err = (np.abs(result.matrix - true ** 2)[unobserved]
                   / true[unobserved] ** 2)
        assert rel_err.max() < 1e-3

    def test_residual_history_monotone(self):
        rng = np.random.default_rng(12)
        points = rng.uniform(0, 10, (25, 2))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SparseObservationWarning)
            obs, _ = planar_observation(points, 0.55, rng, noise=0.03)
            result = complete_matrix(obs)
        history = result.residual_history
        assert len(history) >= 2
        assert all(b <= a + 1e-15 for a, b in zip(history, history[1:]))

    def test_output_rank_and_symmetry(self):
        rng = np.random.default_rng(15)
        points = rng.uniform(0, 10, (28, 2))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            obs, _ = planar_observation(points, 0.7, rng, noise=0.05)
            result = complete_matrix(obs)
        assert np.abs(result.matrix - result.matrix.T).max() < 1e-10
        svals = np.linalg.svd(result.matrix, compute_uv=False)
        assert (svals > 1e-8 * svals[0]).sum() <= 4

    def test_gradient_matches_central_differences(self):
        rng = np.random.default_rng(21)
        M = 12
        mask = np.triu(rng.uniform(size=(M, M)) < 0.7, k=1)
        mask = mask | mask.T | np.eye(M, dtype=bool)
        target = rng.uniform(0, 9, (M, M))
        target = 0.5 * (target + target.T)
        for _ in range(10):
            iterate = rng.standard_normal((M, M))
            iterate = 0.5 * (iterate + iterate.T)
            analytic = completion_gradient(iterate, target, mask)
            h = 1e-6
            for _ in range(6):
                i, j = rng.integers(0, M, 2)
                bump = np.zeros((M, M))
                bump[i, j] = h
                fd = (completion_objective(iterate + bump, target, mask)
                      - completion_objective(iterate - bump, target, mask)) / (2 * h)
                if abs(fd) > 1e-9:
                    assert analytic[i, j] == pytest.approx(fd, rel=1e-5)
                else:
                    assert abs(analytic[i, j]) < 1e-9

    def test_budget_exhaustion_flags_not_converged(self):
        rng = np.random.default_rng(31)
        points = rng.uniform(0, 10, (25, 2))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            obs, _ = planar_observation(points, 0.5, rng, noise=0.05)
            result = complete_matrix(obs, max_iters=3)
        assert not result.converged
        assert result.iterations <= 3
        assert np.all(np.isfinite(result.matrix))

    def test_sparse_observation_warns(self):
        rng = np.random.default_rng(41)
        points = rng.uniform(0, 10, (30, 2))
        with pytest.warns(SparseObservationWarning):
            obs, _ = planar_observation(points, 0.2, rng)
            complete_matrix(obs, max_iters=5)


class TestMdsEmbed:
    def test_unit_square_exact(self):
        corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        embedding = mds_embed(pairwise_distances(corners))
        assert np.abs(pairwise_distances(embedding)
                      - pairwise_distances(corners)).max() < 1e-9

    def test_output_is_centered(self):
        rng = np.random.default_rng(5)
        D = pairwise_distances(rng.uniform(0, 20, (30, 2)))
        embedding = mds_embed(D)
        assert np.abs(embedding.mean(axis=0)).max() < 1e-12

    def test_reconstructs_random_planar_distances(self):
        rng = np.random.default_rng(6)
        D = pairwise_distances(rng.uniform(0, 50, (50, 2)))
        embedding = mds_embed(D)
        err = np.abs(pairwise_distances(embedding) - D)
        assert err.max() / D.max() < 1e-8

    def test_degenerate_input_warns_and_pads(self):
        # collinear points have a rank-1 geometry
        points = np.column_stack([np.linspace(0, 9, 10), np.zeros(10)])
        with pytest.warns(DegenerateEmbeddingWarning):
            embedding = mds_embed(pairwise_distances(points))
        assert np.allclose(embedding[:, 1], 0.0)

    def test_dims_validation(self):
        with pytest.raises(ValueError, match="dims"):
            mds_embed(np.zeros((4, 4)), dims=4)
        with pytest.raises(ValueError, match="square"):
            mds_embed(np.zeros((3, 4)))


class TestProcrustes:
    def test_identity_recovery(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(-5, 5, (8, 2))
        transform = procrustes_align(pts, pts)
        assert np.allclose(transform.rotation, np.eye(2), atol=1e-12)
        assert np.allclose(transform.translation, 0.0, atol=1e-12)
        assert transform.scale == pytest.approx(1.0, rel=1e-12)

    def test_synthetic_similarity_inverted(self):
        rng = np.random.default_rng(3)
        true = rng.uniform(0, 10, (6, 2))
        theta, scale, shift = math.pi / 3, 2.5, np.array([4.0, -1.0])
        rot = np.array([[math.cos(theta), -math.sin(theta)],
                        [math.sin(theta), math.cos(theta)]])
        relative = scale * true @ rot.T + shift
        transform = procrustes_align(relative, true)
        residual = np.linalg.norm(transform.apply(relative) - true)
        assert residual < 1e-10
        assert transform.scale == pytest.approx(1.0 / scale, rel=1e-10)
        assert transform.rotation.T @ transform.rotation == pytest.approx(
            np.eye(2), abs=1e-12)

    def test_noisy_alignment_matches_grid_search(self):
        rng = np.random.default_rng(4)
        true = rng.uniform(0, 10, (7, 2))
        theta = 0.9
        rot = np.array([[math.cos(theta), -math.sin(theta)],
                        [math.sin(theta), math.cos(theta)]])
        relative = 1.7 * true @ rot.T + np.array([1.0, 2.0])
        noisy = true + rng.standard_normal((7, 2)) * 0.1
        transform = procrustes_align(relative, noisy)
        best = np.linalg.norm(transform.apply(relative) - noisy) ** 2

        # brute-force over rotation angle and scale; translation optimal
        # given (theta, s) is the centroid difference
        mu_rel, mu_true = relative.mean(0), noisy.mean(0)
        grid_best = np.inf
        for ang in np.linspace(-math.pi, math.pi, 4001):
            c, s = math.cos(ang), math.sin(ang)
            candidate_rot = np.array([[c, -s], [s, c]])
            rotated = (relative - mu_rel) @ candidate_rot.T
            scale_opt = float((rotated * (noisy - mu_true)).sum()
                              / (rotated ** 2).sum())
            residual = np.linalg.norm(scale_opt * rotated - (noisy - mu_true)) ** 2
            grid_best = min(grid_best, residual)
        assert best <= grid_best + 1e-6

    def test_objective_not_worse_than_identity(self):
        rng = np.random.default_rng(14)
        relative = rng.uniform(0, 10, (5, 2))
        target = rng.uniform(0, 10, (5, 2))
        transform = procrustes_align(relative, target)
        aligned = np.linalg.norm(transform.apply(relative) - target) ** 2
        identity = np.linalg.norm(relative - target) ** 2
        assert aligned <= identity + 1e-9

    def test_reflection_policy(self):
        rng = np.random.default_rng(15)
        true = rng.uniform(0, 10, (6, 2))
        mirrored = true * np.array([1.0, -1.0])  # improper transform
        allowed = procrustes_align(mirrored, true, allow_reflection=True)
        assert np.linalg.norm(allowed.apply(mirrored) - true) < 1e-10
        assert np.linalg.det(allowed.rotation) == pytest.approx(-1.0, abs=1e-12)
        forbidden = procrustes_align(mirrored, true, allow_reflection=False)
        assert np.linalg.det(forbidden.rotation) == pytest.approx(1.0, abs=1e-12)
        assert (np.linalg.norm(forbidden.apply(mirrored) - true)
                > np.linalg.norm(allowed.apply(mirrored) - true))

    def test_validation_and_warnings(self):
        with pytest.raises(ValueError, match="3"):
            procrustes_align(np.zeros((2, 2)), np.zeros((2, 2)))
        with pytest.raises(ValueError, match="degenerate"):
            procrustes_align(np.ones((4, 2)), np.random.default_rng(0).uniform(size=(4, 2)))
        collinear = np.column_stack([np.arange(4.0), np.zeros(4)])
        with pytest.warns(CollinearAnchorWarning):
            procrustes_align(np.random.default_rng(1).uniform(size=(4, 2)), collinear)

    def test_anchor_set_validation(self):
        with pytest.raises(ValueError, match="3"):
            AnchorSet(indices=(0, 1), true_positions=np.zeros((2, 2)))
        with pytest.raises(ValueError, match="unique"):
            AnchorSet(indices=(0, 1, 1), true_positions=np.zeros((3, 2)))


class TestLocalize:
    def test_exact_pipeline_on_exact_data(self):
        graph, obs, anchors = dense_scenario(M=40)
        result = localize(graph, obs, anchors, method="proposed")
        assert result.rmse < 1e-6 * graph.area_side
        assert result.unlocalized == 0

    def test_all_methods_run_and_report(self):
        graph, obs, anchors = dense_scenario(M=50, seed=4, noise=0.05,
                                             radius=40.0, scan=3 * math.pi / 4)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            results = {m: localize(graph, obs, anchors, method=m, stall_tol=1e-4)
                       for m in ("proposed", "mds_map", "dv_hop")}
        for result in results.values():
            assert np.all(np.isfinite(result.estimated_positions))
            assert result.rmse >= 0
        assert results["proposed"].iterations > 0
        assert results["mds_map"].iterations == 0

    def test_method_quality_ordering_small_sample(self):
        rmse = {m: [] for m in ("proposed", "mds_map", "dv_hop")}
        for seed in range(5):
            graph, obs, anchors = dense_scenario(M=60, seed=100 + seed,
                                                 noise=0.05, radius=40.0,
                                                 scan=3 * math.pi / 4)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                for m in rmse:
                    rmse[m].append(localize(graph, obs, anchors, method=m,
                                            stall_tol=1e-4).rmse)
        assert np.mean(rmse["proposed"]) < np.mean(rmse["dv_hop"])

    def test_rigid_motion_equivariance(self):
        graph, obs, anchors = dense_scenario(M=30, seed=6, radius=60.0,
                                             scan=TWO_PI)
        theta = 0.7
        rot = np.array([[math.cos(theta), -math.sin(theta)],
                        [math.sin(theta), math.cos(theta)]])
        shift = np.array([12.0, -3.0])

        moved_nodes = [
            NodeSector(rot @ n.coords + shift, n.orientation + theta,
                       n.scan_angle, n.radius)
            for n in graph.nodes
        ]
        moved = DirectedSectorGraph(nodes=tuple(moved_nodes),
                                    adjacency=graph.adjacency,
                                    area_side=graph.area_side)
        moved_anchors = AnchorSet(
            indices=anchors.indices,
            true_positions=anchors.true_positions @ rot.T + shift)
        base = localize(graph, obs, anchors, method="proposed")
        transformed = localize(moved, obs, moved_anchors, method="proposed")
        assert transformed.rmse == pytest.approx(base.rmse, abs=1e-9)

    def test_disconnected_node_excluded_and_counted(self):
        nodes = [
            NodeSector(np.array([10.0, 10.0]), 0.0, TWO_PI, 30.0),
            NodeSector(np.array([20.0, 10.0]), 0.0, TWO_PI, 30.0),
            NodeSector(np.array([10.0, 20.0]), 0.0, TWO_PI, 30.0),
            NodeSector(np.array([20.0, 20.0]), 0.0, TWO_PI, 30.0),
            NodeSector(np.array([90.0, 90.0]), 0.0, TWO_PI, 5.0),
        ]
        graph = DirectedSectorGraph.from_nodes(nodes, 100.0)
        rng = np.random.default_rng(0)
        obs = observe_distances(graph, 0.0, rng)
        anchors = AnchorSet(indices=(0, 1, 2),
                            true_positions=graph.positions()[:3])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for method in ("proposed", "mds_map", "dv_hop"):
                result = localize(graph, obs, anchors, method=method)
                assert result.unlocalized == 1
                assert np.all(np.isfinite(result.estimated_positions))

    def test_rmse_norms(self):
        graph, obs, anchors = dense_scenario(M=30, seed=13, noise=0.05,
                                             radius=60.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            normalized = localize(graph, obs, anchors, rmse_norm="normalized")
            conventional = localize(graph, obs, anchors, rmse_norm="conventional")
        n_eval = graph.size - len(anchors.indices)
        assert conventional.rmse == pytest.approx(normalized.rmse * math.sqrt(n_eval),
                                                  rel=1e-9)

    def test_method_validation(self):
        graph, obs, anchors = dense_scenario(M=10)
        with pytest.raises(ValueError, match="method"):
            localize(graph, obs, anchors, method="oracle")

    def test_positions_text_round_trip(self):
        graph, obs, anchors = dense_scenario(M=12)
        result = localize(graph, obs, anchors, method="proposed")
        text = positions_to_text(result.estimated_positions)
        assert np.array_equal(positions_from_text(text),
                              result.estimated_positions)
        with pytest.raises(ValueError, match="nodes"):
            positions_from_text("1 2.0 3.0\n")
