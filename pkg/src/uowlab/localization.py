"""Network localization from masked, noisy pairwise ranges.

Pipeline pieces:
  - observe_distances: per-link Gaussian ranging noise on the sector
    graph's observation mask
  - complete_matrix: fixed-rank least-squares completion of the squared
    distance matrix by conjugate gradient iteration on the rank-r
    manifold (squared planar distance matrices have rank <= 4)
  - mds_embed: classical double-centering embedding
  - procrustes_align: closed-form similarity transform onto anchors
  - localize: end-to-end driver for the completion pipeline and the
    MDS-MAP / DV-hop baselines, with RMSE scoring

Positions are meters; the observation mask marks pairs with at least one
directed optical link (in either direction), plus the trivial diagonal.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .netgraph import DirectedSectorGraph

# Floor applied to noisy ranges so observed distances stay positive (m).
EPS_DISTANCE = 1e-9

_METHODS = ("proposed", "mds_map", "dv_hop")


class SparseObservationWarning(UserWarning):
    """Observed entries fall below the completion recovery guidance."""


class DegenerateEmbeddingWarning(UserWarning):
    """The double-centered matrix had fewer positive eigenvalues than dims."""


class CollinearAnchorWarning(UserWarning):
    """Anchor geometry is near-collinear; alignment may be ill-conditioned."""


# ---------------------------------------------------------------------------
# observation model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObservedDistanceMatrix:
    """Noisy ranges on the observation mask; unobserved entries are NaN.

    ``mask`` is True on the diagonal and wherever at least one of the two
    directed links exists; when both directions are observed they carry
    independent noise draws.
    """

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.shape != mask.shape or values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("values and mask must be matching square matrices")
        if not np.all(mask.diagonal()):
            raise ValueError("mask diagonal must be True")
        if np.any(values.diagonal() != 0.0):
            raise ValueError("values diagonal must be 0")
        off = mask & ~np.eye(len(values), dtype=bool)
        if np.any(~np.isfinite(values[off])) or np.any(values[off] <= 0):
            raise ValueError("observed off-diagonal values must be finite and > 0")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def size(self) -> int:
        return len(self.values)


def observe_distances(
    graph: DirectedSectorGraph,
    noise_pct: float,
    rng: Optional[np.random.Generator] = None,
) -> ObservedDistanceMatrix:
    """Measure ranges over every directed link of the graph.

    Each observed direction gets an independent Gaussian error with
    standard deviation ``noise_pct * true_distance``, floored at
    EPS_DISTANCE so ranges stay positive.

    Args:
        graph: Deployed sector graph (defines true geometry and mask).
        noise_pct: Ranging noise level as a fraction of the true range.
        rng: Required when noise_pct > 0.

    Returns:
        ObservedDistanceMatrix with NaN at unobserved entries.
    """
    if noise_pct < 0:
        raise ValueError(f"noise_pct must be >= 0, got {noise_pct}")
    M = graph.size
    positions = graph.positions()
    deltas = positions[None, :, :] - positions[:, None, :]
    true_dist = np.sqrt((deltas ** 2).sum(axis=2))

    mask = graph.adjacency | graph.adjacency.T | np.eye(M, dtype=bool)
    values = np.full((M, M), np.nan)
    if noise_pct > 0.0:
        if rng is None:
            raise ValueError("noise_pct > 0 requires an rng")
        noisy = true_dist + rng.standard_normal((M, M)) * (noise_pct * true_dist)
        values[mask] = np.maximum(EPS_DISTANCE, noisy[mask])
    else:
        values[mask] = true_dist[mask]
    np.fill_diagonal(values, 0.0)
    return ObservedDistanceMatrix(values=values, mask=mask)


def _symmetrize(obs: ObservedDistanceMatrix):
    """Average doubly observed pairs, mirror single ones.

    Returns (sym_values, sym_mask); sym_mask equals obs.mask (already
    symmetric by construction) and unobserved entries stay NaN.
    """
    values, mask = obs.values, obs.mask
    both = mask & mask.T
    sym = np.where(both, 0.5 * (np.where(mask, values, 0.0)
                                + np.where(mask, values, 0.0).T), np.nan)
    one_way = mask & ~mask.T
    sym = np.where(one_way, values, sym)
    sym = np.where(one_way.T, values.T, sym)
    np.fill_diagonal(sym, 0.0)
    return sym, (mask | mask.T)


def _all_pairs_shortest(weights: np.ndarray) -> np.ndarray:
    """Floyd-Warshall on a prepared matrix (inf = absent, diagonal = 0)."""
    dist = weights.copy()
    np.fill_diagonal(dist, 0.0)
    for k in range(len(dist)):
        np.minimum(dist, dist[:, k:k + 1] + dist[k:k + 1, :], out=dist)
    return dist


def _path_filled_distances(obs: ObservedDistanceMatrix):
    """Symmetrized observations with missing entries filled by path sums.

    Missing pairs take the shortest-path distance through observed
    links; pairs disconnected from each other fall back to the largest
    observed range.  Returns (filled, sym_mask, path_matrix).
    """
    sym, sym_mask = _symmetrize(obs)
    M = obs.size
    off = ~np.eye(M, dtype=bool)
    weights = np.where(sym_mask & off, sym, np.inf)
    paths = _all_pairs_shortest(weights)

    filled = np.where(sym_mask, sym, paths)
    finite_obs = sym[sym_mask & off]
    fallback = float(finite_obs.max()) if len(finite_obs) else 1.0
    filled = np.where(np.isfinite(filled), filled, fallback)
    np.fill_diagonal(filled, 0.0)
    return filled, sym_mask, paths


# ---------------------------------------------------------------------------
# fixed-rank completion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompletionResult:
    """Completed squared-distance matrix plus convergence bookkeeping."""

    matrix: np.ndarray
    masked_residual: float
    iterations: int
    converged: bool
    residual_history: tuple[float, ...] = field(default=())


def _retract(matrix: np.ndarray, rank: int):
    """Best rank-r approximation of a symmetric matrix (eigenvalue cut).

    Returns (approximation, orthonormal basis of its column space).
    """
    sym = 0.5 * (matrix + matrix.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    keep = np.argsort(np.abs(eigvals))[-rank:]
    basis = eigvecs[:, keep]
    return (basis * eigvals[keep]) @ basis.T, basis


def _truncate_rank(matrix: np.ndarray, rank: int) -> np.ndarray:
    return _retract(matrix, rank)[0]


def _tangent_project(Z: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Project symmetric Z onto the tangent space at span(basis)."""
    ZU = Z @ basis
    UtZU = basis.T @ ZU
    return ZU @ basis.T + basis @ ZU.T - basis @ UtZU @ basis.T


def completion_objective(candidate: np.ndarray, target: np.ndarray,
                         mask: np.ndarray) -> float:
    """Masked least-squares objective 0.5 ||mask o (candidate - target)||_F^2."""
    diff = np.where(mask, candidate - target, 0.0)
    return 0.5 * float((diff * diff).sum())


def completion_gradient(candidate: np.ndarray, target: np.ndarray,
                        mask: np.ndarray) -> np.ndarray:
    """Euclidean gradient of :func:`completion_objective`: mask o (candidate - target)."""
    return np.where(mask, candidate - target, 0.0)


def complete_matrix(
    obs: ObservedDistanceMatrix,
    target_rank: int = 4,
    max_iters: int = 500,
    tol: float = 1e-6,
    stall_tol: Optional[float] = None,
) -> CompletionResult:
    """Complete the squared distance matrix at fixed rank.

    Symmetrizes the observations, squares them, seeds missing entries
    with shortest-path distances, and minimizes the masked residual
    against the observed squared distances over symmetric matrices of
    rank <= ``target_rank`` (default 4 = planar dimension + 2).  Search
    directions follow conjugate-gradient updates on the fixed-rank
    manifold: tangent-projected gradients combined with a restarted
    Polak-Ribiere coefficient, an Armijo backtracking line search, and
    retraction by eigenvalue truncation.

    Stops when the relative masked residual drops below ``tol``; if the
    budget runs out or the line search stalls first, the best iterate is
    returned flagged ``converged=False``.  ``stall_tol``, when given,
    additionally stops once an iteration improves the residual by less
    than that relative fraction (useful on noisy data, where the
    residual plateaus at the noise floor long before ``max_iters``).
    """
    if target_rank < 1:
        raise ValueError(f"target_rank must be >= 1, got {target_rank}")
    M = obs.size
    filled, sym_mask, _ = _path_filled_distances(obs)
    target = np.where(sym_mask, filled, 0.0) ** 2
    mask = sym_mask

    observed_offdiag = int(mask.sum() - M)
    guidance = M ** 1.2 * target_rank * max(math.log(M), 1.0)
    if observed_offdiag < guidance:
        warnings.warn(
            f"{observed_offdiag} observed entries is below the ~{guidance:.0f} "
            "suggested for reliable rank-4 recovery",
            SparseObservationWarning, stacklevel=2)

    target_norm = math.sqrt(2.0 * completion_objective(np.zeros_like(target), target, mask))
    scale = target_norm if target_norm > 0 else 1.0

    current, basis = _retract(filled ** 2, target_rank)
    f_current = completion_objective(current, target, mask)
    history = [math.sqrt(2.0 * f_current) / scale]

    prev_rgrad = None
    prev_direction = None

    for _ in range(max_iters):
        if history[-1] < tol:
            break
        grad = completion_gradient(current, target, mask)
        rgrad = _tangent_project(grad, basis)

        direction = -rgrad
        if prev_rgrad is not None:
            transported = _tangent_project(prev_rgrad, basis)
            denom = float((prev_rgrad * prev_rgrad).sum())
            beta = 0.0
            if denom > 0:
                beta = max(0.0, float((rgrad * (rgrad - transported)).sum()) / denom)
            direction = -rgrad + beta * _tangent_project(prev_direction, basis)
        slope = float((grad * direction).sum())
        if slope >= 0.0:
            direction = -rgrad
            slope = float((grad * direction).sum())
        if slope >= 0.0:
            break  # stationary: projected gradient vanished

        masked_dir_sq = float((np.where(mask, direction, 0.0) ** 2).sum())
        if masked_dir_sq == 0.0:
            break
        step = -slope / masked_dir_sq

        accepted = False
        for _ in range(30):
            candidate, cand_basis = _retract(current + step * direction, target_rank)
            f_candidate = completion_objective(candidate, target, mask)
            if f_candidate <= f_current + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break  # line search stalled at a (numerically) stationary point

        current, basis, f_current = candidate, cand_basis, f_candidate
        history.append(math.sqrt(2.0 * f_current) / scale)
        prev_rgrad, prev_direction = rgrad, direction
        if (stall_tol is not None and history[-2] > 0
                and (history[-2] - history[-1]) / history[-2] < stall_tol):
            break

    current = 0.5 * (current + current.T)
    return CompletionResult(
        matrix=current,
        masked_residual=history[-1],
        iterations=len(history) - 1,
        converged=history[-1] < tol,
        residual_history=tuple(history),
    )


# ---------------------------------------------------------------------------
# embedding and alignment
# ---------------------------------------------------------------------------

def mds_embed(distances: np.ndarray, dims: int = 2) -> np.ndarray:
    """Classical multidimensional scaling of a distance matrix.

    Squares the (symmetrized) distances, double-centers with
    J = I - (1/M) 1 1', and embeds on the top ``dims`` eigenpairs with
    negative eigenvalues clamped to zero.  The embedding is centered at
    the origin; fewer than ``dims`` positive eigenvalues produce
    zero-padded axes and a DegenerateEmbeddingWarning.
    """
    if dims not in (2, 3):
        raise ValueError(f"dims must be 2 or 3, got {dims}")
    D = np.asarray(distances, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError(f"distances must be square, got shape {D.shape}")
    M = len(D)
    D = 0.5 * (D + D.T)
    squared = D * D
    centering = np.eye(M) - np.full((M, M), 1.0 / M)
    gram = -0.5 * centering @ squared @ centering

    eigvals, eigvecs = np.linalg.eigh(gram)
    top = np.argsort(eigvals)[::-1][:dims]
    leading = eigvals[top].copy()
    # eigenvalues at rounding level of the largest are geometric zeros
    floor = 1e-12 * max(float(np.abs(eigvals).max()), 1e-300)
    positive = leading > floor
    leading[~positive] = 0.0
    if not positive.all():
        warnings.warn(
            f"only {int(positive.sum())} positive eigenvalues for a "
            f"{dims}-dimensional embedding; padding with zeros",
            DegenerateEmbeddingWarning, stacklevel=2)
    return eigvecs[:, top] * np.sqrt(leading)


@dataclass(frozen=True)
class SimilarityTransform:
    """Similarity map x -> scale * rotation @ x + translation."""

    rotation: np.ndarray
    translation: np.ndarray
    scale: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return self.scale * points @ self.rotation.T + self.translation


@dataclass(frozen=True)
class AnchorSet:
    """Known-position nodes used to pin the relative embedding.

    At least three non-collinear anchors are needed for a planar
    alignment.
    """

    indices: tuple[int, ...]
    true_positions: np.ndarray

    def __post_init__(self):
        indices = tuple(int(i) for i in self.indices)
        positions = np.asarray(self.true_positions, dtype=float)
        if len(indices) < 3:
            raise ValueError(f"need at least 3 anchors, got {len(indices)}")
        if len(set(indices)) != len(indices):
            raise ValueError("anchor indices must be unique")
        if positions.shape != (len(indices), 2):
            raise ValueError(
                f"true_positions must be ({len(indices)}, 2), got {positions.shape}")
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "true_positions", positions)

    @classmethod
    def random(cls, graph: DirectedSectorGraph, count: int,
               rng: np.random.Generator) -> "AnchorSet":
        """Pick ``count`` distinct anchor nodes uniformly from the graph."""
        if count > graph.size:
            raise ValueError(f"cannot pick {count} anchors from {graph.size} nodes")
        indices = np.sort(rng.choice(graph.size, size=count, replace=False))
        return cls(indices=tuple(int(i) for i in indices),
                   true_positions=graph.positions()[indices])


def procrustes_align(
    relative: np.ndarray,
    anchors_true: np.ndarray,
    allow_reflection: bool = True,
) -> SimilarityTransform:
    """Least-squares similarity transform taking ``relative`` onto ``anchors_true``.

    Closed form from the SVD of the centered cross-covariance.  A
    reflection is used only when permitted and strictly better than the
    best proper rotation.

    Args:
        relative: (k, 2) coordinates in the embedding frame.
        anchors_true: (k, 2) matching absolute positions.
        allow_reflection: Permit an improper (det = -1) rotation.

    Returns:
        SimilarityTransform minimizing sum ||apply(relative_i) - true_i||^2.
    """
    relative = np.asarray(relative, dtype=float)
    anchors_true = np.asarray(anchors_true, dtype=float)
    if relative.shape != anchors_true.shape or relative.ndim != 2 or relative.shape[1] != 2:
        raise ValueError("relative and anchors_true must both be (k, 2)")
    k = len(relative)
    if k < 3:
        raise ValueError(f"need at least 3 point pairs, got {k}")

    mu_rel = relative.mean(axis=0)
    mu_true = anchors_true.mean(axis=0)
    rel_c = relative - mu_rel
    true_c = anchors_true - mu_true

    spread = float((rel_c ** 2).sum())
    if spread == 0.0:
        raise ValueError("relative coordinates are degenerate (zero variance)")
    anchor_svals = np.linalg.svd(true_c, compute_uv=False)
    if anchor_svals[-1] < 1e-6 * anchor_svals[0]:
        warnings.warn("anchors are near-collinear; alignment is ill-conditioned",
                      CollinearAnchorWarning, stacklevel=2)

    cross = rel_c.T @ true_c  # maps relative frame onto true frame
    U, svals, Vt = np.linalg.svd(cross)
    det_sign = np.sign(np.linalg.det(Vt.T @ U.T))
    flip = np.ones(2)
    if det_sign < 0 and not (allow_reflection and svals[-1] > 0.0):
        flip[-1] = -1.0  # constrain to a proper rotation
    rotation = Vt.T @ np.diag(flip) @ U.T
    scale = float((svals * flip).sum()) / spread
    translation = mu_true - scale * rotation @ mu_rel
    return SimilarityTransform(rotation=rotation, translation=translation, scale=scale)


# ---------------------------------------------------------------------------
# end-to-end localization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LocalizationResult:
    """Estimated positions and error summary of one localization run."""

    estimated_positions: np.ndarray
    rmse: float
    iterations: int
    completion_residual: float
    unlocalized: int
    method: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.estimated_positions)):
            raise ValueError("estimated positions must be finite")
        if not (np.isfinite(self.rmse) and self.rmse >= 0):
            raise ValueError(f"rmse must be finite and >= 0, got {self.rmse}")


def positions_to_text(positions: np.ndarray) -> str:
    """Dump estimated positions as a node-table text block.

    Mirrors the node rows of the sector-graph text format (id, x, y) for
    fixture reuse alongside serialized graphs.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.ndim != 2 or positions.shape[1] != 2:
        raise ValueError(f"positions must be (M, 2), got {positions.shape}")
    lines = ["# uowlab-positions v1", f"nodes {len(positions)}", "# id x y"]
    for i, (x, y) in enumerate(positions):
        lines.append(f"{i} {float(x)!r} {float(y)!r}")
    return "\n".join(lines) + "\n"


def positions_from_text(text: str) -> np.ndarray:
    """Parse the output of :func:`positions_to_text`."""
    rows = [ln.strip() for ln in text.splitlines()
            if ln.strip() and not ln.strip().startswith("#")]
    if not rows or not rows[0].startswith("nodes "):
        raise ValueError("expected a 'nodes <count>' line")
    count = int(rows[0].split()[1])
    if len(rows) != count + 1:
        raise ValueError(f"expected {count} position rows, got {len(rows) - 1}")
    positions = np.zeros((count, 2))
    for row in rows[1:]:
        idx_s, x_s, y_s = row.split()
        positions[int(idx_s)] = (float(x_s), float(y_s))
    return positions


def _lateration(anchor_positions: np.ndarray, dists: np.ndarray) -> np.ndarray:
    """Linear least-squares position from distances to >= 3 anchors."""
    ref = anchor_positions[-1]
    others = anchor_positions[:-1]
    A = 2.0 * (ref - others)
    b = (dists[:-1] ** 2 - dists[-1] ** 2
         + (ref ** 2).sum() - (others ** 2).sum(axis=1))
    solution, *_ = np.linalg.lstsq(A, b, rcond=None)
    return solution


def _dv_hop_positions(obs: ObservedDistanceMatrix, anchors: AnchorSet):
    """Hop-count multilateration; returns (positions, localized_mask)."""
    M = obs.size
    off = ~np.eye(M, dtype=bool)
    unit = np.where(obs.mask & off, 1.0, np.inf)
    hops = _all_pairs_shortest(unit)

    a_idx = np.array(anchors.indices)
    a_pos = anchors.true_positions
    n_anchors = len(a_idx)

    # Per-anchor hop-to-meter calibration from inter-anchor geometry.
    corrections = np.full(n_anchors, np.nan)
    for a in range(n_anchors):
        total_dist = 0.0
        total_hops = 0.0
        for b in range(n_anchors):
            if a == b or not np.isfinite(hops[a_idx[a], a_idx[b]]):
                continue
            total_dist += float(np.linalg.norm(a_pos[a] - a_pos[b]))
            total_hops += hops[a_idx[a], a_idx[b]]
        if total_hops > 0:
            corrections[a] = total_dist / total_hops

    positions = np.tile(a_pos.mean(axis=0), (M, 1))
    localized = np.zeros(M, dtype=bool)
    for i in range(M):
        anchor_hops = hops[i, a_idx]
        usable = np.isfinite(anchor_hops) & np.isfinite(corrections)
        if usable.sum() < 3:
            continue
        est_dists = corrections[usable] * anchor_hops[usable]
        positions[i] = _lateration(a_pos[usable], est_dists)
        localized[i] = True
    positions[a_idx] = a_pos
    localized[a_idx] = True
    return positions, localized


def _rmse(errors_sq: np.ndarray, norm: str) -> float:
    """Aggregate squared errors; "normalized" divides the root sum by the count."""
    n = len(errors_sq)
    if n == 0:
        return 0.0
    if norm == "normalized":
        return float(np.sqrt(errors_sq.sum()) / n)
    if norm == "conventional":
        return float(np.sqrt(errors_sq.mean()))
    raise ValueError(f"rmse norm must be 'normalized' or 'conventional', got {norm!r}")


def localize(
    graph: DirectedSectorGraph,
    obs: ObservedDistanceMatrix,
    anchors: AnchorSet,
    method: str = "proposed",
    target_rank: int = 4,
    max_iters: int = 500,
    tol: float = 1e-6,
    stall_tol: Optional[float] = None,
    rmse_norm: str = "normalized",
    allow_reflection: bool = True,
) -> LocalizationResult:
    """Estimate all node positions and score them against the truth.

    Methods:
      - "proposed": complete the squared distance matrix at fixed rank,
        embed by classical MDS, align to anchors by similarity
        Procrustes.
      - "mds_map": fill missing distances with shortest paths only, then
        embed and align (no completion).
      - "dv_hop": per-anchor hop calibration and linear multilateration.

    Nodes that cannot be localized (no path to any anchor, or fewer than
    three usable anchors for DV-hop) are placed at the anchor centroid,
    excluded from the RMSE, and counted in ``unlocalized``.  RMSE covers
    non-anchor localized nodes only.
    """
    if method not in _METHODS:
        raise ValueError(f"method must be one of {_METHODS}, got {method!r}")
    M = graph.size
    if obs.size != M:
        raise ValueError("observation matrix size does not match the graph")
    for i in anchors.indices:
        if not 0 <= i < M:
            raise IndexError(f"anchor index {i} out of range")

    true_positions = graph.positions()
    a_idx = np.array(anchors.indices)
    iterations = 0
    residual = 0.0

    if method == "dv_hop":
        estimated, localized = _dv_hop_positions(obs, anchors)
    else:
        filled, _, paths = _path_filled_distances(obs)
        if method == "proposed":
            completion = complete_matrix(obs, target_rank=target_rank,
                                         max_iters=max_iters, tol=tol,
                                         stall_tol=stall_tol)
            iterations = completion.iterations
            residual = completion.masked_residual
            distances = np.sqrt(np.clip(completion.matrix, 0.0, None))
        else:
            distances = filled
        relative = mds_embed(distances, dims=2)
        transform = procrustes_align(relative[a_idx], anchors.true_positions,
                                     allow_reflection=allow_reflection)
        estimated = transform.apply(relative)
        localized = np.isfinite(paths[:, a_idx]).any(axis=1)
        localized[a_idx] = True
        if not localized.all():
            estimated = np.where(localized[:, None], estimated,
                                 anchors.true_positions.mean(axis=0))

    evaluated = localized.copy()
    evaluated[a_idx] = False  # anchors are inputs, not estimates
    errors_sq = ((estimated[evaluated] - true_positions[evaluated]) ** 2).sum(axis=1)
    return LocalizationResult(
        estimated_positions=estimated,
        rmse=_rmse(errors_sq, rmse_norm),
        iterations=iterations,
        completion_residual=residual,
        unlocalized=int((~localized).sum()),
        method=method,
    )
