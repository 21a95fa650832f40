"""Random directed sector graphs.

Each node owns an angular sector (orientation, scanning angle, radius);
a directed edge i -> j exists exactly when node j's coordinates fall
inside node i's sector.  This module generates such graphs from seeded
uniform deployments, answers descendant/antecedent queries, checks the
degree-based notion of k-connectivity, computes all-pairs shortest
directed paths, and round-trips graphs through a plain-text format.

Geometry is planar; an optional torus mode wraps displacements at the
deployment square's edges, which removes border effects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class NodeSector:
    """One node's placement: coordinates plus its angular coverage sector.

    Attributes:
        coords: (2,) position in meters.
        orientation: Beam axis direction (rad), stored normalized to [0, 2pi).
        scan_angle: Full angular width of the sector (rad), in (0, 2pi].
        radius: Communication range (m), > 0.
    """

    coords: np.ndarray
    orientation: float
    scan_angle: float
    radius: float

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.shape != (2,):
            raise ValueError(f"coords must be a 2-vector, got shape {coords.shape}")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "orientation", float(self.orientation) % _TWO_PI)
        if not 0.0 < self.scan_angle <= _TWO_PI:
            raise ValueError(f"scan_angle must be in (0, 2pi], got {self.scan_angle}")
        if self.radius <= 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")


def in_sector(sector: NodeSector, point: np.ndarray) -> bool:
    """True iff ``point`` lies in the node's sector.

    Membership requires 0 < distance <= radius and an angular offset
    from the orientation of at most scan_angle / 2 (both boundaries
    inclusive; the offset test is evaluated in its equivalent cosine
    form, cos(offset) >= cos(scan_angle / 2)).  The node's own position
    is never a member.
    """
    point = np.asarray(point, dtype=float)
    dx = float(point[0] - sector.coords[0])
    dy = float(point[1] - sector.coords[1])
    d2 = dx * dx + dy * dy
    if d2 == 0.0 or d2 > sector.radius * sector.radius:
        return False
    if sector.scan_angle >= _TWO_PI:
        return True
    proj = dx * math.cos(sector.orientation) + dy * math.sin(sector.orientation)
    return proj >= math.sqrt(d2) * math.cos(sector.scan_angle / 2.0)


# ---------------------------------------------------------------------------
# vectorized sector geometry (single source of truth for adjacency)
# ---------------------------------------------------------------------------

def _pair_displacements(positions: np.ndarray, area_side: float, torus: bool):
    """Pairwise displacement components and squared distances, (M, M)."""
    dx = positions[None, :, 0] - positions[:, None, 0]
    dy = positions[None, :, 1] - positions[:, None, 1]
    if torus:
        dx -= area_side * np.round(dx / area_side)
        dy -= area_side * np.round(dy / area_side)
    return dx, dy, dx * dx + dy * dy


def sector_adjacency(
    positions: np.ndarray,
    orientations: np.ndarray,
    scan_angles: np.ndarray,
    radii: np.ndarray,
    area_side: float,
    torus: bool = False,
) -> np.ndarray:
    """Directed adjacency matrix of the sector membership relation.

    Entry (i, j) is True iff node j lies in node i's sector, using the
    same membership test as :func:`in_sector`.
    """
    M = len(positions)
    adjacency = np.zeros((M, M), dtype=bool)
    if M == 0:
        return adjacency
    orientations = np.asarray(orientations, dtype=float)
    scan = np.broadcast_to(np.asarray(scan_angles, dtype=float), (M,))
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (M,))

    dx, dy, d2 = _pair_displacements(np.asarray(positions, dtype=float), area_side, torus)
    within = (d2 <= (radii * radii)[:, None]) & (d2 > 0.0)
    i_idx, j_idx = np.nonzero(within)
    if len(i_idx) == 0:
        return adjacency

    proj = dx[i_idx, j_idx] * np.cos(orientations[i_idx]) \
        + dy[i_idx, j_idx] * np.sin(orientations[i_idx])
    full_disk = scan[i_idx] >= _TWO_PI
    ok = full_disk | (proj >= np.sqrt(d2[i_idx, j_idx]) * np.cos(scan[i_idx] / 2.0))
    adjacency[i_idx[ok], j_idx[ok]] = True
    return adjacency


def sector_degrees(
    positions: np.ndarray,
    orientations: np.ndarray,
    scan_angle: float,
    radius: float,
    area_side: float,
    torus: bool = False,
):
    """Out/in degrees of the sector graph without materializing adjacency.

    Shares the membership math of :func:`sector_adjacency` but finds the
    within-range candidate pairs with a KD-tree (periodic in torus mode),
    which keeps the Monte Carlo connectivity estimators fast.
    """
    positions = np.asarray(positions, dtype=float)
    M = len(positions)
    out_degrees = np.zeros(M, dtype=np.intp)
    in_degrees = np.zeros(M, dtype=np.intp)
    if M < 2 or radius <= 0:
        return out_degrees, in_degrees

    tree = cKDTree(positions, boxsize=[area_side, area_side] if torus else None)
    pairs = tree.query_pairs(r=radius, output_type="ndarray")
    if len(pairs) == 0:
        return out_degrees, in_degrees
    i_idx, j_idx = pairs[:, 0], pairs[:, 1]
    dx = positions[j_idx, 0] - positions[i_idx, 0]
    dy = positions[j_idx, 1] - positions[i_idx, 1]
    if torus:
        dx -= area_side * np.round(dx / area_side)
        dy -= area_side * np.round(dy / area_side)
    d2 = dx * dx + dy * dy
    nonzero = d2 > 0.0
    if scan_angle >= _TWO_PI:
        forward = backward = nonzero
    else:
        orientations = np.asarray(orientations, dtype=float)
        cos_z, sin_z = np.cos(orientations), np.sin(orientations)
        threshold = np.sqrt(d2) * math.cos(scan_angle / 2.0)
        forward = (dx * cos_z[i_idx] + dy * sin_z[i_idx] >= threshold) & nonzero
        backward = (-dx * cos_z[j_idx] - dy * sin_z[j_idx] >= threshold) & nonzero
    out_degrees += np.bincount(i_idx[forward], minlength=M)
    out_degrees += np.bincount(j_idx[backward], minlength=M)
    in_degrees += np.bincount(j_idx[forward], minlength=M)
    in_degrees += np.bincount(i_idx[backward], minlength=M)
    return out_degrees, in_degrees


# ---------------------------------------------------------------------------
# graph value
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DirectedSectorGraph:
    """Immutable node set plus the directed sector-membership adjacency."""

    nodes: tuple[NodeSector, ...]
    adjacency: np.ndarray
    area_side: float
    torus: bool = False

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        M = len(self.nodes)
        adjacency = np.asarray(self.adjacency, dtype=bool)
        if adjacency.shape != (M, M):
            raise ValueError(f"adjacency must be {M}x{M}, got {adjacency.shape}")
        if M and adjacency.diagonal().any():
            raise ValueError("adjacency diagonal must be all False (no self-links)")
        object.__setattr__(self, "adjacency", adjacency)

    @classmethod
    def from_nodes(cls, nodes, area_side: float, torus: bool = False) -> "DirectedSectorGraph":
        """Compute adjacency from sector membership of the given nodes."""
        nodes = tuple(nodes)
        if nodes:
            adjacency = sector_adjacency(
                positions=np.array([n.coords for n in nodes]),
                orientations=np.array([n.orientation for n in nodes]),
                scan_angles=np.array([n.scan_angle for n in nodes]),
                radii=np.array([n.radius for n in nodes]),
                area_side=area_side,
                torus=torus,
            )
        else:
            adjacency = np.zeros((0, 0), dtype=bool)
        return cls(nodes=nodes, adjacency=adjacency, area_side=area_side, torus=torus)

    @property
    def size(self) -> int:
        return len(self.nodes)

    def positions(self) -> np.ndarray:
        """(M, 2) array of node coordinates."""
        if not self.nodes:
            return np.zeros((0, 2))
        return np.array([n.coords for n in self.nodes])

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.size:
            raise IndexError(f"node index {i} out of range for {self.size} nodes")

    def descendants(self, i: int) -> np.ndarray:
        """Indices j with an edge i -> j (nodes covered by i's sector)."""
        self._check_index(i)
        return np.nonzero(self.adjacency[i])[0]

    def antecedents(self, i: int) -> np.ndarray:
        """Indices j with an edge j -> i (nodes whose sector covers i)."""
        self._check_index(i)
        return np.nonzero(self.adjacency[:, i])[0]

    def out_degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def in_degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=0)


def deploy(
    M: int,
    area_side: float,
    scan_angle: float,
    radius: float,
    rng: np.random.Generator,
    torus: bool = False,
    count_law: str = "fixed",
) -> DirectedSectorGraph:
    """Deploy a random sector graph on the [0, area_side]^2 square.

    Positions are i.i.d. uniform, orientations i.i.d. uniform on
    [0, 2pi); all nodes share ``scan_angle`` and ``radius``.  With
    ``count_law="poisson"`` the node count is drawn as Poisson(M)
    instead of being fixed, modelling a homogeneous Poisson deployment.

    Args:
        M: Node count (fixed law) or expected node count (poisson law).
        area_side: Side of the deployment square (m).
        scan_angle: Shared sector width (rad), in (0, 2pi].
        radius: Shared communication range (m).
        rng: Source of randomness; consumed deterministically.
        torus: Wrap displacements at the square's edges.
        count_law: "fixed" or "poisson".

    Returns:
        The deployed graph with fully populated adjacency.
    """
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    if area_side <= 0:
        raise ValueError(f"area_side must be > 0, got {area_side}")
    if count_law not in ("fixed", "poisson"):
        raise ValueError(f"count_law must be 'fixed' or 'poisson', got {count_law!r}")

    count = int(M) if count_law == "fixed" else int(rng.poisson(M))
    positions = rng.uniform(0.0, area_side, size=(count, 2))
    orientations = rng.uniform(0.0, _TWO_PI, size=count)
    nodes = [
        NodeSector(coords=positions[i], orientation=orientations[i],
                   scan_angle=scan_angle, radius=radius)
        for i in range(count)
    ]
    return DirectedSectorGraph.from_nodes(nodes, area_side=area_side, torus=torus)


def is_k_connected(graph: DirectedSectorGraph, k: int) -> bool:
    """True iff every node has at least k descendants and k antecedents.

    This is the degree-based connectivity notion for directed sector
    graphs (an obscured node is one lacking either side), not graph-
    theoretic vertex connectivity.  Vacuously true for an empty graph.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if graph.size == 0:
        return True
    return bool(graph.out_degrees().min() >= k and graph.in_degrees().min() >= k)


def shortest_path_distances(graph: DirectedSectorGraph, weights: np.ndarray) -> np.ndarray:
    """All-pairs shortest directed path lengths.

    ``weights`` gives per-edge costs; entries off the adjacency are
    ignored (treated as +inf), the diagonal is 0, and unreachable pairs
    come back as +inf.  Negative edge weights are rejected.
    """
    M = graph.size
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (M, M):
        raise ValueError(f"weights must be {M}x{M}, got {weights.shape}")
    if M == 0:
        return np.zeros((0, 0))
    if np.any(weights[graph.adjacency] < 0):
        raise ValueError("negative edge weights are not supported")

    dist = np.where(graph.adjacency, weights, np.inf)
    np.fill_diagonal(dist, 0.0)
    for k in range(M):
        np.minimum(dist, dist[:, k:k + 1] + dist[k:k + 1, :], out=dist)
    return dist


# ---------------------------------------------------------------------------
# plain-text serialization (fixture reuse)
# ---------------------------------------------------------------------------

_TEXT_HEADER = "uowlab-sector-graph v1"


def graph_to_text(graph: DirectedSectorGraph) -> str:
    """Serialize a graph to the node-table + edge-list text format."""
    lines = [
        f"# {_TEXT_HEADER}",
        f"area_side {graph.area_side!r}",
        f"torus {int(graph.torus)}",
        f"nodes {graph.size}",
        "# id x y orientation scan_angle radius",
    ]
    for i, n in enumerate(graph.nodes):
        lines.append(f"{i} {float(n.coords[0])!r} {float(n.coords[1])!r} "
                     f"{float(n.orientation)!r} {float(n.scan_angle)!r} {float(n.radius)!r}")
    edges = np.argwhere(graph.adjacency)
    lines.append(f"edges {len(edges)}")
    for i, j in edges:
        lines.append(f"{i} {j}")
    return "\n".join(lines) + "\n"


def graph_from_text(text: str) -> DirectedSectorGraph:
    """Parse the output of :func:`graph_to_text` (edges taken verbatim)."""
    rows = [ln.strip() for ln in text.splitlines()
            if ln.strip() and not ln.strip().startswith("#")]
    cursor = 0

    def take() -> str:
        nonlocal cursor
        if cursor >= len(rows):
            raise ValueError("truncated graph text")
        row = rows[cursor]
        cursor += 1
        return row

    def take_keyed(key: str) -> str:
        row = take()
        head, _, rest = row.partition(" ")
        if head != key:
            raise ValueError(f"expected {key!r} line, got {row!r}")
        return rest

    area_side = float(take_keyed("area_side"))
    torus = bool(int(take_keyed("torus")))
    count = int(take_keyed("nodes"))
    nodes = []
    for _ in range(count):
        parts = take().split()
        if len(parts) != 6:
            raise ValueError(f"node row must have 6 fields, got {parts}")
        nodes.append(NodeSector(
            coords=np.array([float(parts[1]), float(parts[2])]),
            orientation=float(parts[3]),
            scan_angle=float(parts[4]),
            radius=float(parts[5]),
        ))
    edge_count = int(take_keyed("edges"))
    adjacency = np.zeros((count, count), dtype=bool)
    for _ in range(edge_count):
        i_s, j_s = take().split()
        i, j = int(i_s), int(j_s)
        if not (0 <= i < count and 0 <= j < count) or i == j:
            raise ValueError(f"bad edge ({i}, {j}) for {count} nodes")
        adjacency[i, j] = True
    return DirectedSectorGraph(nodes=tuple(nodes), adjacency=adjacency,
                               area_side=area_side, torus=torus)
