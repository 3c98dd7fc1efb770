"""Physical topologies: generators, file loaders, graph metrics and root selection."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import networkx as nx
import numpy as np

from .errors import (
    DisconnectedGraphError,
    RootSelectionError,
    TopologyError,
    TopologyParseError,
    UnknownNodeError,
)
from .log_config import get_logger
from .rng import RandomStreams
from .schemas import RootStrategy, TopologySpec

logger = get_logger(__name__)

Edge = Tuple[int, int]


def normalize_edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass
class PhysicalTopology:
    """The static graph of repeater nodes (ids 0..n-1) and physical channels.

    Treated as immutable once built; BFS results are memoised per source.
    """

    graph: nx.Graph
    name: str
    grid_shape: Optional[Tuple[int, int]] = None
    bridge: Optional[Edge] = None
    _bfs: Dict[int, Dict[int, int]] = field(default_factory=dict, init=False, repr=False, compare=False)
    _pairs: Dict[int, Dict[int, List[int]]] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        n = self.graph.number_of_nodes()
        if set(self.graph.nodes) != set(range(n)):
            raise TopologyError(f"{self.name}: node ids must be contiguous from 0")
        if nx.number_of_selfloops(self.graph):
            raise TopologyError(f"{self.name}: self-loops are not allowed")
        if self.graph.is_directed() or self.graph.is_multigraph():
            raise TopologyError(f"{self.name}: physical topology must be a simple undirected graph")

    @property
    def nodes(self) -> range:
        return range(self.graph.number_of_nodes())

    @property
    def edges(self) -> List[Edge]:
        return sorted(normalize_edge(u, v) for u, v in self.graph.edges)

    @property
    def n(self) -> int:
        return self.graph.number_of_nodes()

    def has_node(self, node: int) -> bool:
        return isinstance(node, (int, np.integer)) and 0 <= node < self.n

    def neighbors(self, node: int) -> List[int]:
        return sorted(self.graph.neighbors(node))

    def distances_from(self, node: int) -> Dict[int, int]:
        if not self.has_node(node):
            raise UnknownNodeError(node)
        if node not in self._bfs:
            self._bfs[node] = dict(nx.single_source_shortest_path_length(self.graph, node))
        return self._bfs[node]

    def nodes_at_distance(self, node: int, distance: int) -> List[int]:
        return sorted(v for v, d in self.distances_from(node).items() if d == distance)

    def pairs_at_distance(self, distance: int) -> Dict[int, List[int]]:
        """Sources having at least one node exactly ``distance`` hops away, with those targets."""
        if distance not in self._pairs:
            table = {}
            for node in self.nodes:
                targets = self.nodes_at_distance(node, distance)
                if targets:
                    table[node] = targets
            self._pairs[distance] = table
        return self._pairs[distance]


# ---------- Generators ----------

def gen_grid(rows: int, cols: int) -> PhysicalTopology:
    """4-neighbour lattice; node (r, c) gets id r * cols + c."""
    lattice = nx.grid_2d_graph(rows, cols)
    graph = nx.convert_node_labels_to_integers(lattice, ordering="sorted")
    return PhysicalTopology(graph=graph, name=f"grid:{rows}x{cols}", grid_shape=(rows, cols))


def gen_erdos_renyi(n: int, p_edge: float, seed: int) -> PhysicalTopology:
    graph = nx.gnp_random_graph(n, p_edge, seed=seed)
    return PhysicalTopology(graph=nx.Graph(graph), name=f"er:{n}:{p_edge:g}")


def gen_barbell(cluster_n: int, p_edge: float, seed: int) -> PhysicalTopology:
    """Two independent ER clusters joined by one bridge between their lowest-id nodes."""
    if cluster_n < 2:
        raise TopologyError("barbell clusters need at least 2 nodes")
    seed_a, seed_b = (int(s) for s in np.random.SeedSequence(seed).generate_state(2))
    left = nx.gnp_random_graph(cluster_n, p_edge, seed=seed_a)
    right = nx.gnp_random_graph(cluster_n, p_edge, seed=seed_b)
    graph = nx.disjoint_union(left, right)
    bridge = (0, cluster_n)
    graph.add_edge(*bridge)
    return PhysicalTopology(graph=graph, name=f"barbell:{cluster_n}:{p_edge:g}", bridge=bridge)


def gen_path(n: int) -> PhysicalTopology:
    return PhysicalTopology(graph=nx.path_graph(n), name=f"path:{n}")


def build_topology(spec: TopologySpec, seed: int) -> PhysicalTopology:
    topo_seed = RandomStreams(seed).seed_int("topology")
    if spec.kind == "grid":
        return gen_grid(spec.rows, spec.cols)
    if spec.kind == "er":
        return gen_erdos_renyi(spec.n, spec.p_edge, topo_seed)
    if spec.kind == "barbell":
        return gen_barbell(spec.n, spec.p_edge, topo_seed)
    if spec.kind == "path":
        return gen_path(spec.n)
    return load_topology(spec.path)


# ---------- Loading ----------

def _renumber(graph: nx.Graph, name: str) -> PhysicalTopology:
    loops = list(nx.selfloop_edges(graph))
    if loops:
        logger.warning("%s: dropping %d self-loop(s)", name, len(loops))
        graph.remove_edges_from(loops)
    if graph.number_of_nodes() == 0:
        raise TopologyError(f"{name}: topology has no nodes")
    relabeled = nx.convert_node_labels_to_integers(graph, ordering="sorted")
    simple = nx.Graph()
    simple.add_nodes_from(relabeled.nodes)
    simple.add_edges_from(relabeled.edges)
    return PhysicalTopology(graph=simple, name=name)


def _parse_edge_list(text: str, path: Path) -> nx.Graph:
    graph = nx.Graph()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise TopologyParseError(f"expected two node ids, got {len(parts)} field(s)", path, lineno)
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise TopologyParseError(f"node ids must be integers: {line!r}", path, lineno) from None
        if u < 0 or v < 0:
            raise TopologyParseError(f"node ids must be non-negative: {line!r}", path, lineno)
        if graph.has_edge(u, v):
            logger.warning("%s:%d: duplicate edge %d-%d ignored", path, lineno, u, v)
        graph.add_edge(u, v)
    return graph


_GML_POSITION = re.compile(r"at \((\d+), \d+\)")
_GML_ITEM = re.compile(r"\b(node|edge) #(\d+)\b")


def _gml_error_line(message: str, text: str) -> Optional[int]:
    """Line a networkx GML error points at: its own (line, column) or the n-th node/edge block."""
    found = _GML_POSITION.search(message)
    if found:
        return int(found.group(1))
    found = _GML_ITEM.search(message)
    if found:
        kind, index = found.group(1), int(found.group(2))
        blocks = list(re.finditer(rf"\b{kind}\s*\[", text))
        if index < len(blocks):
            return text.count("\n", 0, blocks[index].start()) + 1
    return None


def _parse_gml(text: str, path: Path) -> nx.Graph:
    try:
        parsed = nx.parse_gml(text, label="id")
    except nx.NetworkXError as exc:
        message = str(exc)
        line = _gml_error_line(message, text)
        if "undefined" in message:
            where = f"{path}:{line}" if line is not None else str(path)
            raise TopologyError(f"{where}: {message}") from exc
        raise TopologyParseError(message, path, line) from exc
    # Topology Zoo files may declare multigraphs; parallel channels collapse to one edge.
    graph = nx.Graph()
    graph.add_nodes_from(parsed.nodes)
    graph.add_edges_from((u, v) for u, v, *_ in parsed.edges)
    return graph


def _looks_like_gml(text: str) -> bool:
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        return stripped.split()[0] in ("graph", "Creator", "Version")
    return False


def load_topology(path: Path | str) -> PhysicalTopology:
    """Load an edge-list or GML file; nodes are renumbered densely from 0."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise TopologyError(f"cannot read topology file {path}: {exc.strerror}") from exc
    graph = _parse_gml(text, path) if _looks_like_gml(text) else _parse_edge_list(text, path)
    topo = _renumber(graph, path.stem)
    logger.info("Loaded %s: %d nodes, %d edges", path, topo.n, topo.graph.number_of_edges())
    return topo


# ---------- Metrics ----------

def graph_distance(topo: PhysicalTopology, u: int, v: int) -> Optional[int]:
    """BFS hop count, or None when v is unreachable from u."""
    if not topo.has_node(v):
        raise UnknownNodeError(v)
    return topo.distances_from(u).get(v)


def eccentricity(topo: PhysicalTopology, v: int) -> int:
    if not topo.has_node(v):
        raise UnknownNodeError(v)
    if not nx.is_connected(topo.graph):
        raise DisconnectedGraphError(f"{topo.name}: eccentricity needs a connected graph")
    return max(topo.distances_from(v).values())


def largest_component(topo: PhysicalTopology) -> List[int]:
    components = [sorted(c) for c in nx.connected_components(topo.graph)]
    components.sort(key=lambda c: (-len(c), c[0]))
    return components[0]


def describe(topo: PhysicalTopology) -> Dict[str, float]:
    giant = topo.graph.subgraph(largest_component(topo))
    degrees = [d for _, d in topo.graph.degree]
    return {
        "nodes": topo.n,
        "edges": topo.graph.number_of_edges(),
        "mean_degree": round(float(np.mean(degrees)) if degrees else 0.0, 3),
        "components": nx.number_connected_components(topo.graph),
        "diameter": nx.diameter(giant) if giant.number_of_nodes() > 1 else 0,
    }


# ---------- Root selection ----------

def _grid_node(topo: PhysicalTopology, row: int, col: int) -> int:
    return row * topo.grid_shape[1] + col


def _require_grid(topo: PhysicalTopology, kind: str) -> Tuple[int, int]:
    if topo.grid_shape is None:
        raise RootSelectionError(f"{kind} needs a generated grid, {topo.name} is not one")
    return topo.grid_shape


def _local_eccentricity(topo: PhysicalTopology, node: int, members: List[int]) -> int:
    dist = topo.distances_from(node)
    return max(dist[m] for m in members)


def _center(topo: PhysicalTopology, members: List[int]) -> int:
    return min(members, key=lambda v: (_local_eccentricity(topo, v, members), v))


def _bisect(topo: PhysicalTopology, members: List[int]) -> Tuple[List[int], List[int]]:
    """Split a cluster around its two most distant nodes, nearest seed wins."""
    a = max(members, key=lambda v: (_local_eccentricity(topo, v, members), -v))
    dist_a = topo.distances_from(a)
    b = max(members, key=lambda v: (dist_a[v], -v))
    dist_b = topo.distances_from(b)
    side_a = [v for v in members if dist_a[v] <= dist_b[v]]
    side_b = [v for v in members if dist_a[v] > dist_b[v]]
    return side_a, side_b


def density_clusters(topo: PhysicalTopology, k: int) -> List[List[int]]:
    clusters = [largest_component(topo)]
    while len(clusters) < k:
        clusters.sort(key=lambda c: (-len(c), c[0]))
        largest = clusters.pop(0)
        if len(largest) < 2:
            raise RootSelectionError(f"cannot split {topo.name} into {k} clusters")
        side_a, side_b = _bisect(topo, largest)
        clusters.extend([side_a, side_b])
    clusters.sort(key=lambda c: c[0])
    return clusters


def select_roots(topo: PhysicalTopology, strategy: RootStrategy) -> List[int]:
    kind = strategy.kind
    if strategy.k is not None and strategy.k > topo.n:
        raise RootSelectionError(f"{kind}: k={strategy.k} exceeds {topo.n} nodes")

    if kind == "explicit":
        roots = list(strategy.nodes or [])
        for node in roots:
            if not topo.has_node(node):
                raise RootSelectionError(f"explicit root {node} is not in {topo.name}")
    elif kind == "grid-center":
        rows, cols = _require_grid(topo, kind)
        roots = [_grid_node(topo, (rows - 1) // 2, (cols - 1) // 2)]
    elif kind == "grid-quadrants":
        rows, cols = _require_grid(topo, kind)
        row_idx = [(rows - 1) // 4, (3 * rows - 1) // 4]
        col_idx = [(cols - 1) // 4, (3 * cols - 1) // 4]
        roots = [_grid_node(topo, r, c) for r in row_idx for c in col_idx]
    elif kind == "min-eccentricity":
        members = largest_component(topo)
        if strategy.k > len(members):
            raise RootSelectionError(f"{kind}: k={strategy.k} exceeds the largest component")
        ranked = sorted(members, key=lambda v: (_local_eccentricity(topo, v, members), v))
        roots = ranked[: strategy.k]
    elif kind == "density-clusters":
        roots = [_center(topo, cluster) for cluster in density_clusters(topo, strategy.k)]
    elif kind == "max-degree":
        ranked = sorted(topo.nodes, key=lambda v: (-topo.graph.degree[v], v))
        roots = ranked[: strategy.k]
    elif kind == "bridge-endpoint":
        if topo.bridge is None:
            raise RootSelectionError(f"bridge-endpoint needs a generated barbell, {topo.name} is not one")
        roots = [min(topo.bridge)]
    else:
        raise RootSelectionError(f"unknown root strategy {kind!r}")

    if len(set(roots)) != len(roots):
        raise RootSelectionError(f"{strategy} yields duplicate roots on {topo.name}: {roots}")
    return roots
