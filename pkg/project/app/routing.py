"""Path search and swap execution for the three routing schemes."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Set, Tuple

import numpy as np

from .dodag import Dodag
from .entanglement import EntLink, LinkLayerState, consume, generate_all, swap
from .forest import Forest
from .log_config import get_logger
from .schemas import SchemeKind, SimParams
from .topology import PhysicalTopology, normalize_edge

logger = get_logger(__name__)

Adjacency = Mapping[int, Iterable[int]]


@dataclass
class ForestPath:
    nodes: List[int]
    links: List[int] = field(default_factory=list)
    scheme: SchemeKind = SchemeKind.MULTI_TREE

    @property
    def via(self) -> List[int]:
        return self.nodes[1:-1]

    @property
    def source(self) -> int:
        return self.nodes[0]

    @property
    def destination(self) -> int:
        return self.nodes[-1]


class ExecutionOutcome(str, Enum):
    SUCCESS = "success"
    FAILED = "failed"
    STALE = "stale"

    def __bool__(self) -> bool:
        return self is ExecutionOutcome.SUCCESS


def validate_path(path: ForestPath, link_layer: LinkLayerState) -> List[str]:
    """Link-chain audit: consecutive links meet at the listed intermediate node."""
    problems: List[str] = []
    if len(path.links) != max(len(path.nodes) - 1, 0):
        problems.append(f"{len(path.links)} links for {len(path.nodes)} nodes")
        return problems
    if len(path.via) != max(len(path.links) - 1, 0):
        problems.append("via length does not match link count")
    for i, link_id in enumerate(path.links):
        link = link_layer.live_links.get(link_id)
        if link is None:
            problems.append(f"link {link_id} is not live")
            continue
        if link.endpoints != normalize_edge(path.nodes[i], path.nodes[i + 1]):
            problems.append(f"link {link_id} does not join {path.nodes[i]} and {path.nodes[i + 1]}")
    return problems


# ---------- Single tree ----------

def find_path_single(
    tree: Dodag,
    link_layer: LinkLayerState,
    s: int,
    t: int,
    via_root_strict: bool = False,
) -> Optional[ForestPath]:
    """Climb both parent chains and meet at the lowest common ancestor.

    With ``via_root_strict`` the meeting point must be the root itself; a chain
    pair that joins below the root would need the link above the junction twice.
    """
    if s == t:
        return ForestPath(nodes=[s], scheme=SchemeKind.SINGLE_TREE)
    up_s, up_t = tree.ancestors(s), tree.ancestors(t)
    if not up_s or not up_t:
        return None
    position = {node: i for i, node in enumerate(up_t)}
    for i, node in enumerate(up_s):
        if node in position:
            lca_s, lca_t = i, position[node]
            break
    else:
        return None
    if via_root_strict and up_s[lca_s] != tree.root:
        return None
    nodes = up_s[: lca_s + 1] + list(reversed(up_t[:lca_t]))
    links = [tree.states[x].parent_link for x in up_s[:lca_s]]
    links += [tree.states[x].parent_link for x in reversed(up_t[:lca_t])]
    return ForestPath(nodes=nodes, links=links, scheme=SchemeKind.SINGLE_TREE)


# ---------- Multi tree ----------

def _bfs(adjacency: Adjacency, start: int) -> Dict[int, int]:
    dist = {start: 0}
    queue = deque([start])
    while queue:
        x = queue.popleft()
        for y in adjacency.get(x, ()):
            if y not in dist:
                dist[y] = dist[x] + 1
                queue.append(y)
    return dist


def _reverse(adjacency: Adjacency) -> Dict[int, Set[int]]:
    reverse: Dict[int, Set[int]] = {}
    for x, ys in adjacency.items():
        for y in ys:
            reverse.setdefault(y, set()).add(x)
    return reverse


def lex_shortest_path(
    adjacency: Adjacency, src: int, dst: int, reverse: Optional[Adjacency] = None
) -> Optional[List[int]]:
    """Shortest src->dst walk, smallest node id first at every branch point."""
    to_dst = _bfs(_reverse(adjacency) if reverse is None else reverse, dst)
    if src not in to_dst:
        return None
    path = [src]
    while path[-1] != dst:
        here = path[-1]
        path.append(min(y for y in adjacency.get(here, ()) if to_dst.get(y) == to_dst[here] - 1))
    return path


@dataclass
class ForestGraph:
    """Classical view of the forest: member tree edges only, detached branches left out.

    Built once per forest version and reused until a tree changes.
    """

    up: Dict[int, Set[int]]
    down: Dict[int, Set[int]]
    undirected: Dict[int, Set[int]]
    link_of: Dict[Tuple[int, int], int]

    @classmethod
    def from_forest(cls, forest: Forest) -> "ForestGraph":
        version = forest.version
        if forest.graph_cache is not None and forest.graph_cache[0] == version:
            return forest.graph_cache[1]
        up: Dict[int, Set[int]] = {}
        undirected: Dict[int, Set[int]] = {}
        link_of: Dict[Tuple[int, int], int] = {}
        for tree in forest.trees:
            for link_id, edge in tree.edges.items():
                if not (tree.is_member(edge.parent) and tree.is_member(edge.child)):
                    continue
                up.setdefault(edge.child, set()).add(edge.parent)
                undirected.setdefault(edge.child, set()).add(edge.parent)
                undirected.setdefault(edge.parent, set()).add(edge.child)
                link_of[normalize_edge(edge.parent, edge.child)] = link_id
        graph = cls(up=up, down=_reverse(up), undirected=undirected, link_of=link_of)
        forest.graph_cache = (version, graph)
        return graph

    def to_path(self, nodes: List[int]) -> ForestPath:
        links = [self.link_of[normalize_edge(a, b)] for a, b in zip(nodes, nodes[1:])]
        return ForestPath(nodes=nodes, links=links, scheme=SchemeKind.MULTI_TREE)


def find_path_multi(forest: Forest, link_layer: LinkLayerState, s: int, t: int) -> Optional[ForestPath]:
    """Common-parent search first, then an undirected sweep over all tree edges."""
    if s == t:
        return ForestPath(nodes=[s], scheme=SchemeKind.MULTI_TREE)
    graph = ForestGraph.from_forest(forest)

    up_s, up_t = _bfs(graph.up, s), _bfs(graph.up, t)
    common = set(up_s) & set(up_t)
    if common:
        total = min(up_s[c] + up_t[c] for c in common)
        candidates = []
        for c in sorted(common):
            if up_s[c] + up_t[c] != total:
                continue
            climb = lex_shortest_path(graph.up, s, c, reverse=graph.down)
            descend = lex_shortest_path(graph.down, c, t, reverse=graph.up)
            candidates.append(climb + descend[1:])
        return graph.to_path(min(candidates))

    nodes = lex_shortest_path(graph.undirected, s, t, reverse=graph.undirected)
    if nodes is None:
        return None
    return graph.to_path(nodes)


# ---------- Execution ----------

def execute_swaps(
    link_layer: LinkLayerState, path: ForestPath, params: SimParams, rng: np.random.Generator
) -> ExecutionOutcome:
    """Swap along the path left to right; the delivered link is consumed on success."""
    if any(not link_layer.is_live(link_id) for link_id in path.links):
        logger.warning("Stale path %s: a link decohered before execution", path.nodes)
        return ExecutionOutcome.STALE
    if not path.links:
        return ExecutionOutcome.SUCCESS
    current: Optional[EntLink] = link_layer.get(path.links[0])
    for node, link_id in zip(path.via, path.links[1:]):
        current = swap(link_layer, current, link_layer.get(link_id), node, params, rng)
        if current is None:
            return ExecutionOutcome.FAILED
    consume(link_layer, current)
    return ExecutionOutcome.SUCCESS


# ---------- Synchronous baseline ----------

def _pick(candidates: List[Tuple[int, int, EntLink]]) -> Optional[EntLink]:
    return min(candidates, key=lambda c: (c[0], c[1]))[2] if candidates else None


def _internal_swap(
    state: LinkLayerState,
    node: int,
    dist_s: Mapping[int, int],
    dist_t: Mapping[int, int],
    params: SimParams,
    rng: np.random.Generator,
) -> bool:
    links = state.links_at(node)
    if len(links) < 2:
        return False
    inf = float("inf")
    here_s, here_t = dist_s.get(node, inf), dist_t.get(node, inf)
    toward_s = [(dist_s.get(l.other(node), inf), l.id, l) for l in links if dist_s.get(l.other(node), inf) < here_s]
    toward_t = [(dist_t.get(l.other(node), inf), l.id, l) for l in links if dist_t.get(l.other(node), inf) < here_t]
    for _, _, left in sorted(toward_s, key=lambda c: (c[0], c[1])):
        right = _pick([c for c in toward_t if c[2].id != left.id and c[2].other(node) != left.other(node)])
        if right is not None:
            swap(state, left, right, node, params, rng)
            return True
    return False


def sync_round(
    topo: PhysicalTopology,
    params: SimParams,
    s: int,
    t: int,
    rng: np.random.Generator,
) -> bool:
    """One synchronised slot: external generation, then greedy internal swaps.

    Every link still alive at the end of the slot is discarded.
    """
    state = LinkLayerState.for_edges(topo.edges)
    generate_all(state, params, rng)

    dist_s, dist_t = topo.distances_from(s), topo.distances_from(t)
    acted = True
    while acted:
        acted = False
        for node in topo.nodes:
            if node in (s, t):
                continue
            while _internal_swap(state, node, dist_s, dist_t, params, rng):
                acted = True
    target = normalize_edge(s, t)
    return any(link.endpoints == target for link in state.links_at(s))
