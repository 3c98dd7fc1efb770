"""Entanglement link lifecycle: generation on physical edges, aging, swapping.

The functions here take the link layer as their first argument and mutate it in
place, the same way the persistence helpers take a session.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Set

import numpy as np

from .errors import DeadLinkError, EdgeOccupiedError, LinkStateError, SwapPreconditionError
from .schemas import SimParams
from .topology import Edge, normalize_edge

LinkListener = Callable[["EntLink"], None]


@dataclass
class EntLink:
    id: int
    endpoint_a: int
    endpoint_b: int
    ttl: int
    hop_span: int = 1

    def __post_init__(self) -> None:
        if self.endpoint_a == self.endpoint_b:
            raise LinkStateError(f"link {self.id}: endpoints must differ")
        if self.hop_span < 1:
            raise LinkStateError(f"link {self.id}: hop_span must be >= 1")

    @property
    def endpoints(self) -> Edge:
        return normalize_edge(self.endpoint_a, self.endpoint_b)

    @property
    def is_direct(self) -> bool:
        return self.hop_span == 1

    def touches(self, node: int) -> bool:
        return node in (self.endpoint_a, self.endpoint_b)

    def other(self, node: int) -> int:
        if node == self.endpoint_a:
            return self.endpoint_b
        if node == self.endpoint_b:
            return self.endpoint_a
        raise SwapPreconditionError(f"node {node} is not an endpoint of link {self.id}")


@dataclass
class LinkLayerState:
    """The instant topology: live links plus per-edge qubit occupancy."""

    edge_occupancy: Dict[Edge, Optional[int]]
    live_links: Dict[int, EntLink] = field(default_factory=dict)
    by_node: Dict[int, Set[int]] = field(default_factory=dict)
    listeners: List[LinkListener] = field(default_factory=list)
    next_id: int = 0

    @classmethod
    def for_edges(cls, edges: Iterable[Edge]) -> "LinkLayerState":
        return cls(edge_occupancy={normalize_edge(u, v): None for u, v in edges})

    def is_live(self, link_id: int) -> bool:
        return link_id in self.live_links

    def get(self, link_id: int) -> EntLink:
        try:
            return self.live_links[link_id]
        except KeyError:
            raise DeadLinkError(f"link {link_id} is not live") from None

    def links_at(self, node: int) -> List[EntLink]:
        return [self.live_links[i] for i in sorted(self.by_node.get(node, ()))]

    def direct_links(self) -> List[EntLink]:
        return [link for _, link in sorted(self.live_links.items()) if link.is_direct]

    def occupied_count(self) -> int:
        return sum(1 for occupant in self.edge_occupancy.values() if occupant is not None)

    def _add(self, a: int, b: int, ttl: int, hop_span: int) -> EntLink:
        link = EntLink(id=self.next_id, endpoint_a=a, endpoint_b=b, ttl=ttl, hop_span=hop_span)
        self.next_id += 1
        self.live_links[link.id] = link
        self.by_node.setdefault(a, set()).add(link.id)
        self.by_node.setdefault(b, set()).add(link.id)
        if link.is_direct:
            self.edge_occupancy[link.endpoints] = link.id
        return link

    def _remove(self, link: EntLink) -> None:
        del self.live_links[link.id]
        for node in (link.endpoint_a, link.endpoint_b):
            ids = self.by_node[node]
            ids.discard(link.id)
            if not ids:
                del self.by_node[node]
        if link.is_direct:
            self.edge_occupancy[link.endpoints] = None
        for listener in self.listeners:
            listener(link)


def add_listener(state: LinkLayerState, callback: LinkListener) -> None:
    """Register a callback run after any link leaves the live set."""
    state.listeners.append(callback)


def attempt_generation(
    state: LinkLayerState, edge: Edge, params: SimParams, rng: np.random.Generator
) -> Optional[EntLink]:
    edge = normalize_edge(*edge)
    if edge not in state.edge_occupancy:
        raise LinkStateError(f"{edge} is not a physical edge")
    if state.edge_occupancy[edge] is not None:
        raise EdgeOccupiedError(f"edge {edge} already holds link {state.edge_occupancy[edge]}")
    if rng.random() < params.p:
        return state._add(edge[0], edge[1], ttl=params.t_co, hop_span=1)
    return None


def generate_all(state: LinkLayerState, params: SimParams, rng: np.random.Generator) -> List[EntLink]:
    """One generation attempt on every free physical edge, drawn as a single batch."""
    free = [edge for edge, occupant in state.edge_occupancy.items() if occupant is None]
    if not free:
        return []
    draws = rng.random(len(free))
    return [
        state._add(u, v, ttl=params.t_co, hop_span=1)
        for (u, v), draw in zip(free, draws)
        if draw < params.p
    ]


def age_all(state: LinkLayerState) -> List[int]:
    """Advance one unit time; returns the ids of links that decohered."""
    expired: List[EntLink] = []
    for link in list(state.live_links.values()):
        link.ttl -= 1
        if link.ttl <= 0:
            expired.append(link)
    for link in expired:
        state._remove(link)
    return [link.id for link in expired]


def swap(
    state: LinkLayerState,
    link_ab: EntLink,
    link_bc: EntLink,
    at: int,
    params: SimParams,
    rng: np.random.Generator,
) -> Optional[EntLink]:
    """Bell measurement at ``at``. Both inputs are consumed whatever the outcome."""
    if link_ab.id == link_bc.id:
        raise SwapPreconditionError(f"cannot swap link {link_ab.id} with itself")
    for link in (link_ab, link_bc):
        if state.live_links.get(link.id) is not link:
            raise DeadLinkError(f"link {link.id} is not live")
        if not link.touches(at):
            raise SwapPreconditionError(f"node {at} is not an endpoint of link {link.id}")
    outer_a, outer_c = link_ab.other(at), link_bc.other(at)
    if outer_a == outer_c:
        raise SwapPreconditionError(f"links {link_ab.id} and {link_bc.id} share both endpoints")

    ttl = min(link_ab.ttl, link_bc.ttl)
    hop_span = link_ab.hop_span + link_bc.hop_span
    state._remove(link_ab)
    state._remove(link_bc)
    if rng.random() < params.q:
        return state._add(outer_a, outer_c, ttl=ttl, hop_span=hop_span)
    return None


def consume(state: LinkLayerState, link: EntLink) -> None:
    """Hand a delivered link to the application; it leaves the network."""
    if state.live_links.get(link.id) is not link:
        raise DeadLinkError(f"link {link.id} is not live")
    state._remove(link)


def audit_link_layer(state: LinkLayerState) -> List[str]:
    violations: List[str] = []
    for edge, occupant in state.edge_occupancy.items():
        if occupant is None:
            continue
        link = state.live_links.get(occupant)
        if link is None:
            violations.append(f"edge {edge} points at dead link {occupant}")
        elif link.endpoints != edge or not link.is_direct:
            violations.append(f"edge {edge} points at link {occupant} spanning {link.endpoints}")
    for link_id, link in state.live_links.items():
        if link.ttl <= 0:
            violations.append(f"link {link_id} is live with ttl {link.ttl}")
        if link.is_direct and state.edge_occupancy.get(link.endpoints) != link_id:
            violations.append(f"direct link {link_id} does not occupy edge {link.endpoints}")
        for node in (link.endpoint_a, link.endpoint_b):
            if link_id not in state.by_node.get(node, ()):
                violations.append(f"link {link_id} missing from node index of {node}")
    for node, ids in state.by_node.items():
        for link_id in ids:
            if link_id not in state.live_links:
                violations.append(f"node {node} indexes dead link {link_id}")
    return violations
