"""One DODAG over the instant topology.

Nodes join through DIS/DIO/DAO exchanges over live direct links; a lost parent
link detaches the child's whole branch, which keeps its shape until any of its
nodes finds a new attachment point and the branch is re-ranked from there.
Every tree owns its own edges, so one link can carry several trees at once.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .entanglement import EntLink, LinkLayerState, add_listener
from .errors import TreeError
from .log_config import get_logger

logger = get_logger(__name__)

ROOT_RANK = 0


class Membership(str, Enum):
    OUT = "out"
    MEMBER = "member"
    ROOT = "root"
    DETACHED = "detached"


@dataclass
class NodeTreeState:
    tree_id: int
    node: int
    membership: Membership = Membership.OUT
    rank: Optional[int] = None
    parent: Optional[int] = None
    parent_link: Optional[int] = None
    children: Dict[int, int] = field(default_factory=dict)  # child node -> link id

    @property
    def in_tree(self) -> bool:
        return self.membership in (Membership.MEMBER, Membership.ROOT)


class MessageKind(str, Enum):
    DIS = "DIS"
    DIO = "DIO"
    DAO = "DAO"


@dataclass(frozen=True)
class ControlMessage:
    kind: MessageKind
    sender: int
    receiver: int
    tree_id: int
    advertised_rank: Optional[int] = None

    def format(self) -> str:
        rank = "-" if self.advertised_rank is None else str(self.advertised_rank)
        return f"tree={self.tree_id} kind={self.kind.value} from={self.sender} to={self.receiver} rank={rank}"


@dataclass(frozen=True)
class TreeEdge:
    parent: int
    child: int
    link_id: int


@dataclass(frozen=True)
class JoinOffer:
    """Best attachment a join unit (a lone node or a detached branch) has heard of.

    Offers rank by advertised rank, then by the remaining lifetime of the link
    they would use (longer first), then by ids.
    """

    rank: int
    ttl: int
    tree_id: int
    parent: int
    joiner: int
    link_id: int
    branch_head: Optional[int] = None

    @property
    def sort_key(self) -> Tuple[int, int, int, int, int, int]:
        return self.rank, -self.ttl, self.tree_id, self.parent, self.joiner, self.link_id


class Dodag:
    def __init__(self, tree_id: int):
        self.tree_id = tree_id
        self.root: Optional[int] = None
        self.states: Dict[int, NodeTreeState] = {}
        self.edges: Dict[int, TreeEdge] = {}
        # bumped on every structural change; route search caches against it
        self.version = 0

    # ---------- Queries ----------

    def state(self, node: int) -> NodeTreeState:
        st = self.states.get(node)
        return st if st is not None else NodeTreeState(tree_id=self.tree_id, node=node)

    def membership(self, node: int) -> Membership:
        return self.state(node).membership

    def is_member(self, node: int) -> bool:
        st = self.states.get(node)
        return st is not None and st.in_tree

    def rank(self, node: int) -> Optional[int]:
        st = self.states.get(node)
        return st.rank if st is not None and st.in_tree else None

    def members(self) -> List[int]:
        return sorted(n for n, st in self.states.items() if st.in_tree)

    def ancestors(self, node: int) -> List[int]:
        """``node`` followed by its parent chain up to the root."""
        if not self.is_member(node):
            return []
        chain = [node]
        while self.states[chain[-1]].parent is not None:
            chain.append(self.states[chain[-1]].parent)
            if len(chain) > len(self.states):
                raise TreeError(f"tree {self.tree_id}: parent cycle through {node}")
        return chain

    def subtree(self, node: int) -> List[int]:
        out, stack = [], [node]
        while stack:
            x = stack.pop()
            out.append(x)
            stack.extend(self.states[x].children)
        return sorted(out)

    def branch_head(self, node: int) -> int:
        head = node
        for _ in range(len(self.states) + 1):
            parent = self.states[head].parent
            if parent is None:
                return head
            head = parent
        raise TreeError(f"tree {self.tree_id}: detached branch of {node} has a cycle")

    def parents_of(self, node: int) -> List[int]:
        st = self.states.get(node)
        return [st.parent] if st is not None and st.parent is not None else []

    # ---------- Mutations ----------

    def _ensure(self, node: int) -> NodeTreeState:
        if node not in self.states:
            self.states[node] = NodeTreeState(tree_id=self.tree_id, node=node)
        return self.states[node]

    def init_root(self, node: int) -> NodeTreeState:
        if self.root is not None:
            raise TreeError(f"tree {self.tree_id} already has root {self.root}")
        if node in self.states:
            raise TreeError(f"node {node} already belongs to tree {self.tree_id}")
        st = self._ensure(node)
        st.membership = Membership.ROOT
        st.rank = ROOT_RANK
        self.root = node
        self.version += 1
        return st

    def bind(self, link_layer: LinkLayerState) -> None:
        """Repair this tree whenever one of its links leaves the link layer."""
        add_listener(link_layer, self._on_link_removed)

    def _on_link_removed(self, link: EntLink) -> None:
        if link.id in self.edges:
            self.on_link_lost(link.id)

    def _connect(self, parent: int, child: int, link_id: int) -> None:
        self.edges[link_id] = TreeEdge(parent=parent, child=child, link_id=link_id)
        self._ensure(parent).children[child] = link_id
        st = self._ensure(child)
        st.parent = parent
        st.parent_link = link_id
        self.version += 1

    def _disconnect(self, child: int) -> None:
        st = self.states[child]
        self.edges.pop(st.parent_link, None)
        self.states[st.parent].children.pop(child, None)
        st.parent = None
        st.parent_link = None
        self.version += 1

    def attach(self, child: int, parent: int, link_id: int) -> NodeTreeState:
        """Make an out-of-tree node a member under ``parent``."""
        if not self.is_member(parent):
            raise TreeError(f"tree {self.tree_id}: parent {parent} is not a member")
        if self.membership(child) is not Membership.OUT:
            raise TreeError(f"tree {self.tree_id}: node {child} is already placed")
        if link_id in self.edges:
            raise TreeError(f"tree {self.tree_id}: link {link_id} is already an edge")
        self._connect(parent, child, link_id)
        st = self.states[child]
        st.membership = Membership.MEMBER
        st.rank = self.states[parent].rank + 1
        return st

    def _reattach_branch(self, joiner: int, parent: int, link_id: int) -> None:
        nodes = self.subtree(self.branch_head(joiner))
        adjacency: Dict[int, List[Tuple[int, int]]] = {x: [] for x in nodes}
        for x in nodes:
            for child, link in self.states[x].children.items():
                adjacency[x].append((child, link))
                adjacency[child].append((x, link))
                self.edges.pop(link, None)
        for x in nodes:
            st = self.states[x]
            st.parent = None
            st.parent_link = None
            st.children = {}

        self._connect(parent, joiner, link_id)
        self.states[joiner].membership = Membership.MEMBER
        self.states[joiner].rank = self.states[parent].rank + 1
        seen = {joiner}
        queue = deque([joiner])
        while queue:
            x = queue.popleft()
            for y, link in sorted(adjacency[x]):
                if y in seen:
                    continue
                seen.add(y)
                self._connect(x, y, link)
                self.states[y].membership = Membership.MEMBER
                self.states[y].rank = self.states[x].rank + 1
                queue.append(y)

    def unit_nodes(self, offer: JoinOffer) -> Set[int]:
        if offer.branch_head is None:
            return {offer.joiner}
        return set(self.subtree(offer.branch_head))

    def apply_offer(self, offer: JoinOffer) -> List[ControlMessage]:
        if offer.branch_head is None:
            self.attach(offer.joiner, offer.parent, offer.link_id)
        else:
            self._reattach_branch(offer.joiner, offer.parent, offer.link_id)
        return [ControlMessage(MessageKind.DAO, offer.joiner, offer.parent, self.tree_id)]

    def _prune(self, node: int) -> None:
        st = self.states.get(node)
        if st is not None and st.membership is Membership.DETACHED and st.parent is None and not st.children:
            del self.states[node]

    def on_link_lost(self, link_id: int) -> None:
        edge = self.edges.get(link_id)
        if edge is None:
            raise TreeError(f"link {link_id} is not an edge of tree {self.tree_id}")
        self._disconnect(edge.child)
        if self.states[edge.child].membership is Membership.MEMBER:
            for node in self.subtree(edge.child):
                self.states[node].membership = Membership.DETACHED
        self._prune(edge.child)
        self._prune(edge.parent)

    # ---------- Control plane ----------

    def collect_offers(
        self, link_layer: LinkLayerState, frontier: Optional[Iterable[int]] = None
    ) -> Tuple[List[JoinOffer], List[ControlMessage]]:
        """DIS from every out-of-tree neighbour of a frontier member, DIO back with the rank.

        The frontier defaults to every member. Returns the best offer per join
        unit, in offer order, plus the messages exchanged.
        """
        if frontier is None:
            frontier = [n for n, st in self.states.items() if st.in_tree]
        best: Dict[Tuple[str, int], JoinOffer] = {}
        messages: List[ControlMessage] = []
        for u in frontier:
            rank = self.states[u].rank
            for link_id in link_layer.by_node.get(u, ()):
                link = link_layer.live_links[link_id]
                if not link.is_direct or link_id in self.edges:
                    continue
                v = link.other(u)
                membership = self.membership(v)
                if membership is Membership.DETACHED:
                    head = self.branch_head(v)
                    unit = ("branch", head)
                elif membership is Membership.OUT:
                    head = None
                    unit = ("node", v)
                else:
                    continue
                messages.append(ControlMessage(MessageKind.DIS, v, u, self.tree_id))
                messages.append(ControlMessage(MessageKind.DIO, u, v, self.tree_id, rank))
                offer = JoinOffer(rank, link.ttl, self.tree_id, u, v, link_id, head)
                if unit not in best or offer.sort_key < best[unit].sort_key:
                    best[unit] = offer
        return sorted(best.values(), key=lambda o: o.sort_key), messages

    def grow(self, link_layer: LinkLayerState, slow_control: bool = False) -> List[ControlMessage]:
        """Join waves until nothing new is heard; only nodes that just joined advertise next."""
        messages: List[ControlMessage] = []
        frontier: Optional[List[int]] = None
        while True:
            offers, heard = self.collect_offers(link_layer, frontier)
            messages.extend(heard)
            if not offers:
                break
            joined: List[int] = []
            for offer in offers:
                unit = self.unit_nodes(offer)
                messages.extend(self.apply_offer(offer))
                joined.extend(unit)
            if slow_control:
                break
            frontier = joined
        return messages

    def rebalance(self, link_layer: LinkLayerState) -> List[ControlMessage]:
        """Parent switching: re-rank members by hop count over live direct links.

        Each member ends up under a neighbour one hop closer to the root. It
        keeps its current parent unless another such neighbour holds a link
        with a longer remaining lifetime.
        """
        if self.root is None:
            return []
        dist = {self.root: ROOT_RANK}
        order: List[int] = []
        freshest: Dict[int, EntLink] = {}
        queue = deque([self.root])
        while queue:
            x = queue.popleft()
            for link in link_layer.links_at(x):
                if not link.is_direct:
                    continue
                y = link.other(x)
                if not self.is_member(y):
                    continue
                if y not in dist:
                    dist[y] = dist[x] + 1
                    order.append(y)
                    freshest[y] = link
                    queue.append(y)
                elif dist[y] == dist[x] + 1 and link.ttl > freshest[y].ttl:
                    freshest[y] = link

        messages: List[ControlMessage] = []
        for y in order:
            st = self.states[y]
            best = freshest[y]
            current = link_layer.live_links.get(st.parent_link)
            keep = (
                current is not None
                and dist.get(st.parent) == dist[y] - 1
                and current.ttl >= best.ttl
            )
            if not keep:
                parent = best.other(y)
                self._disconnect(y)
                self._connect(parent, y, best.id)
                messages.append(ControlMessage(MessageKind.DAO, y, parent, self.tree_id))
            if st.rank != dist[y]:
                st.rank = dist[y]
                self.version += 1
        return messages

    def maintenance_round(
        self, link_layer: LinkLayerState, slow_control: bool = False, trace: bool = False
    ) -> List[ControlMessage]:
        return run_maintenance([self], link_layer, slow_control=slow_control, trace=trace)


def run_maintenance(
    trees: Sequence[Dodag],
    link_layer: LinkLayerState,
    slow_control: bool = False,
    trace: bool = False,
) -> List[ControlMessage]:
    """Grow every tree to a fixpoint in synchronous waves, then switch parents.

    Offers are gathered from the state at the start of a wave, so a node joining
    in wave k gets rank k when all links are present. Trees grow independently;
    a node may join any number of them. With ``slow_control`` a tree spreads one
    hop per round.
    """
    messages: List[ControlMessage] = []
    for tree in trees:
        messages.extend(tree.grow(link_layer, slow_control=slow_control))
        messages.extend(tree.rebalance(link_layer))

    if trace:
        for message in messages:
            logger.debug(message.format())
    return messages


def audit_tree(tree: Dodag, link_layer: Optional[LinkLayerState] = None) -> List[str]:
    """Structural checks: ranks, acyclicity, edge bookkeeping, link liveness."""
    tid = tree.tree_id
    violations: List[str] = []
    child_count: Dict[int, int] = {}
    for link_id, edge in tree.edges.items():
        child_count[edge.child] = child_count.get(edge.child, 0) + 1
        if link_layer is not None:
            link = link_layer.live_links.get(link_id)
            if link is None:
                violations.append(f"tree {tid}: edge {edge.parent}->{edge.child} uses dead link {link_id}")
            elif not link.is_direct or link.endpoints != tuple(sorted((edge.parent, edge.child))):
                violations.append(f"tree {tid}: link {link_id} does not join {edge.parent} and {edge.child}")
    for node, count in child_count.items():
        if count > 1:
            violations.append(f"tree {tid}: node {node} has {count} parents")

    for node, st in tree.states.items():
        if st.membership is Membership.OUT:
            violations.append(f"tree {tid}: out node {node} still stored")
        if st.membership is Membership.ROOT:
            if node != tree.root or st.rank != ROOT_RANK or st.parent_link is not None:
                violations.append(f"tree {tid}: malformed root {node}")
        if st.parent is not None:
            edge = tree.edges.get(st.parent_link)
            if edge is None or edge.parent != st.parent or edge.child != node:
                violations.append(f"tree {tid}: node {node} parent link {st.parent_link} not an edge")
            elif tree.states[st.parent].children.get(node) != st.parent_link:
                violations.append(f"tree {tid}: parent {st.parent} does not list child {node}")
        for child, link_id in st.children.items():
            cst = tree.states.get(child)
            if cst is None or cst.parent != node or cst.parent_link != link_id:
                violations.append(f"tree {tid}: child {child} of {node} disagrees about its parent")
        if st.membership is Membership.MEMBER:
            pst = tree.states.get(st.parent) if st.parent is not None else None
            if pst is None or not pst.in_tree:
                violations.append(f"tree {tid}: member {node} hangs from non-member {st.parent}")
            elif st.rank != pst.rank + 1:
                violations.append(f"tree {tid}: member {node} rank {st.rank} under parent rank {pst.rank}")
        if st.membership is Membership.DETACHED and st.parent is not None:
            if tree.membership(st.parent) is not Membership.DETACHED:
                violations.append(f"tree {tid}: detached {node} hangs from attached {st.parent}")

    for node in tree.members():
        steps, x = 0, node
        while x != tree.root and steps <= len(tree.states):
            x = tree.states[x].parent
            steps += 1
            if x is None:
                violations.append(f"tree {tid}: member {node} does not reach the root")
                break
        if steps > len(tree.states):
            violations.append(f"tree {tid}: parent cycle through {node}")
    return violations
