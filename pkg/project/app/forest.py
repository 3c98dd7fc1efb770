"""A forest of DODAGs that meet, negotiate parents and share subtrees."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

from .dodag import (
    ControlMessage,
    Dodag,
    Membership,
    MessageKind,
    audit_tree,
    run_maintenance,
)
from .entanglement import EntLink, LinkLayerState, add_listener
from .errors import TreeError
from .log_config import get_logger

logger = get_logger(__name__)


class NegotiationOutcome(str, Enum):
    A_PARENTS_B = "a_parents_b"
    B_PARENTS_A = "b_parents_a"
    NO_CONNECTION = "no_connection"


@dataclass(frozen=True)
class Adoption:
    """A cross-tree parent/child edge created by negotiation."""

    tree_id: int
    parent: int
    child: int
    link_id: int
    parent_rank: int
    child_rank: int


class Forest:
    def __init__(self, roots: Sequence[int]):
        if not roots:
            raise TreeError("a forest needs at least one root")
        if len(set(roots)) != len(roots):
            raise TreeError(f"roots must be distinct: {list(roots)}")
        self.trees: List[Dodag] = []
        for tree_id, root in enumerate(roots):
            tree = Dodag(tree_id)
            tree.init_root(root)
            self.trees.append(tree)
        self.adoptions: Dict[int, Adoption] = {}
        # (version, derived view) kept by route search
        self.graph_cache: Optional[Tuple[Tuple[int, ...], Any]] = None

    @property
    def roots(self) -> List[int]:
        return [tree.root for tree in self.trees]

    @property
    def version(self) -> Tuple[int, ...]:
        return tuple(tree.version for tree in self.trees)

    def bind(self, link_layer: LinkLayerState) -> None:
        add_listener(link_layer, self._on_link_removed)

    def _on_link_removed(self, link: EntLink) -> None:
        for tree in self.trees:
            if link.id in tree.edges:
                tree.on_link_lost(link.id)
        self.adoptions.pop(link.id, None)

    def trees_using(self, link_id: int) -> List[int]:
        return [tree.tree_id for tree in self.trees if link_id in tree.edges]

    def member_trees(self, node: int) -> List[int]:
        return [tree.tree_id for tree in self.trees if tree.is_member(node)]

    def primary(self, node: int) -> Optional[Tuple[int, int]]:
        """(rank, tree id) of the tree where ``node`` sits closest to the root."""
        placed = [(tree.rank(node), tree.tree_id) for tree in self.trees if tree.is_member(node)]
        return min(placed) if placed else None

    def maintenance_round(
        self, link_layer: LinkLayerState, slow_control: bool = False, trace: bool = False
    ) -> List[ControlMessage]:
        messages = run_maintenance(self.trees, link_layer, slow_control=slow_control)
        # parent switching may have dropped an adopted edge
        self.adoptions = {
            link_id: adoption
            for link_id, adoption in self.adoptions.items()
            if link_id in self.trees[adoption.tree_id].edges
        }
        messages.extend(self.negotiation_round(link_layer))
        if trace:
            for message in messages:
                logger.debug(message.format())
        return messages

    def negotiation_round(self, link_layer: LinkLayerState) -> List[ControlMessage]:
        """Members of different tree sets sharing a link no tree uses yet decide who parents whom."""
        messages: List[ControlMessage] = []
        for link in sorted(link_layer.direct_links(), key=lambda l: l.endpoints):
            if self.trees_using(link.id):
                continue
            a, b = link.endpoints
            trees_a, trees_b = set(self.member_trees(a)), set(self.member_trees(b))
            if not trees_a or not trees_b or trees_a == trees_b:
                continue
            outcome = negotiate_parent(self, a, b, link.id)
            if outcome is NegotiationOutcome.NO_CONNECTION:
                continue
            adoption = self.adoptions[link.id]
            messages.append(
                ControlMessage(MessageKind.DAO, adoption.child, adoption.parent, adoption.tree_id)
            )
        return messages


def can_adopt(forest: Forest, child: int, tree_id: int) -> bool:
    tree = forest.trees[tree_id]
    if tree.membership(child) is not Membership.OUT or tree.parents_of(child):
        return False
    counts = {t.tree_id: len(t.parents_of(child)) for t in forest.trees}
    counts[tree_id] += 1
    return not _is_diamond(counts)


def negotiate_parent(forest: Forest, node_a: int, node_b: int, link_id: int) -> NegotiationOutcome:
    primary_a, primary_b = forest.primary(node_a), forest.primary(node_b)
    if primary_a is None or primary_b is None:
        raise TreeError(f"nodes {node_a}/{node_b} must both be tree members; use an ordinary join")

    if primary_a[0] < primary_b[0]:
        parent, child, outcome = node_a, node_b, NegotiationOutcome.A_PARENTS_B
        (parent_rank, tree_id), child_rank = primary_a, primary_b[0]
    else:
        parent, child, outcome = node_b, node_a, NegotiationOutcome.B_PARENTS_A
        (parent_rank, tree_id), child_rank = primary_b, primary_a[0]
    if link_id in forest.trees[tree_id].edges:
        raise TreeError(f"link {link_id} is already an edge of tree {tree_id}")
    if parent_rank == child_rank:
        return NegotiationOutcome.NO_CONNECTION

    if not can_adopt(forest, child, tree_id):
        return NegotiationOutcome.NO_CONNECTION
    forest.trees[tree_id].attach(child, parent, link_id)
    forest.adoptions[link_id] = Adoption(tree_id, parent, child, link_id, parent_rank, child_rank)
    return outcome


def _is_diamond(parent_counts: Dict[int, int]) -> bool:
    trees_with_parent = sum(1 for c in parent_counts.values() if c > 0)
    return trees_with_parent >= 2 and max(parent_counts.values()) >= 2


def is_diamond_free(forest: Forest) -> bool:
    counts: Dict[int, Dict[int, int]] = {}
    for tree in forest.trees:
        for edge in tree.edges.values():
            per_tree = counts.setdefault(edge.child, {})
            per_tree[tree.tree_id] = per_tree.get(tree.tree_id, 0) + 1
    return not any(_is_diamond(per_tree) for per_tree in counts.values())


def shared_subtree_nodes(forest: Forest) -> Set[int]:
    seen: Dict[int, int] = {}
    for tree in forest.trees:
        for node in tree.members():
            seen[node] = seen.get(node, 0) + 1
    return {node for node, count in seen.items() if count >= 2}


def snapshot(forest: Forest) -> str:
    lines = []
    for tree in forest.trees:
        for node, st in tree.states.items():
            rank = "-" if st.rank is None else str(st.rank)
            parent = "-" if st.parent is None else str(st.parent)
            lines.append((node, tree.tree_id, f"{node} {tree.tree_id} {rank} {parent} {st.membership.value}"))
    return "\n".join(text for _, _, text in sorted(lines)) + ("\n" if lines else "")


def audit_forest(forest: Forest, link_layer: Optional[LinkLayerState] = None) -> List[str]:
    violations: List[str] = []
    for tree in forest.trees:
        violations.extend(audit_tree(tree, link_layer))
    if len(set(forest.roots)) != len(forest.roots):
        violations.append(f"roots are not distinct: {forest.roots}")
    if not is_diamond_free(forest):
        violations.append("diamond pattern present")
    for link_id, adoption in forest.adoptions.items():
        if adoption.parent_rank == adoption.child_rank:
            violations.append(f"comparable nodes {adoption.parent}/{adoption.child} connected by link {link_id}")
        if link_id not in forest.trees[adoption.tree_id].edges:
            violations.append(f"adoption link {link_id} is no longer a tree edge")
    return violations
