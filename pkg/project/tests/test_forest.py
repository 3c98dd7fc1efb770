from dataclasses import replace

import pytest

from app.dodag import Membership, MessageKind, TreeEdge
from app.entanglement import consume
from app.errors import TreeError
from app.forest import (
    Forest,
    NegotiationOutcome,
    _is_diamond,
    audit_forest,
    can_adopt,
    is_diamond_free,
    negotiate_parent,
    shared_subtree_nodes,
    snapshot,
)
from app.topology import gen_path

from conftest import fill_links, link_on


def grown_forest(topo, roots, **kwargs):
    state = fill_links(topo)
    forest = Forest(roots)
    forest.bind(state)
    messages = forest.maintenance_round(state, **kwargs)
    return forest, state, messages


def half_adopted():
    """0 - 1 - 2 with roots 0 and 2, where only tree 0 has reached node 1."""
    state = fill_links(gen_path(3))
    forest = Forest([0, 2])
    forest.bind(state)
    forest.trees[0].attach(1, 0, link_on(state, 0, 1).id)
    return forest, state


def test_roots_must_be_distinct():
    with pytest.raises(TreeError):
        Forest([3, 3])
    with pytest.raises(TreeError):
        Forest([])


def test_trees_spread_independently():
    forest, state, _ = grown_forest(gen_path(10), [2, 6])
    first, second = forest.trees
    assert first.members() == second.members() == list(range(10))
    assert [first.rank(n) for n in range(10)] == [abs(n - 2) for n in range(10)]
    assert [second.rank(n) for n in range(10)] == [abs(n - 6) for n in range(10)]
    assert shared_subtree_nodes(forest) == set(range(10))
    assert forest.trees_using(link_on(state, 4, 5).id) == [0, 1]
    assert forest.adoptions == {}
    assert audit_forest(forest, state) == []


def test_shared_link_repairs_every_tree():
    forest, state, _ = grown_forest(gen_path(10), [2, 6])
    consume(state, link_on(state, 4, 5))
    assert forest.trees[0].members() == [0, 1, 2, 3, 4]
    assert forest.trees[1].members() == [5, 6, 7, 8, 9]
    assert shared_subtree_nodes(forest) == set()
    assert audit_forest(forest, state) == []


def test_negotiation_adopts_across_trees():
    forest, state = half_adopted()
    seam = link_on(state, 1, 2)
    messages = forest.negotiation_round(state)
    assert forest.trees[1].states[1].parent == 2
    assert forest.trees[1].rank(1) == 1
    adoption = forest.adoptions[seam.id]
    assert (adoption.tree_id, adoption.parent, adoption.child) == (1, 2, 1)
    assert adoption.parent_rank != adoption.child_rank
    assert [(m.kind, m.sender, m.receiver) for m in messages] == [(MessageKind.DAO, 1, 2)]
    assert is_diamond_free(forest)
    assert audit_forest(forest, state) == []


def test_adoption_survives_later_rounds():
    forest, state = half_adopted()
    seam = link_on(state, 1, 2)
    forest.negotiation_round(state)
    forest.maintenance_round(state)
    assert seam.id in forest.adoptions
    assert forest.trees[0].members() == forest.trees[1].members() == [0, 1, 2]
    assert forest.trees_using(seam.id) == [0, 1]
    assert audit_forest(forest, state) == []


def test_comparable_nodes_stay_apart():
    forest, state, _ = grown_forest(gen_path(4), [0, 3], slow_control=True)
    seam = link_on(state, 1, 2)
    assert forest.trees[0].members() == [0, 1]
    assert forest.trees[1].members() == [2, 3]
    assert forest.trees[0].rank(1) == forest.trees[1].rank(2) == 1
    assert forest.trees_using(seam.id) == []
    assert forest.adoptions == {}
    assert negotiate_parent(forest, 1, 2, seam.id) is NegotiationOutcome.NO_CONNECTION
    assert shared_subtree_nodes(forest) == set()
    assert audit_forest(forest, state) == []


def test_slow_control_trees_meet_after_another_round():
    forest, state, _ = grown_forest(gen_path(4), [0, 3], slow_control=True)
    for _ in range(2):
        forest.maintenance_round(state, slow_control=True)
    assert forest.trees[0].members() == forest.trees[1].members() == [0, 1, 2, 3]
    assert forest.trees_using(link_on(state, 1, 2).id) == [0, 1]
    assert audit_forest(forest, state) == []


def test_negotiate_parent_direction():
    forest, state = half_adopted()
    outcome = negotiate_parent(forest, 2, 1, link_on(state, 1, 2).id)
    assert outcome is NegotiationOutcome.A_PARENTS_B
    assert forest.trees[1].states[1].parent == 2


def test_negotiate_parent_errors():
    state = fill_links(gen_path(4))
    forest = Forest([0, 3])
    forest.trees[0].attach(1, 0, link_on(state, 0, 1).id)
    with pytest.raises(TreeError):
        negotiate_parent(forest, 0, 1, link_on(state, 0, 1).id)
    with pytest.raises(TreeError):
        negotiate_parent(forest, 1, 2, link_on(state, 1, 2).id)


def test_can_adopt_rejects_placed_nodes():
    forest, _ = half_adopted()
    assert not can_adopt(forest, 1, 0)
    assert not can_adopt(forest, 2, 1)
    assert can_adopt(forest, 1, 1)


@pytest.mark.parametrize(
    "counts, diamond",
    [({0: 1, 1: 1}, False), ({0: 2, 1: 1}, True), ({0: 2, 1: 0}, False), ({0: 0, 1: 0}, False)],
)
def test_diamond_pattern(counts, diamond):
    assert _is_diamond(counts) is diamond


def test_lost_adoption_link_is_forgotten():
    forest, state = half_adopted()
    seam = link_on(state, 1, 2)
    forest.negotiation_round(state)
    consume(state, seam)
    assert seam.id not in forest.adoptions
    assert forest.trees_using(seam.id) == []
    assert forest.trees[1].membership(1) is Membership.OUT
    assert forest.member_trees(1) == [0]
    assert audit_forest(forest, state) == []


def test_primary_prefers_closest_root():
    forest, _, _ = grown_forest(gen_path(10), [2, 6])
    assert forest.primary(4) == (2, 0)
    assert forest.primary(5) == (1, 1)
    assert forest.primary(99) is None


def test_snapshot_lines():
    forest, _, _ = grown_forest(gen_path(3), [0, 2])
    assert snapshot(forest) == (
        "0 0 0 - root\n"
        "0 1 2 1 member\n"
        "1 0 1 0 member\n"
        "1 1 1 2 member\n"
        "2 0 2 1 member\n"
        "2 1 0 - root\n"
    )


def test_grid_quadrant_trees_overlap(grid10):
    forest, state, _ = grown_forest(grid10, [22, 27, 72, 77])
    shared = shared_subtree_nodes(forest)
    assert {44, 45, 54, 55} <= shared
    assert len(shared) == 100
    assert all(len(tree.members()) == 100 for tree in forest.trees)
    assert audit_forest(forest, state) == []


def test_audit_catches_diamond_and_comparable_adoption():
    forest, state = half_adopted()
    seam = link_on(state, 1, 2)
    forest.negotiation_round(state)
    forest.trees[0].edges[999] = TreeEdge(parent=2, child=1, link_id=999)
    forest.adoptions[seam.id] = replace(forest.adoptions[seam.id], parent_rank=1, child_rank=1)
    problems = audit_forest(forest, state)
    assert "diamond pattern present" in problems
    assert any("comparable nodes 2/1" in p for p in problems)
