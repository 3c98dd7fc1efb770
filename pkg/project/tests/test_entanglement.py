import numpy as np
import pytest

from app.entanglement import (
    LinkLayerState,
    add_listener,
    age_all,
    attempt_generation,
    audit_link_layer,
    consume,
    generate_all,
    swap,
)
from app.errors import DeadLinkError, EdgeOccupiedError, LinkStateError, SwapPreconditionError
from app.schemas import SimParams

from conftest import fill_links, link_on


def test_generation_occupies_edge(path5, rng):
    state = LinkLayerState.for_edges(path5.edges)
    link = attempt_generation(state, (1, 0), SimParams(p=1.0, t_co=2), rng)
    assert link.endpoints == (0, 1)
    assert link.ttl == 2
    assert link.is_direct
    assert state.edge_occupancy[(0, 1)] == link.id
    with pytest.raises(EdgeOccupiedError):
        attempt_generation(state, (0, 1), SimParams(p=1.0), rng)


def test_generation_never_with_p_zero(path5, rng):
    state = LinkLayerState.for_edges(path5.edges)
    for _ in range(100):
        assert attempt_generation(state, (0, 1), SimParams(p=0.0), rng) is None
    assert state.live_links == {}


def test_generation_rejects_non_edge(path5, rng):
    state = LinkLayerState.for_edges(path5.edges)
    with pytest.raises(LinkStateError):
        attempt_generation(state, (0, 4), SimParams(p=1.0), rng)


def test_generate_all_fills_only_free_edges(path5, rng):
    state = LinkLayerState.for_edges(path5.edges)
    held = attempt_generation(state, (1, 2), SimParams(p=1.0, t_co=5), rng)
    made = generate_all(state, SimParams(p=1.0, t_co=2), rng)
    assert sorted(link.endpoints for link in made) == [(0, 1), (2, 3), (3, 4)]
    assert state.edge_occupancy[(1, 2)] == held.id
    assert all(link.ttl == 2 for link in made)
    assert generate_all(state, SimParams(p=1.0), rng) == []


def test_age_all_expires_after_tco(path5, rng):
    state = LinkLayerState.for_edges(path5.edges)
    link = attempt_generation(state, (2, 3), SimParams(p=1.0, t_co=2), rng)
    removed = []
    add_listener(state, removed.append)

    assert age_all(state) == []
    assert state.get(link.id).ttl == 1
    assert age_all(state) == [link.id]
    assert not state.is_live(link.id)
    assert state.edge_occupancy[(2, 3)] is None
    assert removed == [link]


def test_swap_success_merges(path5):
    state = fill_links(path5)
    ab, bc = link_on(state, 0, 1), link_on(state, 1, 2)
    bc.ttl = 3
    merged = swap(state, ab, bc, 1, SimParams(q=1.0), np.random.default_rng(0))
    assert merged.endpoints == (0, 2)
    assert merged.hop_span == 2
    assert merged.ttl == 3
    assert not merged.is_direct
    assert state.edge_occupancy[(0, 1)] is None
    assert state.edge_occupancy[(1, 2)] is None
    assert not state.is_live(ab.id) and not state.is_live(bc.id)
    assert audit_link_layer(state) == []


def test_swap_ttl_is_minimum(path5):
    state = fill_links(path5)
    ab, bc = link_on(state, 0, 1), link_on(state, 1, 2)
    ab.ttl, bc.ttl = 5, 2
    merged = swap(state, ab, bc, 1, SimParams(q=1.0), np.random.default_rng(0))
    assert merged.ttl == 2


def test_swap_failure_consumes_both(path5):
    state = fill_links(path5)
    ab, bc = link_on(state, 0, 1), link_on(state, 1, 2)
    assert swap(state, ab, bc, 1, SimParams(q=0.0), np.random.default_rng(0)) is None
    assert not state.is_live(ab.id)
    assert not state.is_live(bc.id)
    assert len(state.live_links) == 2


def test_swap_preconditions(path5):
    state = fill_links(path5)
    rng = np.random.default_rng(0)
    ab, cd = link_on(state, 0, 1), link_on(state, 2, 3)
    with pytest.raises(SwapPreconditionError):
        swap(state, ab, cd, 1, SimParams(), rng)
    with pytest.raises(SwapPreconditionError):
        swap(state, ab, ab, 1, SimParams(), rng)
    bc = link_on(state, 1, 2)
    consume(state, bc)
    with pytest.raises(DeadLinkError):
        swap(state, ab, bc, 1, SimParams(), rng)


def test_swap_success_frequency(path5):
    rng = np.random.default_rng(99)
    params = SimParams(q=0.8)
    trials, hits = 20000, 0
    for _ in range(trials):
        state = fill_links(path5)
        hits += swap(state, link_on(state, 0, 1), link_on(state, 1, 2), 1, params, rng) is not None
    assert abs(hits / trials - 0.8) < 0.01


def test_consume_notifies(path5):
    state = fill_links(path5)
    seen = []
    add_listener(state, lambda link: seen.append(link.id))
    link = link_on(state, 3, 4)
    consume(state, link)
    assert seen == [link.id]
    with pytest.raises(DeadLinkError):
        consume(state, link)


def test_stationary_occupancy():
    # After-generation occupancy of one edge: free -> held w.p. p, held -> free at next aging.
    p = 0.8
    expected = 2 * p / (1 + p)
    edges = [(i, i + 1) for i in range(50)]
    state = LinkLayerState.for_edges(edges)
    params = SimParams(p=p, t_co=2)
    rng = np.random.default_rng(2024)
    samples = []
    for _ in range(2000):
        generate_all(state, params, rng)
        samples.append(state.occupied_count() / len(edges))
        age_all(state)
    mean = float(np.mean(samples[10:]))
    assert 0.79 <= mean <= 0.97
    assert abs(mean - expected) < 0.01


def test_audit_flags_corruption(path5):
    state = fill_links(path5)
    link = link_on(state, 0, 1)
    state.edge_occupancy[(1, 2)] = link.id
    problems = audit_link_layer(state)
    assert any("(1, 2)" in p for p in problems)
