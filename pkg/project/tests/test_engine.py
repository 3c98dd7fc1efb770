import logging
import math

import networkx as nx
import numpy as np
import pytest

from app.engine import (
    Cell,
    World,
    audit_world,
    run_cells,
    run_experiment,
    run_point,
    sample_pair,
    serve_request,
    step,
)
from app.entanglement import consume
from app.errors import InvariantViolation, NoPairAtDistanceError
from app.rng import RandomStreams
from app.schemas import RootStrategy, Scheme, SchemeKind, SimParams, SimulationOptions, WorkloadSpec
from app.topology import gen_barbell, gen_erdos_renyi, gen_grid, gen_path, select_roots

from conftest import FOREVER


def make_world(topo, kind, roots, params, seed=0, **options):
    return World(topo, Scheme(kind=kind, roots=roots), params, RandomStreams(seed), SimulationOptions(**options))


def test_nothing_happens_without_generation(grid10):
    world = make_world(grid10, SchemeKind.MULTI_TREE, [22, 77], SimParams(p=0.0))
    for _ in range(20):
        report = step(world)
        assert report.generated == 0
    assert world.link_layer.live_links == {}
    assert [tree.members() for tree in world.forest.trees] == [[22], [77]]
    assert world.time == 20


def test_full_grid_joins_in_one_step(grid10):
    world = make_world(grid10, SchemeKind.SINGLE_TREE, [44], SimParams(p=1.0, t_co=FOREVER))
    report = step(world)
    assert report.generated == 180
    assert report.occupied == 180
    assert len(world.forest.trees[0].members()) == 100


def test_steady_state_occupancy(grid10):
    # measured right after generation; each link survives the next unit time
    p = 0.8
    world = make_world(grid10, SchemeKind.MULTI_TREE, [22, 27, 72, 77], SimParams(p=p, t_co=2), seed=3)
    fractions = [step(world).occupied / 180 for _ in range(400)]
    mean = float(np.mean(fractions[5:]))
    assert 0.79 <= mean <= 0.97
    assert abs(mean - 2 * p / (1 + p)) < 0.01


def test_serve_without_tree_consumes_nothing(path5):
    world = make_world(path5, SchemeKind.SINGLE_TREE, [0], SimParams(p=0.0))
    assert serve_request(world, 3, 4) is False
    assert world.link_layer.live_links == {}


def test_serve_adjacent_members(path5):
    world = make_world(path5, SchemeKind.SINGLE_TREE, [0], SimParams(p=1.0, q=0.0, t_co=FOREVER))
    step(world)
    assert serve_request(world, 0, 1) is True
    assert world.link_layer.edge_occupancy[(0, 1)] is None


def test_serve_three_hops_frequency():
    topo = gen_path(4)
    world = make_world(topo, SchemeKind.SINGLE_TREE, [0], SimParams(p=1.0, q=0.8, t_co=FOREVER), seed=11)
    trials, hits = 10_000, 0
    for _ in range(trials):
        step(world)
        hits += serve_request(world, 0, 3)
    assert abs(hits / trials - 0.64) < 0.02


def test_request_is_served_before_links_decohere(path5):
    world = make_world(path5, SchemeKind.SINGLE_TREE, [0], SimParams(p=1.0, q=1.0, t_co=1))
    report = step(world, (0, 4))
    assert report.served is True
    assert world.link_layer.live_links == {}
    assert step(world).served is None
    # links made in the last step are already gone
    assert serve_request(world, 0, 4) is False


def test_zero_warmup_serves_every_step(path5):
    workload = WorkloadSpec(distances=[1], attempts_per_point=25, warmup_steps=0)
    scheme = Scheme(kind=SchemeKind.SINGLE_TREE, roots=[2])
    params = SimParams(p=1.0, q=1.0, t_co=1)
    assert run_experiment(path5, scheme, params, workload, seed=3)[0].rate == 1.0


def rates(topo, kind, roots, params, workload, seed=42):
    records = run_experiment(topo, Scheme(kind=kind, roots=roots), params, workload, seed)
    return {record.distance: record for record in records}


def within_noise(low, high):
    """``low`` is not above ``high`` by more than three combined standard errors."""
    return low.rate <= high.rate + 3 * math.hypot(low.std_error, high.std_error)


@pytest.mark.slow
def test_grid_scheme_ordering(grid10):
    params = SimParams(p=0.8, q=0.8, t_co=2)
    workload = WorkloadSpec(distances=[2, 4, 6, 10], attempts_per_point=800, warmup_steps=2)
    multi = rates(grid10, SchemeKind.MULTI_TREE, [22, 27, 72, 77], params, workload)
    single = rates(grid10, SchemeKind.SINGLE_TREE, [44], params, workload)
    sync = rates(grid10, SchemeKind.SYNCHRONOUS, [], params, workload)

    assert multi[2].rate > 0.5
    assert multi[10].rate > 0.05
    for d in workload.distances:
        assert within_noise(single[d], multi[d]), d
    gap = {d: multi[d].rate - single[d].rate for d in workload.distances}
    assert gap[2] > 0.1
    assert gap[2] > gap[10]
    assert multi[10].rate > sync[10].rate
    for records in (multi, single, sync):
        for near, far in zip(workload.distances, workload.distances[1:]):
            assert within_noise(records[far], records[near]), (records[far].scheme, far)


def test_cross_cluster_requests_need_the_bridge():
    topo = gen_barbell(10, 0.6, seed=1)
    world = make_world(topo, SchemeKind.MULTI_TREE, [0, 10], SimParams(p=1.0, q=1.0, t_co=FOREVER))
    left = [v for v in topo.distances_from(0) if 0 < v < 10]
    right = [v for v in topo.distances_from(10) if v > 10]
    s, t = left[-1], right[-1]

    step(world)
    bridge = world.link_layer.edge_occupancy[(0, 10)]
    consume(world.link_layer, world.link_layer.get(bridge))
    assert serve_request(world, s, t) is False
    assert serve_request(world, s, 0) is True

    assert step(world, (s, t)).served is True


@pytest.mark.slow
def test_chain_schemes_overlap_at_long_range():
    topo = gen_path(30)
    params = SimParams(p=0.8, q=0.8, t_co=2)
    workload = WorkloadSpec(distances=[1, 10, 15], attempts_per_point=1000, warmup_steps=2)
    multi = rates(topo, SchemeKind.MULTI_TREE, select_roots(topo, RootStrategy.parse("density-clusters:4")), params, workload)
    single = rates(topo, SchemeKind.SINGLE_TREE, select_roots(topo, RootStrategy.parse("min-eccentricity:1")), params, workload)
    # short pairs gain from the extra roots; long ones need the same chain segment either way
    assert multi[1].rate > single[1].rate
    for d in (10, 15):
        assert within_noise(multi[d], single[d]) and within_noise(single[d], multi[d]), d


def test_sample_pair(grid10):
    rng = np.random.default_rng(5)
    for _ in range(20):
        s, t = sample_pair(grid10, 18, rng)
        assert {s, t} in ({0, 99}, {9, 90})
        u, v = sample_pair(grid10, 1, rng)
        assert grid10.graph.has_edge(u, v)
    with pytest.raises(NoPairAtDistanceError):
        sample_pair(grid10, 19, rng)


def test_audit_world_raises_on_corruption(path5):
    world = make_world(path5, SchemeKind.SINGLE_TREE, [0], SimParams(p=1.0, t_co=FOREVER))
    step(world)
    world.forest.trees[0].states[2].rank = 9
    with pytest.raises(InvariantViolation) as excinfo:
        audit_world(world)
    assert excinfo.value.violations


def test_synchronous_world_is_rejected(path5):
    with pytest.raises(ValueError):
        make_world(path5, SchemeKind.SYNCHRONOUS, [], SimParams())


def test_run_experiment_is_deterministic(grid10):
    scheme = Scheme(kind=SchemeKind.MULTI_TREE, roots=[22, 27, 72, 77])
    workload = WorkloadSpec(distances=[2, 6], attempts_per_point=40, warmup_steps=2)
    first = run_experiment(grid10, scheme, SimParams(), workload, seed=42)
    second = run_experiment(grid10, scheme, SimParams(), workload, seed=42)
    assert first == second
    assert [r.distance for r in first] == [2, 6]
    assert all(0.0 <= r.rate <= 1.0 for r in first)


def test_parallel_cells_match_serial():
    topo = gen_grid(5, 5)
    params = SimParams()
    workload = WorkloadSpec(distances=[1, 3], attempts_per_point=20, warmup_steps=1)
    cells = [
        Cell(topo, Scheme(kind=SchemeKind.SYNCHRONOUS), params, 3, workload, 9),
        Cell(topo, Scheme(kind=SchemeKind.SINGLE_TREE, roots=[12]), params, 1, workload, 9),
        Cell(topo, Scheme(kind=SchemeKind.MULTI_TREE, roots=[6, 18]), params, 3, workload, 9),
    ]
    serial = run_cells(cells, workers=1)
    parallel = run_cells(cells, workers=2)
    assert serial == parallel
    assert [(r.scheme, r.distance) for r in serial] == [
        (SchemeKind.MULTI_TREE, 3),
        (SchemeKind.SINGLE_TREE, 1),
        (SchemeKind.SYNCHRONOUS, 3),
    ]


def test_unsampled_distance_is_skipped(caplog):
    topo = gen_path(3)
    scheme = Scheme(kind=SchemeKind.SYNCHRONOUS)
    workload = WorkloadSpec(distances=[1, 5], attempts_per_point=10)
    with caplog.at_level(logging.WARNING, logger="app.engine"):
        records = run_experiment(topo, scheme, SimParams(), workload, seed=0)
    assert [r.distance for r in records] == [1]
    assert "no node pair at distance 5" in caplog.text
    cell = Cell(topo, scheme, SimParams(), 5, workload, 0)
    assert run_point(cell) is None


@pytest.mark.parametrize("kind, roots", [
    (SchemeKind.MULTI_TREE, [0, 2]),
    (SchemeKind.SINGLE_TREE, [1]),
    (SchemeKind.SYNCHRONOUS, []),
])
def test_no_swaps_no_long_routes(kind, roots):
    topo = gen_path(6)
    workload = WorkloadSpec(distances=[2, 4], attempts_per_point=30, warmup_steps=2)
    records = run_experiment(topo, Scheme(kind=kind, roots=roots), SimParams(q=0.0), workload, seed=1)
    assert [r.successes for r in records] == [0, 0]


def test_ideal_limit_single_tree_grid(grid10):
    params = SimParams(p=1.0, q=1.0, t_co=100)
    workload = WorkloadSpec(distances=[1, 5, 18], attempts_per_point=20, warmup_steps=2)
    records = run_experiment(grid10, Scheme(kind=SchemeKind.SINGLE_TREE, roots=[44]), params, workload, seed=0)
    assert [r.rate for r in records] == [1.0, 1.0, 1.0]


def test_ideal_limit_multi_tree_chain():
    topo = gen_path(10)
    params = SimParams(p=1.0, q=1.0, t_co=100)
    workload = WorkloadSpec(distances=list(range(1, 10)), attempts_per_point=10, warmup_steps=2)
    records = run_experiment(topo, Scheme(kind=SchemeKind.MULTI_TREE, roots=[2, 6]), params, workload, seed=0)
    assert [r.rate for r in records] == [1.0] * 9


def test_ideal_limit_multi_tree_grid(grid10):
    params = SimParams(p=1.0, q=1.0, t_co=100)
    workload = WorkloadSpec(distances=[2, 5, 10, 18], attempts_per_point=20, warmup_steps=3)
    scheme = Scheme(kind=SchemeKind.MULTI_TREE, roots=[22, 27, 72, 77])
    records = run_experiment(grid10, scheme, params, workload, seed=0)
    assert [r.rate for r in records] == [1.0, 1.0, 1.0, 1.0]


def test_ideal_limit_synchronous_chain():
    topo = gen_path(12)
    params = SimParams(p=1.0, q=1.0, t_co=100)
    workload = WorkloadSpec(distances=[1, 4, 11], attempts_per_point=50)
    records = run_experiment(topo, Scheme(kind=SchemeKind.SYNCHRONOUS), params, workload, seed=0)
    assert [r.rate for r in records] == [1.0, 1.0, 1.0]


@pytest.mark.slow
def test_synchronous_three_node_oracle():
    workload = WorkloadSpec(distances=[2], attempts_per_point=100_000)
    records = run_experiment(gen_path(3), Scheme(kind=SchemeKind.SYNCHRONOUS), SimParams(), workload, seed=0)
    assert abs(records[0].rate - 0.512) < 0.01


def soak_topologies():
    grid = gen_grid(10, 10)
    er = gen_erdos_renyi(60, 0.06, seed=4)
    barbell = gen_barbell(30, 0.15, seed=2)
    return [
        (grid, [22, 27, 72, 77]),
        (er, select_roots(er, RootStrategy.parse("density-clusters:4"))),
        (barbell, select_roots(barbell, RootStrategy.parse("density-clusters:4"))),
    ]


@pytest.mark.slow
@pytest.mark.parametrize("index", [0, 1, 2])
@pytest.mark.parametrize("kind", [SchemeKind.MULTI_TREE, SchemeKind.SINGLE_TREE])
def test_structural_soak(index, kind):
    topo, roots = soak_topologies()[index]
    roots = roots if kind is SchemeKind.MULTI_TREE else roots[:1]
    world = make_world(topo, kind, roots, SimParams(p=0.8, q=0.8, t_co=3), seed=index, audit=True)
    rng = np.random.default_rng(index)
    giant = sorted(max(nx.connected_components(topo.graph), key=len))
    for round_no in range(1000):
        step(world)
        if round_no % 3 == 0:
            s, t = (int(x) for x in rng.choice(giant, size=2, replace=False))
            serve_request(world, s, t)
    audit_world(world)
