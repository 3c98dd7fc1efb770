"""Discrete-time driver: the unit-time step, request serving and rate experiments."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .entanglement import LinkLayerState, age_all, audit_link_layer, generate_all
from .errors import InvariantViolation, NoPairAtDistanceError
from .forest import Forest, audit_forest
from .log_config import get_logger
from .rng import RandomStreams
from .routing import execute_swaps, find_path_multi, find_path_single, sync_round
from .schemas import RateRecord, Scheme, SchemeKind, SimParams, SimulationOptions, WorkloadSpec
from .topology import PhysicalTopology

logger = get_logger(__name__)

# Stable per-scheme stream key, independent of the order schemes are configured in.
SCHEME_CODES = {
    SchemeKind.MULTI_TREE: 0,
    SchemeKind.SINGLE_TREE: 1,
    SchemeKind.SYNCHRONOUS: 2,
}


@dataclass
class StepReport:
    time: int
    generated: int
    occupied: int
    messages: int
    expired: int
    served: Optional[bool] = None


class World:
    """One asynchronous simulation: link layer plus the forest grown over it."""

    def __init__(
        self,
        topo: PhysicalTopology,
        scheme: Scheme,
        params: SimParams,
        streams: RandomStreams,
        options: Optional[SimulationOptions] = None,
    ):
        if not scheme.kind.is_asynchronous:
            raise ValueError("the synchronous scheme runs slot by slot through sync_round")
        self.topo = topo
        self.scheme = scheme
        self.params = params
        self.options = options or SimulationOptions()
        self.link_layer = LinkLayerState.for_edges(topo.edges)
        self.forest = Forest(scheme.roots)
        self.forest.bind(self.link_layer)
        self.generation_rng = streams.get("generation")
        self.swap_rng = streams.get("swaps")
        self.time = 0


def audit_world(world: World) -> None:
    violations = audit_link_layer(world.link_layer) + audit_forest(world.forest, world.link_layer)
    if violations:
        raise InvariantViolation(violations)


def step(world: World, request: Optional[Tuple[int, int]] = None) -> StepReport:
    """One unit time: generation, tree maintenance, the request if any, then decoherence.

    A request is served on the instant topology of this unit time, before any
    link made in the previous one has decohered.
    """
    generated = len(generate_all(world.link_layer, world.params, world.generation_rng))
    occupied = world.link_layer.occupied_count()

    messages = world.forest.maintenance_round(
        world.link_layer,
        slow_control=world.options.slow_control,
        trace=world.options.trace_control,
    )
    if world.options.audit:
        audit_world(world)

    served = None if request is None else serve_request(world, *request)

    expired = age_all(world.link_layer)
    world.time += 1
    if world.options.audit:
        audit_world(world)
    return StepReport(world.time, generated, occupied, len(messages), len(expired), served)


def serve_request(world: World, s: int, t: int) -> bool:
    if world.scheme.kind is SchemeKind.SINGLE_TREE:
        path = find_path_single(
            world.forest.trees[0], world.link_layer, s, t, via_root_strict=world.options.via_root_strict
        )
    else:
        path = find_path_multi(world.forest, world.link_layer, s, t)
    if path is None:
        return False
    outcome = execute_swaps(world.link_layer, path, world.params, world.swap_rng)
    if world.options.audit:
        audit_world(world)
    return bool(outcome)


def sample_pair(topo: PhysicalTopology, distance: int, rng: np.random.Generator) -> Tuple[int, int]:
    table = topo.pairs_at_distance(distance)
    if not table:
        raise NoPairAtDistanceError(distance)
    sources = sorted(table)
    s = sources[int(rng.integers(len(sources)))]
    targets = table[s]
    return s, targets[int(rng.integers(len(targets)))]


@dataclass(frozen=True)
class Cell:
    """One (scheme, distance) point of an experiment, runnable in any process."""

    topo: PhysicalTopology
    scheme: Scheme
    params: SimParams
    distance: int
    workload: WorkloadSpec
    seed: int
    options: SimulationOptions = field(default_factory=SimulationOptions)

    @property
    def key(self) -> Tuple[int, int]:
        return SCHEME_CODES[self.scheme.kind], self.distance


def run_point(cell: Cell) -> Optional[RateRecord]:
    streams = RandomStreams(cell.seed)
    workload_rng = streams.fork(cell.distance).get("workload")
    scheme_streams = streams.fork(cell.distance, SCHEME_CODES[cell.scheme.kind])
    attempts = cell.workload.attempts_per_point

    if not cell.topo.pairs_at_distance(cell.distance):
        logger.warning("%s: no node pair at distance %d, point skipped", cell.topo.name, cell.distance)
        return None

    successes = 0
    if cell.scheme.kind is SchemeKind.SYNCHRONOUS:
        slot_rng = scheme_streams.get("synchronous")
        for _ in range(attempts):
            s, t = sample_pair(cell.topo, cell.distance, workload_rng)
            successes += sync_round(cell.topo, cell.params, s, t, slot_rng)
    else:
        world = World(cell.topo, cell.scheme, cell.params, scheme_streams, cell.options)
        # the last step of every attempt serves it
        steps_per_attempt = max(cell.workload.warmup_steps, 1)
        for _ in range(attempts):
            for _ in range(steps_per_attempt - 1):
                step(world)
            s, t = sample_pair(cell.topo, cell.distance, workload_rng)
            successes += step(world, (s, t)).served

    record = RateRecord(
        scheme=cell.scheme.kind,
        topology=cell.topo.name,
        distance=cell.distance,
        attempts=attempts,
        successes=successes,
        seed=cell.seed,
    )
    logger.info(
        "%s %s d=%d: %d/%d (%.4f)",
        record.scheme.value, record.topology, record.distance, successes, attempts, record.rate,
    )
    return record


def run_cells(cells: Sequence[Cell], workers: int = 1) -> List[RateRecord]:
    """Run independent cells, in parallel when asked; output order is by cell key."""
    ordered = sorted(cells, key=lambda c: c.key)
    if workers <= 1 or len(ordered) <= 1:
        results = [run_point(cell) for cell in ordered]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(ordered))) as pool:
            results = list(pool.map(run_point, ordered))
    return [record for record in results if record is not None]


def run_experiment(
    topo: PhysicalTopology,
    scheme: Scheme,
    params: SimParams,
    workload: WorkloadSpec,
    seed: int,
    options: Optional[SimulationOptions] = None,
    workers: int = 1,
) -> List[RateRecord]:
    cells = [
        Cell(topo, scheme, params, distance, workload, seed, options or SimulationOptions())
        for distance in workload.distances
    ]
    return run_cells(cells, workers)
