import networkx as nx
import numpy as np
import pytest

from app.entanglement import LinkLayerState, attempt_generation
from app.schemas import SimParams
from app.topology import PhysicalTopology, gen_grid, gen_path

# Links that never decohere inside a test.
FOREVER = 10**6


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def params():
    return SimParams(p=0.8, q=0.8, t_co=2)


@pytest.fixture
def ideal():
    return SimParams(p=1.0, q=1.0, t_co=FOREVER)


@pytest.fixture
def grid10():
    return gen_grid(10, 10)


@pytest.fixture
def path5():
    return gen_path(5)


@pytest.fixture
def ring4():
    return PhysicalTopology(graph=nx.cycle_graph(4), name="ring4")


def fill_links(topo, q=1.0, seed=0):
    """Link layer with a fresh direct link on every physical edge."""
    state = LinkLayerState.for_edges(topo.edges)
    always = SimParams(p=1.0, q=q, t_co=FOREVER)
    gen = np.random.default_rng(seed)
    for edge in topo.edges:
        attempt_generation(state, edge, always, gen)
    return state


def link_on(state, u, v):
    edge = (min(u, v), max(u, v))
    return state.get(state.edge_occupancy[edge])
