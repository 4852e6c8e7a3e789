"""Scenario builders and the graph test set shared across test modules."""

from __future__ import annotations

from meshmind import (DemandProfile, EnvConfig, MeshTopology, UserSpec)
from meshmind.harness import AgentParams, ScenarioSpec
from meshmind.learning import QParams
from meshmind.optimize import EpsilonGreedy


def line_positions(n: int) -> dict[int, tuple[int, int]]:
    return {i: (i, 0) for i in range(n)}


def grid_positions(n: int, width: int = 4) -> dict[int, tuple[int, int]]:
    return {i: (i % width, i // width) for i in range(n)}


def make_channel_spec(n_nodes: int, edges, *, channels: int = 3,
                      demand=5.0, horizon: int = 2000, seed: int = 0,
                      policy=None, qparams=None, positions=None,
                      disruption_penalty: float = 0.0) -> ScenarioSpec:
    """Channel-assignment scenario where a node is satisfied exactly when it
    has no co-channel interference edge.

    With eta=1, unit tx power, noise 1e-3 and unit bandwidth, a clean link
    carries ~9.97 Mbps while any single interferer (distance <= 10 cells)
    caps it below 3 Mbps, so demand 5.0 separates the two regimes.
    """
    positions = positions or line_positions(n_nodes)
    topo = MeshTopology(positions=positions, edges=set(edges),
                        channels=tuple(range(1, channels + 1)))
    profile = (demand if isinstance(demand, DemandProfile)
               else DemandProfile.constant(demand))
    users = [UserSpec(user=i, position=positions[i], demand=profile, node=i)
             for i in range(n_nodes)]
    env_config = EnvConfig(topology=topo, users=users, pathloss_exponent=1.0,
                           tx_power=1.0, noise_floor=1e-3, bandwidth_unit=1.0,
                           rng_seed=seed, horizon=max(1, horizon))
    params = AgentParams(policy=policy or EpsilonGreedy(0.2),
                         qparams=qparams or QParams(alpha=0.4, gamma=0.3))
    return ScenarioSpec(kind="channel-assignment", env_config=env_config,
                        agent_params=params, horizon=horizon, seed=seed,
                        disruption_penalty=disruption_penalty)


def make_location_spec(*, horizon: int = 80, seed: int = 0,
                       epsilon: float = 0.1) -> ScenarioSpec:
    """One mobile node on a 4-cell strip chasing demand that alternates
    between a user at each end every 20 steps (period 40).

    Parked next to the high-demand user the node satisfies both users; one
    cell further it cannot, so every demand flip triggers exactly one
    relocation whose stored case scores 1.0.
    """
    cells = frozenset((x, 0) for x in range(4))
    topo = MeshTopology(positions={0: (2, 0)}, edges=set(), channels=(1,),
                        allowed={0: cells})
    hi, lo = 3.0, 0.1
    profile_a = DemandProfile.periodic(40, [(0, hi), (20, lo)], horizon)
    profile_b = DemandProfile.periodic(40, [(0, lo), (20, hi)], horizon)
    users = [UserSpec(user=0, position=(0, 0), demand=profile_a, node=0),
             UserSpec(user=1, position=(3, 0), demand=profile_b, node=0)]
    env_config = EnvConfig(topology=topo, users=users, pathloss_exponent=2.0,
                           tx_power=1.0, noise_floor=1e-2, bandwidth_unit=1.0,
                           rng_seed=seed, horizon=max(1, horizon))
    params = AgentParams(policy=EpsilonGreedy(epsilon),
                         qparams=QParams(alpha=0.3, gamma=0.5),
                         similarity_threshold=0.95,
                         coefficient_threshold=0.9)
    return ScenarioSpec(kind="location-optimization", env_config=env_config,
                        agent_params=params, horizon=horizon, seed=seed)


def make_lowload_window_spec(policy, *, horizon: int = 300,
                             seed: int = 0) -> ScenarioSpec:
    """Ten-node ring (plus two chords) where demand bursts above the
    disruption threshold for 8 steps out of every 30.

    bandwidth 0.3 keeps any conflicted link below the 0.6 Mbps low-phase
    demand, so conflicts stay unsatisfactory in every phase, while only
    high-phase switches count as disruptions.
    """
    n = 10
    edges = {(i, (i + 1) % n) for i in range(n)} | {(0, 5), (2, 7)}
    positions = grid_positions(n)
    topo = MeshTopology(positions=positions, edges=edges,
                        channels=(1, 2, 3))
    profile = DemandProfile.periodic(30, [(0, 2.5), (8, 0.6)], horizon)
    users = [UserSpec(user=i, position=positions[i], demand=profile, node=i)
             for i in range(n)]
    env_config = EnvConfig(topology=topo, users=users, pathloss_exponent=0.5,
                           tx_power=1.0, noise_floor=1e-3, bandwidth_unit=0.3,
                           rng_seed=seed, horizon=max(1, horizon))
    params = AgentParams(policy=policy, qparams=QParams(alpha=0.4, gamma=0.3))
    return ScenarioSpec(kind="channel-assignment", env_config=env_config,
                        agent_params=params, horizon=horizon, seed=seed)


def _path(n):
    return {(i, i + 1) for i in range(n - 1)}


def _cycle(n):
    return {(i, (i + 1) % n) for i in range(n)}


def _star(n):
    return {(0, i) for i in range(1, n)}


def _grid(rows, cols):
    edges = set()
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.add((i, i + 1))
            if r + 1 < rows:
                edges.add((i, i + cols))
    return rows * cols, edges


def _wheel(rim):
    # hub is node 0, rim cycle on 1..rim
    edges = {(0, i) for i in range(1, rim + 1)}
    edges |= {(i, i % rim + 1) for i in range(1, rim + 1)}
    return rim + 1, edges


def _complete_bipartite(a, b):
    return a + b, {(i, a + j) for i in range(a) for j in range(b)}


def _prism():
    # two triangles joined by a matching
    return 6, {(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5),
               (0, 3), (1, 4), (2, 5)}


def _cube():
    return 8, {(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4),
               (0, 4), (1, 5), (2, 6), (3, 7)}


def _bowtie():
    return 5, {(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (2, 4)}


def coloring_test_graphs() -> dict[str, tuple[int, set]]:
    """Connected interference graphs with <= 8 nodes, all 3-colorable so a
    zero-conflict assignment exists with three channels."""
    graphs: dict[str, tuple[int, set]] = {}
    for n in range(3, 9):
        graphs[f"path{n}"] = (n, _path(n))
    for n in range(3, 9):
        graphs[f"cycle{n}"] = (n, _cycle(n))
    for n in (5, 6, 7, 8):
        graphs[f"star{n}"] = (n, _star(n))
    graphs["grid2x3"] = _grid(2, 3)
    graphs["grid2x4"] = _grid(2, 4)
    graphs["wheel_rim4"] = _wheel(4)
    graphs["wheel_rim6"] = _wheel(6)
    graphs["k23"] = _complete_bipartite(2, 3)
    graphs["k33"] = _complete_bipartite(3, 3)
    graphs["k24"] = _complete_bipartite(2, 4)
    graphs["prism"] = _prism()
    graphs["cube"] = _cube()
    graphs["bowtie"] = _bowtie()
    return graphs
