"""Shared builders for property tests: random DAG topologies and the
independent route/reachability oracles the engine is checked against."""

from opsbench.cluster import ClusterState, Topology, effective_ports, load_topology
from opsbench.rng import SplitMix64


def random_topology(seed: int, max_services: int = 8, edge_prob: float = 0.35) -> Topology:
    """Random DAG: edges only point from earlier to later declarations, and
    every service is an entrypoint so tests can drive traffic anywhere."""
    rng = SplitMix64(seed)
    n = rng.randint(2, max_services)
    names = [f"svc{i:02d}" for i in range(n)]
    services = []
    for i, name in enumerate(names):
        deps = [names[j] for j in range(i + 1, n) if rng.random() < edge_prob]
        services.append(
            {
                "name": name,
                "port": 8000 + i,
                "dependencies": deps,
                "entrypoint": True,
                "baseLatencyMs": 1 + rng.randint(0, 9),
                "replicas": 1 + rng.randint(0, 2),
            }
        )
    return load_topology({"app": "RandomApp", "namespace": "test-random", "services": services})


def closure_services(topology: Topology, entry: str) -> set[str]:
    """Every service reachable from the entry along dependency edges."""
    seen = set()
    frontier = [entry]
    while frontier:
        node = frontier.pop()
        if node in seen:
            continue
        seen.add(node)
        frontier.extend(topology.services[node].dependencies)
    return seen


def oracle_route_ok(state: ClusterState, entry: str) -> bool:
    """Success oracle, computed without walking the DFS: a request succeeds
    iff every service in the entry's closure is healthy and no edge inside
    the closure (or the client edge) is partitioned."""
    closure = closure_services(state.topology, entry)
    if ("client", entry) in state.partitions:
        return False
    for name in closure:
        listen, target = effective_ports(state, name)
        if state.running_replicas(name) == 0 or listen != target:
            return False
    for name in closure:
        for dep in state.topology.services[name].dependencies:
            if (name, dep) in state.partitions:
                return False
    return True


def reverse_reachable_oracle(topology: Topology, target: str) -> set[str]:
    """Brute-force transitive-caller set: for each service, walk its full
    closure and ask whether the target is inside."""
    return {
        name for name in topology.services if target in closure_services(topology, name)
    }
