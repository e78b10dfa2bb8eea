import copy

import pytest

from opsbench.cluster import (
    ClusterError,
    ConfigPatch,
    ReplicaState,
    TopologyError,
    apply_patch,
    apply_patch_to_doc,
    describe_service,
    effective_config,
    effective_ports,
    initial_state,
    load_topology,
    remove_overlays,
)


def small_doc():
    return {
        "app": "SocialNetwork",
        "namespace": "test-social-network",
        "services": [
            {
                "name": "nginx-web-server",
                "port": 8080,
                "dependencies": ["user-service"],
                "entrypoint": True,
                "replicas": 2,
            },
            {
                "name": "user-service",
                "port": 9090,
                "cpuLimit": 1000,
                "memLimitMb": 512,
                "baseLatencyMs": 5,
            },
        ],
    }


def test_load_topology_defaults():
    topo = load_topology(small_doc())
    assert topo.app_name == "SocialNetwork"
    assert topo.namespace == "test-social-network"
    user = topo.services["user-service"]
    assert user.listen_port == 9090
    assert user.target_port == 9090  # defaults to the listen port
    assert user.dependencies == ()
    assert user.replicas == 1
    assert user.entrypoint is False
    assert topo.entrypoints == ("nginx-web-server",)


def test_load_topology_callers_map():
    topo = load_topology(small_doc())
    assert topo.callers()["user-service"] == ("nginx-web-server",)
    assert topo.callers()["nginx-web-server"] == ()


def test_load_topology_rejects_duplicate_name():
    doc = small_doc()
    doc["services"].append({"name": "user-service", "port": 9999})
    with pytest.raises(TopologyError, match="duplicate service"):
        load_topology(doc)


def test_load_topology_rejects_unknown_dependency():
    doc = small_doc()
    doc["services"][0]["dependencies"] = ["missing-service"]
    with pytest.raises(TopologyError, match="unknown dependency"):
        load_topology(doc)


def test_load_topology_rejects_cycle():
    doc = small_doc()
    doc["services"][1]["dependencies"] = ["nginx-web-server"]
    with pytest.raises(TopologyError, match="cycle"):
        load_topology(doc)


def test_load_topology_rejects_bad_port():
    for bad in (0, 65536, -1):
        doc = small_doc()
        doc["services"][1]["port"] = bad
        with pytest.raises(TopologyError, match="port"):
            load_topology(doc)


def test_load_topology_requires_entrypoint():
    doc = small_doc()
    doc["services"][0]["entrypoint"] = False
    with pytest.raises(TopologyError, match="entrypoint"):
        load_topology(doc)


def test_initial_state_all_running_with_base_resources():
    topo = load_topology(small_doc())
    state = initial_state(topo)
    assert state.running_replicas("nginx-web-server") == 2
    assert state.running_replicas("user-service") == 1
    assert state.resource_usage["user-service"] == (100.0, 128.0)
    assert state.clock_ms == 0.0
    assert state.partitions == frozenset()


def test_effective_ports_follow_overlays():
    topo = load_topology(small_doc())
    state = initial_state(topo)
    assert effective_ports(state, "user-service") == (9090, 9090)
    patch = ConfigPatch(op="replace", path="/spec/ports/0/targetPort", value=9999)
    patched = apply_patch(state, "user-service", "test-social-network", patch)
    assert effective_ports(patched, "user-service") == (9090, 9999)
    # original untouched
    assert effective_ports(state, "user-service") == (9090, 9090)


def test_apply_patch_is_pure():
    topo = load_topology(small_doc())
    state = initial_state(topo)
    snapshot = copy.deepcopy(state)
    apply_patch(
        state,
        "user-service",
        "test-social-network",
        ConfigPatch(op="replace", path="/spec/replicas", value=3),
    )
    assert state == snapshot


def test_apply_patch_unknown_namespace_message():
    state = initial_state(load_topology(small_doc()))
    with pytest.raises(ClusterError) as err:
        apply_patch(
            state,
            "user-service",
            "test-social-netwrk",
            ConfigPatch(op="replace", path="/spec/replicas", value=3),
        )
    assert str(err.value) == 'Error: namespaces "test-social-netwrk" not found'


def test_apply_patch_unknown_service_message():
    state = initial_state(load_topology(small_doc()))
    with pytest.raises(ClusterError) as err:
        apply_patch(
            state,
            "user-servce",
            "test-social-network",
            ConfigPatch(op="replace", path="/spec/replicas", value=3),
        )
    assert str(err.value) == 'Error: services "user-servce" not found'


def test_apply_patch_unresolvable_path_message():
    state = initial_state(load_topology(small_doc()))
    with pytest.raises(ClusterError) as err:
        apply_patch(
            state,
            "user-service",
            "test-social-network",
            ConfigPatch(op="replace", path="/spec/ports/3/targetPort", value=1),
        )
    assert str(err.value) == 'Error: path "/spec/ports/3/targetPort" not found'


def test_replace_requires_existing_key_but_add_creates_it():
    state = initial_state(load_topology(small_doc()))
    missing = ConfigPatch(op="replace", path="/metadata/labels/tier", value="backend")
    with pytest.raises(ClusterError):
        apply_patch(state, "user-service", "test-social-network", missing)
    added = apply_patch(
        state,
        "user-service",
        "test-social-network",
        ConfigPatch(op="add", path="/metadata/labels/tier", value="backend"),
    )
    # now visible through the effective document, so replace succeeds
    replaced = apply_patch(
        added,
        "user-service",
        "test-social-network",
        ConfigPatch(op="replace", path="/metadata/labels/tier", value="frontend"),
    )
    doc = effective_config(replaced, "user-service")
    assert doc["metadata"]["labels"]["tier"] == "frontend"


def test_list_add_and_remove_ops():
    doc = {"spec": {"ports": [{"port": 1, "targetPort": 1}]}}
    grown = apply_patch_to_doc(
        doc, ConfigPatch(op="add", path="/spec/ports/1", value={"port": 2, "targetPort": 2})
    )
    assert len(grown["spec"]["ports"]) == 2
    shrunk = apply_patch_to_doc(grown, ConfigPatch(op="remove", path="/spec/ports/0"))
    assert shrunk["spec"]["ports"] == [{"port": 2, "targetPort": 2}]
    assert doc == {"spec": {"ports": [{"port": 1, "targetPort": 1}]}}  # input untouched


def test_unknown_patch_op_message():
    with pytest.raises(ClusterError) as err:
        apply_patch_to_doc({"a": 1}, ConfigPatch(op="move", path="/a", value=2))
    assert str(err.value) == 'Error: unknown patch op "move"'


def test_identity_patch_keeps_effective_doc():
    state = initial_state(load_topology(small_doc()))
    before = effective_config(state, "user-service")
    same = apply_patch(
        state,
        "user-service",
        "test-social-network",
        ConfigPatch(op="replace", path="/spec/ports/0/targetPort", value=9090),
    )
    assert effective_config(same, "user-service") == before


def test_remove_overlays_by_origin():
    state = initial_state(load_topology(small_doc()))
    state = apply_patch(
        state,
        "user-service",
        "test-social-network",
        ConfigPatch(op="replace", path="/spec/ports/0/targetPort", value=9999),
        origin="fault-1",
    )
    state = apply_patch(
        state,
        "user-service",
        "test-social-network",
        ConfigPatch(op="add", path="/metadata/labels/tier", value="backend"),
        origin="patch",
    )
    cleared = remove_overlays(state, "user-service", "fault-1")
    assert effective_ports(cleared, "user-service") == (9090, 9090)
    assert effective_config(cleared, "user-service")["metadata"]["labels"]["tier"] == "backend"


def test_describe_exact_port_lines():
    state = initial_state(load_topology(small_doc()))
    state = apply_patch(
        state,
        "user-service",
        "test-social-network",
        ConfigPatch(op="replace", path="/spec/ports/0/targetPort", value=9999),
    )
    text = describe_service(state, "user-service", "test-social-network")
    lines = text.splitlines()
    assert "Port:              9090  9090/TCP" in lines
    assert "TargetPort:        9999/TCP" in lines
    assert lines[0] == "Name:              user-service"
    assert lines[1] == "Namespace:         test-social-network"
    # endpoints advertise the (wrong) target port
    endpoints = next(l for l in lines if l.startswith("Endpoints:"))
    assert endpoints.endswith(":9999")


def test_describe_endpoints_empty_without_running_replicas():
    import dataclasses

    state = initial_state(load_topology(small_doc()))
    status = dict(state.replica_status)
    status[("user-service", 0)] = ReplicaState.CRASH_LOOP
    state = dataclasses.replace(state, replica_status=status)
    text = describe_service(state, "user-service", "test-social-network")
    assert "Endpoints:         <none>" in text.splitlines()


def test_describe_unknown_service_message():
    state = initial_state(load_topology(small_doc()))
    with pytest.raises(ClusterError) as err:
        describe_service(state, "nope", "test-social-network")
    assert str(err.value) == 'Error: services "nope" not found'


def test_clock_must_not_go_backwards():
    state = initial_state(load_topology(small_doc()))
    later = state.with_clock(500.0)
    assert later.clock_ms == 500.0
    with pytest.raises(ValueError):
        later.with_clock(100.0)
