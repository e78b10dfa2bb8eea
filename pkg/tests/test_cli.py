import json
import pathlib
import threading
import time

import pytest
import uvicorn

from opsbench.cli import main
from opsbench.scenario import ProblemCache
from opsbench.server import create_app

REPO = pathlib.Path(__file__).resolve().parents[1]
SCENARIOS = REPO / "scenarios"
PORT_SCENARIO = str(SCENARIOS / "social-network-port.yaml")


def test_run_baseline_succeeds(tmp_path, capsys):
    code = main(["run", PORT_SCENARIO, "--agent", "baseline", "--seed", "7", "--out", str(tmp_path)])
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["success"] is True
    assert report["task"] == "mitigate"
    lines = (tmp_path / "transcript.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["problem_id"] == report["problem_id"]
    out = capsys.readouterr().out
    assert "success=true" in out


def test_run_twice_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", PORT_SCENARIO, "--out", str(a)]) == 0
    assert main(["run", PORT_SCENARIO, "--out", str(b)]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert (a / "transcript.jsonl").read_bytes() == (b / "transcript.jsonl").read_bytes()


def test_run_missing_scenario_names_path(tmp_path, capsys):
    missing = str(tmp_path / "nope.yaml")
    assert main(["run", missing]) == 2
    assert missing in capsys.readouterr().err


def test_run_unknown_agent(capsys):
    assert main(["run", PORT_SCENARIO, "--agent", "wizard"]) == 2
    assert "wizard" in capsys.readouterr().err


def test_run_budget_must_be_positive(capsys):
    assert main(["run", PORT_SCENARIO, "--budget", "0"]) == 2


def test_run_task_failure_exits_one(tmp_path):
    # budget 3 forces a hopeful submit before the fix is in
    code = main(["run", PORT_SCENARIO, "--budget", "3", "--out", str(tmp_path)])
    assert code == 1
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["success"] is False


def test_problems_lists_cached_ids(capsys):
    assert main(["problems", "--scenarios", str(SCENARIOS)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3
    assert all(line.startswith("p-") for line in lines)
    assert any("mitigate" in line for line in lines)


def test_problems_missing_dir(tmp_path, capsys):
    assert main(["problems", "--scenarios", str(tmp_path / "void")]) == 2


def test_serve_rejects_bad_addr(capsys):
    code = main(["serve", "--scenarios", str(SCENARIOS), "--serve-addr", "nonsense"])
    assert code == 2
    assert "serve-addr" in capsys.readouterr().err


def test_replay_reproduces_report(tmp_path):
    first = tmp_path / "first"
    again = tmp_path / "again"
    assert main(["run", PORT_SCENARIO, "--out", str(first)]) == 0
    code = main(
        [
            "replay",
            str(first / "transcript.jsonl"),
            "--scenarios",
            str(SCENARIOS),
            "--out",
            str(again),
        ]
    )
    assert code == 0
    assert (first / "report.json").read_bytes() == (again / "report.json").read_bytes()
    assert (first / "transcript.jsonl").read_bytes() == (again / "transcript.jsonl").read_bytes()


def test_replay_without_submit(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", PORT_SCENARIO, "--out", str(out)]) == 0
    lines = (out / "transcript.jsonl").read_text().splitlines()
    truncated = tmp_path / "cut.jsonl"
    truncated.write_text("\n".join(lines[:-1]) + "\n")
    assert main(["replay", str(truncated), "--scenarios", str(SCENARIOS)]) == 2
    assert "submit" in capsys.readouterr().err


def test_replay_rejects_non_transcript(tmp_path, capsys):
    bogus = tmp_path / "x.jsonl"
    bogus.write_text('{"hello": 1}\n')
    assert main(["replay", str(bogus), "--scenarios", str(SCENARIOS)]) == 2


@pytest.fixture(scope="module")
def live_server():
    cache = ProblemCache()
    cache.load_dir(SCENARIOS)
    config = uvicorn.Config(
        create_app(cache), host="127.0.0.1", port=0, log_level="warning"
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    for _ in range(200):
        if server.started:
            break
        time.sleep(0.02)
    else:
        raise RuntimeError("server did not start")
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


def test_run_external_agent_over_wire(tmp_path, live_server):
    local = tmp_path / "local"
    wire = tmp_path / "wire"
    assert main(["run", PORT_SCENARIO, "--out", str(local)]) == 0
    assert main(["run", PORT_SCENARIO, "--agent", live_server, "--out", str(wire)]) == 0
    assert (local / "transcript.jsonl").read_bytes() == (wire / "transcript.jsonl").read_bytes()
    assert (local / "report.json").read_bytes() == (wire / "report.json").read_bytes()


def test_run_unreachable_endpoint_abandons(tmp_path, capsys):
    code = main(["run", PORT_SCENARIO, "--agent", "http://127.0.0.1:1", "--out", str(tmp_path)])
    assert code == 2
    assert "abandoned" in capsys.readouterr().err
    assert not (tmp_path / "report.json").exists()
