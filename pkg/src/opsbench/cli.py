"""Command line entry point: run scenarios, serve the wire protocol,
list cached problems, and re-evaluate stored transcripts."""

from __future__ import annotations

import argparse
import json
import pathlib
import re
import sys

import yaml

from .agents import run_external, run_in_process
from .orchestrator import DEFAULT_ACTION_BUDGET, ProtocolError, Session
from .scenario import ProblemCache, resolve_problem, scenario_from_doc
from .server import create_app

_BUDGET_RE = re.compile(r"Action budget: (\d+) actions")


def _load_problem(path: str, seed: int | None, action_latency_ms: int | None):
    scenario_path = pathlib.Path(path)
    if not scenario_path.is_file():
        raise FileNotFoundError(f"scenario file not found: {scenario_path}")
    doc = yaml.safe_load(scenario_path.read_text())
    if not isinstance(doc, dict):
        raise ValueError(f"scenario file is not a mapping: {scenario_path}")
    # overrides happen at the document level so sampled faults re-sample
    if seed is not None:
        doc["seed"] = seed
    if action_latency_ms is not None:
        doc["actionLatencyMs"] = action_latency_ms
    return resolve_problem(scenario_from_doc(doc, base_dir=scenario_path.parent))


def _load_cache(directory: str) -> ProblemCache:
    scenario_dir = pathlib.Path(directory)
    if not scenario_dir.is_dir():
        raise FileNotFoundError(f"scenario directory not found: {scenario_dir}")
    cache = ProblemCache()
    cache.load_dir(scenario_dir)
    return cache


def _write_artifacts(out_dir: str | None, report: dict, transcript: str) -> None:
    if out_dir is None:
        return
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    text = transcript if transcript.endswith("\n") else transcript + "\n"
    (out / "transcript.jsonl").write_text(text)


def _fmt(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, bool):
        return str(value).lower()
    return str(value)


def _print_summary(report: dict) -> None:
    print(f"problem {report['problem_id']} task={report['task']} success={_fmt(report['success'])}")
    print(
        f"ttd_ms={_fmt(report['ttd_ms'])} ttm_ms={_fmt(report['ttm_ms'])} "
        f"interactions={report['interactions']} cost_proxy_chars={report['cost_proxy_chars']}"
    )


def _cmd_run(args: argparse.Namespace) -> int:
    if args.budget < 1:
        print("budget must be a positive integer", file=sys.stderr)
        return 2
    problem = _load_problem(args.scenario, args.seed, args.action_latency_ms)
    if args.agent == "baseline":
        session = run_in_process(problem, budget=args.budget)
        report, transcript = session.report, session.transcript_jsonl()
    elif args.agent.startswith(("http://", "https://")):
        import httpx

        try:
            report, transcript = run_external(
                args.agent, problem.problem_id, budget=args.budget, seed=args.seed
            )
        except httpx.HTTPError as exc:
            print(f"session abandoned: {exc}", file=sys.stderr)
            return 2
    else:
        print(f"unknown agent '{args.agent}' (use 'baseline' or an http(s) url)", file=sys.stderr)
        return 2
    _write_artifacts(args.out, report, transcript)
    _print_summary(report)
    return 0 if report["success"] else 1


def _cmd_problems(args: argparse.Namespace) -> int:
    cache = _load_cache(args.scenarios)
    for problem in cache.problems():
        scenario = problem.scenario
        print(
            f"{problem.problem_id}  {scenario.task:<8}  "
            f"{scenario.topology.app_name}  focus={scenario.focus_service}"
        )
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    cache = _load_cache(args.scenarios)
    host, _, port_text = args.serve_addr.rpartition(":")
    if not host or not port_text.isdigit():
        print(f"invalid --serve-addr '{args.serve_addr}' (want host:port)", file=sys.stderr)
        return 2
    ui_dir = args.ui if args.ui is not None else "frontend/dist"
    app = create_app(cache, budget=args.budget, ui_dir=ui_dir)
    import uvicorn

    uvicorn.run(app, host=host, port=int(port_text), log_level="info")
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    path = pathlib.Path(args.transcript)
    if not path.is_file():
        print(f"transcript not found: {path}", file=sys.stderr)
        return 2
    rows = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    if not rows or "problem_id" not in rows[0]:
        print(f"not a transcript: {path}", file=sys.stderr)
        return 2
    header = rows[0]
    cache = _load_cache(args.scenarios)
    try:
        problem = cache.get(header["problem_id"])
    except KeyError:
        print(f"problem '{header['problem_id']}' not in {args.scenarios}", file=sys.stderr)
        return 2
    match = _BUDGET_RE.search(header.get("briefing", ""))
    budget = int(match.group(1)) if match else DEFAULT_ACTION_BUDGET
    session = Session("s-replay", problem, budget)
    if session.briefing != header["briefing"]:
        print("transcript briefing does not match the cached problem", file=sys.stderr)
        return 2
    for row in rows[1:]:
        session.act(row["action"]["api"], row["action"]["args"], row["thought"])
    if session.report is None:
        print("transcript ends without a submit; nothing to evaluate", file=sys.stderr)
        return 2
    _write_artifacts(args.out, session.report, session.transcript_jsonl())
    _print_summary(session.report)
    return 0 if session.report["success"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opsbench",
        description="simulated microservice incidents for operations agents",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario end to end")
    run.add_argument("scenario", help="path to a scenario yaml file")
    run.add_argument("--agent", default="baseline", help="'baseline' or an orchestrator url")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--budget", type=int, default=DEFAULT_ACTION_BUDGET, help="action budget")
    run.add_argument(
        "--action-latency-ms", type=int, default=None, help="override per-action latency"
    )
    run.add_argument("--out", default=None, help="directory for report.json and transcript.jsonl")
    run.set_defaults(func=_cmd_run)

    problems = sub.add_parser("problems", help="list problems cached from a scenario directory")
    problems.add_argument("--scenarios", default="scenarios", help="scenario directory")
    problems.set_defaults(func=_cmd_problems)

    serve = sub.add_parser("serve", help="serve the wire protocol for external agents")
    serve.add_argument("--scenarios", default="scenarios", help="scenario directory")
    serve.add_argument("--serve-addr", default="127.0.0.1:8080", help="bind address (host:port)")
    serve.add_argument("--budget", type=int, default=DEFAULT_ACTION_BUDGET, help="action budget")
    serve.add_argument("--ui", default=None, help="static console build to mount at /ui")
    serve.set_defaults(func=_cmd_serve)

    replay = sub.add_parser("replay", help="re-evaluate a stored transcript")
    replay.add_argument("transcript", help="path to a transcript.jsonl")
    replay.add_argument("--scenarios", default="scenarios", help="scenario directory")
    replay.add_argument("--out", default=None, help="directory for regenerated artifacts")
    replay.set_defaults(func=_cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError, KeyError, ProtocolError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
