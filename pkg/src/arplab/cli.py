"""Command-line front end: run, validate, and list scenario files."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .engine import Simulation
from .scenario import ScenarioError, load_scenario

EXIT_OK = 0
EXIT_ASSERT_FAILED = 1
EXIT_LOAD_ERROR = 2


def _scenario_dir(explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    env = os.environ.get("ARPLAB_SCENARIOS")
    if env:
        return Path(env)
    return Path("scenarios")


def _resolve(name: str, directory: Path) -> Path:
    direct = Path(name)
    if direct.exists():
        return direct
    candidate = directory / f"{name}.toml"
    if candidate.exists():
        return candidate
    return direct


def _cmd_run(args: argparse.Namespace) -> int:
    path = _resolve(args.scenario, _scenario_dir(args.dir))
    try:
        scenario = load_scenario(path)
    except ScenarioError as exc:
        for line in exc.errors or [str(exc)]:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_LOAD_ERROR

    sim = Simulation(scenario)
    sim.run(args.until)

    rendered = sim.log.to_jsonl() if args.format == "jsonl" else sim.log.to_text()
    if args.log:
        Path(args.log).write_text(rendered)
    else:
        sys.stdout.write(rendered)

    if args.dump_spoof_list and sim.server is not None:
        print("spoof list:")
        if not sim.server.spoof_list:
            print("  (empty)")
        for record in sim.server.spoof_list:
            print(f"  {record.at:.6f} {record.mac} {record.reason}")

    checks = sim.log.of_kind("assert_result")
    for record in checks:
        status = "ok" if record["ok"] else "FAILED"
        print(f"assert {record['check']} at {record['virtual_time']:.3f}s: {status}",
              file=sys.stderr)
    if sim.failures:
        print(f"{sim.failures} assertion(s) failed", file=sys.stderr)
        return EXIT_ASSERT_FAILED
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    path = _resolve(args.scenario, _scenario_dir(args.dir))
    try:
        scenario = load_scenario(path)
    except ScenarioError as exc:
        for line in exc.errors or [str(exc)]:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_LOAD_ERROR
    print(f"{scenario.name}: ok "
          f"({len(scenario.hosts)} hosts, {len(scenario.script)} script steps)")
    return EXIT_OK


def _cmd_list(args: argparse.Namespace) -> int:
    directory = _scenario_dir(args.dir)
    if not directory.is_dir():
        print(f"error: scenario directory {directory} not found", file=sys.stderr)
        return EXIT_LOAD_ERROR
    for path in sorted(directory.glob("*.toml")):
        try:
            scenario = load_scenario(path)
            print(f"{path.stem:<24} {len(scenario.hosts)} hosts, "
                  f"{len(scenario.script)} steps")
        except ScenarioError:
            print(f"{path.stem:<24} (invalid)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arplab",
        description="Deterministic layer-2 LAN simulator for ARP spoofing "
                    "attacks and defenses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and print its event log")
    run.add_argument("scenario", help="scenario file path or bare name")
    run.add_argument("--until", type=float, default=None,
                     help="stop the clock at this many simulated seconds")
    run.add_argument("--log", default=None, help="write the event log to a file")
    run.add_argument("--format", choices=("jsonl", "text"), default="jsonl")
    run.add_argument("--dump-spoof-list", action="store_true",
                     help="print the server spoof list after the run")
    run.add_argument("--dir", default=None, help="scenario directory")
    run.set_defaults(fn=_cmd_run)

    validate = sub.add_parser("validate", help="check a scenario file and exit")
    validate.add_argument("scenario")
    validate.add_argument("--dir", default=None)
    validate.set_defaults(fn=_cmd_validate)

    listing = sub.add_parser("list-scenarios", help="list scenario files")
    listing.add_argument("--dir", default=None)
    listing.set_defaults(fn=_cmd_list)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
