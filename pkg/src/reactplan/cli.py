"""Command line entry point.

    reactplan --scenario mailbot_table1.scenario --expect mailbot_table1.expect
    reactplan run.ini
    reactplan --world offices_loop.world --interactive
    reactplan --serve 127.0.0.1:5123

File arguments that do not exist on disk are looked up among the shipped
data files, so the bundled worlds and scenarios can be named directly.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import queue
import sys
import threading

from . import __version__
from .incremental import DEFAULT_HORIZON_CAP
from .interfaces import TagTable, read_registry
from .scenario import (
    DEFAULT_MAX_CYCLES,
    Scenario,
    ScenarioError,
    Stack,
    compare_trace,
    data_path,
    load_program,
    parse_event,
    parse_expect,
    render_report,
    run_scenario,
)
from .server import ReactiveServer, serve
from .taskctl import TERMINAL, ControllerError, GoalError
from .world import WorldConfig, WorldError

log = logging.getLogger("reactplan")

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE, EXIT_HALTED = 0, 1, 2, 3
DEFAULT_WORLD = "offices4.world"

USAGE = "commands: request <from> <to> <id> | cancel <id> | block <a> <b> | unblock <a> <b> | status | quit"


def resolve(path: str | None) -> str | None:
    if path is None or os.path.exists(path):
        return path
    shipped = data_path(os.path.basename(path))
    if shipped.is_file():
        return str(shipped)
    raise FileNotFoundError(f"no such file: {path}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reactplan", description="Reactive task-planning controller simulation.")
    p.add_argument("config", nargs="?", help="run configuration (ini file with a [run] section)")
    p.add_argument("--program", action="append", help="encoding file (repeatable; default: shipped mailbot.lp)")
    p.add_argument("--world", help=f"world file (default: {DEFAULT_WORLD})")
    p.add_argument("--tags", help="tag table (default: the world file with a .tags suffix)")
    p.add_argument("--scenario", help="scenario file")
    p.add_argument("--expect", help="expected per-cycle plans; exit 1 on the first mismatch")
    p.add_argument("--max-cycles", type=int, help=f"cycle cap (default {DEFAULT_MAX_CYCLES})")
    p.add_argument("--horizon-cap", type=int, help=f"planning horizon cap (default {DEFAULT_HORIZON_CAP})")
    p.add_argument("--report", help="write the cycle report here instead of stdout")
    p.add_argument("--report-format", choices=("text", "kv"), help="text (default) or key=value lines")
    p.add_argument("--interactive", action="store_true", help="read commands from stdin")
    p.add_argument("--serve", metavar="HOST:PORT", help="run the reactive solver alone in wire mode")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def merge_config(args) -> configparser.ConfigParser:
    """Command line flags override the ``[run]`` section; its paths are relative to the file."""
    cfg = configparser.ConfigParser()
    if not args.config:
        return cfg
    path = resolve(args.config)
    with open(path, encoding="utf-8") as fh:
        cfg.read_file(fh, source=path)
    base = os.path.dirname(os.path.abspath(path))
    run = cfg["run"] if cfg.has_section("run") else {}

    def rel(value):
        return value if os.path.isabs(value) or not os.path.exists(os.path.join(base, value)) \
            else os.path.join(base, value)

    if args.program is None and "program" in run:
        args.program = [rel(v) for v in run["program"].split()]
    for key in ("world", "tags", "scenario", "expect", "report"):
        if getattr(args, key) is None and key in run:
            setattr(args, key, rel(run[key]))
    if args.max_cycles is None and "max_cycles" in run:
        args.max_cycles = int(run["max_cycles"])
    if args.horizon_cap is None and "horizon_cap" in run:
        args.horizon_cap = int(run["horizon_cap"])
    if args.report_format is None and "report_format" in run:
        args.report_format = run["report_format"]
    return cfg


def load_world(args):
    world_path = resolve(args.world or DEFAULT_WORLD)
    tags_path = args.tags
    if tags_path is None:
        stem = os.path.splitext(world_path)[0] + ".tags"
        tags_path = stem if os.path.exists(stem) else os.path.basename(stem)
    return WorldConfig.load(world_path), TagTable.load(resolve(tags_path))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = merge_config(args)
        if args.serve:
            return run_serve(args)
        world_cfg, tags = load_world(args)
        program = load_program([resolve(p) for p in args.program or ()], world_cfg)
        stack = Stack(program, world_cfg, tags, read_registry(cfg), args.horizon_cap)
        if args.interactive:
            return run_interactive(stack, args)
        return run_batch(stack, args)
    except (OSError, ValueError, ScenarioError, WorldError) as exc:
        print(f"reactplan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run_batch(stack: Stack, args) -> int:
    scenario = Scenario.load(resolve(args.scenario)) if args.scenario else Scenario()
    expect = None
    if args.expect:
        with open(resolve(args.expect), encoding="utf-8") as fh:
            expect = parse_expect(fh.read())
    reports = run_scenario(stack, scenario, args.max_cycles or DEFAULT_MAX_CYCLES)
    text = render_report(reports, stack.controller.goals, args.report_format or "text")
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if stack.controller.halted:
        print(f"reactplan: halted: {stack.controller.halted}", file=sys.stderr)
        return EXIT_HALTED
    if expect is not None:
        mismatch = compare_trace(reports, expect)
        if mismatch:
            print(f"reactplan: trace mismatch at {mismatch}", file=sys.stderr)
            return EXIT_MISMATCH
        print(f"reactplan: trace matched ({len(expect)} cycles)", file=sys.stderr)
    return EXIT_OK


def run_serve(args) -> int:
    world, _ = load_world(args)
    program = load_program([resolve(p) for p in args.program or ()], world)
    server = ReactiveServer(program, horizon_cap=args.horizon_cap or DEFAULT_HORIZON_CAP)
    ready, bound = threading.Event(), []
    t = threading.Thread(target=serve, args=(server, args.serve, ready, bound), daemon=True)
    t.start()
    ready.wait()
    host, port = bound[0]
    print(f"listening on {host}:{port}", file=sys.stderr, flush=True)
    t.join()
    return EXIT_OK


def _stdin_reader(lines: queue.Queue, stream) -> None:
    for line in stream:
        lines.put(line)
    lines.put(None)


def run_interactive(stack: Stack, args, stream=None, out=None) -> int:
    """Commands are queued by a reader thread and applied between cycles."""
    stream = stream or sys.stdin
    out = out or sys.stdout
    fmt = args.report_format or "text"
    lines: queue.Queue = queue.Queue()
    threading.Thread(target=_stdin_reader, args=(lines, stream), daemon=True).start()
    ctl = stack.controller
    print(USAGE, file=out, flush=True)
    budget = args.max_cycles or DEFAULT_MAX_CYCLES
    fresh = False  # events applied since the last cycle
    eof = False
    while True:
        busy = fresh or any(g.status not in TERMINAL for g in ctl.goals.values())
        if eof and not busy:
            break
        try:
            line = "" if eof else lines.get(block=not busy)
        except queue.Empty:
            line = ""
        if line is None:
            eof = True  # finish open goals first
            continue
        words = line.split()
        if words:
            if words[0] == "quit":
                break
            if words[0] == "status":
                for gid, rec in sorted(ctl.goals.items(), key=lambda kv: str(kv[0])):
                    print(f"goal {gid} {rec.status}", file=out, flush=True)
                print(f"robot at {stack.world.robot}, carrying {stack.world.carried()}", file=out, flush=True)
                continue
            try:
                stack.apply(parse_event(words, ctl.cycle))
                fresh = True
            except (ValueError, ScenarioError, GoalError, WorldError, ControllerError) as exc:
                print(f"error: {exc}", file=out)
                print(USAGE, file=out, flush=True)
            continue
        if not busy:
            continue
        if budget <= 0:
            print("cycle budget exhausted", file=out, flush=True)
            return EXIT_HALTED
        report = stack.cycle()
        budget -= 1
        fresh = False
        out.write(render_report([report], {}, fmt))
        out.flush()
        if ctl.halted:
            print(f"halted: {ctl.halted}", file=out, flush=True)
            return EXIT_HALTED
    out.write(render_report([], ctl.goals, fmt))
    out.flush()
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
