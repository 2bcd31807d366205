"""Scenario files, the assembled simulation stack and cycle reports.

Scenario lines (``#`` comments)::

    cycle 1 request office3 office2 1
    cycle 3 cancel 1
    cycle 5 block office2 office3
    cycle 9 unblock office2 office3

Events of cycle N reach the controller before cycle N builds its update.
Expected traces list the plan (``_action`` atoms) per cycle::

    1: _action(move_base,office2,1) _action(move_base,office3,2) ...
    3: _action(move_base,office2,1) _action(move_base,office3,2)
"""

from __future__ import annotations

import logging
import shlex
from dataclasses import dataclass, field
from importlib import resources

from .bus import Bus, Executor
from .interfaces import TagTable, make_adapters
from .lp.parser import parse_atom, parse_program
from .lp.program import ReactiveProgram
from .lp.terms import Fn, render
from .server import render_online
from .taskctl import TERMINAL, Controller, CycleReport
from .world import World, WorldConfig, make_servers

log = logging.getLogger(__name__)

DEFAULT_MAX_CYCLES = 50


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Event:
    cycle: int
    kind: str  # request | cancel | block | unblock
    args: tuple

    def __str__(self) -> str:
        return f"cycle {self.cycle} {self.kind} {' '.join(map(str, self.args))}"


def _ident(text: str):
    return int(text) if text.lstrip("-").isdigit() else text


def parse_event(words: list, cycle: int) -> Event:
    if not words:
        raise ScenarioError("missing event")
    kind, rest = words[0], words[1:]
    arity = {"request": 3, "cancel": 1, "block": 2, "unblock": 2}.get(kind)
    if arity is None:
        raise ScenarioError(f"unknown event {kind!r}")
    if len(rest) != arity:
        raise ScenarioError(f"{kind} takes {arity} arguments, got {len(rest)}")
    if kind == "request":
        return Event(cycle, kind, (rest[0], rest[1], _ident(rest[2])))
    if kind == "cancel":
        return Event(cycle, kind, (_ident(rest[0]),))
    return Event(cycle, kind, tuple(rest))


@dataclass
class Scenario:
    events: list = field(default_factory=list)

    @classmethod
    def parse(cls, text: str) -> "Scenario":
        events = []
        last = 0
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            words = line.split()
            if words[0] != "cycle" or len(words) < 3:
                raise ScenarioError(f"scenario line {lineno}: expected 'cycle N <event> ...', got {raw!r}")
            try:
                cycle = int(words[1])
                ev = parse_event(words[2:], cycle)
            except ValueError as exc:
                raise ScenarioError(f"scenario line {lineno}: {exc}") from None
            if cycle < 1 or cycle < last:
                raise ScenarioError(f"scenario line {lineno}: cycle {cycle} out of order")
            last = cycle
            events.append(ev)
        return cls(events)

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())


def parse_expect(text: str) -> dict:
    """``cycle: atoms`` lines -> {cycle: frozenset of action atoms}."""
    expect = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, sep, atoms = line.partition(":")
        if not sep or not head.strip().isdigit():
            raise ScenarioError(f"expect line {lineno}: expected '<cycle>: <atoms>', got {raw!r}")
        expect[int(head)] = frozenset(parse_atom(a) for a in atoms.split())
    return expect


def compare_trace(reports: list, expect: dict) -> str | None:
    """Message for the first diverging cycle, or ``None`` when all match."""
    by_cycle = {r.cycle: r for r in reports}
    for cycle in sorted(expect):
        r = by_cycle.get(cycle)
        if r is None:
            return f"cycle {cycle}: expected a plan but the run ended at cycle {max(by_cycle, default=0)}"
        got = frozenset(r.plan)
        if got != expect[cycle]:
            missing = " ".join(render(a) for a in _by_step(expect[cycle] - got))
            extra = " ".join(render(a) for a in _by_step(got - expect[cycle]))
            return f"cycle {cycle}: plan differs; missing [{missing}] unexpected [{extra}]"
    return None


def _by_step(atoms) -> list:
    return sorted(atoms, key=lambda a: (a.args[-1], render(a)))


def default_program_text() -> str:
    return resources.files("reactplan.data").joinpath("mailbot.lp").read_text(encoding="utf-8")


def data_path(name: str):
    return resources.files("reactplan.data").joinpath(name)


def load_program(paths=(), world: WorldConfig | None = None) -> ReactiveProgram:
    """Encoding files (the shipped one when none given) plus the world's map facts."""
    texts = []
    for p in paths:
        with open(p, encoding="utf-8") as fh:
            texts.append(fh.read())
    if not texts:
        texts.append(default_program_text())
    program = parse_program(texts[0])
    for t in texts[1:]:
        program.extend(parse_program(t))
    if world is not None:
        program.extend(parse_program(world.instance_facts()))
    return program


class Stack:
    """Controller, interface adapters and world wired over one bus."""

    def __init__(self, program: ReactiveProgram, world_config: WorldConfig, tags: TagTable,
                 registry: dict | None = None, horizon_cap: int | None = None, idle_ticks: int = 1):
        self.bus = Bus()
        self.executor = Executor("stack")
        self.world = World(world_config, tags)
        self.servers = make_servers(self.world, self.bus, self.executor)
        self.adapters = make_adapters(self.bus, self.executor, tags, registry)
        kwargs = {"horizon_cap": horizon_cap} if horizon_cap else {}
        self.controller = Controller(program, self.bus, self.executor, pump=self.pump, **kwargs)
        self.idle_ticks = idle_ticks

    def pump(self) -> None:
        self.executor.spin_some()
        self.world.tick()
        self.executor.spin_some()

    def apply(self, ev: Event) -> None:
        ctl = self.controller
        if ev.kind == "request":
            src, dst, pid = ev.args
            self.world.place_package(pid, src)
            ctl.submit_goal(Fn("goal", (src, dst, pid)))
        elif ev.kind == "cancel":
            ctl.cancel_goal(ev.args[0])
        elif ev.kind == "block":
            self.world.block(*ev.args)
        elif ev.kind == "unblock":
            self.world.unblock(*ev.args)
        self.world.note(f"event {ev}")

    def cycle(self) -> CycleReport:
        report = self.controller.run_cycle()
        if report.action is None:
            for _ in range(self.idle_ticks):
                self.pump()
        return report


def run_scenario(stack: Stack, scenario: Scenario, max_cycles: int = DEFAULT_MAX_CYCLES,
                 on_report=None) -> list:
    """Run cycles until every goal is terminal and no events remain (or a cap hits)."""
    pending = list(scenario.events)
    ctl = stack.controller
    reports = []
    while len(reports) < max_cycles:
        while pending and pending[0].cycle <= ctl.cycle:
            stack.apply(pending.pop(0))
        report = stack.cycle()
        reports.append(report)
        if on_report is not None:
            on_report(report)
        if ctl.halted:
            break
        if not pending and all(g.status in TERMINAL for g in ctl.goals.values()):
            break
    return reports


# -- reports

FIELDS = ("cycle", "update", "horizon", "plan", "action", "result")


def report_fields(r: CycleReport) -> dict:
    items = [str(rule) for rule, _ in r.update.items] if r.update.items else []
    vol = {i for i, (_, v) in enumerate(r.update.items) if v}
    update = " ".join(("#volatile " if i in vol else "") + t for i, t in enumerate(items))
    if r.action is None:
        action = "idle" if r.unsatisfiable is None else "none"
    else:
        action = f"{render(r.action[0])} {render(r.action[1])}"
    return {
        "cycle": str(r.cycle),
        "update": update,
        "horizon": "unsatisfiable" if r.unsatisfiable else str(r.horizon),
        "plan": " ".join(render(a) for a in r.plan),
        "action": action,
        "result": r.result or "-",
    }


def render_report(reports: list, goals: dict, fmt: str = "text") -> str:
    lines = []
    for r in reports:
        f = report_fields(r)
        if fmt == "kv":
            lines.append(" ".join(f"{k}={shlex.quote(f[k])}" for k in FIELDS))
        else:
            lines.append(f"cycle {f['cycle']}")
            for k in FIELDS[1:]:
                lines.append(f"  {k + ':':8} {f[k]}".rstrip())
    for gid in sorted(goals, key=lambda g: (isinstance(g, str), g)):
        rec = goals[gid]
        if fmt == "kv":
            lines.append(f"goal={render(gid)} status={rec.status} goal_term={shlex.quote(render(rec.goal))}")
        else:
            lines.append(f"goal {render(gid)} {render(rec.goal)} {rec.status}")
    return "\n".join(lines) + "\n"


def render_update(r: CycleReport) -> str:
    return render_online(r.update)
