"""Task controller: the reasoning node between clients and the interface layer.

Each cycle C

1. turns queued client events and last cycle's action result into an online
   update for step C (commit constraint, requests, returns, idle marker),
2. feeds it to the reactive server and asks for an answer,
3. takes the plan's action for step C, publishes it on ``out_rosoclingo``,
4. waits for the ``_return`` fact on ``in_rosoclingo`` and updates goals.

A cycle without an action for step C is idle and ends at once.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

from .bus import Bus, Executor, InterfaceMsg
from .incremental import DEFAULT_HORIZON_CAP, HorizonCapError
from .interfaces import IN_TOPIC, OUT_TOPIC
from .lp.parser import ParseError, parse_atom
from .lp.program import ReactiveProgram, Rule
from .lp.solver import AnswerSet
from .lp.terms import Fn, is_ground, render
from .server import OnlineUpdate, ReactiveServer

log = logging.getLogger(__name__)

ACTION_NAMES = ("_action", "_action_lib")

PENDING = "pending"
ACTIVE = "active"
SUCCEEDED = "succeeded"
PREEMPTED = "preempted"
ABORTED = "aborted"
TERMINAL = frozenset({SUCCEEDED, PREEMPTED, ABORTED})
_NEXT = {PENDING: {ACTIVE}, ACTIVE: {SUCCEEDED, PREEMPTED, ABORTED}}


class ControllerError(RuntimeError):
    pass


class GoalError(ValueError):
    pass


@dataclass
class GoalRecord:
    goal_id: int | str
    goal: Fn
    submit_cycle: int
    status: str = PENDING
    history: list = field(default_factory=lambda: [PENDING])
    cancelled: bool = False
    picked: bool = False

    @property
    def terminal(self) -> bool:
        return self.status in TERMINAL

    def move(self, status: str) -> None:
        if status not in _NEXT.get(self.status, ()):
            raise ControllerError(f"goal {self.goal_id}: illegal status change {self.status} -> {status}")
        self.status = status
        self.history.append(status)


@dataclass
class CycleReport:
    cycle: int
    update: OnlineUpdate
    horizon: int | None
    plan: list  # _action atoms sorted by step
    action: tuple | None  # (interface, param)
    result: str | None = None
    unsatisfiable: str | None = None
    statuses: dict = field(default_factory=dict)


def plan_of(answer: AnswerSet) -> list:
    acts = [a for a in answer if a.name in ACTION_NAMES and len(a.args) == 3]
    return sorted(acts, key=lambda a: (a.args[2] if isinstance(a.args[2], int) else 0, render(a)))


def extract_action(answer: AnswerSet, cycle: int) -> tuple | None:
    """The plan's ``(interface, param)`` for ``cycle``; ``None`` means idle."""
    here = [a for a in plan_of(answer) if a.args[2] == cycle]
    if len(here) > 1:
        raise ControllerError(f"{len(here)} actions planned for cycle {cycle}: {' '.join(map(render, here))}")
    if not here:
        return None
    return here[0].args[0], here[0].args[1]


def goal_term(goal) -> Fn:
    term = parse_atom(goal) if isinstance(goal, str) else goal
    if not (isinstance(term, Fn) and term.name == "goal" and len(term.args) == 3 and is_ground(term)):
        raise GoalError(f"expected a ground goal(From,To,Id) term, got {goal!r}")
    return term


class Controller:
    def __init__(self, program: ReactiveProgram, bus: Bus, executor: Executor, pump=None,
                 horizon_cap: int = DEFAULT_HORIZON_CAP, max_wait: int = 100000):
        self.program = program
        self.server = ReactiveServer(program, horizon_cap=horizon_cap)
        self.bus = bus
        self.executor = executor
        self.pump = pump or (lambda: executor.spin_once(0.05))
        self.max_wait = max_wait
        self.cycle = 1
        self.goals: dict = {}
        self.events: deque = deque()  # ("request", goal term) | ("cancel", id)
        self.results: deque = deque()  # (action atom, return atom)
        self.inbox: deque = deque()
        self.committed: list = []
        self.dispatched: list = []
        self.previous_idle = False
        self.halted: str | None = None
        self.reports: list = []
        self._idle_declared = ("_idle", 1) in program.externals
        self.out = bus.advertise(OUT_TOPIC, InterfaceMsg.KIND)
        bus.subscribe(IN_TOPIC, self._on_result, executor, InterfaceMsg.KIND)

    # -- client API
    def submit_goal(self, goal) -> int | str:
        term = goal_term(goal)
        gid = term.args[2]
        if gid in self.goals:
            raise GoalError(f"package identifier {render(gid)} already used by a goal")
        if self.halted:
            raise ControllerError(f"controller halted: {self.halted}")
        self.goals[gid] = GoalRecord(gid, term, self.cycle)
        self.events.append(("request", term))
        return gid

    def cancel_goal(self, goal_id) -> None:
        rec = self.goals.get(goal_id)
        if rec is None:
            raise GoalError(f"unknown goal {goal_id!r}")
        if rec.terminal:
            raise GoalError(f"goal {goal_id!r} already {rec.status}")
        if rec.cancelled:
            return
        rec.cancelled = True
        self.events.append(("cancel", goal_id))

    def goal_status(self, goal_id) -> str:
        rec = self.goals.get(goal_id)
        if rec is None:
            raise GoalError(f"unknown goal {goal_id!r}")
        return rec.status

    def open_goals(self) -> list:
        return [g for g in self.goals.values() if not g.terminal]

    # -- feeding
    def build_update(self) -> OnlineUpdate:
        c = self.cycle
        update = OnlineUpdate(c)
        for action, _ in self.results:
            update.add(Rule(None, (), (action,)))
        for kind, payload in self.events:
            arg = payload if kind == "request" else Fn("cancel", (payload,))
            update.add(Rule(Fn("_request", (arg, c))))
        for _, ret in self.results:
            update.add(Rule(ret))
        if self.previous_idle and self._idle_declared and c > 1:
            update.add(Rule(Fn("_idle", (c - 1,))))
        return update

    def _on_result(self, msg: InterfaceMsg) -> None:
        for text in msg.facts:
            try:
                atom = parse_atom(text)
            except ParseError:
                log.error("unparsable result from %s: %r", msg.interface, text)
                continue
            if atom.name != "_return" or len(atom.args) != 3:
                log.error("not a _return fact from %s: %s", msg.interface, text)
                continue
            self.inbox.append(atom)

    def _await_result(self, action: Fn) -> Fn:
        want = (action.args[0], action.args[2])
        for _ in range(self.max_wait):
            while self.inbox:
                ret = self.inbox.popleft()
                if (ret.args[0], ret.args[2]) == want:
                    return ret
                log.warning("dropping unexpected result %s", render(ret))
            self.pump()
        raise ControllerError(f"no result for {render(action)} after {self.max_wait} waits")

    # -- the cycle
    def run_cycle(self) -> CycleReport:
        if self.halted:
            raise ControllerError(f"controller halted: {self.halted}")
        c = self.cycle
        update = self.build_update()
        fed_events = list(self.events)
        self.events.clear()
        self.results.clear()
        self.server.feed(update)
        for kind, payload in fed_events:
            if kind == "request":
                self.goals[payload.args[2]].move(ACTIVE)
        for kind, payload in fed_events:
            if kind == "cancel":
                rec = self.goals[payload]
                if rec.status == ACTIVE and not rec.picked:
                    rec.move(PREEMPTED)

        try:
            answer = self.server.get_answer()
        except HorizonCapError as exc:
            self.halted = str(exc)
            for rec in self.open_goals():
                if rec.status == PENDING:
                    rec.move(ACTIVE)
                rec.move(ABORTED)
            report = CycleReport(c, update, None, [], None, unsatisfiable=str(exc), statuses=self._statuses())
            self.reports.append(report)
            return report

        plan = plan_of(answer)
        self._check_commits(plan)
        action = extract_action(answer, c)
        report = CycleReport(c, update, self.server.horizon, plan, action)
        if action is None:
            self.previous_idle = True
        else:
            self.previous_idle = False
            atom = next(a for a in plan if a.args[2] == c)
            self.dispatched.append(atom)
            self.out.publish(InterfaceMsg(render(action[0]), (render(atom),)))
            ret = self._await_result(atom)
            self.results.append((atom, ret))
            self.committed.append(atom)
            report.result = render(ret)
            self._apply_result(ret)
        report.statuses = self._statuses()
        self.reports.append(report)
        self.cycle += 1
        return report

    def _check_commits(self, plan: list) -> None:
        planned = set(plan)
        missing = [a for a in self.committed if a not in planned]
        if missing:
            raise ControllerError(f"plan dropped committed actions: {' '.join(map(render, missing))}")

    def _apply_result(self, ret: Fn) -> None:
        interface, value, _ = ret.args
        if isinstance(value, Fn) and value.name == "failure":
            return
        rec = self.goals.get(value)
        if rec is None or rec.terminal:
            return
        if interface == "pickup":
            rec.picked = True
        elif interface == "deliver":
            rec.move(PREEMPTED if rec.cancelled else SUCCEEDED)

    def _statuses(self) -> dict:
        return {gid: rec.status for gid, rec in self.goals.items()}
