"""Interface layer: adapters between solver facts and action servers.

The controller publishes ``InterfaceMsg(interface, [action fact])`` on
``out_rosoclingo``.  Every adapter sees every message and drops the ones
addressed to someone else.  When its action server finishes, the adapter
publishes the matching ``_return`` fact on ``in_rosoclingo``:

* success: ``_return(A,P,C)`` with the action parameter as value
  (``_return(move_base,office2,1)``, ``_return(pickup,2,4)``),
* abort: ``_return(A,failure(Reason),C)``,
* preemption: ``_return(A,failure(preempted),C)``.
"""

from __future__ import annotations

import configparser
import logging
import math
from dataclasses import dataclass
from typing import Callable

from .bus import ABORTED, PREEMPTED, SUCCEEDED, ActionClient, Bus, Executor, InterfaceMsg
from .lp.parser import ParseError, parse_atom
from .lp.terms import Fn, is_ground, render

log = logging.getLogger(__name__)

OUT_TOPIC = "out_rosoclingo"
IN_TOPIC = "in_rosoclingo"


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0

    def distance(self, other: "Pose") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


class TagTable:
    """Label -> pose lookup loaded from ``label x y theta`` lines."""

    def __init__(self, poses: dict | None = None):
        self.poses: dict[str, Pose] = dict(poses or {})

    @classmethod
    def parse(cls, text: str) -> "TagTable":
        table = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (3, 4):
                raise ValueError(f"tags line {lineno}: expected 'label x y [theta]', got {raw!r}")
            label = parts[0]
            if label in table.poses:
                raise ValueError(f"tags line {lineno}: duplicate label {label!r}")
            try:
                nums = [float(v) for v in parts[1:]]
            except ValueError:
                raise ValueError(f"tags line {lineno}: bad number in {raw!r}") from None
            table.poses[label] = Pose(*nums)
        return table

    @classmethod
    def load(cls, path) -> "TagTable":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())

    def pose(self, label: str) -> Pose | None:
        return self.poses.get(label)

    def nearest(self, pose: Pose, tolerance: float = 0.5) -> str | None:
        best = None
        for label in sorted(self.poses):
            d = self.poses[label].distance(pose)
            if d <= tolerance and (best is None or d < best[0]):
                best = (d, label)
        return best[1] if best else None

    def missing(self, labels) -> list:
        return sorted(set(labels) - set(self.poses))

    def __contains__(self, label) -> bool:
        return label in self.poses

    def __len__(self) -> int:
        return len(self.poses)


def action_fact(interface: str, param, cycle: int) -> str:
    return render(Fn("_action", (interface, param, cycle)))


def return_fact(interface: str, value, cycle: int) -> str:
    return render(Fn("_return", (interface, value, cycle)))


def failure(reason) -> Fn:
    return Fn("failure", (reason,))


class Adapter:
    """Bridges one interface name to one action server.

    ``translate(param)`` turns the action parameter into the server goal; it
    returns ``None`` (with a reason) when the parameter cannot be mapped.
    Only one action is outstanding at a time; a new action preempts the
    previous one at the server.
    """

    name = "adapter"

    def __init__(self, bus: Bus, executor: Executor, server: str | None = None):
        self.bus = bus
        self.server = server or self.name
        self.client = ActionClient(bus, self.server, executor, client_id=f"{self.name}-adapter")
        self.out = bus.advertise(IN_TOPIC, InterfaceMsg.KIND)
        self.sub = bus.subscribe(OUT_TOPIC, self.dispatch, executor, InterfaceMsg.KIND)
        self.outstanding: dict = {}  # goal id -> (param, cycle)
        self.reports: list[str] = []
        self.ignored = 0

    def translate(self, param) -> tuple:
        return param, None

    def dispatch(self, msg: InterfaceMsg) -> None:
        if msg.interface != self.name:
            self.ignored += 1
            return
        for text in msg.facts:
            try:
                atom = parse_atom(text)
            except ParseError as exc:
                log.error("%s: unparsable action fact %r: %s", self.name, text, exc)
                continue
            if atom.name not in ("_action", "_action_lib") or len(atom.args) != 3 or not is_ground(atom):
                log.error("%s: not an action fact: %s", self.name, text)
                continue
            _, param, cycle = atom.args
            goal, reason = self.translate(param)
            if goal is None:
                self.report_value(param, failure(reason), cycle)
                continue
            handle = self.client.send_goal(goal, done_cb=self._done)
            self.outstanding[handle.goal_id] = (param, cycle)

    def _done(self, handle) -> None:
        param, cycle = self.outstanding.pop(handle.goal_id)
        self.report(handle.state, param, cycle, handle.result)

    def report(self, state: str, param, cycle: int, result=None) -> InterfaceMsg:
        if state == SUCCEEDED:
            value = param
        elif state == ABORTED:
            value = failure(_reason(result))
        elif state == PREEMPTED:
            value = failure("preempted")
        else:
            raise ValueError(f"not a terminal state: {state}")
        return self.report_value(param, value, cycle)

    def report_value(self, param, value, cycle: int) -> InterfaceMsg:
        fact = return_fact(self.name, value, cycle)
        self.reports.append(fact)
        msg = InterfaceMsg(self.name, (fact,))
        self.out.publish(msg)
        return msg


def _reason(result):
    if result is None:
        return "unknown"
    if isinstance(result, (Fn, int)):
        return result
    try:
        return parse_atom(str(result))
    except ParseError:
        return "unknown"


class MoveBaseAdapter(Adapter):
    name = "move_base"

    def __init__(self, bus: Bus, executor: Executor, tags: TagTable, server: str | None = None):
        super().__init__(bus, executor, server)
        self.tags = tags

    def translate(self, param):
        pose = self.tags.pose(render(param)) if isinstance(param, str) else None
        if pose is None:
            return None, "unknown_label"
        return pose, None


class PickupAdapter(Adapter):
    name = "pickup"


class DeliverAdapter(Adapter):
    name = "deliver"


ADAPTERS: dict[str, Callable] = {
    "move_base": MoveBaseAdapter,
    "pickup": PickupAdapter,
    "deliver": DeliverAdapter,
}

DEFAULT_REGISTRY = {"move_base": "move_base", "pickup": "pickup", "deliver": "deliver"}


def read_registry(config: configparser.ConfigParser) -> dict:
    """``[adapters]`` section: ``interface = adapter kind``."""
    if config.has_section("adapters"):
        return dict(config.items("adapters"))
    return dict(DEFAULT_REGISTRY)


def make_adapters(bus: Bus, executor: Executor, tags: TagTable, registry: dict | None = None) -> dict:
    adapters = {}
    for interface, kind in (registry or DEFAULT_REGISTRY).items():
        factory = ADAPTERS.get(kind)
        if factory is None:
            raise ValueError(f"unknown adapter kind {kind!r} for interface {interface!r}")
        if interface in adapters:
            raise ValueError(f"interface {interface!r} registered twice")
        if factory is MoveBaseAdapter:
            adapter = factory(bus, executor, tags)
        else:
            adapter = factory(bus, executor)
        adapter.name = interface
        adapters[interface] = adapter
    return adapters
