"""Topological office world with navigation, pickup and delivery servers.

World file format (``#`` comments)::

    locations:
      office1 office2 office3
    edges:
      office1 office2 2          # label label duration in ticks
    blocked:
      office2 office3 5 40       # blocked for ticks 5 <= tick < 40
      office3 office4            # blocked for good
    robot:
      office1
    capacity:
      3
    packages:
      7 office2                  # package id and where it waits

The world only moves when the driver calls :meth:`World.tick`.  Servers run
their goals one tick at a time and talk to clients through the bus.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field

from .bus import ACTIVE, Bus, Executor, ActionServer, ServerGoalHandle
from .interfaces import Pose, TagTable
from .lp.terms import Fn

log = logging.getLogger(__name__)

CARRIED = "carried"
DEFAULT_CAPACITY = 3
TAG_TOLERANCE = 0.5
REROUTE_FACTOR = 2.0

SECTIONS = ("locations", "edges", "blocked", "robot", "capacity", "packages")


class WorldError(ValueError):
    pass


def edge_key(a: str, b: str) -> tuple:
    return (a, b) if a <= b else (b, a)


@dataclass
class Blockage:
    a: str
    b: str
    start: int = 0
    end: int | None = None  # exclusive; None = for good

    def active(self, tick: int) -> bool:
        return self.start <= tick and (self.end is None or tick < self.end)


@dataclass
class WorldConfig:
    locations: list = field(default_factory=list)
    edges: dict = field(default_factory=dict)  # edge_key -> duration
    blocked: list = field(default_factory=list)
    robot: str | None = None
    capacity: int = DEFAULT_CAPACITY
    packages: dict = field(default_factory=dict)  # id -> label

    @classmethod
    def parse(cls, text: str) -> "WorldConfig":
        cfg = cls()
        section = None
        seen = set()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.endswith(":") and line[:-1] in SECTIONS:
                section = line[:-1]
                seen.add(section)
                continue
            if section is None:
                raise WorldError(f"world line {lineno}: content before any section: {raw!r}")
            parts = line.split()
            try:
                cfg._add(section, parts)
            except (ValueError, IndexError) as exc:
                raise WorldError(f"world line {lineno} ({section}): {exc}") from None
        if "robot" not in seen:
            raise WorldError("world file has no robot: section")
        cfg.validate()
        return cfg

    def _add(self, section: str, parts: list) -> None:
        if section == "locations":
            for p in parts:
                if p in self.locations:
                    raise ValueError(f"duplicate location {p}")
                self.locations.append(p)
        elif section == "edges":
            a, b = parts[0], parts[1]
            duration = int(parts[2]) if len(parts) > 2 else 1
            if duration < 1:
                raise ValueError("edge duration must be >= 1")
            self.edges[edge_key(a, b)] = duration
        elif section == "blocked":
            start = int(parts[2]) if len(parts) > 2 else 0
            end = int(parts[3]) if len(parts) > 3 else None
            self.blocked.append(Blockage(parts[0], parts[1], start, end))
        elif section == "robot":
            self.robot = parts[0]
        elif section == "capacity":
            self.capacity = int(parts[0])
        elif section == "packages":
            self.packages[int(parts[0])] = parts[1]

    @classmethod
    def load(cls, path) -> "WorldConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())

    def validate(self) -> None:
        locs = set(self.locations)
        for a, b in self.edges:
            for x in (a, b):
                if x not in locs:
                    raise WorldError(f"edge mentions unknown location {x}")
        for blk in self.blocked:
            if edge_key(blk.a, blk.b) not in self.edges:
                raise WorldError(f"blocked entry for missing edge {blk.a}-{blk.b}")
        if self.robot not in locs:
            raise WorldError(f"robot starts at unknown location {self.robot}")
        for pid, loc in self.packages.items():
            if loc not in locs:
                raise WorldError(f"package {pid} at unknown location {loc}")
        if self.capacity < 1:
            raise WorldError("capacity must be >= 1")
        if locs:
            reach = _reachable(self.robot, self.edges)
            if reach != locs:
                raise WorldError(f"world graph not connected; unreachable: {sorted(locs - reach)}")

    def neighbours(self, label: str):
        for a, b in sorted(self.edges):
            if a == label:
                yield b
            elif b == label:
                yield a

    def instance_facts(self) -> str:
        """Map facts for the planning encoding."""
        lines = [f"location({loc})." for loc in self.locations]
        lines += [f"edge({a},{b})." for a, b in sorted(self.edges)]
        lines.append(f"start({self.robot}).")
        lines.append(f"capacity({self.capacity}).")
        return "\n".join(lines)


def _reachable(start: str, edges: dict) -> set:
    adj: dict = {}
    for a, b in edges:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    seen = {start}
    stack = [start]
    while stack:
        for n in adj.get(stack.pop(), ()):
            if n not in seen:
                seen.add(n)
                stack.append(n)
    return seen


def shortest_path(edges: dict, start: str, goal: str, avoid=frozenset()):
    """Dijkstra over ``edges`` skipping ``avoid``; ties broken by label order.

    Returns ``(duration, [start, ..., goal])`` or ``None``.
    """
    adj: dict = {}
    for (a, b), d in edges.items():
        if (a, b) in avoid:
            continue
        adj.setdefault(a, []).append((b, d))
        adj.setdefault(b, []).append((a, d))
    heap = [(0, [start])]
    done = set()
    while heap:
        dist, path = heapq.heappop(heap)
        node = path[-1]
        if node == goal:
            return dist, path
        if node in done:
            continue
        done.add(node)
        for nxt, d in sorted(adj.get(node, ())):
            if nxt not in done:
                heapq.heappush(heap, (dist + d, path + [nxt]))
    return None


class World:
    def __init__(self, config: WorldConfig, tags: TagTable):
        missing = tags.missing(config.locations)
        if missing:
            raise WorldError(f"no tag for locations {missing}")
        self.config = config
        self.tags = tags
        self.tick_count = 0
        self.robot = config.robot
        self.packages: dict = dict(config.packages)
        self.manual_blocks: set = set()
        self.max_carried = 0
        self.carried_log: list = []  # carried count after every tick
        self.log: list = []
        self.servers: list = []

    # -- state
    def carried(self) -> list:
        return sorted(p for p, where in self.packages.items() if where == CARRIED)

    def place_package(self, pid: int, label: str) -> None:
        if label not in self.config.locations:
            raise WorldError(f"unknown location {label}")
        if pid in self.packages:
            return
        self.packages[pid] = label

    def block(self, a: str, b: str) -> None:
        if edge_key(a, b) not in self.config.edges:
            raise WorldError(f"no edge {a}-{b}")
        self.manual_blocks.add(edge_key(a, b))

    def unblock(self, a: str, b: str) -> None:
        self.manual_blocks.discard(edge_key(a, b))

    def is_blocked(self, a: str, b: str, tick: int | None = None) -> bool:
        key = edge_key(a, b)
        tick = self.tick_count if tick is None else tick
        if key in self.manual_blocks:
            return True
        return any(edge_key(blk.a, blk.b) == key and blk.active(tick) for blk in self.config.blocked)

    def blocked_edges(self) -> frozenset:
        return frozenset(k for k in self.config.edges if self.is_blocked(*k))

    def check_invariants(self) -> None:
        carried = len(self.carried())
        if carried > self.config.capacity:
            raise AssertionError(f"{carried} packages carried, capacity {self.config.capacity}")
        for pid, where in self.packages.items():
            if where != CARRIED and where not in self.config.locations:
                raise AssertionError(f"package {pid} at invalid place {where}")
        if self.robot not in self.config.locations:
            raise AssertionError(f"robot at invalid place {self.robot}")

    # -- clock
    def tick(self) -> None:
        self.tick_count += 1
        for server in self.servers:
            server.step()
        self.check_invariants()
        n = len(self.carried())
        self.max_carried = max(self.max_carried, n)
        self.carried_log.append(n)

    def note(self, text: str) -> None:
        self.log.append(f"[{self.tick_count}] {text}")
        log.debug("tick %d: %s", self.tick_count, text)


class _TickServer:
    """Action server whose active goal advances once per world tick."""

    name = "server"

    def __init__(self, world: World, bus: Bus, executor: Executor):
        self.world = world
        self.task = None
        self.server = ActionServer(bus, self.name, executor, self._on_goal, self._on_cancel, single_goal=True)
        world.servers.append(self)

    def _on_goal(self, handle: ServerGoalHandle) -> None:
        handle.accept()
        self.task = self.start(handle)

    def _on_cancel(self, handle: ServerGoalHandle) -> None:
        if self.task is not None and self.task.handle is handle:
            self.stop(self.task)
            self.task = None
        handle.preempted()

    def step(self) -> None:
        task = self.task
        if task is None or task.handle.state != ACTIVE:
            return
        outcome = self.advance(task)
        if outcome is None:
            return
        self.task = None
        state, result = outcome
        if state == "succeeded":
            task.handle.succeed(result)
        else:
            task.handle.abort(result)

    def start(self, handle):
        raise NotImplementedError

    def advance(self, task):
        raise NotImplementedError

    def stop(self, task) -> None:
        pass


@dataclass
class _NavTask:
    handle: ServerGoalHandle
    goal: str | None
    path: list = field(default_factory=list)  # remaining labels after the current one
    edge_left: int = 0  # ticks left on the current edge
    rerouted: bool = False
    error: object = None


class NavServer(_TickServer):
    """Shortest-path navigation over the location graph.

    A blocked edge ahead triggers one re-route, accepted if the detour takes
    at most twice the remaining original duration; otherwise the goal is
    aborted with ``blocked(X,Y)``.
    """

    name = "move_base"

    def start(self, handle):
        goal = handle.goal
        label = None
        if isinstance(goal, Pose):
            label = self.world.tags.nearest(goal, TAG_TOLERANCE)
        task = _NavTask(handle, label)
        if label is None:
            task.error = Fn("no_tag")
            return task
        found = shortest_path(self.world.config.edges, self.world.robot, label)
        if found is None:
            task.error = Fn("unreachable")
            return task
        task.path = found[1][1:]
        self.world.note(f"nav {self.world.robot} -> {label} via {found[1]}")
        return task

    def advance(self, task: _NavTask):
        w = self.world
        if task.error is not None:
            return "aborted", task.error
        if task.edge_left == 0:
            if not task.path:
                return "succeeded", Fn(task.goal)
            nxt = task.path[0]
            if w.is_blocked(w.robot, nxt):
                outcome = self._reroute(task, w.robot, nxt)
                if outcome is not None:
                    return outcome
                nxt = task.path[0]
            task.edge_left = w.config.edges[edge_key(w.robot, nxt)]
        task.edge_left -= 1
        if task.edge_left == 0:
            w.robot = task.path.pop(0)
            w.note(f"robot reached {w.robot}")
            task.handle.publish_feedback(w.robot)
            if not task.path:
                return "succeeded", Fn(task.goal)
        return None

    def _reroute(self, task: _NavTask, here: str, nxt: str):
        w = self.world
        blocked = Fn("blocked", (here, nxt))
        if task.rerouted:
            w.note(f"edge {here}-{nxt} blocked again, aborting")
            return "aborted", blocked
        task.rerouted = True
        remaining = _path_duration(w.config.edges, [here] + task.path)
        detour = shortest_path(w.config.edges, here, task.goal, avoid=w.blocked_edges())
        if detour is None or detour[0] > REROUTE_FACTOR * remaining:
            w.note(f"edge {here}-{nxt} blocked, no acceptable detour, aborting")
            return "aborted", blocked
        w.note(f"edge {here}-{nxt} blocked, re-routing via {detour[1]}")
        task.path = detour[1][1:]
        return None

    def stop(self, task: _NavTask) -> None:
        # the robot halts at the last location it reached
        task.edge_left = 0
        self.world.note(f"navigation preempted at {self.world.robot}")


def _path_duration(edges: dict, path: list) -> int:
    return sum(edges[edge_key(a, b)] for a, b in zip(path, path[1:]))


@dataclass
class _Task:
    handle: ServerGoalHandle


class PickupServer(_TickServer):
    name = "pickup"

    def start(self, handle):
        return _Task(handle)

    def advance(self, task):
        w = self.world
        pid = task.handle.goal
        where = w.packages.get(pid)
        if where is None:
            return "aborted", Fn("unknown_package")
        if where == CARRIED:
            return "aborted", Fn("already_carried")
        if where != w.robot:
            return "aborted", Fn("wrong_location")
        if len(w.carried()) >= w.config.capacity:
            return "aborted", Fn("capacity")
        w.packages[pid] = CARRIED
        w.note(f"picked up package {pid} at {w.robot}")
        return "succeeded", pid


class DeliverServer(_TickServer):
    name = "deliver"

    def start(self, handle):
        return _Task(handle)

    def advance(self, task):
        w = self.world
        pid = task.handle.goal
        if w.packages.get(pid) != CARRIED:
            return "aborted", Fn("not_carried")
        w.packages[pid] = w.robot
        w.note(f"delivered package {pid} at {w.robot}")
        return "succeeded", pid


def make_servers(world: World, bus: Bus, executor: Executor) -> dict:
    return {cls.name: cls(world, bus, executor) for cls in (NavServer, PickupServer, DeliverServer)}
