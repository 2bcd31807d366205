"""In-process publish/subscribe bus and a goal/cancel/feedback/result action protocol.

Topics are typed by a message kind (a namespaced string such as
``reactplan/InterfaceIO``).  Every subscription owns a bounded queue; a
publisher blocks while a subscriber's queue is full.  Handlers never run on
the publisher's thread: they run when the subscriber's executor spins,
either by hand (:meth:`Executor.spin_some`) or on a background thread
(:class:`ThreadExecutor`).

Messages of one topic reach every subscriber in the same order.  A single
executor hands out messages in global publish order, which keeps
single-threaded simulations deterministic.
"""

from __future__ import annotations

import itertools
import logging
import queue
import threading
from dataclasses import dataclass
from typing import Any, Callable

log = logging.getLogger(__name__)

DEFAULT_QUEUE_SIZE = 64


class BusError(RuntimeError):
    pass


class KindError(BusError):
    pass


class UnknownServer(BusError):
    pass


class IllegalTransition(BusError):
    pass


def message_kind(msg) -> str:
    return getattr(msg, "KIND", None) or f"{type(msg).__module__}/{type(msg).__qualname__}"


@dataclass(frozen=True)
class InterfaceMsg:
    """Interface name plus text facts, e.g. ``('move_base', ('_action(move_base,office2,1)',))``."""

    KIND = "reactplan/InterfaceIO"
    interface: str
    facts: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "facts", tuple(self.facts))


# ---------------------------------------------------------------------------
# topics


class Subscription:
    def __init__(self, bus: "Bus", topic: str, handler: Callable, executor: "Executor", maxsize: int):
        self.bus = bus
        self.topic = topic
        self.handler = handler
        self.executor = executor
        self.queue: queue.Queue = queue.Queue(maxsize)
        self.received = 0
        self.active = True

    def _put(self, seq: int, msg, timeout) -> None:
        try:
            self.queue.put((seq, msg), timeout=timeout)
        except queue.Full:
            raise BusError(f"subscriber queue of {self.topic!r} full (backpressure timeout)") from None
        self.executor._notify()

    def unsubscribe(self) -> None:
        self.active = False
        self.bus._drop(self)


class _Topic:
    def __init__(self, name: str):
        self.name = name
        self.kind: str | None = None
        self.advertised = False
        self.subs: list[Subscription] = []
        self.lock = threading.Lock()
        self.published = 0


class Publisher:
    def __init__(self, bus: "Bus", topic: str):
        self.bus = bus
        self.topic = topic

    def publish(self, msg, timeout: float | None = None) -> None:
        self.bus.publish(self.topic, msg, timeout=timeout)


class Bus:
    def __init__(self, queue_size: int = DEFAULT_QUEUE_SIZE):
        self.queue_size = queue_size
        self._topics: dict[str, _Topic] = {}
        self._lock = threading.Lock()
        self._seq = itertools.count()
        self.action_servers: dict[str, "ActionServer"] = {}

    def _topic(self, name: str) -> _Topic:
        with self._lock:
            t = self._topics.get(name)
            if t is None:
                t = self._topics[name] = _Topic(name)
            return t

    def _bind_kind(self, t: _Topic, kind: str) -> None:
        if t.kind is None:
            t.kind = kind
        elif t.kind != kind:
            raise KindError(f"topic {t.name!r} carries {t.kind}, not {kind}")

    def advertise(self, topic: str, kind: str) -> Publisher:
        t = self._topic(topic)
        with t.lock:
            self._bind_kind(t, kind)
            t.advertised = True
        return Publisher(self, topic)

    def subscribe(self, topic: str, handler: Callable, executor: "Executor", kind: str | None = None,
                  maxsize: int | None = None) -> Subscription:
        t = self._topic(topic)
        sub = Subscription(self, topic, handler, executor, maxsize or self.queue_size)
        with t.lock:
            if kind is not None:
                self._bind_kind(t, kind)
            t.subs.append(sub)
        executor._add(sub)
        return sub

    def publish(self, topic: str, msg, timeout: float | None = None) -> None:
        """Enqueue ``msg`` for every current subscriber; blocks while a queue is full."""
        t = self._topics.get(topic)
        if t is None or not t.advertised:
            raise BusError(f"publish on {topic!r} before advertise")
        kind = message_kind(msg)
        if kind != t.kind:
            raise KindError(f"topic {topic!r} carries {t.kind}, got {kind}")
        # holding the topic lock while enqueuing gives one order for all subscribers
        with t.lock:
            seq = next(self._seq)
            t.published += 1
            for sub in list(t.subs):
                sub._put(seq, msg, timeout)

    def _drop(self, sub: Subscription) -> None:
        t = self._topics.get(sub.topic)
        if t is not None:
            with t.lock:
                if sub in t.subs:
                    t.subs.remove(sub)
        sub.executor._remove(sub)

    def published_count(self, topic: str) -> int:
        t = self._topics.get(topic)
        return t.published if t else 0


# ---------------------------------------------------------------------------
# executors


class Executor:
    """Runs subscription handlers when spun."""

    def __init__(self, name: str = "executor"):
        self.name = name
        self._subs: list[Subscription] = []
        self._cond = threading.Condition()
        self._spin_lock = threading.RLock()

    def _add(self, sub: Subscription) -> None:
        with self._cond:
            self._subs.append(sub)

    def _remove(self, sub: Subscription) -> None:
        with self._cond:
            if sub in self._subs:
                self._subs.remove(sub)

    def _notify(self) -> None:
        with self._cond:
            self._cond.notify_all()

    def _next(self):
        # the oldest queued message across all subscriptions
        best, best_seq = None, None
        with self._cond:
            subs = list(self._subs)
        for sub in subs:
            with sub.queue.mutex:
                if not sub.queue.queue:
                    continue
                seq = sub.queue.queue[0][0]
            if best_seq is None or seq < best_seq:
                best, best_seq = sub, seq
        if best is None:
            return None
        _, msg = best.queue.get_nowait()
        return best, msg

    def spin_once(self, timeout: float | None = 0.0) -> bool:
        """Handle one message; wait up to ``timeout`` seconds for one (None waits forever)."""
        with self._spin_lock:
            item = self._next()
            if item is None and timeout != 0.0:
                with self._cond:
                    self._cond.wait_for(lambda: any(s.queue.qsize() for s in self._subs), timeout)
                item = self._next()
            if item is None:
                return False
            sub, msg = item
            sub.received += 1
            if sub.active:
                sub.handler(msg)
            return True

    def spin_some(self, limit: int | None = None) -> int:
        """Handle queued messages (including ones queued by the handlers)."""
        n = 0
        while (limit is None or n < limit) and self.spin_once(0.0):
            n += 1
        return n

    def pending(self) -> int:
        with self._cond:
            return sum(s.queue.qsize() for s in self._subs)


class ThreadExecutor(Executor):
    """Spins on a background thread until :meth:`stop`."""

    def __init__(self, name: str = "thread-executor", poll: float = 0.05):
        super().__init__(name)
        self.poll = poll
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def start(self) -> "ThreadExecutor":
        self._thread = threading.Thread(target=self._run, name=self.name, daemon=True)
        self._thread.start()
        return self

    def _run(self) -> None:
        while not self._stop.is_set():
            try:
                self.spin_once(self.poll)
            except Exception:  # keep the executor alive, like a ROS spinner
                log.exception("handler failed on %s", self.name)

    def stop(self, timeout: float = 2.0) -> None:
        self._stop.set()
        self._notify()
        if self._thread is not None:
            self._thread.join(timeout)


# ---------------------------------------------------------------------------
# action protocol

PENDING = "pending"
ACTIVE = "active"
PREEMPTING = "preempting"
SUCCEEDED = "succeeded"
ABORTED = "aborted"
PREEMPTED = "preempted"

TERMINAL = frozenset({SUCCEEDED, ABORTED, PREEMPTED})
TRANSITIONS = {
    PENDING: {ACTIVE, PREEMPTED},
    ACTIVE: {SUCCEEDED, ABORTED, PREEMPTING},
    PREEMPTING: {PREEMPTED},
}


def check_transition(old: str, new: str) -> None:
    if new not in TRANSITIONS.get(old, ()):
        raise IllegalTransition(f"illegal goal transition {old} -> {new}")


@dataclass(frozen=True)
class GoalMsg:
    KIND = "actionlib/Goal"
    goal_id: str
    goal: Any


@dataclass(frozen=True)
class CancelMsg:
    KIND = "actionlib/Cancel"
    goal_id: str


@dataclass(frozen=True)
class StatusMsg:
    KIND = "actionlib/Status"
    goal_id: str
    state: str
    seq: int = 0  # position in the goal's state history


@dataclass(frozen=True)
class FeedbackMsg:
    KIND = "actionlib/Feedback"
    goal_id: str
    feedback: Any


@dataclass(frozen=True)
class ResultMsg:
    KIND = "actionlib/Result"
    goal_id: str
    state: str
    result: Any = None
    history: tuple = ()


def _topics(name: str) -> dict:
    return {k: f"{name}/{k}" for k in ("goal", "cancel", "status", "feedback", "result")}


class ServerGoalHandle:
    def __init__(self, server: "ActionServer", goal_id: str, goal):
        self.server = server
        self.goal_id = goal_id
        self.goal = goal
        self.state = PENDING
        self.history = [PENDING]

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL

    def _set(self, state: str, result=None) -> None:
        check_transition(self.state, state)
        self.state = state
        self.history.append(state)
        self.server._status.publish(StatusMsg(self.goal_id, state, len(self.history) - 1))
        if state in TERMINAL:
            self.server._finish(self)
            self.server._result.publish(ResultMsg(self.goal_id, state, result, tuple(self.history)))

    def accept(self) -> None:
        self._set(ACTIVE)

    def publish_feedback(self, feedback) -> None:
        if self.state not in (ACTIVE, PREEMPTING):
            raise IllegalTransition(f"feedback on a {self.state} goal")
        self.server._feedback.publish(FeedbackMsg(self.goal_id, feedback))

    def succeed(self, result=None) -> None:
        self._set(SUCCEEDED, result)

    def abort(self, result=None) -> None:
        self._set(ABORTED, result)

    def preempted(self, result=None) -> None:
        if self.state == ACTIVE:
            self._set(PREEMPTING)
        self._set(PREEMPTED, result)


class ActionServer:
    """Receives goals and cancels; the owner drives goals through their states.

    ``on_goal(handle)`` is called for each new goal (still pending) and
    ``on_cancel(handle)`` when a cancel arrives for a non-terminal goal; the
    default cancel behaviour stops the goal at once.  With ``single_goal``
    a new goal preempts the goal currently being worked on.
    """

    def __init__(self, bus: Bus, name: str, executor: Executor, on_goal: Callable,
                 on_cancel: Callable | None = None, single_goal: bool = False):
        if name in bus.action_servers:
            raise BusError(f"action server {name!r} already registered")
        self.bus = bus
        self.name = name
        self.on_goal = on_goal
        self.on_cancel = on_cancel
        self.single_goal = single_goal
        self.goals: dict[str, ServerGoalHandle] = {}
        self.current: ServerGoalHandle | None = None
        t = _topics(name)
        self._status = bus.advertise(t["status"], StatusMsg.KIND)
        self._feedback = bus.advertise(t["feedback"], FeedbackMsg.KIND)
        self._result = bus.advertise(t["result"], ResultMsg.KIND)
        bus.subscribe(t["goal"], self._on_goal, executor, GoalMsg.KIND)
        bus.subscribe(t["cancel"], self._on_cancel, executor, CancelMsg.KIND)
        bus.action_servers[name] = self

    def _on_goal(self, msg: GoalMsg) -> None:
        handle = ServerGoalHandle(self, msg.goal_id, msg.goal)
        self.goals[msg.goal_id] = handle
        self._status.publish(StatusMsg(msg.goal_id, PENDING, 0))
        if self.single_goal and self.current is not None and not self.current.terminal:
            self.cancel(self.current)
        self.current = handle
        self.on_goal(handle)

    def _on_cancel(self, msg: CancelMsg) -> None:
        handle = self.goals.get(msg.goal_id)
        if handle is None or handle.terminal or handle.state == PREEMPTING:
            return
        self.cancel(handle)

    def cancel(self, handle: ServerGoalHandle) -> None:
        if handle.state == ACTIVE:
            handle._set(PREEMPTING)
        if self.on_cancel is not None and handle.state == PREEMPTING:
            self.on_cancel(handle)
        else:
            handle.preempted()

    def _finish(self, handle: ServerGoalHandle) -> None:
        if self.current is handle:
            self.current = None


class ClientGoalHandle:
    def __init__(self, client: "ActionClient", goal_id: str, goal, feedback_cb=None, done_cb=None):
        self.client = client
        self.goal_id = goal_id
        self.goal = goal
        self.state = PENDING
        self.history = [PENDING]
        self.feedback: list = []
        self.result = None
        self.results_received = 0
        self.feedback_cb = feedback_cb
        self.done_cb = done_cb
        self.done = threading.Event()

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL

    def _advance(self, state: str) -> None:
        check_transition(self.state, state)
        self.state = state
        self.history.append(state)

    def cancel(self) -> None:
        """Request cancellation; a no-op once the goal is terminal."""
        if self.terminal:
            return
        self.client._cancel.publish(CancelMsg(self.goal_id))

    def wait(self, timeout: float | None = None) -> bool:
        return self.done.wait(timeout)


class ActionClient:
    _ids = itertools.count(1)

    def __init__(self, bus: Bus, name: str, executor: Executor, client_id: str | None = None):
        self.bus = bus
        self.name = name
        self.client_id = client_id or f"c{next(self._ids)}"
        self._counter = itertools.count(1)
        self.handles: dict[str, ClientGoalHandle] = {}
        t = _topics(name)
        self._goal = bus.advertise(t["goal"], GoalMsg.KIND)
        self._cancel = bus.advertise(t["cancel"], CancelMsg.KIND)
        bus.subscribe(t["status"], self._on_status, executor, StatusMsg.KIND)
        bus.subscribe(t["feedback"], self._on_feedback, executor, FeedbackMsg.KIND)
        bus.subscribe(t["result"], self._on_result, executor, ResultMsg.KIND)

    def send_goal(self, goal, feedback_cb=None, done_cb=None) -> ClientGoalHandle:
        if self.name not in self.bus.action_servers:
            raise UnknownServer(f"no action server named {self.name!r}")
        goal_id = f"{self.client_id}-{next(self._counter)}"
        handle = ClientGoalHandle(self, goal_id, goal, feedback_cb, done_cb)
        self.handles[goal_id] = handle
        self._goal.publish(GoalMsg(goal_id, goal))
        return handle

    def _on_status(self, msg: StatusMsg) -> None:
        handle = self.handles.get(msg.goal_id)
        if handle is None or msg.seq < len(handle.history):
            return  # initial pending, or already applied from the result
        if msg.seq > len(handle.history):
            raise IllegalTransition(f"status stream of {msg.goal_id} skipped a state")
        handle._advance(msg.state)

    def _on_feedback(self, msg: FeedbackMsg) -> None:
        handle = self.handles.get(msg.goal_id)
        if handle is None:
            return
        handle.feedback.append(msg.feedback)
        if handle.feedback_cb is not None:
            handle.feedback_cb(handle, msg.feedback)

    def _on_result(self, msg: ResultMsg) -> None:
        handle = self.handles.get(msg.goal_id)
        if handle is None:
            return
        handle.results_received += 1
        if handle.results_received > 1:
            raise IllegalTransition(f"duplicate result for goal {msg.goal_id}")
        if tuple(handle.history) != msg.history[: len(handle.history)]:
            raise IllegalTransition(f"goal {msg.goal_id} history diverged: {handle.history} vs {msg.history}")
        # the result can overtake status messages (different topics)
        for state in msg.history[len(handle.history):]:
            handle._advance(state)
        handle.result = msg.result
        handle.done.set()
        if handle.done_cb is not None:
            handle.done_cb(handle)
