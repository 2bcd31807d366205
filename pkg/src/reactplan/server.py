"""Reactive solving server: online progressions in, answer sets out.

An online progression is a sequence of blocks::

    #step 2.
    :- not _action(move_base,office2,1).
    _return(move_base,office2,1).
    #endstep.

Items are ground facts or integrity constraints.  They stay in the program
for good unless prefixed with ``#volatile``, in which case they only take
part in the query for their own step.  After each block the client asks for
an answer; the server grows the horizon from the block's step until a model
exists.  The wire mode speaks the same text over a line-oriented TCP
connection and replies ``Answer: <atoms>`` after every ``#endstep.``.
"""

from __future__ import annotations

import logging
import socket
import threading
from dataclasses import dataclass, field

from .incremental import DEFAULT_HORIZON_CAP, HorizonCapError, IncrementalState
from .lp.parser import ParseError, Parser
from .lp.program import ReactiveProgram, Rule
from .lp.solver import AnswerSet
from .lp.terms import Fn, is_ground

log = logging.getLogger(__name__)

STOP = "#stop."


class OnlineError(ValueError):
    """Malformed or inadmissible online input."""


@dataclass
class OnlineUpdate:
    step: int
    items: list = field(default_factory=list)  # (Rule, volatile: bool)

    def add(self, rule: Rule, volatile: bool = False) -> "OnlineUpdate":
        self.items.append((rule, volatile))
        return self

    @property
    def facts(self) -> list:
        return [r.head for r, _ in self.items if r.is_fact]

    @property
    def constraints(self) -> list:
        return [r for r, _ in self.items if r.is_constraint]

    def render(self) -> str:
        return render_online(self)


def render_online(update: OnlineUpdate) -> str:
    lines = [f"#step {update.step}."]
    for rule, volatile in update.items:
        lines.append(("#volatile " if volatile else "") + str(rule))
    lines.append("#endstep.")
    return "\n".join(lines)


def _check_item(rule: Rule, tok) -> None:
    if not (rule.is_fact or rule.is_constraint):
        raise OnlineError(f"{tok.line}:{tok.column}: only facts and integrity constraints may be fed, got '{rule}'")
    atoms = list(rule.pos) + list(rule.neg) + ([rule.head] if rule.head is not None else [])
    for a in atoms:
        if not (isinstance(a, Fn) and is_ground(a)):
            raise OnlineError(f"{tok.line}:{tok.column}: online items must be ground atoms, got '{rule}'")


def parse_online(text: str) -> OnlineUpdate:
    """Parse exactly one ``#step N. ... #endstep.`` block."""
    try:
        p = Parser(text)
        update = _parse_block(p)
        if not p.at_end():
            raise OnlineError(f"{p.tok.line}:{p.tok.column}: trailing input after #endstep")
    except ParseError as exc:
        raise OnlineError(str(exc)) from exc
    return update


def _parse_block(p: Parser) -> OnlineUpdate:
    tok = p.tok
    if tok.kind != "directive" or tok.text != "#step":
        raise OnlineError(f"{tok.line}:{tok.column}: expected '#step', found {tok.text or 'end of input'!r}")
    p.advance()
    step = int(p.expect("int", "step number").text)
    p.expect(".", "'.'")
    update = OnlineUpdate(step)
    while True:
        tok = p.tok
        if tok.kind == "eof":
            raise OnlineError(f"{tok.line}:{tok.column}: missing '#endstep.'")
        volatile = False
        if tok.kind == "directive":
            if tok.text == "#endstep":
                p.advance()
                p.expect(".", "'.'")
                return update
            if tok.text != "#volatile":
                raise OnlineError(f"{tok.line}:{tok.column}: unexpected {tok.text} inside a step block")
            p.advance()
            volatile = True
            tok = p.tok
        rule = p.parse_rule()
        _check_item(rule, tok)
        update.add(rule, volatile)


def check_externals(update: OnlineUpdate, program: ReactiveProgram) -> None:
    # Constraints pin program atoms (e.g. committed _action atoms), so only
    # fed facts must belong to declared external predicates.
    for fact in update.facts:
        sig = (fact.name, len(fact.args))
        if sig not in program.externals:
            raise OnlineError(f"predicate {sig[0]}/{sig[1]} is not declared #external")


class ReactiveServer:
    """Feeds online updates into an :class:`IncrementalState` and answers queries."""

    def __init__(self, program: ReactiveProgram, horizon_cap: int = DEFAULT_HORIZON_CAP):
        self.program = program
        self.state = IncrementalState(program, horizon_cap=horizon_cap)
        self.last_step: int | None = None
        self.horizon: int | None = None
        self._lock = threading.Lock()

    def feed(self, update: OnlineUpdate) -> None:
        with self._lock:
            if self.last_step is not None and update.step <= self.last_step:
                raise OnlineError(f"step {update.step} fed after step {self.last_step}; steps must increase")
            check_externals(update, self.program)
            persistent = [r for r, v in update.items if not v]
            volatile = [r for r, v in update.items if v]
            self.state.add_online(persistent, update.step)
            self.state.add_online(volatile, update.step, volatile=True)
            self.state.advance_to(max(update.step, 1))
            self.last_step = update.step

    def get_answer(self) -> AnswerSet:
        """First model at the smallest horizon >= the last fed step."""
        with self._lock:
            if self.last_step is None:
                raise OnlineError("no update fed yet")
            h, model = self.state.solve_min_horizon(max(self.last_step, 1))
            self.horizon = h
            return model

    # -- line protocol shared by wire and in-process mode
    def session(self) -> "Session":
        return Session(self)


def answer_line(model: AnswerSet) -> str:
    text = str(model)
    return f"Answer: {text}" if text else "Answer:"


class Session:
    """Line-by-line protocol driver; :meth:`handle` returns the reply lines."""

    def __init__(self, server: ReactiveServer):
        self.server = server
        self.buffer: list[str] = []
        self.stopped = False

    def handle(self, line: str) -> list[str]:
        if self.stopped:
            raise OnlineError("session already stopped")
        stripped = line.strip()
        if not self.buffer:
            if not stripped or stripped.startswith("%"):
                return []
            if stripped == STOP:
                self.stopped = True
                return []
        self.buffer.append(line)
        if not _ends_block(stripped):
            return []
        text = "\n".join(self.buffer)
        self.buffer = []
        update = parse_online(text)
        self.server.feed(update)
        try:
            model = self.server.get_answer()
        except HorizonCapError as exc:
            return [f"Unsatisfiable: {exc}"]
        return [answer_line(model)]


def _ends_block(stripped: str) -> bool:
    # the terminator may share a line with items
    code = stripped.split("%", 1)[0].rstrip()
    return code.endswith("#endstep.")


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep:
        host, port = "127.0.0.1", endpoint
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise ValueError(f"bad endpoint {endpoint!r}; expected host:port") from None


def serve(server: ReactiveServer, endpoint: str, ready: threading.Event | None = None,
          bound: list | None = None) -> None:
    """Accept one client on ``host:port`` and run the line protocol until ``#stop.``.

    Port 0 picks a free port; the actual address is appended to ``bound``.
    """
    host, port = parse_endpoint(endpoint)
    with socket.create_server((host, port)) as listener:
        if bound is not None:
            bound.append(listener.getsockname()[:2])
        if ready is not None:
            ready.set()
        conn, peer = listener.accept()
        log.info("client %s connected", peer)
        with conn, conn.makefile("r", encoding="utf-8", newline="\n") as rfile, \
                conn.makefile("w", encoding="utf-8", newline="\n") as wfile:
            session = server.session()
            for line in rfile:
                try:
                    replies = session.handle(line.rstrip("\n"))
                except (OnlineError, HorizonCapError, ValueError) as exc:
                    wfile.write(f"Error: {exc}\n")
                    wfile.flush()
                    log.warning("protocol error from %s: %s", peer, exc)
                    return
                for r in replies:
                    wfile.write(r + "\n")
                wfile.flush()
                if session.stopped:
                    return
