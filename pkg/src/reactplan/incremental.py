"""Incremental grounding and solving over a growing horizon.

The base part is grounded once, the cumulative part once per step and
kept, the volatile part is instantiated for the queried horizon only.
Online facts and constraints are installed either persistently or for a
single step.  New online facts can make further instances of already
grounded rules applicable; those are added by a semi-naive pass over every
grounded layer.
"""

from __future__ import annotations

import logging

from .lp.grounder import ChoiceMemo, Domain, ground_part
from .lp.program import Choice, GroundProgram, ReactiveProgram
from .lp.solver import AnswerSet, first_model
from .lp.terms import DEFAULT_DEPTH_CAP, Fn

log = logging.getLogger(__name__)

DEFAULT_HORIZON_CAP = 30


class HorizonCapError(RuntimeError):
    """No model exists up to the horizon cap (or the cap was requested)."""

    def __init__(self, cap: int, lower: int | None = None):
        self.cap = cap
        self.lower = lower
        msg = f"horizon cap {cap} exceeded"
        if lower is not None:
            msg = f"unsatisfiable within horizon cap {cap} (searched from {lower})"
        super().__init__(msg)


class IncrementalState:
    def __init__(self, program: ReactiveProgram, horizon_cap: int = DEFAULT_HORIZON_CAP,
                 depth_cap: int = DEFAULT_DEPTH_CAP):
        self.program = program
        self.horizon_cap = horizon_cap
        self.depth_cap = depth_cap
        self.domain = Domain()
        self.grounded_horizon = 0
        self.layers: dict[int, dict] = {}  # 0 is the base part
        self._memos: dict[int, ChoiceMemo] = {}
        self.persistent: dict = {}  # ground rule -> step fed
        self.volatile: list = []  # (step, ground rule)
        self.ground_calls: dict[int, int] = {}  # layer -> number of full instantiations
        self._body_signatures = (_body_signatures(program.base), _body_signatures(program.cumulative))
        self._ground_layer(0)

    # -- grounding
    def _part(self, layer: int):
        return self.program.base if layer == 0 else self.program.cumulative

    def _store(self, layer: int, rules) -> None:
        store = self.layers.setdefault(layer, {})
        for r in rules:
            store.setdefault(r, None)
        memo = self._memos[layer]
        while memo.superseded:
            store.pop(memo.superseded.pop(), None)

    def _ground_layer(self, layer: int) -> None:
        self._memos.setdefault(layer, ChoiceMemo())
        mark = len(self.domain)
        rules = ground_part(self._part(layer), max(layer, 1), self.domain, depth_cap=self.depth_cap,
                            memo=self._memos[layer])
        self.ground_calls[layer] = self.ground_calls.get(layer, 0) + 1
        self._store(layer, rules)
        new = self.domain.since(mark)
        if new and layer > 0:
            # atoms of a later layer may extend rules of earlier ones
            self._propagate(new, skip=layer)

    def _propagate(self, atoms, skip: int | None = None) -> None:
        pending = list(atoms)
        while pending:
            mark = len(self.domain)
            for layer in range(0, self.grounded_horizon + 1):
                if layer == skip:
                    continue
                sigs = self._body_signatures[0 if layer == 0 else 1]
                delta = [a for a in pending if (a.name, len(a.args)) in sigs]
                if not delta:
                    continue
                rules = ground_part(self._part(layer), max(layer, 1), self.domain, delta=delta,
                                    depth_cap=self.depth_cap, memo=self._memos[layer])
                self._store(layer, rules)
            pending = self.domain.since(mark)
            skip = None

    def advance_to(self, k: int) -> "IncrementalState":
        """Ground the cumulative part for every step up to ``k``."""
        if k > self.horizon_cap:
            raise HorizonCapError(self.horizon_cap)
        while self.grounded_horizon < k:
            self.grounded_horizon += 1
            self._ground_layer(self.grounded_horizon)
        return self

    # -- online input
    def add_online(self, rules, step: int, volatile: bool = False) -> None:
        """Install ground facts / constraints fed at ``step``."""
        mark = len(self.domain)
        for r in rules:
            if volatile:
                self.volatile.append((step, r))
            else:
                self.persistent.setdefault(r, step)
            if isinstance(r.head, Fn):
                self.domain.add(r.head)
        new = self.domain.since(mark)
        if new:
            self._propagate(new)

    # -- solving
    def program_at(self, k: int) -> GroundProgram:
        if k > self.grounded_horizon:
            raise ValueError(f"horizon {k} not grounded (grounded up to {self.grounded_horizon})")
        rules: list = []
        for layer in range(0, k + 1):
            rules.extend(self.layers.get(layer, ()))
        rules.extend(self.persistent)
        rules.extend(r for step, r in self.volatile if step == k)
        scratch = self.domain.copy()
        rules.extend(ground_part(self.program.volatile, max(k, 1), scratch, depth_cap=self.depth_cap))
        return GroundProgram.from_rules(rules)

    def solve_at_horizon(self, k: int) -> AnswerSet | None:
        return first_model(self.program_at(k))

    def solve_min_horizon(self, lower: int) -> tuple[int, AnswerSet]:
        """Smallest horizon ``h >= lower`` admitting a model, with that model."""
        if lower < 1:
            raise ValueError("lower bound must be >= 1")
        for h in range(lower, self.horizon_cap + 1):
            self.advance_to(h)
            model = self.solve_at_horizon(h)
            if model is not None:
                log.debug("model at horizon %d (lower bound %d)", h, lower)
                return h, model
        raise HorizonCapError(self.horizon_cap, lower)


def _body_signatures(part) -> set:
    sigs = set()
    for r in part.rules:
        for b in r.pos:
            if isinstance(b, Fn):
                sigs.add((b.name, len(b.args)))
        if isinstance(r.head, Choice):
            for el in r.head.elements:
                sigs.update((a.name, len(a.args)) for a in el.cond_pos + el.cond_neg)
    return sigs
