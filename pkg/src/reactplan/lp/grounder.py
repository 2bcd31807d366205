"""Naive bottom-up instantiation with a semi-naive delta.

A rule is instantiated by joining its positive body atoms against the set
of atoms that may possibly be derived (the domain).  Negative literals are
kept as they are: the domain can still grow when online facts arrive, so
dropping a negative literal whose atom is not (yet) derivable would be
unsound.
"""

from __future__ import annotations

from collections import defaultdict

from .program import Choice, ChoiceElement, Comparison, Rule
from .terms import (
    DEFAULT_DEPTH_CAP,
    BinOp,
    Fn,
    TermError,
    compare,
    depth,
    is_ground,
    match,
    render,
    substitute,
    variables,
)


class GroundingError(ValueError):
    pass


class Domain:
    """Set of ground atoms indexed by predicate signature."""

    def __init__(self, atoms=()):
        self._atoms: set = set()
        self._index: dict = defaultdict(list)
        self._order: list = []
        for a in atoms:
            self.add(a)

    def add(self, atom: Fn) -> bool:
        if atom in self._atoms:
            return False
        self._atoms.add(atom)
        self._order.append(atom)
        self._index[(atom.name, len(atom.args))].append(atom)
        return True

    def since(self, mark: int) -> list:
        """Atoms added after ``len(domain)`` was ``mark``."""
        return self._order[mark:]

    def update(self, atoms) -> set:
        return {a for a in atoms if self.add(a)}

    def by_signature(self, name: str, arity: int):
        return self._index.get((name, arity), ())

    def copy(self) -> "Domain":
        d = Domain()
        d._atoms = set(self._atoms)
        d._order = list(self._order)
        d._index = defaultdict(list, {k: list(v) for k, v in self._index.items()})
        return d

    def __contains__(self, atom) -> bool:
        return atom in self._atoms

    def __iter__(self):
        return iter(self._atoms)

    def __len__(self) -> int:
        return len(self._atoms)

    def as_set(self) -> frozenset:
        return frozenset(self._atoms)


def _plan_body(pos: tuple) -> list:
    """Order positive literals so that arithmetic arguments and comparisons
    only run once their variables are bound."""
    atoms = [b for b in pos if isinstance(b, Fn)]
    comps = [b for b in pos if isinstance(b, Comparison)]
    bound: set = set()
    plan = []
    pending = list(atoms)
    while pending:
        for i, a in enumerate(pending):
            arith: set = set()
            for arg in a.args:
                _arith_vars(arg, arith)
            if arith <= bound:
                break
        else:
            raise GroundingError(f"cannot order body literals; unbound arithmetic in {render(pending[0])}")
        a = pending.pop(i)
        plan.append(a)
        variables(a, bound)
        ready = [c for c in comps if (variables(c.left) | variables(c.right)) <= bound]
        for c in ready:
            comps.remove(c)
            plan.append(c)
    if comps:
        plan.extend(comps)
    return plan


def _arith_vars(term, acc: set) -> None:
    if isinstance(term, BinOp):
        variables(term, acc)
    elif isinstance(term, Fn):
        for a in term.args:
            _arith_vars(a, acc)


class _Instantiator:
    def __init__(self, domain: Domain, depth_cap: int):
        self.domain = domain
        self.depth_cap = depth_cap

    def joins(self, plan: list, binding: dict, delta_pos: int | None = None, delta: Domain | None = None):
        yield from self._join(plan, 0, binding, delta_pos, delta)

    def _join(self, plan, k, binding, delta_pos, delta):
        if k == len(plan):
            yield binding
            return
        lit = plan[k]
        if isinstance(lit, Comparison):
            left = substitute(lit.left, binding)
            right = substitute(lit.right, binding)
            if not (is_ground(left) and is_ground(right)):
                raise GroundingError(f"unbound variable in comparison {lit}")
            if compare(lit.op, left, right):
                yield from self._join(plan, k + 1, binding, delta_pos, delta)
            return
        source = delta if (delta_pos == k) else self.domain
        pattern = substitute(lit, binding)
        if is_ground(pattern):
            if pattern in source:
                yield from self._join(plan, k + 1, binding, delta_pos, delta)
            return
        for cand in source.by_signature(pattern.name, len(pattern.args)):
            b = match(pattern, cand, binding)
            if b is not None:
                yield from self._join(plan, k + 1, b, delta_pos, delta)

    def ground_atom(self, atom: Fn, binding: dict) -> Fn:
        try:
            g = substitute(atom, binding)
        except TermError as exc:
            raise GroundingError(str(exc)) from exc
        if not is_ground(g):
            raise GroundingError(f"non-ground atom {render(g)} after instantiation")
        for arg in g.args:
            if depth(arg) > self.depth_cap:
                raise GroundingError(
                    f"term depth cap {self.depth_cap} exceeded by {render(g)} (runaway function symbols?)"
                )
        return g


def _bind_params(rule: Rule, params: dict) -> Rule:
    if not params:
        return rule
    sub = lambda t: substitute(t, {}, params)  # noqa: E731
    head = rule.head
    if isinstance(head, Fn):
        head = sub(head)
    elif isinstance(head, Choice):
        head = Choice(
            tuple(
                ChoiceElement(sub(e.atom), tuple(sub(a) for a in e.cond_pos), tuple(sub(a) for a in e.cond_neg))
                for e in head.elements
            ),
            None if head.lower is None else sub(head.lower),
            None if head.upper is None else sub(head.upper),
        )
    pos = tuple(Comparison(b.op, sub(b.left), sub(b.right)) if isinstance(b, Comparison) else sub(b) for b in rule.pos)
    neg = tuple(sub(a) for a in rule.neg)
    return Rule(head, pos, neg)


def _instantiate(rule: Rule, inst: _Instantiator, delta: Domain | None):
    plan = _plan_body(rule.pos)
    atom_positions = [i for i, lit in enumerate(plan) if isinstance(lit, Fn)]
    if delta is None:
        runs = [(None, None)]
    else:
        runs = [(i, delta) for i in atom_positions]
    for delta_pos, d in runs:
        for binding in inst.joins(plan, {}, delta_pos, d):
            pos = tuple(inst.ground_atom(a, binding) for a in plan if isinstance(a, Fn))
            neg = tuple(inst.ground_atom(a, binding) for a in rule.neg)
            head = rule.head
            if head is None:
                yield binding, Rule(None, pos, neg)
            elif isinstance(head, Fn):
                yield binding, Rule(inst.ground_atom(head, binding), pos, neg)
            else:
                yield binding, Rule(_ground_choice(head, binding, inst), pos, neg)


def _ground_choice(head: Choice, binding: dict, inst: _Instantiator) -> Choice:
    elements = []
    seen = set()
    for el in head.elements:
        plan = _plan_body(el.cond_pos)
        for b in inst.joins(plan, binding):
            g = ChoiceElement(
                inst.ground_atom(el.atom, b),
                tuple(inst.ground_atom(a, b) for a in el.cond_pos),
                tuple(inst.ground_atom(a, b) for a in el.cond_neg),
            )
            if g not in seen:
                seen.add(g)
                elements.append(g)

    def bound(t):
        if t is None:
            return None
        v = substitute(t, binding)
        if not isinstance(v, int):
            raise GroundingError(f"choice bound {render(v)} is not an integer")
        return v

    return Choice(tuple(elements), bound(head.lower), bound(head.upper))


def head_atoms(rule: Rule):
    if isinstance(rule.head, Fn):
        return (rule.head,)
    if isinstance(rule.head, Choice):
        return tuple(e.atom for e in rule.head.elements)
    return ()


def _condition_signatures(rule: Rule) -> set:
    if not isinstance(rule.head, Choice):
        return set()
    return {(a.name, len(a.args)) for el in rule.head.elements for a in el.cond_pos + el.cond_neg}


class ChoiceMemo:
    """Remembers choice-rule instances whose elements depend on conditions.

    When atoms matching a condition show up later, the instance is
    re-expanded; the outdated ground rule is listed in ``superseded`` so that
    callers holding on to earlier results can drop it.
    """

    def __init__(self):
        self.slots: dict = {}
        self.superseded: list = []


def ground_rules(rules, universe: Domain, params: dict | None = None, delta=None,
                 depth_cap: int = DEFAULT_DEPTH_CAP, memo: ChoiceMemo | None = None) -> list:
    """Instantiate ``rules`` to a fixpoint over ``universe`` (updated in place).

    With ``delta`` only instantiations using at least one atom of ``delta`` are
    produced in the first round (semi-naive evaluation).
    """
    bound_rules = [_bind_params(r, params or {}) for r in rules]
    memo = memo if memo is not None else ChoiceMemo()
    cond_sigs = {r: _condition_signatures(r) for r in bound_rules}
    out: list = []
    seen: set = set()
    if delta is not None and not isinstance(delta, Domain):
        delta = Domain(delta)
    while True:
        inst = _Instantiator(universe, depth_cap)
        fresh: list = []
        for r in bound_rules:
            if delta is not None and not any(isinstance(b, Fn) for b in r.pos):
                continue
            for binding, g in _instantiate(r, inst, delta):
                if cond_sigs[r]:
                    slot = (r, g.pos, g.neg)
                    if slot in memo.slots:
                        continue
                    memo.slots[slot] = (binding, g)
                if g not in seen:
                    seen.add(g)
                    out.append(g)
                    fresh.extend(head_atoms(g))
        if delta is not None:
            touched = {sig for sig in delta._index}
            for slot, (binding, old) in list(memo.slots.items()):
                r = slot[0]
                if r not in cond_sigs or not (cond_sigs[r] & touched):
                    continue
                g = Rule(_ground_choice(r.head, binding, inst), old.pos, old.neg)
                if g == old:
                    continue
                memo.slots[slot] = (binding, g)
                memo.superseded.append(old)
                if old in seen:
                    out.remove(old)
                seen.add(g)
                out.append(g)
                fresh.extend(head_atoms(g))
        new = Domain()
        for a in fresh:
            if universe.add(a):
                new.add(a)
        if not len(new):
            return out
        delta = new


def ground_part(part, step: int, universe: Domain, delta=None, depth_cap: int = DEFAULT_DEPTH_CAP,
                memo: ChoiceMemo | None = None) -> list:
    """Ground one program part; the step parameter (if any) is replaced by ``step``."""
    if part.kind != "base" and step < 1:
        raise GroundingError(f"{part.kind} part needs step >= 1, got {step}")
    params = {part.parameter: step} if part.kind != "base" and part.parameter else None
    return ground_rules(part.rules, universe, params, delta, depth_cap, memo)
