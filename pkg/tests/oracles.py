"""Brute-force reference implementations used by the tests.

Nothing here imports the solver: stable models are found by enumerating
candidate sets as bitmasks and checking them against the definition.
"""

from __future__ import annotations

import itertools
import random

from reactplan.lp.program import Choice, ChoiceElement, GroundProgram, Rule
from reactplan.lp.terms import Fn


def atom(i: int) -> Fn:
    return Fn(f"a{i}")


def random_ground_program(rng: random.Random, max_atoms: int = 12, max_rules: int = 20) -> GroundProgram:
    n = rng.randint(1, max_atoms)
    atoms = [atom(i) for i in range(n)]
    rules = []
    for _ in range(rng.randint(1, max_rules)):
        pos = tuple(rng.sample(atoms, rng.randint(0, min(2, n))))
        neg = tuple(rng.sample(atoms, rng.randint(0, min(2, n))))
        kind = rng.random()
        if kind < 0.12:
            head = None
            if not pos and not neg:
                neg = (rng.choice(atoms),)
        elif kind < 0.35:
            elems = rng.sample(atoms, rng.randint(1, min(3, n)))
            lo = rng.choice([None, None, 0, 1, 2])
            hi = rng.choice([None, None, 1, 2, 3])
            if lo is not None and hi is not None and hi < lo:
                lo, hi = hi, lo
            head = Choice(tuple(ChoiceElement(a) for a in elems), lo, hi)
        else:
            head = rng.choice(atoms)
        rules.append(Rule(head, pos, neg))
    return GroundProgram.from_rules(rules)


def _compile(program: GroundProgram):
    """Rules as bitmasks over the sorted universe."""
    names = sorted(program.universe, key=lambda a: (a.name, len(a.args), tuple(map(str, a.args))))
    bit = {a: 1 << i for i, a in enumerate(names)}

    def mask(atoms):
        m = 0
        for a in atoms:
            m |= bit[a]
        return m

    normal, choices, constraints = [], [], []
    for r in program.rules:
        pos, neg = mask(r.pos), mask(r.neg)
        if r.head is None:
            constraints.append((pos, neg))
        elif isinstance(r.head, Choice):
            if any(e.cond_pos or e.cond_neg for e in r.head.elements):
                raise ValueError("oracle handles unconditional choice elements only")
            heads = [bit[e.atom] for e in r.head.elements]
            choices.append((tuple(dict.fromkeys(heads)), pos, neg, r.head.lower, r.head.upper))
        else:
            normal.append((bit[r.head], pos, neg))
    return names, normal, choices, constraints


def _least_model(M: int, normal, choices) -> int:
    # reduct w.r.t. M: drop rules whose negative body meets M, keep chosen atoms only
    rules = [(h, pos) for h, pos, neg in normal if not neg & M]
    for heads, pos, neg, _, _ in choices:
        if not neg & M:
            rules.extend((h, pos) for h in heads if h & M)
    L = 0
    changed = True
    while changed:
        changed = False
        for h, pos in rules:
            if pos & L == pos and not h & L:
                L |= h
                changed = True
    return L


def stable_models(program: GroundProgram) -> set:
    """All stable models as frozensets of atoms, by subset enumeration."""
    names, normal, choices, constraints = _compile(program)
    heads = 0
    for h, _, _ in normal:
        heads |= h
    for hs, *_ in choices:
        for h in hs:
            heads |= h
    head_bits = [1 << i for i in range(len(names)) if heads >> i & 1]
    models = set()
    for k in range(len(head_bits) + 1):
        for combo in itertools.combinations(head_bits, k):
            M = sum(combo)
            if any(pos & M == pos and not neg & M for pos, neg in constraints):
                continue
            ok = True
            for hs, pos, neg, lo, hi in choices:
                if pos & M == pos and not neg & M:
                    count = sum(1 for h in hs if h & M)
                    if (lo is not None and count < lo) or (hi is not None and count > hi):
                        ok = False
                        break
            if ok and _least_model(M, normal, choices) == M:
                models.add(frozenset(a for i, a in enumerate(names) if M >> i & 1))
    return models


def least_model_naive(rules) -> set:
    """Least model of a positive program by repeated full passes."""
    model: set = set()
    while True:
        new = {r.head for r in rules if r.head is not None and all(p in model for p in r.pos)}
        if new <= model:
            return model
        model |= new


def naive_ground(rules, constants) -> list:
    """Every instance of ``rules`` over ``constants`` (no pruning at all)."""
    from reactplan.lp.program import Comparison, rule_variables
    from reactplan.lp.terms import compare, substitute

    out = []
    for r in rules:
        bound, needed = rule_variables(r)
        names = sorted(bound | needed)
        for values in itertools.product(constants, repeat=len(names)):
            b = dict(zip(names, values))
            pos, keep = [], True
            for lit in r.pos:
                if isinstance(lit, Comparison):
                    if not compare(lit.op, substitute(lit.left, b), substitute(lit.right, b)):
                        keep = False
                        break
                else:
                    pos.append(substitute(lit, b))
            if not keep:
                continue
            neg = tuple(substitute(a, b) for a in r.neg)
            head = substitute(r.head, b) if isinstance(r.head, Fn) else None
            out.append(Rule(head, tuple(pos), neg))
    return out
