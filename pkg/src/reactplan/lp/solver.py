"""Stable-model search for ground programs.

Choice rules are rewritten into normal rules over fresh complement atoms
(``a :- B, not a'.`` / ``a' :- B, not a.``); their cardinality bounds become
counting constraints checked while the search runs.  The rewritten program
is turned into its Clark completion, which drives unit propagation in a
chronological backtracking search.  Candidates found at the leaves are
accepted only if they reproduce themselves as the least model of their
reduct, so non-tight programs are handled correctly.

Decisions are taken on atoms in a fixed order and always try ``false``
before ``true``.  The order is :func:`decision_key`: predicate name first,
then an integer last argument (the time step in planning encodings), then
:func:`atom_key`; auxiliary atoms come last.  Deciding step by step keeps
the search close to forward simulation, which matters a lot for planning
problems.  Models are produced in a deterministic order.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Iterator

from .program import Choice, GroundProgram, Rule
from .terms import Fn, atom_key, render

AUX_PREFIX = "#"


class AnswerSet(frozenset):
    """A stable model (auxiliary atoms removed)."""

    def sorted(self) -> list:
        return sorted(self, key=atom_key)

    def project(self, name: str, arity: int | None = None) -> "AnswerSet":
        return AnswerSet(a for a in self if a.name == name and (arity is None or len(a.args) == arity))

    def __str__(self) -> str:
        return " ".join(render(a) for a in self.sorted())

    def __repr__(self) -> str:
        return f"AnswerSet({{{', '.join(render(a) for a in self.sorted())}}})"


def decision_key(atom: Fn) -> tuple:
    """Branching order: name, then a trailing integer step, then the atom."""
    step = atom.args[-1] if atom.args and isinstance(atom.args[-1], int) else None
    return (atom.name, step is not None, step if step is not None else 0, atom_key(atom))


def is_aux(atom: Fn) -> bool:
    return atom.name.startswith(AUX_PREFIX)


# ---------------------------------------------------------------------------
# reduct and least model


def reduct(program: GroundProgram, candidate) -> list:
    """Gelfond-Lifschitz reduct of ``program`` relative to ``candidate``.

    Integrity constraints are not part of the reduct.  A choice rule whose
    negative body is not contradicted contributes ``a :- B+, C+`` for every
    element atom ``a`` in the candidate whose negative condition holds.
    """
    m = candidate
    out = []
    for r in program.rules:
        if r.head is None or any(a in m for a in r.neg):
            continue
        pos = tuple(a for a in r.pos if isinstance(a, Fn))
        if isinstance(r.head, Choice):
            for el in r.head.elements:
                if el.atom in m and not any(a in m for a in el.cond_neg):
                    out.append(Rule(el.atom, pos + tuple(el.cond_pos)))
        else:
            out.append(Rule(r.head, pos))
    return out


def least_model(rules) -> set:
    """Least model of a definite program (forward chaining to the fixpoint)."""
    waiting: dict = defaultdict(list)
    missing = []
    model: set = set()
    queue = []
    for i, r in enumerate(rules):
        if r.neg:
            raise ValueError(f"rule is not definite: {r}")
        if r.head is None:
            missing.append(None)
            continue
        body = set(r.pos)
        missing.append(len(body))
        for a in body:
            waiting[a].append(i)
        if not body:
            queue.append(r.head)
    while queue:
        a = queue.pop()
        if a in model:
            continue
        model.add(a)
        for i in waiting.get(a, ()):
            missing[i] -= 1
            if missing[i] == 0:
                queue.append(rules[i].head)
    return model


# ---------------------------------------------------------------------------
# translation


class _Translation:
    """Normal rules, integrity constraints and counting constraints over
    integer atom ids."""

    def __init__(self, program: GroundProgram):
        self.ids: dict = {}
        self.atoms: list = [None]
        self.rules: list = []  # (head, pos ids, neg ids)
        self.constraints: list = []  # (pos ids, neg ids)
        self.cards: list = []  # (body (pos, neg), [element ids], lo, hi)
        for a in sorted(program.universe, key=atom_key):
            self.atom_id(a)
        for idx, r in enumerate(program.rules):
            self.add(idx, r)
        for a in program.assumptions:
            self.atom_id(a)

    def atom_id(self, atom: Fn) -> int:
        i = self.ids.get(atom)
        if i is None:
            i = len(self.atoms)
            self.ids[atom] = i
            self.atoms.append(atom)
        return i

    def add(self, idx: int, r: Rule) -> None:
        pos = tuple(self.atom_id(a) for a in r.pos if isinstance(a, Fn))
        neg = tuple(self.atom_id(a) for a in r.neg)
        head = r.head
        if head is None:
            self.constraints.append((pos, neg))
        elif isinstance(head, Choice):
            counted = []
            for k, el in enumerate(head.elements):
                a = self.atom_id(el.atom)
                cpos = pos + tuple(self.atom_id(c) for c in el.cond_pos)
                cneg = neg + tuple(self.atom_id(c) for c in el.cond_neg)
                comp = self.atom_id(Fn(AUX_PREFIX + "c", (idx, k, el.atom)))
                self.rules.append((a, cpos, cneg + (comp,)))
                self.rules.append((comp, cpos, cneg + (a,)))
                if el.cond_pos or el.cond_neg:
                    e = self.atom_id(Fn(AUX_PREFIX + "e", (idx, k)))
                    self.rules.append(
                        (e, (a,) + tuple(self.atom_id(c) for c in el.cond_pos),
                         tuple(self.atom_id(c) for c in el.cond_neg))
                    )
                    counted.append(e)
                else:
                    counted.append(a)
            if head.lower is not None or head.upper is not None:
                lo = head.lower if head.lower is not None else 0
                hi = head.upper if head.upper is not None else len(counted)
                self.cards.append(((pos, neg), counted, lo, hi))
        else:
            self.rules.append((self.atom_id(head), pos, neg))


# ---------------------------------------------------------------------------
# search


class _Search:
    def __init__(self, tr: _Translation, assumptions: dict):
        self.tr = tr
        natoms = len(tr.atoms) - 1
        self.natoms = natoms
        self.nvars = natoms
        body_ids: dict = {}
        bodies: list = []

        def body_var(pos, neg) -> int:
            key = (frozenset(pos), frozenset(neg))
            v = body_ids.get(key)
            if v is None:
                self.nvars += 1
                v = self.nvars
                body_ids[key] = v
                bodies.append((v, key))
            return v

        clauses: list = []
        support: dict = defaultdict(list)
        for head, pos, neg in tr.rules:
            b = body_var(pos, neg)
            clauses.append([-b, head])
            support[head].append(b)
        for pos, neg in tr.constraints:
            clauses.append([-body_var(pos, neg)])
        self.cards = []
        for (pos, neg), elems, lo, hi in tr.cards:
            self.cards.append((body_var(pos, neg), elems, lo, hi))
        for v, (pos, neg) in bodies:
            lits = [p for p in pos] + [-n for n in neg]
            for lit in lits:
                clauses.append([-v, lit])
            clauses.append([v] + [-lit for lit in lits])
        for a in range(1, natoms + 1):
            clauses.append([-a] + support.get(a, []))
        for atom, value in assumptions.items():
            a = tr.ids[atom]
            clauses.append([a if value else -a])

        self.value = [0] * (self.nvars + 1)
        self.trail: list = []
        self.qhead = 0
        self.watches: list = [[] for _ in range(2 * (self.nvars + 1))]
        self.units: list = []
        self.empty = False
        self.clauses: list = []
        for c in clauses:
            c = list(dict.fromkeys(c))
            if any(-lit in c for lit in c):
                continue
            if not c:
                self.empty = True
            elif len(c) == 1:
                self.units.append(c[0])
            else:
                self.clauses.append(c)
                ci = len(self.clauses) - 1
                self.watches[self._idx(-c[0])].append(ci)
                self.watches[self._idx(-c[1])].append(ci)
        self.card_watch: dict = defaultdict(list)
        for k, (b, elems, lo, hi) in enumerate(self.cards):
            for v in {b, *elems}:
                self.card_watch[v].append(k)

        # least-model check data over the rewritten normal rules
        self.lm_waiting: dict = defaultdict(list)
        self.lm_rules = tr.rules
        for i, (head, pos, neg) in enumerate(tr.rules):
            for p in set(pos):
                self.lm_waiting[p].append(i)

        keyed = [(is_aux(tr.atoms[a]), decision_key(tr.atoms[a]) if not is_aux(tr.atoms[a]) else (), a)
                 for a in range(1, natoms + 1)]
        self.order = [a for *_k, a in sorted(keyed, key=lambda k: (k[0], k[1], k[2]))]

    @staticmethod
    def _idx(lit: int) -> int:
        # watch list triggered when ``lit`` becomes true
        return 2 * lit if lit > 0 else -2 * lit + 1

    def assign(self, lit: int) -> bool:
        v = lit if lit > 0 else -lit
        want = 1 if lit > 0 else -1
        cur = self.value[v]
        if cur:
            return cur == want
        self.value[v] = want
        self.trail.append(lit)
        return True

    def undo(self, size: int) -> None:
        trail, value = self.trail, self.value
        while len(trail) > size:
            lit = trail.pop()
            value[lit if lit > 0 else -lit] = 0
        self.qhead = min(self.qhead, size)

    def lit_value(self, lit: int) -> int:
        v = self.value[lit if lit > 0 else -lit]
        return v if lit > 0 else -v

    def propagate(self) -> bool:
        value = self.value
        clauses = self.clauses
        watches = self.watches
        trail = self.trail
        while self.qhead < len(trail):
            lit = trail[self.qhead]
            self.qhead += 1
            # clauses watching -lit (now false)
            wl = watches[self._idx(lit)]
            false_lit = -lit
            i = 0
            while i < len(wl):
                ci = wl[i]
                c = clauses[ci]
                if c[0] == false_lit:
                    c[0], c[1] = c[1], c[0]
                other = c[0]
                ov = value[other if other > 0 else -other]
                if (ov == 1 and other > 0) or (ov == -1 and other < 0):
                    i += 1
                    continue
                found = False
                for k in range(2, len(c)):
                    l2 = c[k]
                    v2 = value[l2 if l2 > 0 else -l2]
                    if v2 == 0 or (v2 == 1) == (l2 > 0):
                        c[1], c[k] = l2, c[1]
                        watches[self._idx(-l2)].append(ci)
                        wl[i] = wl[-1]
                        wl.pop()
                        found = True
                        break
                if found:
                    continue
                if ov == 0:
                    self.assign(other)
                    i += 1
                else:
                    return False
            v = lit if lit > 0 else -lit
            for k in self.card_watch.get(v, ()):
                if not self.check_card(k):
                    return False
        return True

    def check_card(self, k: int) -> bool:
        b, elems, lo, hi = self.cards[k]
        value = self.value
        t = u = 0
        for e in elems:
            x = value[e]
            if x == 1:
                t += 1
            elif x == 0:
                u += 1
        bv = value[b]
        if bv == 1:
            if t > hi or t + u < lo:
                return False
            if u and t == hi:
                for e in elems:
                    if value[e] == 0:
                        self.assign(-e)
            elif u and t + u == lo:
                for e in elems:
                    if value[e] == 0:
                        self.assign(e)
        elif bv == 0 and (t > hi or t + u < lo):
            self.assign(-b)
        return True

    def stable(self) -> bool:
        value = self.value
        missing = []
        queue = []
        for i, (head, pos, neg) in enumerate(self.lm_rules):
            if any(value[n] == 1 for n in neg):
                missing.append(-1)
                continue
            m = len(set(pos))
            missing.append(m)
            if m == 0:
                queue.append(head)
        derived = set()
        while queue:
            a = queue.pop()
            if a in derived:
                continue
            derived.add(a)
            for i in self.lm_waiting.get(a, ()):
                if missing[i] > 0:
                    missing[i] -= 1
                    if missing[i] == 0:
                        queue.append(self.lm_rules[i][0])
        for a in range(1, self.natoms + 1):
            if (value[a] == 1) != (a in derived):
                return False
        return True

    def model(self) -> AnswerSet:
        atoms = self.tr.atoms
        return AnswerSet(atoms[a] for a in range(1, self.natoms + 1) if self.value[a] == 1 and not is_aux(atoms[a]))

    def run(self) -> Iterator[AnswerSet]:
        if self.empty:
            return
        for u in self.units:
            if not self.assign(u):
                return
        if not self.propagate():
            return
        for k in range(len(self.cards)):
            if not self.check_card(k) or not self.propagate():
                return
        order = self.order
        decisions: list = []  # [trail size, var, order position, tried_true]
        pos = 0
        while True:
            while pos < len(order) and self.value[order[pos]] != 0:
                pos += 1
            if pos == len(order):
                if self.stable():
                    yield self.model()
                ok = False
            else:
                v = order[pos]
                decisions.append([len(self.trail), v, pos, False])
                ok = self.assign(-v) and self.propagate()
            while not ok:
                while decisions and decisions[-1][3]:
                    decisions.pop()
                if not decisions:
                    return
                d = decisions[-1]
                self.undo(d[0])
                d[3] = True
                pos = d[2]
                ok = self.assign(d[1]) and self.propagate()


def solve(program: GroundProgram, assumptions: dict | None = None) -> Iterator[AnswerSet]:
    """Yield the stable models of ``program`` consistent with ``assumptions``.

    ``assumptions`` maps ground atoms to required truth values and is merged
    with ``program.assumptions``.
    """
    merged = dict(program.assumptions)
    if assumptions:
        merged.update(assumptions)
    if merged and not set(merged) <= set(program.universe):
        program = GroundProgram(program.rules, set(program.universe) | set(merged), program.assumptions)
    tr = _Translation(program)
    yield from _Search(tr, merged).run()


def first_model(program: GroundProgram, assumptions: dict | None = None) -> AnswerSet | None:
    return next(solve(program, assumptions), None)
