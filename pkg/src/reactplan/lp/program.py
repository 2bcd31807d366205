"""Rules, program parts and ground programs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .terms import Fn, render, variables


class Comparison(NamedTuple):
    op: str
    left: object
    right: object

    def __str__(self) -> str:
        return f"{render(self.left)}{self.op}{render(self.right)}"


class ChoiceElement(NamedTuple):
    atom: Fn
    cond_pos: tuple = ()
    cond_neg: tuple = ()

    def __str__(self) -> str:
        if not self.cond_pos and not self.cond_neg:
            return render(self.atom)
        cond = [render(a) for a in self.cond_pos] + [f"not {render(a)}" for a in self.cond_neg]
        return f"{render(self.atom)}:{','.join(cond)}"


class Choice(NamedTuple):
    elements: tuple
    lower: object = None
    upper: object = None

    def __str__(self) -> str:
        lo = f"{render(self.lower)} " if self.lower is not None else ""
        hi = f" {render(self.upper)}" if self.upper is not None else ""
        return f"{lo}{{ {'; '.join(str(e) for e in self.elements)} }}{hi}"


class Rule(NamedTuple):
    """``head :- pos, not neg.``  A ``None`` head is an integrity constraint.

    ``pos`` holds atoms and :class:`Comparison` builtins, ``neg`` atoms only.
    The same class is used for ground rules.
    """

    head: object  # Fn | Choice | None
    pos: tuple = ()
    neg: tuple = ()

    @property
    def is_constraint(self) -> bool:
        return self.head is None

    @property
    def is_choice(self) -> bool:
        return isinstance(self.head, Choice)

    @property
    def is_fact(self) -> bool:
        return isinstance(self.head, Fn) and not self.pos and not self.neg

    def __str__(self) -> str:
        head = "" if self.head is None else (str(self.head) if self.is_choice else render(self.head))
        body = [str(b) if isinstance(b, Comparison) else render(b) for b in self.pos]
        body += [f"not {render(a)}" for a in self.neg]
        if not body:
            return f"{head}."
        return f"{head} :- {', '.join(body)}." if head else f":- {', '.join(body)}."


def rule_variables(rule: Rule) -> tuple[set, set]:
    """Variables bound by positive atoms, and all variables needing a binding."""
    bound: set = set()
    for b in rule.pos:
        if isinstance(b, Fn):
            variables(b, bound)
    needed: set = set()
    for b in rule.pos:
        if isinstance(b, Comparison):
            variables(b.left, needed)
            variables(b.right, needed)
    for a in rule.neg:
        variables(a, needed)
    head = rule.head
    if isinstance(head, Fn):
        variables(head, needed)
    elif isinstance(head, Choice):
        for bound_term in (head.lower, head.upper):
            if bound_term is not None:
                variables(bound_term, needed)
    return bound, needed


class SafetyError(ValueError):
    def __init__(self, variable: str, rule: Rule, where: str = ""):
        self.variable = variable
        self.rule = rule
        super().__init__(f"unsafe variable {variable} in rule '{rule}'{where}")


def check_safety(rule: Rule) -> None:
    bound, needed = rule_variables(rule)
    for v in sorted(needed - bound):
        raise SafetyError(v, rule)
    if isinstance(rule.head, Choice):
        for el in rule.head.elements:
            local = set(bound)
            for a in el.cond_pos:
                variables(a, local)
            needed_el = variables(el.atom)
            for a in el.cond_neg:
                variables(a, needed_el)
            for v in sorted(needed_el - local):
                raise SafetyError(v, rule)


@dataclass
class ProgramPart:
    kind: str  # 'base' | 'cumulative' | 'volatile'
    parameter: Optional[str] = None
    rules: list = field(default_factory=list)


@dataclass
class ReactiveProgram:
    base: ProgramPart = field(default_factory=lambda: ProgramPart("base"))
    cumulative: ProgramPart = field(default_factory=lambda: ProgramPart("cumulative", "t"))
    volatile: ProgramPart = field(default_factory=lambda: ProgramPart("volatile", "t"))
    externals: set = field(default_factory=set)  # {(pred, arity)}

    def parts(self):
        return self.base, self.cumulative, self.volatile

    def extend(self, other: "ReactiveProgram") -> "ReactiveProgram":
        """Concatenate another program (e.g. instance facts) onto this one."""
        for mine, theirs in zip(self.parts(), other.parts()):
            if theirs.rules and mine.parameter != theirs.parameter and mine.kind != "base":
                if mine.rules:
                    raise ValueError(f"conflicting {mine.kind} parameters: {mine.parameter} vs {theirs.parameter}")
                mine.parameter = theirs.parameter
            mine.rules.extend(theirs.rules)
        self.externals |= other.externals
        return self


@dataclass
class GroundProgram:
    """Variable-free rules plus the atoms they mention.

    ``assumptions`` maps atoms to the truth value they are fixed to.
    """

    rules: list = field(default_factory=list)
    universe: set = field(default_factory=set)
    assumptions: dict = field(default_factory=dict)

    @classmethod
    def from_rules(cls, rules, assumptions=None) -> "GroundProgram":
        prog = cls(list(rules), set(), dict(assumptions or {}))
        for r in prog.rules:
            prog.universe |= rule_atoms(r)
        prog.universe |= set(prog.assumptions)
        return prog


def rule_atoms(rule: Rule) -> set:
    atoms = {a for a in rule.pos if isinstance(a, Fn)}
    atoms.update(rule.neg)
    head = rule.head
    if isinstance(head, Fn):
        atoms.add(head)
    elif isinstance(head, Choice):
        for el in head.elements:
            atoms.add(el.atom)
            atoms.update(el.cond_pos)
            atoms.update(el.cond_neg)
    return atoms
