"""Terms and atoms of the logic-program fragment.

Ground terms are plain Python values so that hashing and comparison stay
cheap during grounding and search:

* integers are ``int``
* constant symbols are ``str``
* compound terms (and atoms) are :class:`Fn`

Non-ground terms may additionally contain :class:`Var` and :class:`BinOp`.
"""

from __future__ import annotations

from typing import NamedTuple, Union

DEFAULT_DEPTH_CAP = 4


class Var(NamedTuple):
    name: str

    def __str__(self) -> str:
        return self.name


class Fn(NamedTuple):
    """A function symbol applied to arguments; atoms use the same shape."""

    name: str
    args: tuple = ()

    def __str__(self) -> str:
        return render(self)

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def signature(self) -> tuple[str, int]:
        return self.name, len(self.args)


class BinOp(NamedTuple):
    op: str  # '+' or '-'
    left: object
    right: object

    def __str__(self) -> str:
        return f"{render(self.left)}{self.op}{render(self.right)}"


Term = Union[int, str, Var, Fn, BinOp]


class TermError(ValueError):
    pass


class DepthError(TermError):
    """A term nests deeper than the configured cap."""


def render(term) -> str:
    if isinstance(term, bool):
        raise TermError(f"not a term: {term!r}")
    if isinstance(term, (int, str)):
        return str(term)
    if isinstance(term, Fn):
        if not term.args:
            return term.name
        return f"{term.name}({','.join(render(a) for a in term.args)})"
    return str(term)


def is_ground(term) -> bool:
    if isinstance(term, (int, str)):
        return True
    if isinstance(term, Fn):
        return all(is_ground(a) for a in term.args)
    return False


def variables(term, acc=None) -> set[str]:
    if acc is None:
        acc = set()
    if isinstance(term, Var):
        acc.add(term.name)
    elif isinstance(term, Fn):
        for a in term.args:
            variables(a, acc)
    elif isinstance(term, BinOp):
        variables(term.left, acc)
        variables(term.right, acc)
    return acc


def depth(term) -> int:
    """Nesting depth; constants, integers and variables have depth 0."""
    if isinstance(term, Fn):
        return 1 + max((depth(a) for a in term.args), default=0) if term.args else 0
    if isinstance(term, BinOp):
        return max(depth(term.left), depth(term.right))
    return 0


def term_key(term):
    """Total order on ground terms: integers < symbols < compound terms."""
    if isinstance(term, int):
        return (0, term)
    if isinstance(term, str):
        return (1, term)
    return (2, term.name, len(term.args), tuple(term_key(a) for a in term.args))


def atom_key(atom: Fn):
    """Sort key for atoms: predicate name first, then arguments."""
    return (atom.name, len(atom.args), tuple(term_key(a) for a in atom.args))


def substitute(term, binding: dict, params: dict | None = None):
    """Apply a variable binding (and symbolic parameters such as ``t``),
    evaluating integer arithmetic once both operands are ground."""
    if isinstance(term, Var):
        return binding.get(term.name, term)
    if isinstance(term, str):
        if params and term in params:
            return params[term]
        return term
    if isinstance(term, int):
        return term
    if isinstance(term, Fn):
        if not term.args:
            return term
        return Fn(term.name, tuple(substitute(a, binding, params) for a in term.args))
    if isinstance(term, BinOp):
        left = substitute(term.left, binding, params)
        right = substitute(term.right, binding, params)
        if isinstance(left, int) and isinstance(right, int):
            return left + right if term.op == "+" else left - right
        if is_ground(left) and is_ground(right):
            raise TermError(f"arithmetic on non-integer terms: {render(left)}{term.op}{render(right)}")
        return BinOp(term.op, left, right)
    raise TermError(f"not a term: {term!r}")


def match(pattern, value, binding: dict) -> dict | None:
    """Match a (possibly non-ground) pattern against a ground value.

    Returns an extended copy of ``binding`` or None.  Arithmetic
    subterms must already be evaluable under ``binding``.
    """
    if isinstance(pattern, Var):
        bound = binding.get(pattern.name)
        if bound is None:
            new = dict(binding)
            new[pattern.name] = value
            return new
        return binding if bound == value else None
    if isinstance(pattern, Fn):
        if not isinstance(value, Fn) or value.name != pattern.name or len(value.args) != len(pattern.args):
            return None
        for p, v in zip(pattern.args, value.args):
            binding = match(p, v, binding)
            if binding is None:
                return None
        return binding
    if isinstance(pattern, BinOp):
        ev = substitute(pattern, binding)
        if isinstance(ev, BinOp):
            raise TermError(f"unbound variable in arithmetic term {pattern}")
        return binding if ev == value else None
    # int or str; avoid 1 == True style surprises by checking type
    if type(pattern) is type(value) and pattern == value:
        return binding
    return None


def compare(op: str, left, right) -> bool:
    if op == "=":
        return left == right and type(left) is type(right)
    if op == "!=":
        return not (left == right and type(left) is type(right))
    lk, rk = term_key(left), term_key(right)
    if op == "<":
        return lk < rk
    if op == "<=":
        return lk <= rk
    if op == ">":
        return lk > rk
    if op == ">=":
        return lk >= rk
    raise TermError(f"unknown comparison {op!r}")
