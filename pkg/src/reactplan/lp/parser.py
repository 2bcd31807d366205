"""Recursive-descent parser for reactive logic programs.

Grammar (whitespace and ``%`` comments ignored)::

    program    ::= { directive | rule }
    directive  ::= "#base" "." | "#cumulative" IDENT "." | "#volatile" IDENT "."
                 | "#external" IDENT "/" INT "."
    rule       ::= head [ ":-" body ] "." | ":-" body "."
    head       ::= atom | [ term ] "{" element { ";" element } "}" [ term ]
    element    ::= atom [ ":" literal { "," literal } ]
    body       ::= literal { "," literal }
    literal    ::= [ "not" ] atom | term CMP term
    atom       ::= IDENT [ "(" term { "," term } ")" ]
    term       ::= primary { ("+" | "-") primary }
    primary    ::= INT | "-" INT | VARIABLE | "_" | IDENT [ "(" term { "," term } ")" ] | "(" term ")"
    CMP        ::= "=" | "!=" | "<" | "<=" | ">" | ">="

Rules before any section directive belong to the base part.  Inside a
``#cumulative t.`` or ``#volatile t.`` section the identifier ``t`` is the
step parameter.
"""

from __future__ import annotations

import re
from typing import NamedTuple

from .program import (
    Choice,
    ChoiceElement,
    Comparison,
    ReactiveProgram,
    Rule,
    SafetyError,
    check_safety,
)
from .terms import DEFAULT_DEPTH_CAP, BinOp, Fn, Var, depth

__all__ = ["ParseError", "Parser", "parse_program", "parse_rules", "parse_atom"]


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"{line}:{column}: {message}")


class Token(NamedTuple):
    kind: str
    text: str
    line: int
    column: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>%[^\n]*)
  | (?P<directive>\#[a-z]+)
  | (?P<if>:-)
  | (?P<cmp>!=|<=|>=|<|>|=)
  | (?P<int>[0-9]+)
  | (?P<var>[A-Z][A-Za-z0-9_']*)
  | (?P<anon>_(?![A-Za-z0-9_']))
  | (?P<ident>_*[a-z][A-Za-z0-9_']*)
  | (?P<punct>[().,;:{}/+\-])
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        chunk = m.group()
        if kind not in ("ws", "comment"):
            if kind == "punct":
                kind = chunk
            elif kind == "if":
                kind = ":-"
            tokens.append(Token(kind, chunk, line, pos - line_start + 1))
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class Parser:
    def __init__(self, text: str, depth_cap: int = DEFAULT_DEPTH_CAP):
        self.tokens = tokenize(text)
        self.i = 0
        self.depth_cap = depth_cap
        self._anon = 0

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def expect(self, kind: str, what: str | None = None) -> Token:
        tok = self.tok
        if tok.kind != kind:
            found = tok.text or "end of input"
            raise ParseError(f"expected {what or repr(kind)}, found {found!r}", tok.line, tok.column)
        return self.advance()

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.line, tok.column)

    def at_end(self) -> bool:
        return self.tok.kind == "eof"

    # -- program level
    def parse_program(self) -> ReactiveProgram:
        prog = ReactiveProgram()
        current = prog.base
        while not self.at_end():
            tok = self.tok
            if tok.kind == "directive":
                current = self.parse_directive(prog, current)
            else:
                start = self.tok
                rule = self.parse_rule()
                self.check(rule, start)
                current.rules.append(rule)
        return prog

    def parse_directive(self, prog: ReactiveProgram, current):
        tok = self.advance()
        name = tok.text
        if name == "#base":
            self.expect(".", "'.'")
            return prog.base
        if name in ("#cumulative", "#volatile"):
            param = self.expect("ident", "step parameter").text
            self.expect(".", "'.'")
            part = prog.cumulative if name == "#cumulative" else prog.volatile
            if part.rules and part.parameter != param:
                raise self.error(f"{name} parameter changed from {part.parameter} to {param}", tok)
            part.parameter = param
            return part
        if name == "#external":
            pred = self.expect("ident", "predicate name").text
            self.expect("/", "'/'")
            arity = int(self.expect("int", "arity").text)
            self.expect(".", "'.'")
            prog.externals.add((pred, arity))
            return current
        raise self.error(f"unknown directive {name}", tok)

    def check(self, rule: Rule, start: Token) -> None:
        try:
            check_safety(rule)
        except SafetyError as exc:
            raise ParseError(str(exc), start.line, start.column) from exc

    # -- rules
    def parse_rule(self) -> Rule:
        if self.tok.kind == ":-":
            self.advance()
            pos, neg = self.parse_body()
            self.expect(".", "'.'")
            return Rule(None, pos, neg)
        head = self.parse_head()
        pos, neg = (), ()
        if self.tok.kind == ":-":
            self.advance()
            pos, neg = self.parse_body()
        self.expect(".", "'.'")
        return Rule(head, pos, neg)

    def parse_head(self):
        tok = self.tok
        is_choice = tok.kind in ("{", "int", "var", "-") or (tok.kind == "ident" and self.peek().kind == "{")
        if not is_choice:
            return self.parse_atom()
        lower = None
        if tok.kind != "{":
            lower = self.parse_term()
        self.expect("{", "'{'")
        elements = []
        if self.tok.kind != "}":
            elements.append(self.parse_element())
            while self.tok.kind == ";":
                self.advance()
                elements.append(self.parse_element())
        self.expect("}", "'}'")
        upper = None
        if self.tok.kind not in (":-", "."):
            upper = self.parse_term()
        return Choice(tuple(elements), lower, upper)

    def parse_element(self) -> ChoiceElement:
        atom = self.parse_atom()
        pos, neg = [], []
        if self.tok.kind == ":":
            self.advance()
            while True:
                negated, lit = self.parse_literal()
                if isinstance(lit, Comparison):
                    raise self.error("comparisons are not allowed in choice conditions")
                (neg if negated else pos).append(lit)
                if self.tok.kind != ",":
                    break
                self.advance()
        return ChoiceElement(atom, tuple(pos), tuple(neg))

    def parse_body(self):
        pos, neg = [], []
        while True:
            negated, lit = self.parse_literal()
            (neg if negated else pos).append(lit)
            if self.tok.kind != ",":
                break
            self.advance()
        return tuple(pos), tuple(neg)

    def parse_literal(self):
        if self.tok.kind == "ident" and self.tok.text == "not":
            self.advance()
            return True, self.parse_atom()
        start = self.tok
        left = self.parse_term()
        if self.tok.kind == "cmp":
            op = self.advance().text
            right = self.parse_term()
            return False, Comparison(op, left, right)
        if isinstance(left, str):
            return False, Fn(left)
        if isinstance(left, Fn):
            return False, left
        raise self.error("expected an atom or comparison", start)

    def parse_atom(self) -> Fn:
        tok = self.expect("ident", "atom")
        if tok.text == "not":
            raise self.error("unexpected 'not'", tok)
        args = ()
        if self.tok.kind == "(":
            args = self.parse_args()
        atom = Fn(tok.text, args)
        self._check_depth(atom, tok)
        return atom

    def parse_args(self) -> tuple:
        self.expect("(", "'('")
        args = [self.parse_term()]
        while self.tok.kind == ",":
            self.advance()
            args.append(self.parse_term())
        self.expect(")", "')'")
        return tuple(args)

    # -- terms
    def parse_term(self):
        term = self.parse_primary()
        while self.tok.kind in ("+", "-"):
            op = self.advance().text
            term = BinOp(op, term, self.parse_primary())
        return term

    def parse_primary(self):
        tok = self.tok
        if tok.kind == "int":
            self.advance()
            return int(tok.text)
        if tok.kind == "-" and self.peek().kind == "int":
            self.advance()
            return -int(self.advance().text)
        if tok.kind == "var":
            self.advance()
            return Var(tok.text)
        if tok.kind == "anon":
            self.advance()
            self._anon += 1
            return Var(f"_Anon{self._anon}")
        if tok.kind == "ident":
            if tok.text == "not":
                raise self.error("unexpected 'not'", tok)
            self.advance()
            if self.tok.kind == "(":
                term = Fn(tok.text, self.parse_args())
                self._check_depth(term, tok, nested=True)
                return term
            return tok.text
        if tok.kind == "(":
            self.advance()
            term = self.parse_term()
            self.expect(")", "')'")
            return term
        raise self.error(f"expected a term, found {tok.text or 'end of input'!r}", tok)

    def _check_depth(self, term: Fn, tok: Token, nested: bool = False) -> None:
        # argument depth of an atom, or full depth of a nested term
        d = depth(term) if nested else max((depth(a) for a in term.args), default=0)
        if d > self.depth_cap:
            raise self.error(f"term nesting depth {d} exceeds cap {self.depth_cap}", tok)


def parse_program(text: str, depth_cap: int = DEFAULT_DEPTH_CAP) -> ReactiveProgram:
    """Parse program text into base / cumulative / volatile parts."""
    return Parser(text, depth_cap).parse_program()


def parse_rules(text: str, depth_cap: int = DEFAULT_DEPTH_CAP) -> list[Rule]:
    """Parse a sequence of rules without directives (all checked for safety)."""
    p = Parser(text, depth_cap)
    rules = []
    while not p.at_end():
        start = p.tok
        rule = p.parse_rule()
        p.check(rule, start)
        rules.append(rule)
    return rules


def parse_atom(text: str) -> Fn:
    """Parse a single ground atom, e.g. ``_action(move_base,office2,1)``."""
    p = Parser(text)
    atom = p.parse_atom()
    if p.tok.kind == ".":
        p.advance()
    if not p.at_end():
        raise p.error(f"trailing input {p.tok.text!r}")
    return atom
