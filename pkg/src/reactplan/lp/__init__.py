"""Parsing, grounding and stable-model search for a small ASP fragment."""

from .grounder import Domain, GroundingError, ground_part, ground_rules
from .parser import ParseError, parse_atom, parse_program, parse_rules
from .program import (
    Choice,
    ChoiceElement,
    Comparison,
    GroundProgram,
    ProgramPart,
    ReactiveProgram,
    Rule,
    SafetyError,
)
from .solver import AnswerSet, first_model, least_model, reduct, solve
from .terms import Fn, Var, atom_key, render

__all__ = [
    "AnswerSet",
    "Choice",
    "ChoiceElement",
    "Comparison",
    "Domain",
    "Fn",
    "GroundProgram",
    "GroundingError",
    "ParseError",
    "ProgramPart",
    "ReactiveProgram",
    "Rule",
    "SafetyError",
    "Var",
    "atom_key",
    "first_model",
    "ground_part",
    "ground_rules",
    "least_model",
    "parse_atom",
    "parse_program",
    "parse_rules",
    "reduct",
    "render",
    "solve",
]
