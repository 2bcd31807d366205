from collections import deque

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import mailbot_program
from reactplan.incremental import HorizonCapError, IncrementalState
from reactplan.lp import Fn, parse_program, parse_rules

FIRST_PLAN = {
    "_action(move_base,office2,1)",
    "_action(move_base,office3,2)",
    "_action(pickup,1,3)",
    "_action(move_base,office2,4)",
    "_action(deliver,1,5)",
}


def actions(model) -> set:
    return {str(a) for a in model.project("_action", 3)}


def request_state(program, text="_request(goal(office3,office2,1),1).", step=1):
    state = IncrementalState(program)
    state.add_online(parse_rules(text), step)
    return state


def shortest_plan_length(start, adjacent, requests) -> int:
    """Breadth-first search over (location, held, done) for the mail domain."""
    init = (start, frozenset(), frozenset())
    seen = {init}
    queue = deque([(init, 0)])
    while queue:
        (loc, held, done), n = queue.popleft()
        if len(done) == len(requests):
            return n
        succ = [(nxt, held, done) for nxt in adjacent[loc]]
        for pid, (src, dst) in requests.items():
            if loc == src and pid not in held and pid not in done:
                succ.append((loc, held | {pid}, done))
            if loc == dst and pid in held:
                succ.append((loc, held - {pid}, done | {pid}))
        for s in succ:
            if s not in seen:
                seen.add(s)
                queue.append((s, n + 1))
    raise AssertionError("unreachable")


LINE = {"office1": ["office2"], "office2": ["office1", "office3"], "office3": ["office2", "office4"],
        "office4": ["office3"]}


def test_advance_grounds_each_layer_once(program):
    state = IncrementalState(program)
    state.advance_to(1)
    assert state.grounded_horizon == 1 and state.ground_calls == {0: 1, 1: 1}
    state.advance_to(3)
    state.advance_to(3)
    assert state.grounded_horizon == 3 and state.ground_calls == {0: 1, 1: 1, 2: 1, 3: 1}


def test_advance_past_cap_raises(program):
    state = IncrementalState(program, horizon_cap=4)
    with pytest.raises(HorizonCapError):
        state.advance_to(5)


def test_deliver_atom_in_universe_at_step_5(program):
    state = request_state(program).advance_to(5)
    assert Fn("_action", ("deliver", 1, 5)) in state.domain


def test_no_requests_gives_empty_plan(program):
    state = IncrementalState(program).advance_to(1)
    assert actions(state.solve_at_horizon(1)) == set()


def test_plan1_at_horizon_5_and_none_at_4(program):
    state = request_state(program).advance_to(5)
    assert actions(state.solve_at_horizon(5)) == FIRST_PLAN
    assert state.solve_at_horizon(4) is None
    # independent check: the mail domain needs five actions for this request
    assert shortest_plan_length("office1", LINE, {1: ("office3", "office2")}) == 5


def test_min_horizon_follows_case_study(program):
    state = request_state(program)
    h, m = state.solve_min_horizon(1)
    assert h == 5 and actions(m) == FIRST_PLAN
    state.add_online(parse_rules(":- not _action(move_base,office2,1). _return(move_base,office2,1)."), 2)
    state.add_online(parse_rules(":- not _action(move_base,office3,2). _request(cancel(1),3). "
                                 "_return(move_base,office3,2)."), 3)
    h, m = state.solve_min_horizon(3)
    assert h == 3 and actions(m) == {"_action(move_base,office2,1)", "_action(move_base,office3,2)"}
    state.add_online(parse_rules("_idle(3). _request(goal(office3,office4,2),4)."), 4)
    h, m = state.solve_min_horizon(4)
    assert h == 6 and actions(m) == {
        "_action(move_base,office2,1)", "_action(move_base,office3,2)", "_action(pickup,2,4)",
        "_action(move_base,office4,5)", "_action(deliver,2,6)",
    }


@pytest.mark.parametrize("requests", [
    {1: ("office2", "office4")},
    {1: ("office4", "office1")},
    {1: ("office3", "office2"), 2: ("office2", "office4")},
    {1: ("office1", "office4"), 2: ("office4", "office1")},
])
def test_min_horizon_equals_bfs_optimum(requests):
    program = mailbot_program()
    state = IncrementalState(program)
    facts = " ".join(f"_request(goal({s},{d},{p}),1)." for p, (s, d) in requests.items())
    state.add_online(parse_rules(facts), 1)
    h, _ = state.solve_min_horizon(1)
    assert h == shortest_plan_length("office1", LINE, requests)


def test_unsatisfiable_within_cap():
    program = parse_program("#volatile t. :- not never.")
    state = IncrementalState(program, horizon_cap=3)
    with pytest.raises(HorizonCapError) as exc:
        state.solve_min_horizon(1)
    assert exc.value.lower == 1


_TOY = "#external ping/1.\n#cumulative t.\n{ a(t) }.\nseen(t) :- ping(t).\n"


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5))
def test_volatile_constraint_only_binds_its_step(k, h):
    state = IncrementalState(parse_program(_TOY))
    state.add_online(parse_rules(f":- not a({k})."), k, volatile=True)
    state.advance_to(max(h, k))
    model = state.solve_at_horizon(h)
    has = Fn("a", (k,)) in model
    # false-first search never chooses a(k) unless forced
    assert has == (h == k)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 3))
def test_persistent_items_hold_at_later_horizons(k, extra):
    state = IncrementalState(parse_program(_TOY))
    state.add_online(parse_rules(f"ping({k}). :- not a({k})."), k)
    h = k + extra
    state.advance_to(h)
    model = state.solve_at_horizon(h)
    assert Fn("ping", (k,)) in model and Fn("seen", (k,)) in model and Fn("a", (k,)) in model


def test_resolving_without_input_is_identical(program):
    state = request_state(program)
    first = state.solve_min_horizon(1)
    assert state.solve_min_horizon(1) == first


def test_minimality_on_two_requests(program):
    state = request_state(program, "_request(goal(office3,office2,1),1). _request(goal(office4,office1,2),1).")
    h, _ = state.solve_min_horizon(1)
    assert h > 1 and state.solve_at_horizon(h - 1) is None
