import random

import pytest

from conftest import make_stack, mailbot_program, shipped_scenario
from reactplan.bus import Bus, Executor
from reactplan.lp import AnswerSet, parse_atom
from reactplan.scenario import Event, Scenario, run_scenario
from reactplan.server import render_online
from reactplan.taskctl import (
    ABORTED,
    ACTIVE,
    PENDING,
    PREEMPTED,
    SUCCEEDED,
    Controller,
    ControllerError,
    GoalError,
    GoalRecord,
    extract_action,
    goal_term,
)

CASE_STUDY_UPDATES = {
    1: "#step 1. _request(goal(office3,office2,1),1). #endstep.",
    2: "#step 2. :- not _action(move_base,office2,1). _return(move_base,office2,1). #endstep.",
    3: "#step 3. :- not _action(move_base,office3,2). _request(cancel(1),3). _return(move_base,office3,2). #endstep.",
}

PLAN1 = ("_action(move_base,office2,1) _action(move_base,office3,2) _action(pickup,1,3) "
         "_action(move_base,office2,4) _action(deliver,1,5)")
PLAN3 = ("_action(move_base,office2,1) _action(move_base,office3,2) _action(pickup,2,4) "
         "_action(move_base,office4,5) _action(deliver,2,6)")


def answer(text: str) -> AnswerSet:
    return AnswerSet(parse_atom(a) for a in text.split())


def squash(text: str) -> str:
    return " ".join(text.split())


def test_extract_action_examples():
    assert extract_action(answer(PLAN1), 1) == ("move_base", "office2")
    assert extract_action(answer(PLAN3), 3) is None
    assert extract_action(answer(PLAN3), 6) == ("deliver", 2)
    assert extract_action(answer("_action_lib(pickup,4,2) other(2)"), 2) == ("pickup", 4)


def test_extract_action_rejects_two_actions():
    with pytest.raises(ControllerError, match="2 actions"):
        extract_action(answer("_action(pickup,1,3) _action(deliver,2,3)"), 3)


def test_goal_term_validation():
    assert str(goal_term("goal(office3,office2,1)")) == "goal(office3,office2,1)"
    for bad in ("goal(a,b)", "req(a,b,1)", "goal(A,b,1)"):
        with pytest.raises(GoalError):
            goal_term(bad)


def test_goal_record_transitions():
    rec = GoalRecord(1, goal_term("goal(a,b,1)"), 1)
    with pytest.raises(ControllerError):
        rec.move(SUCCEEDED)
    rec.move(ACTIVE)
    rec.move(PREEMPTED)
    with pytest.raises(ControllerError):
        rec.move(ACTIVE)
    assert rec.history == [PENDING, ACTIVE, PREEMPTED]


def test_goal_api_errors():
    ctl = Controller(mailbot_program(), Bus(), Executor())
    ctl.submit_goal("goal(office3,office2,1)")
    ctl.submit_goal("goal(office1,office4,2)")
    assert [g.goal_id for g in ctl.open_goals()] == [1, 2]
    with pytest.raises(GoalError, match="already used"):
        ctl.submit_goal("goal(office2,office4,1)")
    with pytest.raises(GoalError):
        ctl.cancel_goal(9)
    with pytest.raises(GoalError):
        ctl.goal_status(9)
    assert ctl.goal_status(1) == PENDING


def test_empty_update_without_events():
    ctl = Controller(mailbot_program(), Bus(), Executor())
    assert squash(render_online(ctl.build_update())) == "#step 1. #endstep."
    report = ctl.run_cycle()
    assert report.plan == [] and report.action is None


def run_case_study(on_report=None):
    stack = make_stack()
    reports = run_scenario(stack, shipped_scenario("mailbot_table1.scenario"), on_report=on_report)
    return stack, reports


def test_updates_match_case_study_blocks():
    _, reports = run_case_study()
    for cycle, text in CASE_STUDY_UPDATES.items():
        assert squash(render_online(reports[cycle - 1].update)) == text
    # the idle step before the second request is announced
    assert "_idle(3)." in render_online(reports[3].update)


def test_case_study_plans_and_statuses():
    stack, reports = run_case_study()
    plans = [" ".join(map(str, r.plan)) for r in reports]
    assert plans[0] == plans[1] == PLAN1
    assert plans[2] == "_action(move_base,office2,1) _action(move_base,office3,2)"
    assert plans[3:] == [PLAN3] * 3
    assert reports[2].action is None
    ctl = stack.controller
    assert ctl.goals[1].history == [PENDING, ACTIVE, PREEMPTED]
    assert ctl.goals[2].history == [PENDING, ACTIVE, SUCCEEDED]
    assert stack.world.packages[2] == "office4"


def test_cancel_before_any_action_empties_plan():
    stack = make_stack()
    sc = Scenario([Event(1, "request", ("office3", "office2", 1)), Event(1, "cancel", (1,))])
    reports = run_scenario(stack, sc)
    assert len(reports) == 1 and reports[0].plan == [] and reports[0].action is None
    assert stack.controller.goal_status(1) == PREEMPTED


def test_unsatisfiable_aborts_goals_and_halts():
    stack = make_stack(horizon_cap=3)
    sc = Scenario([Event(1, "request", ("office4", "office1", 1))])
    reports = run_scenario(stack, sc)
    ctl = stack.controller
    assert reports[-1].unsatisfiable and ctl.halted
    assert ctl.goal_status(1) == ABORTED
    with pytest.raises(ControllerError):
        ctl.run_cycle()
    with pytest.raises(ControllerError):
        ctl.submit_goal("goal(office1,office2,5)")


def random_scenario(rng: random.Random) -> Scenario:
    offices = ["office1", "office2", "office3", "office4"]
    events = []
    for pid in range(1, rng.randint(1, 2) + 1):
        src, dst = rng.sample(offices, 2)
        at = rng.randint(1, 4)
        events.append(Event(at, "request", (src, dst, pid)))
        if rng.random() < 0.5:
            events.append(Event(at + rng.randint(0, 4), "cancel", (pid,)))
    events.sort(key=lambda e: e.cycle)
    return Scenario(events)


LEGAL = {(PENDING, ACTIVE), (ACTIVE, SUCCEEDED), (ACTIVE, PREEMPTED), (ACTIVE, ABORTED)}


@pytest.mark.parametrize("seed", range(20))
def test_random_scenarios_keep_protocol_invariants(seed):
    rng = random.Random(seed)
    stack = make_stack()
    ctl = stack.controller
    sc = random_scenario(rng)
    cancelled = {e.args[0] for e in sc.events if e.kind == "cancel"}
    checked = []

    def on_report(r):
        # commit soundness: every earlier dispatched action stays in the plan
        earlier = [a for a in ctl.committed if a.args[2] < r.cycle]
        assert set(earlier) <= set(r.plan)
        here = [a for a in r.plan if a.args[2] == r.cycle]
        assert len(here) <= 1
        if r.action is not None:
            assert here and (here[0].args[0], here[0].args[1]) == r.action
        for atom in r.plan:
            assert atom.name == "_action" and len(atom.args) == 3
        checked.append(r.cycle)

    apply = stack.apply

    def apply_live(ev):
        # a cancel for a goal that already finished is rejected by the API
        if ev.kind == "cancel" and ctl.goals[ev.args[0]].terminal:
            with pytest.raises(GoalError):
                ctl.cancel_goal(ev.args[0])
            return
        apply(ev)

    stack.apply = apply_live
    run_scenario(stack, sc, on_report=on_report)
    assert checked
    for gid, rec in ctl.goals.items():
        for a, b in zip(rec.history, rec.history[1:]):
            assert (a, b) in LEGAL
        assert rec.terminal
        if gid not in cancelled:
            assert rec.status == SUCCEEDED
            assert stack.world.packages[gid] == rec.goal.args[1]
    assert stack.world.max_carried <= stack.world.config.capacity
