import io
import shlex

import pytest

from conftest import make_stack
from reactplan.cli import EXIT_HALTED, EXIT_MISMATCH, EXIT_OK, EXIT_USAGE, build_parser, main, run_interactive


def kv_records(text: str) -> list:
    return [dict(w.split("=", 1) for w in shlex.split(line)) for line in text.splitlines()]


def test_batch_case_study_matches_expect(tmp_path, capsys):
    report = tmp_path / "r.txt"
    code = main(["--scenario", "mailbot_table1.scenario", "--expect", "mailbot_table1.expect",
                 "--report", str(report), "--report-format", "kv"])
    assert code == EXIT_OK
    assert "trace matched (6 cycles)" in capsys.readouterr().err
    recs = kv_records(report.read_text())
    cycles = [r for r in recs if "cycle" in r]
    assert [r["action"] for r in cycles] == [
        "move_base office2", "move_base office3", "idle", "pickup 2", "move_base office4", "deliver 2"]
    assert [r["status"] for r in recs if "goal" in r] == ["preempted", "succeeded"]


def test_text_report_layout(capsys):
    assert main(["--scenario", "mailbot_table1.scenario"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "cycle 1"
    assert out[1].startswith("  update:") and out[2] == "  horizon: 5"
    assert out[-1] == "goal 2 goal(office3,office4,2) succeeded"


def test_empty_scenario_exits_cleanly(tmp_path, capsys):
    empty = tmp_path / "empty.scenario"
    empty.write_text("# nothing happens\n")
    assert main(["--scenario", str(empty), "--report-format", "kv"]) == EXIT_OK
    (rec,) = kv_records(capsys.readouterr().out)
    assert rec["cycle"] == "1" and rec["plan"] == "" and rec["action"] == "idle"


def test_trace_mismatch_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.expect"
    bad.write_text("1: _action(move_base,office2,1)\n")
    assert main(["--scenario", "mailbot_table1.scenario", "--expect", str(bad)]) == EXIT_MISMATCH
    assert "mismatch at cycle 1" in capsys.readouterr().err


def test_halt_exit_code(tmp_path, capsys):
    sc = tmp_path / "far.scenario"
    sc.write_text("cycle 1 request office4 office1 1\n")
    assert main(["--scenario", str(sc), "--horizon-cap", "3"]) == EXIT_HALTED
    assert "halted" in capsys.readouterr().err


def test_missing_file_is_usage_error(capsys):
    assert main(["--scenario", "no_such.scenario"]) == EXIT_USAGE
    assert "no such file" in capsys.readouterr().err


def test_ini_config(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\nscenario = mailbot_table1.scenario\nexpect = mailbot_table1.expect\n"
                   "report_format = kv\n")
    assert main([str(ini)]) == EXIT_OK
    assert capsys.readouterr().out.startswith("cycle=1 ")


def test_blocked_loop_world_via_cli(capsys):
    code = main(["--world", "offices_loop_blocked.world", "--scenario", "mailbot_blocked.scenario",
                 "--report-format", "kv"])
    assert code == EXIT_OK
    recs = kv_records(capsys.readouterr().out)
    assert any("failure(blocked(office2,office3))" in r.get("result", "") for r in recs)
    assert recs[-1]["status"] == "succeeded"


def test_reports_are_deterministic(tmp_path):
    paths = [tmp_path / "a.txt", tmp_path / "b.txt"]
    for p in paths:
        assert main(["--scenario", "mailbot_table1.scenario", "--report", str(p)]) == EXIT_OK
    assert paths[0].read_bytes() == paths[1].read_bytes()


def interactive(commands: str, fmt="text"):
    stack = make_stack()
    args = build_parser().parse_args(["--report-format", fmt])
    out = io.StringIO()
    code = run_interactive(stack, args, io.StringIO(commands), out)
    return code, out.getvalue(), stack


def test_interactive_request_runs_to_completion():
    code, out, stack = interactive("request office3 office2 1\n")
    assert code == EXIT_OK
    assert "goal 1 goal(office3,office2,1) succeeded" in out
    assert stack.world.packages[1] == "office2"


def test_interactive_malformed_command_leaves_state():
    code, out, stack = interactive("request office3\nfly away\nstatus\nquit\n")
    assert code == EXIT_OK
    assert out.count("error: ") == 2
    assert out.count("commands: request") == 3  # banner plus one per error
    assert stack.controller.goals == {} and stack.controller.cycle == 1


def test_interactive_quit_stops_immediately():
    code, out, stack = interactive("quit\nrequest office3 office2 1\n")
    assert code == EXIT_OK and stack.controller.goals == {}


@pytest.mark.parametrize("flag", ["--version", "--help"])
def test_info_flags(flag, capsys):
    with pytest.raises(SystemExit) as exc:
        main([flag])
    assert exc.value.code == 0
    assert capsys.readouterr().out
