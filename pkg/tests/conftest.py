import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from reactplan.interfaces import TagTable  # noqa: E402
from reactplan.lp import parse_program  # noqa: E402
from reactplan.scenario import Scenario, Stack, data_path, load_program  # noqa: E402
from reactplan.world import WorldConfig  # noqa: E402

# criterion number -> (passed, detail), filled in by test_acceptance
ACCEPTANCE: dict = {}

OFFICES4 = """\
location(office1). location(office2). location(office3). location(office4).
edge(office1,office2). edge(office2,office3). edge(office3,office4).
start(office1). capacity(3).
"""


def mailbot_program(extra: str = OFFICES4):
    text = data_path("mailbot.lp").read_text(encoding="utf-8")
    return parse_program(text + "\n#base.\n" + extra)


def make_stack(world: str = "offices4.world", tags: str | None = None, **kw) -> Stack:
    cfg = WorldConfig.parse(data_path(world).read_text(encoding="utf-8"))
    tags = tags or world.rsplit(".", 1)[0] + ".tags"
    table = TagTable.parse(data_path(tags).read_text(encoding="utf-8"))
    return Stack(load_program((), cfg), cfg, table, **kw)


def shipped_scenario(name: str) -> Scenario:
    return Scenario.parse(data_path(name).read_text(encoding="utf-8"))


@pytest.fixture
def program():
    return mailbot_program()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
