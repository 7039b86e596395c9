import importlib.resources

import pytest

from sfgof.cli import BUILTIN, ingest_csv, parse_column_map

CG_COLUMNS = [
    "log_cost_pf=y",
    "log_q=x",
    "log_q_sq=x",
    "log_pl_pf=x",
    "log_pk_pf=x",
    "firm=id",
]

# acceptance lines collected while the acceptance module runs
ACCEPTANCE_LINES = []


def cg_path():
    return str(importlib.resources.files("sfgof") / "data" / BUILTIN["christensen_greene"])


@pytest.fixture(scope="session")
def cg_sample():
    sample, ids = ingest_csv(cg_path(), parse_column_map(CG_COLUMNS), cost_flag=True)
    return sample, ids


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
