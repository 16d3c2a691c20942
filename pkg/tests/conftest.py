from datetime import date
from pathlib import Path

import pytest

from gridshift.config import RunConfig

ROOT = Path(__file__).resolve().parent.parent
SYNTHETIC = ROOT / "data" / "synthetic"


@pytest.fixture
def small_config(tmp_path):
    """A few March 2019 days of the shipped synthetic year with a small fleet of EVs."""
    return RunConfig(
        fleet_path=SYNTHETIC / "fleet.csv",
        load_path=SYNTHETIC / "net_load.csv",
        n_vehicles=300,
        seed=3,
        start_date=date(2019, 3, 4),
        end_date=date(2019, 3, 8),
        output_dir=tmp_path / "out",
    ).validate()


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def record(criterion, ok, detail):
    ACCEPTANCE[criterion] = (ok, detail)
    print(f"{criterion}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE, key=lambda c: int(c[2:])):
        ok, detail = ACCEPTANCE[criterion]
        terminalreporter.write_line(f"{criterion} {'PASS' if ok else 'FAIL'}  {detail}")
