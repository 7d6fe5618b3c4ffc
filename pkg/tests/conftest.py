from __future__ import annotations

from pathlib import Path

import pytest

from lmsql import Table, load_table, normalize, table_from_json

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_path(name: str) -> Path:
    return FIXTURES / name


def make_table(title: str, header, rows) -> Table:
    """Normalized table from inline header/rows."""
    return normalize(table_from_json({"title": title, "header": list(header),
                                      "rows": [list(r) for r in rows]}))


@pytest.fixture
def lachlan() -> Table:
    return normalize(load_table(fixture_path("lachlan.csv")))


@pytest.fixture
def records() -> Table:
    return normalize(load_table(fixture_path("records.csv")))


@pytest.fixture
def shirts() -> Table:
    return normalize(load_table(fixture_path("shirts.csv")))


@pytest.fixture
def hometown() -> Table:
    return make_table(
        "2010–11 UAB Blazers men's basketball team",
        ["hometown"],
        [["chicago, il, u.s."], ["oklahoma city, ok, u.s."], ["montgomery, al, u.s."],
         ["greenville, ms, u.s."], ["birmingham, al, u.s."]],
    )
