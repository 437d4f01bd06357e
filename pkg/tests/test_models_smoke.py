"""Smoke test for SQLModel database setup."""

import logging

import pytest
from sqlalchemy import inspect
from sqlmodel import SQLModel

from app.database import ENGINE, load_diagnostics, record_diagnostics, reset_db
from app.models import UtteranceDiagnostics, UtteranceStatus
from app.startup import startup


@pytest.fixture()
def fresh_db():
    """Provide a fresh database for each test."""
    reset_db()
    yield
    reset_db()


@pytest.mark.sqlmodel
def test_sqlmodel_smoke(fresh_db):
    """Single smoke test to validate SQLModel setup works end-to-end."""
    SQLModel.metadata.drop_all(ENGINE)
    startup(logging.WARNING, with_database=True)

    db_tables = set(inspect(ENGINE).get_table_names())

    assert len(db_tables) > 0, "No tables found in database"
    for table_name in SQLModel.metadata.tables:
        assert table_name in db_tables, f"Table '{table_name}' not found in database"


@pytest.mark.sqlmodel
def test_diagnostics_round_trip(fresh_db):
    """Test diagnostics rows are stored under their run id and read back in id order."""
    rows = [
        UtteranceDiagnostics(utterance_id="utt_b", num_channels=6, mean_mu=0.4, passthrough_fraction=0.0),
        UtteranceDiagnostics(utterance_id="utt_a", status=UtteranceStatus.FAILED, error="no such file"),
    ]

    assert record_diagnostics("run1", rows) == 2
    record_diagnostics("run2", rows[:1])

    stored = load_diagnostics("run1")
    assert [row.utterance_id for row in stored] == ["utt_a", "utt_b"]
    assert stored[0].status == UtteranceStatus.FAILED
    assert stored[1].mean_mu == 0.4
    assert all(row.run_id == "run1" and row.id is not None for row in stored)
    assert len(load_diagnostics("run2")) == 1
