import os
from sqlmodel import SQLModel, create_engine, Session, select

from app.models import UtteranceDiagnostics

DATABASE_URL = os.environ.get("APP_DATABASE_URL", "sqlite:///chime_mwf_runs.db")
ENGINE = create_engine(DATABASE_URL)


def create_tables():
    SQLModel.metadata.create_all(ENGINE)


def get_session():
    return Session(ENGINE)


def reset_db():
    """Wipe all tables in the database. Use with caution - for testing only!"""
    SQLModel.metadata.drop_all(ENGINE)
    SQLModel.metadata.create_all(ENGINE)


def record_diagnostics(run_id: str, rows: list[UtteranceDiagnostics]) -> int:
    """Persist the diagnostics rows of one corpus run into existing tables; returns the number stored."""
    with get_session() as session:
        for row in rows:
            data = row.model_dump(exclude={"id", "run_id"})
            session.add(UtteranceDiagnostics(run_id=run_id, **data))
        session.commit()
    return len(rows)


def load_diagnostics(run_id: str) -> list[UtteranceDiagnostics]:
    with get_session() as session:
        statement = select(UtteranceDiagnostics).where(UtteranceDiagnostics.run_id == run_id)
        return list(session.exec(statement.order_by(UtteranceDiagnostics.utterance_id)).all())  # type: ignore[arg-type]
