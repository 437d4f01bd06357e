import logging

from app.database import create_tables

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def startup(level: int = logging.INFO, with_database: bool = False) -> None:
    # this function is called once before the first subcommand runs
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger().setLevel(level)
    # suppress sqlalchemy engine logs below warning level
    logging.getLogger("sqlalchemy.engine.Engine").setLevel(logging.WARNING)
    if with_database:
        create_tables()
