import logging

from app.cli import main
from app.startup import LOG_FORMAT

# configure logging
logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)

# suppress sqlalchemy engine logs below warning level
logging.getLogger("sqlalchemy.engine.Engine").setLevel(logging.WARNING)

if __name__ in {"__main__", "__mp_main__"}:
    main()
