import os
from pathlib import Path
from typing import Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import sessionmaker


def get_database_url() -> str:
    # Default to a local SQLite DB in project root
    default_path = Path(__file__).parent.parent / "plantsim.db"
    return os.getenv("DATABASE_URL", f"sqlite:///{default_path}")


def make_engine(url: Optional[str] = None) -> Engine:
    return create_engine(url or get_database_url(), echo=False, future=True)


DATABASE_URL = get_database_url()
engine = make_engine(DATABASE_URL)
SessionLocal = sessionmaker(bind=engine, autoflush=False, autocommit=False, future=True)


def get_session(bind: Optional[Engine] = None):
    if bind is not None:
        return sessionmaker(bind=bind, autoflush=False, autocommit=False, future=True)()
    return SessionLocal()
