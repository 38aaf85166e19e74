from contextlib import contextmanager
from typing import Dict, Iterator

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, declarative_base, sessionmaker
from config import config
import logging

logger = logging.getLogger(__name__)

Base = declarative_base()

_engines: Dict[str, Engine] = {}


def get_engine(url: str) -> Engine:
    """One engine per archive URL"""
    if url not in _engines:
        _engines[url] = create_engine(
            url,
            echo=config.LOG_MODE == "debug",
            pool_pre_ping=True,
        )
    return _engines[url]


@contextmanager
def session_scope(url: str) -> Iterator[Session]:
    """Archive session; commits on success, rolls back on error"""
    db = sessionmaker(autocommit=False, autoflush=False, bind=get_engine(url))()
    try:
        yield db
        db.commit()
    except Exception as e:
        logger.error(f"Archive database error: {e}")
        db.rollback()
        raise
    finally:
        db.close()


def init_db(url: str) -> None:
    """Initialize archive tables"""
    try:
        Base.metadata.create_all(bind=get_engine(url))
        logger.info("Archive tables ready")
    except Exception as e:
        logger.error(f"Failed to create archive tables: {e}")
        raise
