"""
SQL helper for GPWPC study records.
Uses a SQLAlchemy engine and pandas.to_sql for local persistence.

Default: SQLite file gpwpc.db in the output directory. Can be overridden with
the DATABASE_URL env var or an explicit URL.
"""
import os
from pathlib import Path
from typing import Optional, Union

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine


def resolve_url(db_url: Optional[str] = None, output_dir: Union[str, Path] = 'output') -> str:
    """Explicit URL, then DATABASE_URL, then a SQLite file under ``output_dir``."""
    url = db_url or os.environ.get('DATABASE_URL')
    if url:
        return url
    directory = Path(output_dir)
    directory.mkdir(parents=True, exist_ok=True)
    return f"sqlite:///{directory / 'gpwpc.db'}"


def get_engine(db_url: Optional[str] = None, output_dir: Union[str, Path] = 'output') -> Engine:
    """Return a SQLAlchemy engine for study records."""
    url = resolve_url(db_url, output_dir)
    return create_engine(url, connect_args={'check_same_thread': False} if url.startswith('sqlite') else {})
