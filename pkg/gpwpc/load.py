"""
Load module for GPWPC studies.
Writes study records to CSV/JSON/SQL and produces text reports.
"""

import json
import logging
import math
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import pandas as pd

from . import db
from .config import StudyConfig, ensure_parent
from .study import RateFit, StudyRecord

logger = logging.getLogger(__name__)

RECORD_COLUMNS = ['method', 'n', 'cost', 'error', 'error_se', 'param', 'wall_ms', 'config_hash']
FLOAT_FORMAT = '%.17g'


def json_text(value: Any, depth: int = 0) -> str:
    """JSON with sorted keys and a two-space indent; finite floats use FLOAT_FORMAT like the CSV."""
    pad, inner = '  ' * depth, '  ' * (depth + 1)
    if isinstance(value, Mapping):
        if not value:
            return '{}'
        items = [f"{inner}{json.dumps(str(key))}: {json_text(item, depth + 1)}" for key, item in sorted(value.items())]
        return '{\n' + ',\n'.join(items) + f'\n{pad}}}'
    if isinstance(value, (list, tuple)):
        if not value:
            return '[]'
        return '[\n' + ',\n'.join(f"{inner}{json_text(item, depth + 1)}" for item in value) + f'\n{pad}]'
    if isinstance(value, float) and math.isfinite(value):
        return FLOAT_FORMAT % value
    return json.dumps(value)


def records_frame(records: Sequence[StudyRecord]) -> pd.DataFrame:
    """Records as a DataFrame with exactly RECORD_COLUMNS."""
    frame = pd.DataFrame([record.to_row() for record in records], columns=RECORD_COLUMNS)
    return frame.astype({'n': 'int64', 'cost': 'int64', 'wall_ms': 'int64'}) if len(frame) else frame


def emit(records: Sequence[StudyRecord], path: str, fmt: str = 'csv', config: Optional[StudyConfig] = None) -> Path:
    """
    Write records to ``path`` as CSV (header always present) or as JSON
    {"config": ..., "records": [...]}.

    Raises:
        OSError: the file cannot be written; the message names the path.
    """
    out = Path(path)
    try:
        ensure_parent(path)
        if fmt == 'csv':
            records_frame(records).to_csv(out, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        elif fmt == 'json':
            payload = {'config': config.to_dict() if config is not None else None,
                       'records': [record.to_row() for record in records]}
            out.write_text(json_text(payload) + '\n')
        else:
            raise ValueError(f"unknown output format {fmt!r}")
    except OSError as e:
        raise OSError(f"cannot write study records to {out}: {e}") from e
    logger.info(f"Wrote {len(records)} records to {out}")
    return out


def load_records(path: str) -> List[StudyRecord]:
    """Read records written by ``emit`` (format chosen by file suffix)."""
    source = Path(path)
    if source.suffix == '.json':
        with open(source, 'r') as file:
            rows = json.load(file)['records']
    else:
        frame = pd.read_csv(source, float_precision='round_trip', dtype={'config_hash': str})
        rows = frame.to_dict('records')
    return [StudyRecord(method=str(row['method']), n=int(row['n']), cost=int(row['cost']), error=float(row['error']),
                        error_se=float(row['error_se']), param=float(row['param']), wall_ms=int(row['wall_ms']),
                        config_hash=str(row['config_hash'])) for row in rows]


class DataLoader:
    """Handles loading study outputs to various destinations."""

    def __init__(self, output_dir: str = "output"):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def load_to_csv(self, df: pd.DataFrame, filename: str) -> bool:
        """Load DataFrame to CSV file."""
        try:
            output_path = self.output_dir / filename
            df.to_csv(output_path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
            logger.info(f"Successfully loaded {len(df)} rows to {output_path}")
            return True
        except Exception as e:
            logger.error(f"Error loading data to {filename}: {e}")
            return False

    def load_to_json(self, data: Any, filename: str) -> bool:
        """Load data to JSON file."""
        try:
            output_path = self.output_dir / filename
            if isinstance(data, pd.DataFrame):
                data = data.to_dict('records')
            with open(output_path, 'w') as file:
                json.dump(data, file, indent=2, sort_keys=True, default=str)
                file.write('\n')
            logger.info(f"Successfully loaded data to {output_path}")
            return True
        except Exception as e:
            logger.error(f"Error loading data to {filename}: {e}")
            return False

    def load_to_db(self, df: pd.DataFrame, table_name: str = 'study_records', if_exists: str = 'append',
                   db_url: Optional[str] = None) -> bool:
        """Load a DataFrame to a SQL database table using a SQLAlchemy engine."""
        try:
            engine = db.get_engine(db_url=db_url, output_dir=self.output_dir)
            logger.info(f"Writing {len(df)} rows to DB table '{table_name}'")
            df.to_sql(table_name, engine, if_exists=if_exists, index=False)
            logger.info(f"Successfully wrote to DB table '{table_name}'")
            return True
        except Exception as e:
            logger.error(f"Error writing to DB table {table_name}: {e}")
            return False

    def load_summary_report(self, records: Sequence[StudyRecord], rates: Mapping[str, Optional[RateFit]],
                            filename: str = "summary_report.txt") -> bool:
        """Create a text report: per-method budgets, errors and fitted rates."""
        try:
            report_path = self.output_dir / filename
            frame = records_frame(records)
            with open(report_path, 'w') as file:
                file.write("GPWPC Study - Summary Report\n")
                file.write("=" * 50 + "\n")
                file.write(f"Generated: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n\n")
                if frame.empty:
                    file.write("No records available\n")
                for method, group in frame.groupby('method', sort=True):
                    file.write(f"{method.upper()}\n")
                    file.write("-" * len(method) + "\n")
                    file.write(f"Budgets: {', '.join(str(n) for n in group['n'])}\n")
                    file.write(f"Distinct solves: {', '.join(str(c) for c in group['cost'])}\n")
                    file.write(f"Error range: {group['error'].min():.4g} - {group['error'].max():.4g}\n")
                    first, last = group['error'].iloc[0], group['error'].iloc[-1]
                    if last > 0:
                        file.write(f"End-to-end reduction: {first / last:.3g}x\n")
                    rate = rates.get(method)
                    if rate is not None:
                        file.write(f"Fitted rate: {rate.slope:.4f} (R^2 = {rate.r_squared:.4f}, {rate.points} points)\n")
                    else:
                        file.write("Fitted rate: not available\n")
                    file.write(f"Config hashes: {', '.join(sorted(set(group['config_hash'])))}\n\n")
            logger.info(f"Summary report created at {report_path}")
            return True
        except Exception as e:
            logger.error(f"Error creating summary report: {e}")
            return False

    def load_all(self, records: Sequence[StudyRecord], rates: Mapping[str, Optional[RateFit]],
                 db_url: Optional[str] = None, to_db: bool = False) -> Dict[str, bool]:
        """Records to CSV (and optionally SQL) plus the summary report."""
        frame = records_frame(records)
        results = {'records_csv': self.load_to_csv(frame, "records.csv")}
        rate_rows = [{'method': method, 'rate': rate.slope if rate else math.nan,
                      'r_squared': rate.r_squared if rate else math.nan} for method, rate in sorted(rates.items())]
        results['rates_csv'] = self.load_to_csv(pd.DataFrame(rate_rows, columns=['method', 'rate', 'r_squared']),
                                                "rates.csv")
        if to_db:
            results['records_db'] = self.load_to_db(frame, 'study_records', db_url=db_url)
        results['summary_report'] = self.load_summary_report(records, rates)

        successful = sum(1 for ok in results.values() if ok)
        logger.info(f"Loading completed: {successful}/{len(results)} successful")
        return results
