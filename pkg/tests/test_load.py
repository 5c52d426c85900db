import json

import pandas as pd
import pytest
from sqlalchemy import create_engine

from gpwpc import db
from gpwpc.config import load_config
from gpwpc.load import RECORD_COLUMNS, DataLoader, emit, load_records, records_frame
from gpwpc.study import RateFit, StudyRecord


@pytest.fixture
def sample_records():
    return [
        StudyRecord('interp', 1, 1, 0.123456789012345678, 0.001, 1.0, 0, '00112233aabbccdd'),
        StudyRecord('interp', 9, 9, 1.0 / 3.0, 2e-4, 2.5, 0, '00112233aabbccdd'),
        StudyRecord('ls', 40, 40, 7.1e-3, 1e-5, 4.0, 12, '0e00000000000001'),
    ]


def test_header_only_csv(tmp_path):
    out = emit([], tmp_path / 'empty.csv')
    assert out.read_text() == ','.join(RECORD_COLUMNS) + '\n'
    assert load_records(out) == []


def test_csv_round_trip_preserves_values(tmp_path, sample_records):
    out = emit(sample_records, tmp_path / 'nested' / 'study.csv')
    assert load_records(out) == sample_records
    again = emit(load_records(out), tmp_path / 'again.csv')
    assert again.read_bytes() == out.read_bytes()


def test_json_output(tmp_path, sample_records):
    cfg = load_config(overrides={'dims': 2})
    out = emit(sample_records, tmp_path / 'study.json', fmt='json', config=cfg)
    payload = json.loads(out.read_text())
    assert payload['config']['problem']['dims'] == 2
    assert len(payload['records']) == 3
    assert load_records(out) == sample_records


def test_json_and_csv_write_the_same_number_text(tmp_path, sample_records):
    csv_text = emit(sample_records, tmp_path / 'study.csv').read_text()
    json_text = emit(sample_records, tmp_path / 'study.json', fmt='json').read_text()
    for number in ('0.33333333333333331', '0.00020000000000000001', '1.0000000000000001e-05'):
        assert number in csv_text
        assert number in json_text
    assert json.loads(json_text)['config'] is None
    assert json_text.endswith('}\n')


def test_emit_names_the_path_on_failure(tmp_path, sample_records):
    blocker = tmp_path / 'blocker'
    blocker.write_text('not a directory')
    with pytest.raises(OSError, match='blocker'):
        emit(sample_records, blocker / 'study.csv')
    with pytest.raises(ValueError):
        emit(sample_records, tmp_path / 'study.txt', fmt='xml')


def test_records_frame_columns(sample_records):
    frame = records_frame(sample_records)
    assert list(frame.columns) == RECORD_COLUMNS
    assert frame['n'].dtype == 'int64'
    assert list(records_frame([]).columns) == RECORD_COLUMNS


def test_resolve_url(tmp_path, monkeypatch):
    monkeypatch.delenv('DATABASE_URL', raising=False)
    assert db.resolve_url(output_dir=tmp_path) == f"sqlite:///{tmp_path / 'gpwpc.db'}"
    assert db.resolve_url('sqlite:///explicit.db', tmp_path) == 'sqlite:///explicit.db'
    monkeypatch.setenv('DATABASE_URL', 'sqlite:///from_env.db')
    assert db.resolve_url(output_dir=tmp_path) == 'sqlite:///from_env.db'


def test_load_to_db(tmp_path, sample_records, monkeypatch):
    monkeypatch.delenv('DATABASE_URL', raising=False)
    loader = DataLoader(tmp_path / 'out')
    frame = records_frame(sample_records)
    assert loader.load_to_db(frame)
    assert loader.load_to_db(frame)
    engine = create_engine(f"sqlite:///{tmp_path / 'out' / 'gpwpc.db'}")
    stored = pd.read_sql('SELECT * FROM study_records', engine)
    assert len(stored) == 6
    assert set(stored['method']) == {'interp', 'ls'}
    engine.dispose()


def test_load_to_db_reports_failure(tmp_path):
    loader = DataLoader(tmp_path)
    assert not loader.load_to_db(pd.DataFrame({'x': [1]}), db_url='notadialect://nowhere')


def test_summary_report(tmp_path, sample_records):
    loader = DataLoader(tmp_path)
    rates = {'interp': RateFit(1.25, -0.5, 0.99, 3), 'ls': None}
    assert loader.load_summary_report(sample_records, rates)
    text = (tmp_path / 'summary_report.txt').read_text()
    assert 'INTERP' in text and 'LS' in text
    assert 'Fitted rate: 1.2500' in text
    assert 'Fitted rate: not available' in text
    assert loader.load_summary_report([], {}, filename='empty.txt')
    assert 'No records available' in (tmp_path / 'empty.txt').read_text()


def test_load_all(tmp_path, sample_records):
    loader = DataLoader(tmp_path)
    rates = {'interp': RateFit(1.0, 0.0, 1.0, 3), 'ls': None}
    results = loader.load_all(sample_records, rates, db_url=f"sqlite:///{tmp_path / 'all.db'}", to_db=True)
    assert all(results.values())
    assert set(results) == {'records_csv', 'rates_csv', 'records_db', 'summary_report'}
    rate_frame = pd.read_csv(tmp_path / 'rates.csv')
    assert list(rate_frame['method']) == ['interp', 'ls']
    assert rate_frame['rate'].isna().tolist() == [False, True]
    assert load_records(tmp_path / 'records.csv') == sample_records
