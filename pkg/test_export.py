"""Tests for result tables, manifests and the text report."""
import json

import pandas as pd

from models.experiment import TuneResult
from services.export_service import ExportService


def _result():
    best = pd.DataFrame({'seed': [0, 1], 'r': [0.5, 0.7], 'm_over_n': [1.0, 0.4], 'alpha_1': [0.6, 0.5],
                         'test_overall': [0.4, 0.6]})
    summary = {'region_1': (0.3, 0.1), 'region_2': (0.7, 0.1), 'overall': (0.5, float('nan'))}
    return TuneResult(table=best, best=best, summary=summary, method='codsa', variant='non-transfer',
                      metric='cross_entropy', seeds=[0, 1])


def test_results_frame_rows():
    frame = ExportService.results_frame([_result()])
    assert frame['region'].tolist() == ['1', '2', 'overall']
    assert frame['seeds'].tolist() == ['0;1'] * 3
    assert frame.loc[0, 'mean'] == 0.3


def test_text_report_layout():
    text = ExportService.generate_text_report([_result()])
    lines = text.splitlines()
    assert lines[0] == "=" * 60
    assert lines[1] == 'CODSA EXPERIMENT REPORT'
    assert 'codsa (non-transfer) - cross_entropy, 2 seed(s)' in text
    assert 'seed 1: r=0.7, m/n=0.4, alpha1=0.500' in text
    assert lines[-2] == 'End of Report'


def test_manifest_is_reproducible(tmp_path):
    raw = b'{"task": "classification"}'
    digest = ExportService.config_digest(raw)
    paths = []
    for name in ('a', 'b'):
        paths.append(ExportService.write_manifest(str(tmp_path / name / 'manifest.json'), 'run',
                                                  {'task': 'classification', 'x': float('nan')}, digest, [0],
                                                  [str(tmp_path / name / 'results.csv')]))
    first, second = (open(p, 'rb').read() for p in paths)
    assert first == second
    manifest = json.loads(first)
    assert manifest['config']['x'] is None
    assert manifest['outputs'] == ['results.csv']
    assert manifest['config_sha256'] == digest
    assert 'python' in manifest['versions']


def test_index_reports_replace_nan(tmp_path):
    path = ExportService.write_index_reports([{'D': 0.1, 'G': float('nan')}], str(tmp_path / 'idx.json'))
    assert json.loads(open(path, encoding='utf-8').read()) == [{'D': 0.1, 'G': None}]
