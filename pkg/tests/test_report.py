"""
Tests for the result file formats.
"""

import pytest
from openpyxl import load_workbook

from ensemble import CertifiedCurve, certify
from report import (
    certificate_lines,
    curve_csv,
    export_curve_excel,
    read_certificates,
    read_curve,
    write_certificates,
    write_curve,
)

CURVE = CertifiedCurve(points=((0, 0.75), (1, 0.5), (2, 0.0)), threat='label-flip')


class TestCertificates:
    """Tests for the JSON lines output."""

    def test_key_order(self):
        line = next(certificate_lines([certify([3, 1, 1])], [2]))
        assert line == '{"index": 0, "true_label": 2, "predicted": 0, "counts": [3, 1, 1], "rho_bar": 1}'

    def test_write_and_read(self, tmp_path):
        path = tmp_path / 'certificates.jsonl'
        write_certificates(str(path), [certify([0, 4]), certify([2, 2])], [1, 1])
        rows = read_certificates(str(path))
        assert [r['index'] for r in rows] == [0, 1]
        assert [r['predicted'] for r in rows] == [1, 0]
        assert path.read_text().endswith('\n')


class TestCurve:
    """Tests for the curve CSV."""

    def test_csv_text(self):
        assert curve_csv(CURVE) == "rho,certified_accuracy\n0,0.75\n1,0.5\n2,0.0\n"

    def test_write_and_read(self, tmp_path):
        path = tmp_path / 'curve.csv'
        write_curve(str(path), CURVE)
        assert read_curve(str(path)) == list(CURVE.points)

    def test_bad_header(self, tmp_path):
        path = tmp_path / 'curve.csv'
        path.write_text("radius,acc\n0,1.0\n")
        with pytest.raises(ValueError):
            read_curve(str(path))


class TestExcelExport:
    """Tests for the Excel export."""

    def test_export(self, tmp_path):
        path = tmp_path / 'kurve.xlsx'
        summary = {'clean_accuracy': 0.75, 'median_certified_robustness': 1}
        export_curve_excel(CURVE, summary, str(path))

        ws = load_workbook(str(path)).active
        assert ws.title == 'Kurve'
        assert ws['A1'].value == 'Zertifizierte Genauigkeit (label-flip)'
        assert ws['A3'].value == 'clean_accuracy'
        assert ws['B4'].value == 1
        # Kopfzeile nach Zusammenfassung und Leerzeile
        assert [ws.cell(row=6, column=c).value for c in (1, 2)] == ['rho', 'certified_accuracy']
        assert [ws.cell(row=7 + i, column=2).value for i in range(3)] == [0.75, 0.5, 0.0]

    def test_not_available_median(self, tmp_path):
        path = tmp_path / 'kurve.xlsx'
        export_curve_excel(CURVE, {'median_certified_robustness': 'N/A'}, str(path))
        assert load_workbook(str(path)).active['B3'].value == 'N/A'
