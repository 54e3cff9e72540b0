"""
Ausgabeformate: Zertifikate (JSON lines), Kurve (CSV), Zusammenfassung
(JSON) und der Excel-Export der Kurve.
"""

import csv
import io
import json
from datetime import datetime

from openpyxl import Workbook
from openpyxl.styles import Font, PatternFill

CURVE_HEADER = ('rho', 'certified_accuracy')


def certificate_lines(certificates, labels):
    """Eine JSON-Zeile pro Testsample, feste Schlüsselreihenfolge."""
    for index, (cert, label) in enumerate(zip(certificates, labels)):
        yield json.dumps(cert.to_json(index, label))


def write_certificates(path, certificates, labels):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for line in certificate_lines(certificates, labels):
            f.write(line + '\n')


def read_certificates(path):
    with open(path, 'r', encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]


def curve_csv(curve):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(CURVE_HEADER)
    for rho, acc in curve.points:
        writer.writerow([rho, repr(float(acc))])
    return buffer.getvalue()


def write_curve(path, curve):
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(curve_csv(curve))


def read_curve(path):
    """[(rho, certified_accuracy), ...] aus einer Kurven-CSV."""
    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if tuple(header or ()) != CURVE_HEADER:
            raise ValueError(f"Unerwarteter Kurven-Header: {header}")
        return [(int(rho), float(acc)) for rho, acc in reader]


def write_json(path, data):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, ensure_ascii=False, indent=2)
        f.write('\n')


def export_curve_excel(curve, summary, output_path):
    """Excel-Export: Kopf mit Zusammenfassung, darunter die Kurve."""
    wb = Workbook()
    ws = wb.active
    ws.title = 'Kurve'

    header_font = Font(bold=True, color='FFFFFF')
    header_fill = PatternFill('solid', fgColor='333333')

    ws['A1'] = f"Zertifizierte Genauigkeit ({curve.threat})"
    ws['A1'].font = Font(size=14, bold=True)
    ws['D1'] = f"Erstellt: {datetime.now().strftime('%d.%m.%Y')}"

    row = 3
    for key, value in summary.items():
        ws.cell(row=row, column=1, value=key)
        ws.cell(row=row, column=1).font = Font(bold=True)
        ws.cell(row=row, column=2, value=value)
        row += 1

    row += 1
    for col, title in enumerate(CURVE_HEADER, 1):
        ws.cell(row=row, column=col, value=title)
        ws.cell(row=row, column=col).font = header_font
        ws.cell(row=row, column=col).fill = header_fill
    row += 1

    for rho, acc in curve.points:
        ws.cell(row=row, column=1, value=rho)
        ws.cell(row=row, column=2, value=float(acc))
        ws.cell(row=row, column=2).number_format = '0.00%'
        row += 1

    ws.column_dimensions['A'].width = 32
    ws.column_dimensions['B'].width = 20

    wb.save(output_path)
    return output_path
