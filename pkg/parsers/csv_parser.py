"""
CSV Parser für Datensätze mit ganzzahligen Merkmalen
Eine Zeile pro Sample: Merkmale, danach das Label.
"""

import csv
from io import StringIO

import numpy as np

from errors import DatasetParseError

# Trennzeichen-Varianten
CSV_FORMATS = {
    'comma': {
        'delimiter': ',',
    },
    'semicolon': {
        'delimiter': ';',
    },
    'tab': {
        'delimiter': '\t',
    },
}


def detect_csv_format(content):
    """Erkennt das Trennzeichen anhand der ersten Zeilen."""
    first_lines = [line for line in content.split('\n')[:10] if line.strip()]

    for name in ('semicolon', 'tab'):
        delimiter = CSV_FORMATS[name]['delimiter']
        if first_lines and all(delimiter in line for line in first_lines):
            return name

    return 'comma'


def parse_int(value, row_number):
    """Parst einen Zellenwert als Ganzzahl."""
    value = str(value).strip()
    try:
        return int(value)
    except ValueError:
        raise DatasetParseError(f"Keine Ganzzahl: {value!r}", row=row_number) from None


def parse_csv(content, header=False, csv_format=None, num_classes=None):
    """
    Parst CSV-Inhalt in Merkmals-Matrix und Label-Vektor.

    Args:
        content: CSV-Text
        header: erste Zeile überspringen
        csv_format: Schlüssel aus CSV_FORMATS (None = automatisch)
        num_classes: obere Grenze für Labels (None = max Label + 1)

    Returns:
        tuple: (features uint8 [m, dim], labels int64 [m], num_classes)
    """
    if csv_format is None:
        csv_format = detect_csv_format(content)
    config = CSV_FORMATS.get(csv_format, CSV_FORMATS['comma'])

    reader = csv.reader(StringIO(content), delimiter=config['delimiter'])

    rows = []
    labels = []
    dim = None

    for row_number, row in enumerate(reader, start=1):
        if header and row_number == 1:
            continue
        # Leerzeilen (z.B. am Dateiende) ignorieren
        if not row or all(not cell.strip() for cell in row):
            continue

        if len(row) < 2:
            raise DatasetParseError("Zeile braucht mindestens ein Merkmal und ein Label", row=row_number)

        values = [parse_int(cell, row_number) for cell in row]
        features, label = values[:-1], values[-1]

        if dim is None:
            dim = len(features)
        elif len(features) != dim:
            raise DatasetParseError(
                f"Dimension {len(features)} statt {dim}", row=row_number
            )

        for value in features:
            if value < 0 or value > 255:
                raise DatasetParseError(f"Merkmalswert {value} außerhalb [0, 255]", row=row_number)

        if label < 0 or (num_classes is not None and label >= num_classes):
            raise DatasetParseError(f"Label {label} außerhalb des Klassenbereichs", row=row_number)

        rows.append(features)
        labels.append(label)

    if not rows:
        raise DatasetParseError("CSV enthält keine Samples")

    if num_classes is None:
        num_classes = max(labels) + 1

    return (
        np.asarray(rows, dtype=np.uint8),
        np.asarray(labels, dtype=np.int64),
        num_classes,
    )


def format_csv(features, labels, delimiter=','):
    """Schreibt Merkmale und Labels zurück ins CSV-Format (ohne Header)."""
    out = StringIO()
    writer = csv.writer(out, delimiter=delimiter, lineterminator='\n')
    for row, label in zip(features.tolist(), labels.tolist()):
        writer.writerow(row + [label])
    return out.getvalue()
