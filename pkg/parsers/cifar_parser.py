"""
Parser für CIFAR-10 im Binärformat
Ein Record: 1 Byte Label, dann 3072 Bytes Pixel (R, G, B je 32x32).
"""

import glob
import os

import numpy as np

from errors import DatasetParseError

CIFAR_RECORD_SIZE = 1 + 3072
CIFAR_NUM_CLASSES = 10


def cifar_batch_files(path):
    """Einzelne Datei oder Verzeichnis mit data_batch_*.bin / test_batch.bin."""
    if os.path.isdir(path):
        files = sorted(glob.glob(os.path.join(path, 'data_batch_*.bin')))
        if not files:
            files = sorted(glob.glob(os.path.join(path, 'test_batch.bin')))
        if not files:
            raise DatasetParseError("Keine CIFAR-Batchdateien gefunden", path=path)
        return files
    return [path]


def parse_cifar_batch(path):
    with open(path, 'rb') as f:
        data = f.read()

    if len(data) % CIFAR_RECORD_SIZE != 0:
        # Offset des ersten unvollständigen Records
        offset = len(data) - len(data) % CIFAR_RECORD_SIZE
        raise DatasetParseError("Unvollständiger Record", path=path, offset=offset)

    records = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD_SIZE)
    labels = records[:, 0].astype(np.int64)

    bad = np.flatnonzero(labels >= CIFAR_NUM_CLASSES)
    if len(bad):
        raise DatasetParseError(
            f"Label {labels[bad[0]]} außerhalb [0, {CIFAR_NUM_CLASSES})",
            path=path, offset=int(bad[0]) * CIFAR_RECORD_SIZE,
        )

    return records[:, 1:].copy(), labels


def parse_cifar(path):
    """Liest alle Batches, Reihenfolge wie Dateinamen sortiert."""
    features = []
    labels = []
    for batch_file in cifar_batch_files(path):
        f, l = parse_cifar_batch(batch_file)
        features.append(f)
        labels.append(l)
    return np.concatenate(features), np.concatenate(labels), CIFAR_NUM_CLASSES
