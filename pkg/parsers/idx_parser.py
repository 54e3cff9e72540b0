"""
IDX Parser für MNIST-Dateien (Bilder und Labels)

Datenformat (big endian):
    i32  | Magic (0x00000803 Bilder, 0x00000801 Labels)
    i32  | Anzahl
    i32  | Zeilen, Spalten (nur Bilder)
    u8[] | Pixel bzw. Labels
"""

import gzip
import struct

import numpy as np

from errors import DatasetParseError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


def read_idx_bytes(path):
    """Liest eine IDX-Datei, optional gzip-komprimiert."""
    opener = gzip.open if str(path).endswith('.gz') else open
    with opener(path, 'rb') as f:
        return f.read()


def read_be32(data, offset, path):
    if len(data) < offset + 4:
        raise DatasetParseError("Datei endet im Header", path=path, offset=offset)
    return struct.unpack_from('>I', data, offset)[0]


def parse_idx_images(path):
    """Liest eine IDX-Bilddatei als uint8-Matrix [count, rows * cols]."""
    data = read_idx_bytes(path)

    magic = read_be32(data, 0, path)
    if magic != IDX_IMAGE_MAGIC:
        raise DatasetParseError(f"Falsche Magic-Number 0x{magic:08x} für Bilddatei", path=path, offset=0)

    count = read_be32(data, 4, path)
    rows = read_be32(data, 8, path)
    cols = read_be32(data, 12, path)

    expected = 16 + count * rows * cols
    if len(data) != expected:
        raise DatasetParseError(
            f"{len(data)} Bytes gelesen, Header verlangt {expected}",
            path=path, offset=min(len(data), expected),
        )

    images = np.frombuffer(data, dtype=np.uint8, offset=16)
    return images.reshape(count, rows * cols).copy()


def parse_idx_labels(path):
    """Liest eine IDX-Labeldatei als int64-Vektor."""
    data = read_idx_bytes(path)

    magic = read_be32(data, 0, path)
    if magic != IDX_LABEL_MAGIC:
        raise DatasetParseError(f"Falsche Magic-Number 0x{magic:08x} für Labeldatei", path=path, offset=0)

    count = read_be32(data, 4, path)
    if len(data) != 8 + count:
        raise DatasetParseError(
            f"{len(data) - 8} Labels gelesen, Header verlangt {count}",
            path=path, offset=min(len(data), 8 + count),
        )

    return np.frombuffer(data, dtype=np.uint8, offset=8).astype(np.int64)


def write_idx_images(path, images, rows, cols):
    """Schreibt Bilder im IDX-Format (für Tests und Exporte)."""
    images = np.asarray(images, dtype=np.uint8)
    header = struct.pack('>IIII', IDX_IMAGE_MAGIC, len(images), rows, cols)
    with open(path, 'wb') as f:
        f.write(header + images.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    header = struct.pack('>II', IDX_LABEL_MAGIC, len(labels))
    with open(path, 'wb') as f:
        f.write(header + labels.tobytes())
