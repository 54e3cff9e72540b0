"""
Datensätze: Einlesen, kanonische Sortierung, Hashing und Vorverarbeitung

Ein Datensatz ist eine Menge von (Merkmale, Label)-Paaren. Merkmale sind
ganzzahlige Intensitäten in [0, 255] und werden exakt (uint8) gespeichert,
damit Sortierung und Hash bitgenau reproduzierbar sind.
"""

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from errors import DatasetParseError, InvalidArgumentError
from parsers import parse_cifar, parse_csv, parse_idx_images, parse_idx_labels, parse_image_folder

logger = logging.getLogger(__name__)

DATASET_FORMATS = ('idx', 'csv', 'cifar-binary', 'image-folder', 'canonical')

CONTAINER_MAGIC = b'DPAD'
CONTAINER_VERSION = 1
CONTAINER_HEADER = struct.Struct('<4sIIIQ')


@dataclass(frozen=True, order=True)
class LabeledSample:
    """Ein Trainingselement; Vergleich ist lexikographisch über (features, label)."""
    features: tuple
    label: int

    @property
    def dim(self):
        return len(self.features)


def _check_integer(arr):
    # astype(uint8) würde Nachkommastellen still abschneiden
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        raise InvalidArgumentError(f"Merkmalswerte müssen ganzzahlig sein, nicht {arr.dtype}")


def as_features(x, dim=None):
    """Wandelt ein Sample (Sequenz, Array oder LabeledSample) in einen uint8-Vektor."""
    if isinstance(x, LabeledSample):
        x = x.features
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"Sample muss ein Vektor sein, nicht Form {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise InvalidArgumentError(f"Sample hat Dimension {arr.shape[0]}, erwartet {dim}")
    _check_integer(arr)
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise InvalidArgumentError("Merkmalswerte müssen in [0, 255] liegen")
    return arr.astype(np.uint8)


def canonical_order(features, labels=None):
    """
    Permutation, die Zeilen lexikographisch nach Merkmalen sortiert,
    mit dem Label als letztem Schlüssel. Stabil bei Gleichheit.
    """
    features = np.asarray(features)
    # np.lexsort: letzter Schlüssel ist der primäre
    keys = [features[:, j] for j in range(features.shape[1] - 1, -1, -1)]
    if labels is not None:
        keys.insert(0, np.asarray(labels))
    if not keys:
        return np.arange(len(features))
    return np.lexsort(keys)


def _freeze(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Endliche Menge gelabelter Samples.

    features: uint8 [m, dim], labels: int64 [m], num_classes: C.
    Über from_arrays() konstruieren, dort werden Duplikate entfernt.
    """
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    is_canonical: bool = field(default=False)

    @classmethod
    def from_arrays(cls, features, labels, num_classes, source=None):
        features = np.asarray(features)
        labels = np.asarray(labels, dtype=np.int64)

        if features.ndim != 2:
            raise InvalidArgumentError(f"Merkmale brauchen Form [m, dim], nicht {features.shape}")
        if len(features) != len(labels):
            raise InvalidArgumentError(f"{len(features)} Samples, aber {len(labels)} Labels")
        if num_classes < 1:
            raise InvalidArgumentError("num_classes muss positiv sein")
        if features.shape[1] < 1:
            raise InvalidArgumentError("Dimension muss positiv sein")
        _check_integer(features)
        if features.size and (features.min() < 0 or features.max() > 255):
            raise InvalidArgumentError("Merkmalswerte müssen in [0, 255] liegen")
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise InvalidArgumentError(f"Labels müssen in [0, {num_classes}) liegen")

        features = features.astype(np.uint8)

        # Mengensemantik: doppelte (Merkmale, Label)-Paare zusammenfassen,
        # erstes Vorkommen in Dateireihenfolge bleibt
        if len(features) > 1:
            order = canonical_order(features, labels)
            sf = features[order]
            sl = labels[order]
            dup = np.all(sf[1:] == sf[:-1], axis=1) & (sl[1:] == sl[:-1])
            if dup.any():
                keep = np.concatenate([[True], ~dup])
                kept = np.sort(order[keep])
                logger.warning(
                    "%d doppelte (Merkmale, Label)-Paare zusammengefasst%s",
                    int(dup.sum()), f" in {source}" if source else "",
                )
                features = features[kept]
                labels = labels[kept]

        return cls(_freeze(features), _freeze(labels), int(num_classes))

    @property
    def m(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.features.shape[1]

    def __len__(self):
        return self.m

    def items(self):
        return [
            LabeledSample(tuple(row), int(label))
            for row, label in zip(self.features.tolist(), self.labels.tolist())
        ]

    @cached_property
    def canonical(self):
        """Derselbe Datensatz in kanonischer Reihenfolge."""
        if self.is_canonical:
            return self
        order = canonical_order(self.features, self.labels)
        return Dataset(
            _freeze(self.features[order]), _freeze(self.labels[order]),
            self.num_classes, is_canonical=True,
        )

    @cached_property
    def content_hash(self):
        return hashlib.sha256(serialize_dataset(self)).hexdigest()

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            _freeze(self.features[indices]), _freeze(self.labels[indices]),
            self.num_classes, is_canonical=self.is_canonical and bool(np.all(np.diff(indices) > 0)),
        )

    def with_labels(self, labels):
        """Gleiche Samples, neue Labels (Label-Flip)."""
        return Dataset.from_arrays(self.features, labels, self.num_classes)

    def without(self, indices):
        keep = np.ones(self.m, dtype=bool)
        keep[np.asarray(indices, dtype=np.int64)] = False
        return self.subset(np.flatnonzero(keep))

    def with_items(self, features, labels):
        """Fügt Samples hinzu; bereits vorhandene Paare bleiben einfach."""
        features = np.asarray(features, dtype=np.uint8).reshape(-1, self.dim)
        return Dataset.from_arrays(
            np.concatenate([self.features, features]),
            np.concatenate([self.labels, np.asarray(labels, dtype=np.int64)]),
            self.num_classes,
        )


def canonical_sort(d):
    """Elemente lexikographisch sortiert (Label als letzter Schlüssel)."""
    return d.canonical.items()


def pixel_sum_hash(t):
    """Summe aller Pixelwerte; das Label geht nicht ein."""
    return int(np.sum(as_features(t), dtype=np.int64))


def pixel_sums(features):
    """Vektorisierte Variante von pixel_sum_hash für eine Merkmals-Matrix."""
    return np.asarray(features).sum(axis=1, dtype=np.int64)


@dataclass(frozen=True)
class UniquenessReport:
    ok: bool
    collisions: list = field(default_factory=list)  # [(features, (label, ...)), ...]


def verify_unique_samples(d):
    """Prüft, dass kein Merkmalsvektor mit verschiedenen Labels vorkommt."""
    if d.m < 2:
        return UniquenessReport(ok=True)

    canon = d.canonical
    same = np.all(canon.features[1:] == canon.features[:-1], axis=1)
    if not same.any():
        return UniquenessReport(ok=True)

    collisions = []
    start = 0
    # Gruppen gleicher Merkmale in sortierter Reihenfolge einsammeln
    for i in range(1, d.m + 1):
        if i < d.m and same[i - 1]:
            continue
        if i - start > 1:
            collisions.append((
                tuple(canon.features[start].tolist()),
                tuple(canon.labels[start:i].tolist()),
            ))
        start = i

    return UniquenessReport(ok=False, collisions=collisions)


def feature_ranks(d):
    """
    Dichter Rang jedes Elements (kanonische Reihenfolge) unter den
    verschiedenen Merkmalsvektoren; gleiche Merkmale teilen einen Rang.
    """
    canon = d.canonical
    if canon.m == 0:
        return np.zeros(0, dtype=np.int64)
    new_group = np.concatenate([[False], np.any(canon.features[1:] != canon.features[:-1], axis=1)])
    return np.cumsum(new_group, dtype=np.int64)


def histogram_equalize(s):
    """
    Globale Histogramm-Equalisierung über 256 Stufen:
    v -> round(255 * (cdf(v) - cdf_min) / (N - cdf_min)).
    Bilder mit nur einer Intensität bleiben unverändert.
    """
    values = as_features(s)
    n = values.size
    if n == 0:
        return values.copy()

    cdf = np.cumsum(np.bincount(values, minlength=256), dtype=np.int64)
    cdf_min = int(cdf[values.min()])
    if n == cdf_min:
        return values.copy()

    scaled = 255 * (cdf[values] - cdf_min) / (n - cdf_min)
    # Runden mit .5 nach oben, unabhängig von Banker's Rounding
    return np.floor(scaled + 0.5).astype(np.uint8)


def equalize_dataset(d):
    equalized = np.stack([histogram_equalize(row) for row in d.features]) if d.m else d.features
    return Dataset.from_arrays(equalized, d.labels, d.num_classes, source="Histogramm-Equalisierung")


def select_classes(d, class_a, class_b):
    """Binärer Teildatensatz: class_a -> 0, class_b -> 1."""
    if class_a == class_b:
        raise InvalidArgumentError("Die beiden Klassen müssen verschieden sein")
    for c in (class_a, class_b):
        if c < 0 or c >= d.num_classes:
            raise InvalidArgumentError(f"Klasse {c} existiert nicht")

    mask = (d.labels == class_a) | (d.labels == class_b)
    labels = np.where(d.labels[mask] == class_a, 0, 1)
    return Dataset.from_arrays(d.features[mask], labels, 2)


# =============================================================================
# Serialisierung (kanonischer Container)
# =============================================================================

def serialize_dataset(d):
    """Binärcontainer: Header, dann sortierte Merkmale und Labels (little endian)."""
    canon = d.canonical
    header = CONTAINER_HEADER.pack(CONTAINER_MAGIC, CONTAINER_VERSION, canon.dim, canon.num_classes, canon.m)
    return header + canon.features.tobytes() + canon.labels.astype('<u4').tobytes()


def deserialize_dataset(data, path=None):
    if len(data) < CONTAINER_HEADER.size:
        raise DatasetParseError("Container endet im Header", path=path, offset=len(data))

    magic, version, dim, num_classes, m = CONTAINER_HEADER.unpack_from(data, 0)
    if magic != CONTAINER_MAGIC:
        raise DatasetParseError(f"Falsche Magic {magic!r}", path=path, offset=0)
    if version != CONTAINER_VERSION:
        raise DatasetParseError(f"Unbekannte Container-Version {version}", path=path, offset=4)

    offset = CONTAINER_HEADER.size
    expected = offset + m * dim + 4 * m
    if len(data) != expected:
        raise DatasetParseError(f"{len(data)} Bytes, erwartet {expected}", path=path, offset=min(len(data), expected))

    features = np.frombuffer(data, dtype=np.uint8, count=m * dim, offset=offset).reshape(m, dim)
    labels = np.frombuffer(data, dtype='<u4', count=m, offset=offset + m * dim).astype(np.int64)

    bad = np.flatnonzero(labels >= num_classes)
    if len(bad):
        raise DatasetParseError(
            f"Label {labels[bad[0]]} außerhalb [0, {num_classes})",
            path=path, offset=offset + m * dim + 4 * int(bad[0]),
        )

    d = Dataset.from_arrays(features, labels, num_classes, source=path)
    return d.canonical


def save_dataset(d, path):
    with open(path, 'wb') as f:
        f.write(serialize_dataset(d))


def read_dataset(path):
    with open(path, 'rb') as f:
        return deserialize_dataset(f.read(), path=path)


# =============================================================================
# Einlesen
# =============================================================================

def load_dataset(path, fmt='idx', labels_path=None, num_classes=None, header=False, csv_format=None):
    """
    Liest einen Datensatz.

    Args:
        path: Bilddatei (idx), CSV-Datei, CIFAR-Batch/-Ordner, Bildordner oder Container
        fmt: eines von DATASET_FORMATS
        labels_path: IDX-Labeldatei (nur fmt='idx')
        num_classes: Klassenzahl (Standard: größtes Label + 1)
        header: erste CSV-Zeile überspringen
    """
    if fmt == 'idx':
        if not labels_path:
            raise InvalidArgumentError("IDX-Format braucht eine Labeldatei")
        features = parse_idx_images(path)
        labels = parse_idx_labels(labels_path)
        if len(features) != len(labels):
            raise DatasetParseError(
                f"{len(features)} Bilder, aber {len(labels)} Labels", path=labels_path, offset=4
            )
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if len(labels) else 1
        bad = np.flatnonzero(labels >= num_classes)
        if len(bad):
            raise DatasetParseError(
                f"Label {labels[bad[0]]} außerhalb [0, {num_classes})",
                path=labels_path, offset=8 + int(bad[0]),
            )

    elif fmt == 'csv':
        with open(path, 'r', encoding='utf-8') as f:
            content = f.read()
        features, labels, num_classes = parse_csv(
            content, header=header, csv_format=csv_format, num_classes=num_classes
        )

    elif fmt == 'cifar-binary':
        features, labels, detected = parse_cifar(path)
        num_classes = num_classes or detected

    elif fmt == 'image-folder':
        features, labels, detected = parse_image_folder(path)
        num_classes = num_classes or detected

    elif fmt == 'canonical':
        return read_dataset(path)

    else:
        raise InvalidArgumentError(f"Unbekanntes Format {fmt!r}, erlaubt: {', '.join(DATASET_FORMATS)}")

    d = Dataset.from_arrays(features, labels, num_classes, source=path)
    logger.info("Datensatz geladen: %s (m=%d, dim=%d, C=%d)", path, d.m, d.dim, d.num_classes)
    return d
