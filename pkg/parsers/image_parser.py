"""
Bild-Ordner Parser
Erwartet <root>/<klassen_id>/<bild>.png|jpg|ppm, alle Bilder gleich groß.
Es wird nicht skaliert: abweichende Größen sind ein Fehler.
"""

import os

import numpy as np

# Optional imports
try:
    from PIL import Image
    IMAGE_SUPPORT = True
except ImportError:
    IMAGE_SUPPORT = False

from errors import DatasetParseError

IMAGE_EXTENSIONS = {'.png', '.jpg', '.jpeg', '.ppm', '.bmp', '.pgm'}


def scan_image_folder(root):
    """Liefert [(pfad, klasse)] sortiert nach Klasse und Dateiname."""
    if not os.path.isdir(root):
        raise DatasetParseError("Bildordner nicht gefunden", path=root)

    entries = []
    for class_dir in sorted(os.listdir(root)):
        class_path = os.path.join(root, class_dir)
        if not os.path.isdir(class_path):
            continue
        try:
            label = int(class_dir)
        except ValueError:
            raise DatasetParseError(f"Ordnername {class_dir!r} ist keine Klassen-ID", path=root) from None

        for filename in sorted(os.listdir(class_path)):
            if os.path.splitext(filename)[1].lower() in IMAGE_EXTENSIONS:
                entries.append((os.path.join(class_path, filename), label))

    return entries


def parse_image_folder(root, mode='L'):
    """
    Liest alle Bilder als flache uint8-Vektoren.

    Args:
        root: Wurzelordner
        mode: Pillow-Modus, 'L' (Graustufen) oder 'RGB'
    """
    if not IMAGE_SUPPORT:
        raise DatasetParseError("Pillow nicht installiert - Bildordner nicht lesbar", path=root)

    entries = scan_image_folder(root)
    if not entries:
        raise DatasetParseError("Keine Bilder gefunden", path=root)

    features = []
    labels = []
    size = None

    for row_number, (path, label) in enumerate(entries, start=1):
        with Image.open(path) as img:
            img = img.convert(mode)
            if size is None:
                size = img.size
            elif img.size != size:
                raise DatasetParseError(
                    f"Bildgröße {img.size} statt {size}", path=path, row=row_number
                )
            features.append(np.asarray(img, dtype=np.uint8).reshape(-1))
        labels.append(label)

    labels = np.asarray(labels, dtype=np.int64)
    return np.stack(features), labels, int(labels.max()) + 1
