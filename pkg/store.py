"""
Artefakt-Cache und Manifest

Modell-Blobs liegen inhaltsadressiert unter <cache_dir>/models/<schlüssel>.npz.
Der Schlüssel ist ein Hash aus Datensatz, Plan, Lerner-Konfiguration,
Feature-Map und Partitionsindex; die Parallelität geht nicht ein.
"""

import hashlib
import json
import logging
import os
import tempfile

from errors import StaleArtifactError

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1


def get_file_hash(filepath):
    """Berechnet SHA-256 einer Datei für Cache-Keys"""
    hasher = hashlib.sha256()
    with open(filepath, 'rb') as f:
        for chunk in iter(lambda: f.read(65536), b''):
            hasher.update(chunk)
    return hasher.hexdigest()


def get_path_hash(path):
    """Hash einer Datei oder eines ganzen Ordners (sortierte Dateiliste)."""
    if not os.path.isdir(path):
        return get_file_hash(path)

    hasher = hashlib.sha256()
    for root, dirs, files in os.walk(path):
        dirs.sort()
        for name in sorted(files):
            full = os.path.join(root, name)
            hasher.update(os.path.relpath(full, path).encode('utf-8'))
            hasher.update(get_file_hash(full).encode('ascii'))
    return hasher.hexdigest()


def artifact_key(*parts):
    hasher = hashlib.sha256()
    for part in parts:
        hasher.update(str(part).encode('utf-8'))
        hasher.update(b'\0')
    return hasher.hexdigest()


def atomic_write(path, data):
    """Schreibt über eine temporäre Datei + os.replace (kein halbes Artefakt)."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-')
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


class ArtifactStore:
    """Inhaltsadressierter Blob-Speicher auf der Platte."""

    def __init__(self, root):
        self.root = root
        os.makedirs(os.path.join(root, 'models'), exist_ok=True)

    def path_for(self, key, kind='models'):
        return os.path.join(self.root, kind, f"{key}.npz")

    def get(self, key, kind='models'):
        path = self.path_for(key, kind)
        if not os.path.exists(path):
            return None
        try:
            with open(path, 'rb') as f:
                return f.read()
        except IOError as e:
            logger.warning("Cache-Eintrag %s nicht lesbar: %s", key, e)
            return None

    def put(self, key, data, kind='models'):
        atomic_write(self.path_for(key, kind), data)


def load_manifest(path):
    """Lädt das Manifest aus der JSON-Datei"""
    with open(path, 'r', encoding='utf-8') as f:
        manifest = json.load(f)
    if manifest.get('manifest_version') != MANIFEST_VERSION:
        raise StaleArtifactError(f"Manifest-Version {manifest.get('manifest_version')} wird nicht unterstützt")
    return manifest


def save_manifest(path, manifest):
    """Speichert das Manifest (einziger Schreiber, atomar)"""
    manifest = dict(manifest, manifest_version=MANIFEST_VERSION)
    atomic_write(path, json.dumps(manifest, ensure_ascii=False, indent=2).encode('utf-8'))


def check_input_hashes(manifest):
    """Vergleicht die im Manifest vermerkten Eingabe-Hashes mit den Dateien."""
    for path, expected in manifest.get('input_hashes', {}).items():
        if not os.path.exists(path):
            raise StaleArtifactError(f"Eingabedatei fehlt: {path}")
        actual = get_path_hash(path)
        if actual != expected:
            raise StaleArtifactError(f"Eingabedatei wurde verändert: {path}")
