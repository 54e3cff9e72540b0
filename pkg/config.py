"""
Laufkonfiguration

Eine RunConfig liegt als flache KEY=value-Datei vor (python-dotenv) und
beschreibt einen Lauf vollständig: gleiche Konfiguration + gleiche
Eingabedateien -> gleiche Artefakte.

Umgebungsvariablen (auch aus .env):
    DPA_CACHE_DIR   Modell-Cache (Standard: ./data/cache)
    DPA_WORKERS     Standard-Parallelität
    LOG_LEVEL       Log-Level der CLI
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields

from dotenv import dotenv_values

from dataset import DATASET_FORMATS
from errors import ConfigError
from learners import FEATURE_MAP_KINDS, LEARNER_KINDS, SEED_POLICIES, FeatureMapConfig, LearnerConfig
from parsers import CSV_FORMATS
from partitioning import Strategy
from verification import DEFAULT_ENUMERATION_CAP, PipelineConfig

CONFIG_VERSION = 1

DEFAULT_CACHE_DIR = os.path.join('.', 'data', 'cache')

# gehen nicht in den Konfigurations-Hash ein
NON_RESULT_FIELDS = ('workers', 'output_dir')


@dataclass(frozen=True)
class RunConfig:
    # Daten
    train_path: str = ''
    train_labels_path: str = ''
    train_format: str = 'idx'
    test_path: str = ''
    test_labels_path: str = ''
    test_format: str = 'idx'
    num_classes: int = 0            # 0 = aus den Labels
    header: bool = False
    csv_format: str = ''            # leer = automatisch erkennen
    equalize: bool = False

    # Partitionierung
    strategy: str = Strategy.SSDPA_SORT.value
    k: int = 50
    merge_labels: bool = False

    # Lerner
    learner: str = 'nearest-centroid'
    epochs: int = 20
    learning_rate: float = 0.5
    lr_decay: float = 0.1
    batch_size: int = 10
    weight_decay: float = 1e-4
    feature_scale: float = 1.0 / 255.0
    seed_policy: str = 'distinct'
    base_seed: int = 0

    # Feature-Map
    feature_map: str = 'identity'
    out_dim: int = 0
    fmap_seed: int = 0
    per_partition: bool = False
    fmap_max_iters: int = 20

    # Auswertung
    rho_max: int = -1               # -1 = k // 2
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP
    output_dir: str = 'runs'
    workers: int = 1

    def __post_init__(self):
        errors = validate(self)
        if errors:
            raise ConfigError(errors)

    # -------------------------------------------------------------------------

    @property
    def effective_rho_max(self):
        return self.k // 2 if self.rho_max < 0 else self.rho_max

    def learner_config(self):
        return LearnerConfig(
            kind=self.learner, epochs=self.epochs, learning_rate=self.learning_rate,
            lr_decay=self.lr_decay, batch_size=self.batch_size, weight_decay=self.weight_decay,
            feature_scale=self.feature_scale, seed_policy=self.seed_policy, base_seed=self.base_seed,
        )

    def feature_map_config(self):
        return FeatureMapConfig(
            kind=self.feature_map, out_dim=self.out_dim, seed=self.fmap_seed,
            per_partition=self.per_partition, max_iters=self.fmap_max_iters,
        )

    def pipeline_config(self):
        return PipelineConfig(
            strategy=self.strategy, k=self.k, learner=self.learner_config(),
            feature_map=self.feature_map_config(), merge_labels=self.merge_labels,
        )

    def config_hash(self):
        data = {k: v for k, v in asdict(self).items() if k not in NON_RESULT_FIELDS}
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode('utf-8')).hexdigest()

    def to_dict(self):
        return dict(asdict(self), config_version=CONFIG_VERSION)

    def to_text(self):
        """Alle Felder inklusive Standardwerte, eine Zeile pro Schlüssel."""
        lines = [f"CONFIG_VERSION={CONFIG_VERSION}"]
        for f in fields(self):
            lines.append(f"{f.name.upper()}={_format_value(getattr(self, f.name))}")
        return '\n'.join(lines) + '\n'


def _format_value(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_bool(raw):
    value = raw.strip().lower()
    if value in ('1', 'true', 'yes', 'ja', 'on'):
        return True
    if value in ('0', 'false', 'no', 'nein', 'off', ''):
        return False
    raise ValueError(f"kein Wahrheitswert: {raw!r}")


_CONVERTERS = {bool: _parse_bool, int: int, float: float, str: str}


def validate(config):
    """Gibt {feld: meldung} für alle ungültigen Felder zurück."""
    errors = {}

    def check(name, ok, message):
        if not ok:
            errors[name] = message

    strategies = [s.value for s in Strategy]
    check('strategy', config.strategy in strategies, f"erlaubt: {', '.join(strategies)}")
    check('k', config.k >= 1, "muss >= 1 sein")
    check('learner', config.learner in LEARNER_KINDS, f"erlaubt: {', '.join(LEARNER_KINDS)}")
    check('feature_map', config.feature_map in FEATURE_MAP_KINDS, f"erlaubt: {', '.join(FEATURE_MAP_KINDS)}")
    check('seed_policy', config.seed_policy in SEED_POLICIES, f"erlaubt: {', '.join(SEED_POLICIES)}")
    check('train_format', config.train_format in DATASET_FORMATS, f"erlaubt: {', '.join(DATASET_FORMATS)}")
    check('test_format', config.test_format in DATASET_FORMATS, f"erlaubt: {', '.join(DATASET_FORMATS)}")
    check('csv_format', config.csv_format == '' or config.csv_format in CSV_FORMATS,
          f"leer oder eines von: {', '.join(CSV_FORMATS)}")
    check('num_classes', config.num_classes >= 0, "muss >= 0 sein")
    check('epochs', config.epochs >= 0, "muss >= 0 sein")
    check('batch_size', config.batch_size >= 1, "muss >= 1 sein")
    check('learning_rate', config.learning_rate > 0, "muss > 0 sein")
    check('lr_decay', config.lr_decay >= 0, "muss >= 0 sein")
    check('weight_decay', config.weight_decay >= 0, "muss >= 0 sein")
    check('feature_scale', config.feature_scale > 0, "muss > 0 sein")
    check('out_dim', config.out_dim >= 0, "muss >= 0 sein")
    check('fmap_max_iters', config.fmap_max_iters >= 1, "muss >= 1 sein")
    check('rho_max', config.rho_max >= -1, "muss >= -1 sein (-1 = k // 2)")
    check('enumeration_cap', config.enumeration_cap >= 1, "muss >= 1 sein")
    check('workers', config.workers >= 1, "muss >= 1 sein")

    if (config.strategy == Strategy.DPA_HASH.value and config.feature_map != 'identity'
            and not config.per_partition):
        errors['per_partition'] = "dpa-hash braucht die identische Feature-Map oder per_partition=true"
    return errors


def config_from_mapping(values):
    """Baut eine RunConfig aus {SCHLÜSSEL: text}; sammelt alle Fehler."""
    values = {k.upper(): v for k, v in values.items()}
    errors = {}

    version = values.pop('CONFIG_VERSION', None)
    if version is None:
        errors['config_version'] = "fehlt"
    elif str(version).strip() != str(CONFIG_VERSION):
        errors['config_version'] = f"Version {version} wird nicht unterstützt (erwartet {CONFIG_VERSION})"

    known = {f.name: f for f in fields(RunConfig)}
    kwargs = {}
    for key, raw in values.items():
        name = key.lower()
        if name not in known:
            errors[name] = "unbekannter Schlüssel"
            continue
        converter = _CONVERTERS[type(known[name].default)]
        try:
            kwargs[name] = converter((raw or '').strip())
        except ValueError:
            errors[name] = f"ungültiger Wert {raw!r}"

    if errors:
        raise ConfigError(errors)
    return RunConfig(**kwargs)


def load_config(path):
    return config_from_mapping(dotenv_values(path))


def save_config(config, path):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(config.to_text())


# =============================================================================
# Umgebung
# =============================================================================

def cache_dir(override=None):
    return override or os.environ.get('DPA_CACHE_DIR') or DEFAULT_CACHE_DIR


def default_workers():
    raw = os.environ.get('DPA_WORKERS', '1')
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError({'DPA_WORKERS': f"keine Ganzzahl: {raw!r}"})


def log_level():
    return os.environ.get('LOG_LEVEL', 'INFO').upper()
