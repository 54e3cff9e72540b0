"""
Ensemble: Training aller k Basis-Klassifikatoren, Abstimmung mit
Gleichstand -> kleinere Klasse, Zertifikate und zertifizierte Genauigkeit.

Zertifikat für Stimmen n und Gewinner c:
    rho = floor((n_c - max_{c' != c}(n_c' + [c' < c])) / 2)
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np
from tqdm import tqdm

from dataset import as_features
from errors import InvalidArgumentError
from learners import (
    FeatureMapConfig,
    LearnerConfig,
    feature_map_from_bytes,
    feature_map_to_bytes,
    fit_feature_map,
    fit_feature_map_from_config,
    model_from_bytes,
    model_to_bytes,
    train_base,
)
from store import artifact_key

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Ensemble:
    models: tuple
    plan: object
    fmap: object            # gemeinsame Feature-Map, None bei Maps pro Partition
    num_classes: int
    provenance: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    @property
    def k(self):
        return len(self.models)

    @property
    def threat(self):
        return self.plan.strategy.threat


@dataclass(frozen=True)
class Certificate:
    predicted: int
    counts: tuple
    rho_bar: int

    def to_json(self, index, true_label):
        return {
            'index': index,
            'true_label': int(true_label),
            'predicted': self.predicted,
            'counts': list(self.counts),
            'rho_bar': self.rho_bar,
        }


@dataclass(frozen=True)
class CertifiedCurve:
    points: tuple           # ((rho, certified_accuracy), ...)
    threat: str

    @property
    def clean_accuracy(self):
        return self.points[0][1] if self.points else 0.0

    def accuracy_at(self, rho):
        for r, acc in self.points:
            if r == rho:
                return acc
        return 0.0


# =============================================================================
# Training
# =============================================================================

# nur in Worker-Prozessen gesetzt, der Hauptprozess übergibt die Map direkt
_WORKER_FMAP = None


def _init_worker(shared_fmap):
    global _WORKER_FMAP
    _WORKER_FMAP = shared_fmap


def _train_in_worker(task):
    return _train_partition(_WORKER_FMAP, task)


def _train_partition(shared, task):
    """Trainiert eine Partition mit der gemeinsamen Map oder einer eigenen."""
    partition, learner_config, fmap_config, seed, index = task

    fmap = shared
    if fmap is None:
        # Feature-Map nur aus dieser Partition
        if partition.m == 0 or fmap_config.kind == 'identity':
            fmap = fit_feature_map(partition.features, 'identity')
        else:
            fmap = fit_feature_map_from_config(partition.features, fmap_config)

    return train_base(partition, learner_config.kind, fmap, seed, learner_config, partition_index=index)


def _shared_feature_map(canon, strategy, fmap_config):
    if strategy.semi_supervised:
        # ungelabelte Daten sind vertrauenswürdig, Map über alle Samples
        return fit_feature_map_from_config(canon.features, fmap_config)

    if fmap_config.kind == 'identity':
        return fit_feature_map(canon.features, 'identity')
    if not fmap_config.per_partition:
        raise InvalidArgumentError(
            "dpa-hash erlaubt nur die identische Feature-Map oder eine Map pro Partition; "
            "eine gemeinsame Map würde jedes Basis-Modell vom Gift abhängig machen"
        )
    return None


def train_ensemble(d, plan, learner_config=None, fmap_config=None, workers=1, store=None, progress=False):
    """
    Trainiert f_0 .. f_{k-1}; f_i auf Partition i mit seed_for(i).

    Ergebnis ist unabhängig von workers und von der Reihenfolge in d.
    """
    learner_config = learner_config or LearnerConfig()
    fmap_config = fmap_config or FeatureMapConfig()

    if plan.dataset_hash != d.content_hash:
        raise InvalidArgumentError("Plan wurde für einen anderen Datensatz berechnet")

    canon = d.canonical
    shared = _shared_feature_map(canon, plan.strategy, fmap_config)
    fmap_ref = shared.fingerprint if shared is not None else f"per-partition:{fmap_config}"

    provenance = {
        'dataset_hash': d.content_hash,
        'plan_hash': plan.plan_hash(),
        'learner_config_hash': learner_config.config_hash(),
        'feature_map': fmap_ref,
    }

    models = [None] * plan.k
    keys = [artifact_key(*provenance.values(), i) for i in range(plan.k)]
    cached = 0

    if store is not None:
        for i, key in enumerate(keys):
            blob = store.get(key)
            if blob is None:
                continue
            fmap = shared
            if fmap is None:
                fmap_blob = store.get(key, kind='fmaps')
                if fmap_blob is None:
                    continue
                fmap = feature_map_from_bytes(fmap_blob)
            models[i] = model_from_bytes(blob, fmap)
            cached += 1

    todo = [i for i in range(plan.k) if models[i] is None]
    tasks = [
        (canon.subset(plan.members(i)), learner_config, fmap_config, learner_config.seed_for(i), i)
        for i in todo
    ]

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(shared,)) as pool:
            chunksize = max(1, len(tasks) // (workers * 4))
            results = list(tqdm(pool.map(_train_in_worker, tasks, chunksize=chunksize),
                                total=len(tasks), disable=not progress, desc="Training"))
    else:
        train = partial(_train_partition, shared)
        results = [train(t) for t in tqdm(tasks, disable=not progress, desc="Training")]

    for i, model in zip(todo, results):
        if shared is not None:
            # alle Modelle teilen sich dasselbe Map-Objekt
            model = replace(model, fmap=shared)
        models[i] = model
        if store is not None:
            store.put(keys[i], model_to_bytes(model))
            if shared is None:
                store.put(keys[i], feature_map_to_bytes(model.fmap), kind='fmaps')

    logger.info("Ensemble: %d Modelle trainiert, %d aus dem Cache", len(todo), cached)
    return Ensemble(
        models=tuple(models), plan=plan, fmap=shared, num_classes=d.num_classes,
        provenance=provenance, stats={'trained': len(todo), 'cached': cached, 'model_keys': keys},
    )


# =============================================================================
# Abstimmung und Zertifikate
# =============================================================================

def prediction_matrix(e, X):
    """[k, n]-Matrix der Vorhersagen aller Basis-Modelle."""
    X = np.asarray(X)
    if X.ndim != 2 or (e.k and X.shape[1] != e.models[0].fmap.in_dim):
        raise InvalidArgumentError("Testsamples haben die falsche Dimension")

    preds = np.empty((e.k, len(X)), dtype=np.int64)
    if e.fmap is not None:
        Z = e.fmap.transform(X)
        for i, model in enumerate(e.models):
            preds[i] = model.predict_features(Z)
    else:
        # jede Partition hat ihre eigene Map
        for i, model in enumerate(e.models):
            preds[i] = model.predict_features(model.fmap.transform(X))
    return preds


def count_matrix(preds, num_classes):
    """[n, C]-Stimmen aus der [k, n]-Vorhersagematrix."""
    k, n = preds.shape
    counts = np.zeros((n, num_classes), dtype=np.int64)
    rows = np.arange(n)
    for row in preds:
        np.add.at(counts, (rows, row), 1)
    return counts


def vote_counts(e, x):
    x = as_features(x, dim=e.models[0].fmap.in_dim if e.k else None)
    return count_matrix(prediction_matrix(e, x[None, :]), e.num_classes)[0]


def aggregate(counts):
    """argmax, bei Gleichstand die kleinere Klasse."""
    return int(np.argmax(np.asarray(counts)))


def certify(counts):
    counts = np.asarray(counts, dtype=np.int64)
    c = aggregate(counts)
    challenger = 0
    for other in range(len(counts)):
        if other != c:
            challenger = max(challenger, int(counts[other]) + (1 if other < c else 0))
    rho_bar = (int(counts[c]) - challenger) // 2
    return Certificate(predicted=c, counts=tuple(int(v) for v in counts), rho_bar=rho_bar)


def certify_counts(counts):
    """Vektorisierte Zertifikate für eine [n, C]-Stimmenmatrix."""
    counts = np.asarray(counts, dtype=np.int64)
    n, num_classes = counts.shape
    predicted = np.argmax(counts, axis=1)
    rows = np.arange(n)

    adjusted = counts + (np.arange(num_classes)[None, :] < predicted[:, None])
    adjusted[rows, predicted] = -1
    challenger = np.maximum(adjusted.max(axis=1), 0)
    rho_bar = (counts[rows, predicted] - challenger) // 2

    return [
        Certificate(predicted=int(p), counts=tuple(row), rho_bar=int(r))
        for p, row, r in zip(predicted.tolist(), counts.tolist(), rho_bar.tolist())
    ]


def certify_dataset(e, test):
    return certify_counts(count_matrix(prediction_matrix(e, test.features), e.num_classes))


def curve_from_certificates(certificates, labels, rho_max, threat):
    labels = np.asarray(labels)
    predicted = np.array([c.predicted for c in certificates], dtype=np.int64)
    radii = np.array([c.rho_bar for c in certificates], dtype=np.int64)
    correct = predicted == labels

    points = []
    for rho in range(rho_max + 1):
        acc = float(np.mean(correct & (radii >= rho))) if len(labels) else 0.0
        points.append((rho, acc))
    return CertifiedCurve(points=tuple(points), threat=threat)


def certified_accuracy_curve(e, test, rho_max=None):
    if rho_max is None:
        rho_max = e.k // 2
    certificates = certify_dataset(e, test)
    return curve_from_certificates(certificates, test.labels, rho_max, e.threat)


def median_certified_robustness(curve):
    """Größtes rho mit zertifizierter Genauigkeit >= 50 %, sonst None (N/A)."""
    best = None
    for rho, acc in curve.points:
        if acc >= 0.5:
            best = rho if best is None else max(best, rho)
    return best


def _mean_accuracy(preds, labels):
    if preds.size == 0:
        return 0.0
    return float(np.mean(preds == np.asarray(labels)[None, :]))


def base_classifier_accuracy(e, test):
    """Mittel über alle k Modelle der Genauigkeit auf der ganzen Testmenge."""
    return _mean_accuracy(prediction_matrix(e, test.features), test.labels)


@dataclass(frozen=True)
class Evaluation:
    certificates: list
    labels: np.ndarray
    curve: CertifiedCurve
    base_accuracy: float

    def summary(self, e):
        median = median_certified_robustness(self.curve)
        return {
            'clean_accuracy': self.curve.clean_accuracy,
            'median_certified_robustness': median if median is not None else 'N/A',
            'base_classifier_accuracy': self.base_accuracy,
            'k': e.k,
            'strategy': e.plan.strategy.value,
            'threat': self.curve.threat,
        }


def evaluate(e, test, rho_max=None):
    """Zertifikate, Kurve und Basis-Genauigkeit in einem Durchlauf."""
    if test.dim != (e.models[0].fmap.in_dim if e.k else test.dim):
        raise InvalidArgumentError("Testmenge hat eine andere Dimension als das Training")
    if rho_max is None:
        rho_max = e.k // 2

    preds = prediction_matrix(e, test.features)
    certificates = certify_counts(count_matrix(preds, e.num_classes))
    curve = curve_from_certificates(certificates, test.labels, rho_max, e.threat)
    return Evaluation(
        certificates=certificates, labels=np.asarray(test.labels), curve=curve,
        base_accuracy=_mean_accuracy(preds, test.labels),
    )


def summarize(e, test, curve=None):
    """Zusammenfassung wie in den Ergebnistabellen; curve überschreibt die Standardkurve."""
    evaluation = evaluate(e, test)
    if curve is not None:
        evaluation = replace(evaluation, curve=curve)
    return evaluation.summary(e)
