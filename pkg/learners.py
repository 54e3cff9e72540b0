"""
Basis-Klassifikatoren und Feature-Maps

Alle Lernverfahren sind deterministisch: Eingaben werden vor dem Training
kanonisch sortiert, Zufall kommt nur aus einem pro Partition geseedeten
numpy-Generator. Gleiche Menge + gleicher Seed -> bitgleiche Parameter.
"""

import hashlib
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from binary_cluster import assign_clusters, two_means
from dataset import as_features, canonical_order
from errors import DatasetParseError, InvalidArgumentError

logger = logging.getLogger(__name__)

FEATURE_MAP_KINDS = ('identity', 'pca', 'kmeans-bag', 'two-means')
LEARNER_KINDS = ('nearest-centroid', 'logistic-regression', 'cluster-label')
SEED_POLICIES = ('distinct', 'same')

BLOB_VERSION = 1


@dataclass(frozen=True)
class FeatureMapConfig:
    kind: str = 'identity'
    out_dim: int = 0          # 0 = volle Dimension (pca) bzw. 10 Zentren (kmeans-bag)
    seed: int = 0
    per_partition: bool = False
    max_iters: int = 20

    def __post_init__(self):
        if self.kind not in FEATURE_MAP_KINDS:
            raise InvalidArgumentError(f"Unbekannte Feature-Map {self.kind!r}")


@dataclass(frozen=True)
class LearnerConfig:
    kind: str = 'nearest-centroid'
    epochs: int = 20
    learning_rate: float = 0.5
    lr_decay: float = 0.1       # lr_epoche = learning_rate / (1 + lr_decay * epoche)
    batch_size: int = 10
    weight_decay: float = 1e-4
    feature_scale: float = 1.0 / 255.0
    seed_policy: str = 'distinct'
    base_seed: int = 0

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise InvalidArgumentError(f"Unbekannter Lerner {self.kind!r}")
        if self.seed_policy not in SEED_POLICIES:
            raise InvalidArgumentError(f"Unbekannte Seed-Strategie {self.seed_policy!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidArgumentError("epochs >= 0 und batch_size >= 1 erforderlich")

    def seed_for(self, partition_index):
        """Seed von Basis-Klassifikator i: i selbst (distinct) oder base_seed (same)."""
        if self.seed_policy == 'same':
            return self.base_seed
        return self.base_seed + partition_index

    def config_hash(self):
        return _hash_json(asdict(self))


def _hash_json(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode('utf-8')).hexdigest()


def unique_sorted_rows(X):
    """Zeilen als Menge, kanonisch sortiert."""
    X = np.asarray(X)
    if len(X) < 2:
        return X
    order = canonical_order(X)
    Xs = X[order]
    keep = np.concatenate([[True], np.any(Xs[1:] != Xs[:-1], axis=1)])
    return Xs[keep]


def squared_distances(Z, C):
    """[n, p]-Matrix der quadrierten euklidischen Abstände."""
    d2 = (Z * Z).sum(axis=1)[:, None] - 2.0 * (Z @ C.T) + (C * C).sum(axis=1)[None, :]
    return np.maximum(d2, 0.0)


# =============================================================================
# Feature-Maps
# =============================================================================

@dataclass(frozen=True, eq=False)
class FeatureMap:
    kind: str
    in_dim: int
    out_dim: int
    params: dict = field(default_factory=dict)

    def transform(self, X):
        """[n, in_dim] -> [n, out_dim] (float64)."""
        X = np.asarray(X)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != self.in_dim:
            raise InvalidArgumentError(f"Dimension {X.shape[1]}, Feature-Map erwartet {self.in_dim}")

        Xf = X.astype(np.float64)
        if self.kind == 'identity':
            Z = Xf
        elif self.kind == 'pca':
            Z = (Xf - self.params['mean']) @ self.params['components'].T
        elif self.kind == 'kmeans-bag':
            Z = -np.sqrt(squared_distances(Xf, self.params['centroids']))
        elif self.kind == 'two-means':
            Z = assign_clusters(X, self.params['mu1'], self.params['mu2']).astype(np.float64)[:, None]
        else:
            raise InvalidArgumentError(f"Unbekannte Feature-Map {self.kind!r}")

        return Z[0] if single else Z

    @cached_property
    def fingerprint(self):
        hasher = hashlib.sha256()
        hasher.update(f"{self.kind}:{self.in_dim}:{self.out_dim}".encode('utf-8'))
        for name in sorted(self.params):
            hasher.update(name.encode('utf-8'))
            hasher.update(np.ascontiguousarray(self.params[name]).tobytes())
        return hasher.hexdigest()


def _fit_pca(X, out_dim):
    Xf = X.astype(np.float64)
    mean = Xf.mean(axis=0)
    centered = Xf - mean
    eigenvalues, eigenvectors = np.linalg.eigh(centered.T @ centered)

    # absteigend nach Varianz, bei Gleichstand niedrigerer Index zuerst
    order = np.argsort(-eigenvalues, kind='stable')[:out_dim]
    components = eigenvectors[:, order].T.copy()

    # Vorzeichen: betragsgrößter Eintrag positiv (argmax nimmt den ersten)
    for i, comp in enumerate(components):
        if comp[np.argmax(np.abs(comp))] < 0:
            components[i] = -comp

    return {'mean': mean, 'components': components}


def _fit_kmeans(X, n_centers, seed, max_iters):
    """
    Lloyd-Iterationen ab geseedeten Startzentren. Bei weniger verschiedenen
    Samples als Zentren wird das letzte Zentrum wiederholt, out_dim bleibt fest.
    """
    Xf = X.astype(np.float64)
    fitted = min(n_centers, len(Xf))

    rng = np.random.default_rng(seed)
    centroids = Xf[np.sort(rng.choice(len(Xf), size=fitted, replace=False))].copy()
    assignment = None

    for _ in range(max_iters):
        new_assignment = np.argmin(squared_distances(Xf, centroids), axis=1)
        if assignment is not None and np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for j in range(fitted):
            members = Xf[assignment == j]
            # leere Cluster behalten ihr Zentrum
            if len(members):
                centroids[j] = members.mean(axis=0)

    if fitted < n_centers:
        centroids = np.vstack([centroids, np.repeat(centroids[-1:], n_centers - fitted, axis=0)])
    return {'centroids': centroids}


def fit_feature_map(unlabeled, kind='identity', out_dim=0, seed=0, max_iters=20):
    """
    Passt eine Feature-Map auf ungelabelten Samples an (als Menge behandelt).

    pca: Mittelwert-Zentrierung + die out_dim stärksten Hauptrichtungen
    kmeans-bag: geseedetes k-means, Merkmale = negative Abstände zu den Zentren
    two-means: 2-means-Zentren, Merkmal = Cluster-Nummer (1 oder 2)
    """
    X = np.asarray(unlabeled)
    if X.ndim != 2:
        raise InvalidArgumentError(f"Ungelabelte Samples brauchen Form [n, dim], nicht {X.shape}")
    in_dim = X.shape[1]

    if kind == 'identity':
        return FeatureMap('identity', in_dim, in_dim)

    if kind not in FEATURE_MAP_KINDS:
        raise InvalidArgumentError(f"Unbekannte Feature-Map {kind!r}")
    if len(X) == 0:
        raise InvalidArgumentError(f"Feature-Map {kind} braucht ungelabelte Samples")

    X = unique_sorted_rows(X)

    if kind == 'pca':
        out_dim = out_dim or in_dim
        if out_dim > in_dim:
            raise InvalidArgumentError(f"out_dim {out_dim} > in_dim {in_dim}")
        params = _fit_pca(X, out_dim)
    elif kind == 'kmeans-bag':
        out_dim = out_dim or 10
        params = _fit_kmeans(X, out_dim, seed, max_iters)
    else:
        mu1, mu2 = two_means(X)
        params = {'mu1': mu1, 'mu2': mu2}
        out_dim = 1

    logger.debug("Feature-Map %s angepasst (%d -> %d, n=%d)", kind, in_dim, out_dim, len(X))
    return FeatureMap(kind, in_dim, out_dim, params)


def fit_feature_map_from_config(unlabeled, config):
    return fit_feature_map(unlabeled, config.kind, config.out_dim, config.seed, config.max_iters)


# =============================================================================
# Logistische Regression
# =============================================================================

def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def cross_entropy_loss(W, b, Z, y, weight_decay=0.0):
    """Mittlere multinomiale Kreuzentropie plus L2-Term 0.5 * wd * |W|^2."""
    probs = softmax(Z @ W.T + b)
    nll = -np.log(probs[np.arange(len(y)), y])
    return float(nll.mean() + 0.5 * weight_decay * np.sum(W * W))


def cross_entropy_gradient(W, b, Z, y, weight_decay=0.0):
    probs = softmax(Z @ W.T + b)
    probs[np.arange(len(y)), y] -= 1.0
    n = len(y)
    grad_W = probs.T @ Z / n + weight_decay * W
    grad_b = probs.sum(axis=0) / n
    return grad_W, grad_b


def _train_logistic(Z, y, num_classes, seed, config):
    n, dz = Z.shape
    W = np.zeros((num_classes, dz))
    b = np.zeros(num_classes)
    rng = np.random.default_rng(seed)

    for epoch in range(config.epochs):
        lr = config.learning_rate / (1.0 + config.lr_decay * epoch)
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            grad_W, grad_b = cross_entropy_gradient(W, b, Z[idx], y[idx], config.weight_decay)
            W -= lr * grad_W
            b -= lr * grad_b

    return {'W': W, 'b': b}


# =============================================================================
# Basis-Modelle
# =============================================================================

@dataclass(frozen=True, eq=False)
class BaseModel:
    """
    Trainierter Basis-Klassifikator f_i. Leere weights = konstant Klasse 0.
    """
    kind: str
    num_classes: int
    seed: int
    partition_index: int
    fmap: FeatureMap
    weights: dict = field(default_factory=dict)
    feature_scale: float = 1.0

    @property
    def feature_map_ref(self):
        return self.fmap.fingerprint

    @property
    def is_constant(self):
        return not self.weights

    def predict_features(self, Z):
        """Vorhersagen auf bereits transformierten Merkmalen [n, out_dim]."""
        n = len(Z)
        if self.is_constant:
            return np.zeros(n, dtype=np.int64)

        if self.kind == 'nearest-centroid':
            classes = self.weights['classes']
            # argmin nimmt den ersten Treffer -> kleinere Klasse bei Gleichstand
            idx = np.argmin(squared_distances(Z, self.weights['centroids']), axis=1)
            return classes[idx]

        if self.kind == 'logistic-regression':
            logits = (Z * self.feature_scale) @ self.weights['W'].T + self.weights['b']
            return np.argmax(logits, axis=1).astype(np.int64)

        if self.kind == 'cluster-label':
            clusters = Z[:, 0].astype(np.int64)
            same = clusters[:, None] == self.weights['clusters'][None, :]
            votes_for_one = np.where(same, self.weights['labels'][None, :], 1 - self.weights['labels'][None, :]).sum(axis=1)
            # Mehrheit der Elemente, Gleichstand -> Klasse 0
            return (2 * votes_for_one > len(self.weights['labels'])).astype(np.int64)

        raise InvalidArgumentError(f"Unbekannter Lerner {self.kind!r}")

    def predict_batch(self, X):
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[1] != self.fmap.in_dim:
            raise InvalidArgumentError(f"Samples brauchen Dimension {self.fmap.in_dim}")
        return self.predict_features(self.fmap.transform(X))


def train_base(partition, kind, fmap, seed, config=None, partition_index=0):
    """
    Trainiert f_i auf einer Partition (Dataset, als Menge behandelt).

    Leere Partition -> konstantes Modell mit Vorhersage 0.
    """
    config = config or LearnerConfig(kind=kind)
    if kind not in LEARNER_KINDS:
        raise InvalidArgumentError(f"Unbekannter Lerner {kind!r}")

    model = dict(
        kind=kind, num_classes=partition.num_classes, seed=seed,
        partition_index=partition_index, fmap=fmap,
    )

    if partition.m == 0:
        return BaseModel(**model)

    canon = partition.canonical
    Z = fmap.transform(canon.features)
    y = canon.labels

    if kind == 'nearest-centroid':
        classes = np.unique(y)
        centroids = np.stack([Z[y == c].mean(axis=0) for c in classes])
        return BaseModel(**model, weights={'classes': classes, 'centroids': centroids})

    if kind == 'logistic-regression':
        weights = _train_logistic(Z * config.feature_scale, y, partition.num_classes, seed, config)
        return BaseModel(**model, weights=weights, feature_scale=config.feature_scale)

    if fmap.kind != 'two-means' or partition.num_classes != 2:
        raise InvalidArgumentError("cluster-label braucht die two-means Feature-Map und zwei Klassen")
    return BaseModel(**model, weights={
        'clusters': Z[:, 0].astype(np.int64),
        'labels': y.astype(np.int64),
    })


def predict(model, x):
    """Klasse für ein einzelnes Sample."""
    x = as_features(x, dim=model.fmap.in_dim)
    return int(model.predict_batch(x[None, :])[0])


# =============================================================================
# Serialisierung
# =============================================================================

def _arrays_to_bytes(meta, arrays):
    buffer = io.BytesIO()
    payload = {f"w_{name}": value for name, value in arrays.items()}
    payload['__meta__'] = np.frombuffer(json.dumps(meta, sort_keys=True).encode('utf-8'), dtype=np.uint8)
    np.savez(buffer, **payload)
    return buffer.getvalue()


def _bytes_to_arrays(data):
    with np.load(io.BytesIO(data), allow_pickle=False) as npz:
        meta = json.loads(npz['__meta__'].tobytes().decode('utf-8'))
        arrays = {name[2:]: npz[name] for name in npz.files if name.startswith('w_')}
    if meta.get('version') != BLOB_VERSION:
        raise DatasetParseError(f"Unbekannte Blob-Version {meta.get('version')}")
    return meta, arrays


def feature_map_to_bytes(fmap):
    meta = {'version': BLOB_VERSION, 'type': 'feature-map', 'kind': fmap.kind,
            'in_dim': fmap.in_dim, 'out_dim': fmap.out_dim}
    return _arrays_to_bytes(meta, fmap.params)


def feature_map_from_bytes(data):
    meta, arrays = _bytes_to_arrays(data)
    return FeatureMap(meta['kind'], meta['in_dim'], meta['out_dim'], arrays)


def model_to_bytes(model):
    meta = {
        'version': BLOB_VERSION, 'type': 'base-model', 'kind': model.kind,
        'num_classes': model.num_classes, 'seed': model.seed,
        'partition_index': model.partition_index, 'feature_scale': model.feature_scale,
        'feature_map_ref': model.feature_map_ref,
    }
    return _arrays_to_bytes(meta, model.weights)


def model_from_bytes(data, fmap):
    meta, arrays = _bytes_to_arrays(data)
    if meta['feature_map_ref'] != fmap.fingerprint:
        raise InvalidArgumentError("Modell wurde mit einer anderen Feature-Map trainiert")
    return BaseModel(
        kind=meta['kind'], num_classes=meta['num_classes'], seed=meta['seed'],
        partition_index=meta['partition_index'], fmap=fmap, weights=arrays,
        feature_scale=meta['feature_scale'],
    )


def partition_dataset(d, plan, i):
    """Partition i als eigener (kanonischer) Datensatz."""
    return d.canonical.subset(plan.members(i))
