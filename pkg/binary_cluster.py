"""
Binäre SS-DPA mit k = m: 2-means auf den ungelabelten Daten, jedes
Trainingselement stimmt für eine Zuordnung Cluster -> Label.

Hypothesen:
    straight  Cluster 1 -> Label 0, Cluster 2 -> Label 1
    swapped   Cluster 1 -> Label 1, Cluster 2 -> Label 0

Ein Label-Flip verschiebt genau eine Stimme; alle Testbilder teilen sich
deshalb dasselbe Zertifikat.
"""

import logging
from dataclasses import dataclass

import numpy as np

from dataset import as_features, canonical_order, select_classes
from errors import DegenerateInputError, InvalidArgumentError

logger = logging.getLogger(__name__)

H_STRAIGHT = 'H-straight'
H_SWAPPED = 'H-swapped'


def _squared_distance_to(X, mu):
    diff = X - mu
    return np.einsum('ij,ij->i', diff, diff)


def assign_clusters(X, mu1, mu2):
    """Cluster 1 wenn |mu1 - s| <= |mu2 - s|, sonst 2 (vektorisiert)."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != len(mu1) or len(mu1) != len(mu2):
        raise InvalidArgumentError("Dimension von Sample und Zentren passt nicht")
    d1 = _squared_distance_to(X, mu1)
    d2 = _squared_distance_to(X, mu2)
    return np.where(d1 <= d2, 1, 2).astype(np.int64)


def assign_cluster(s, mu1, mu2):
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1:
        raise InvalidArgumentError("Sample muss ein Vektor sein")
    return int(assign_clusters(s[None, :], np.asarray(mu1, dtype=np.float64), np.asarray(mu2, dtype=np.float64))[0])


def two_means(unlabeled, max_iters=100):
    """
    Lloyd-Algorithmus mit deterministischer Initialisierung:
    kleinstes Sample (lexikographisch) und das davon am weitesten entfernte.
    Rückgabe (mu1, mu2) mit mu1 lexikographisch kleiner.
    """
    X = np.asarray(unlabeled)
    if X.ndim != 2:
        raise InvalidArgumentError(f"Samples brauchen Form [n, dim], nicht {X.shape}")

    # Menge, kanonisch sortiert
    if len(X) > 1:
        X = X[canonical_order(X)]
        X = X[np.concatenate([[True], np.any(X[1:] != X[:-1], axis=1)])]
    if len(X) < 2:
        raise DegenerateInputError("2-means braucht mindestens zwei verschiedene Samples")

    Xf = X.astype(np.float64)
    mu1 = Xf[0].copy()
    # argmax nimmt bei Gleichstand das lexikographisch kleinste
    mu2 = Xf[int(np.argmax(_squared_distance_to(Xf, mu1)))].copy()

    assignment = None
    for iteration in range(max_iters):
        new_assignment = np.where(_squared_distance_to(Xf, mu1) <= _squared_distance_to(Xf, mu2), 1, 2)

        # leerer Cluster: am weitesten vom anderen Zentrum entfernten Punkt umhängen
        for lost, surviving in ((1, mu2), (2, mu1)):
            if not np.any(new_assignment == lost):
                farthest = int(np.argmax(_squared_distance_to(Xf, surviving)))
                new_assignment[farthest] = lost

        if assignment is not None and np.array_equal(new_assignment, assignment):
            logger.debug("2-means konvergiert nach %d Iterationen", iteration)
            break
        assignment = new_assignment
        mu1 = Xf[assignment == 1].mean(axis=0)
        mu2 = Xf[assignment == 2].mean(axis=0)

    if tuple(mu2.tolist()) < tuple(mu1.tolist()):
        mu1, mu2 = mu2, mu1
    return mu1, mu2


@dataclass(frozen=True, eq=False)
class TwoMeansModel:
    """votes[a - 1][l] = Anzahl Trainingselemente in Cluster a mit Label l."""
    mu1: np.ndarray
    mu2: np.ndarray
    votes: np.ndarray
    hypothesis: str
    rho_bar: int

    @property
    def m(self):
        return int(self.votes.sum())

    @property
    def vote_totals(self):
        straight = int(self.votes[0][0] + self.votes[1][1])
        swapped = int(self.votes[0][1] + self.votes[1][0])
        return straight, swapped

    def predict_batch(self, X):
        clusters = assign_clusters(X, self.mu1, self.mu2)
        predictions = (clusters == 2).astype(np.int64)
        if self.hypothesis == H_SWAPPED:
            predictions = 1 - predictions
        return predictions


def consensus(straight, swapped):
    """
    Gewinnende Hypothese und globales Zertifikat.
    Bei Gleichstand gewinnt straight (Cluster 1 -> kleineres Label).
    """
    if straight >= swapped:
        return H_STRAIGHT, (straight - swapped) // 2
    # swapped verliert Gleichstände, daher Abzug 1
    return H_SWAPPED, (swapped - straight - 1) // 2


def fit_two_means_model(d, max_iters=100):
    if d.num_classes != 2:
        raise InvalidArgumentError(f"Binärer Datensatz erwartet, nicht {d.num_classes} Klassen")

    mu1, mu2 = two_means(d.features, max_iters=max_iters)
    clusters = assign_clusters(d.features, mu1, mu2)

    votes = np.zeros((2, 2), dtype=np.int64)
    np.add.at(votes, (clusters - 1, d.labels), 1)

    straight = int(votes[0][0] + votes[1][1])
    swapped = int(votes[0][1] + votes[1][0])
    hypothesis, rho_bar = consensus(straight, swapped)

    logger.info("2-means: Stimmen straight=%d swapped=%d -> %s, rho=%d", straight, swapped, hypothesis, rho_bar)
    return TwoMeansModel(mu1=mu1, mu2=mu2, votes=votes, hypothesis=hypothesis, rho_bar=rho_bar)


@dataclass(frozen=True)
class BinaryCertificate:
    predictions: np.ndarray
    rho_bar: int


def binary_certify(d, test_features, model=None):
    """Vorhersagen auf der Testmenge plus das gemeinsame Zertifikat."""
    if d.num_classes != 2:
        raise InvalidArgumentError(f"Binärer Datensatz erwartet, nicht {d.num_classes} Klassen")
    model = model or fit_two_means_model(d)
    test_features = np.asarray(test_features)
    if test_features.ndim == 1:
        test_features = as_features(test_features, dim=d.dim)[None, :]
    return BinaryCertificate(predictions=model.predict_batch(test_features), rho_bar=model.rho_bar)


def run_binary_experiment(train, test, class_a, class_b):
    """2-means SS-DPA auf class_a gegen class_b eines Mehrklassen-Datensatzes."""
    train_bin = select_classes(train, class_a, class_b)
    test_bin = select_classes(test, class_a, class_b)

    model = fit_two_means_model(train_bin)
    result = binary_certify(train_bin, test_bin.features, model)
    correct = result.predictions == test_bin.labels
    clean_accuracy = float(correct.mean()) if len(correct) else 0.0

    return {
        'clean_accuracy': clean_accuracy,
        # jedes korrekt klassifizierte Bild ist bis rho_bar zertifiziert
        'certified_accuracy': clean_accuracy,
        'rho_bar': int(model.rho_bar),
        'votes': model.votes.tolist(),
        'hypothesis': model.hypothesis,
        'm': train_bin.m,
    }
