"""
Orakel zur Prüfung der Zertifikate

- Stimmen-Ebene: optimaler Gegner für Pluralitätswahl (greedy) und Brute Force
- Label-Flips / Entfernen: vollständige Aufzählung mit komplettem Neutraining
- Einfügen: Überabschätzung auf Stimmen-Ebene plus konkrete Stichproben
- Vergleich mit Randomized Ablation (Wahrscheinlichkeit eines vergifteten
  Basis-Klassifikators)
"""

import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from tqdm import tqdm

from ensemble import aggregate, count_matrix, prediction_matrix, train_ensemble
from errors import EnumerationCapExceeded, InvalidArgumentError
from learners import FeatureMapConfig, LearnerConfig
from partitioning import Strategy, make_plan

logger = logging.getLogger(__name__)

DEFAULT_ENUMERATION_CAP = 10 ** 6

THREATS = ('label-flip', 'removal', 'insertion', 'symmetric-difference')


@dataclass(frozen=True)
class AttackBudget:
    threat: str
    rho: int

    def __post_init__(self):
        if self.threat not in THREATS:
            raise InvalidArgumentError(f"Unbekanntes Bedrohungsmodell {self.threat!r}")
        if self.rho < 0:
            raise InvalidArgumentError("rho muss >= 0 sein")


@dataclass(frozen=True)
class PipelineConfig:
    """Alles, was das Orakel zum Neutrainieren braucht."""
    strategy: str = Strategy.SSDPA_SORT.value
    k: int = 3
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    feature_map: FeatureMapConfig = field(default_factory=FeatureMapConfig)
    merge_labels: bool = False


@dataclass
class Verdict:
    threat: str
    rho: int
    verdict: str = 'sound'          # sound | counterexample
    counterexample: object = None
    sets_checked: int = 0
    wall_time_ms: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def sound(self):
        return self.verdict == 'sound'

    def to_json(self):
        data = {
            'threat': self.threat,
            'rho': self.rho,
            'verdict': self.verdict,
            'sets_checked': self.sets_checked,
            'wall_time_ms': round(self.wall_time_ms, 3),
        }
        if self.counterexample is not None:
            data['counterexample'] = self.counterexample
        data.update(self.details)
        return data


def run_pipeline(d, config):
    plan = make_plan(d, config.k, config.strategy, merge_labels=config.merge_labels)
    return train_ensemble(d, plan, config.learner, config.feature_map)


def ensemble_predictions(e, X):
    counts = count_matrix(prediction_matrix(e, X), e.num_classes)
    return np.argmax(counts, axis=1)


# =============================================================================
# Stimmen-Ebene
# =============================================================================

def vote_flip_check(counts, rho):
    """
    True gdw. kein Umverteilen von höchstens rho Stimmen den Gewinner ändert.

    Für jeden Herausforderer: zuerst Stimmen vom Gewinner abziehen (jede
    verschiebt den Abstand um 2), danach von dritten Klassen.
    """
    counts = np.asarray(counts, dtype=np.int64)
    winner = aggregate(counts)

    for target in range(len(counts)):
        if target == winner:
            continue
        moved = counts.copy()
        from_winner = min(rho, int(moved[winner]))
        moved[winner] -= from_winner
        moved[target] += from_winner

        budget = rho - from_winner
        for other in range(len(counts)):
            if budget == 0:
                break
            if other in (winner, target):
                continue
            taken = min(budget, int(moved[other]))
            moved[other] -= taken
            moved[target] += taken
            budget -= taken

        if aggregate(moved) != winner:
            return False
    return True


def compositions(total, parts):
    """Alle Vektoren nichtnegativer Ganzzahlen der Länge parts mit Summe total."""
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        previous = -1
        result = []
        for bar in bars:
            result.append(bar - previous - 1)
            previous = bar
        result.append(total + parts - 1 - previous - 1)
        yield result


def brute_force_vote_check(counts, rho):
    """Wie vote_flip_check, aber über alle erreichbaren Stimmvektoren."""
    counts = np.asarray(counts, dtype=np.int64)
    winner = aggregate(counts)
    k = int(counts.sum())

    for candidate in compositions(k, len(counts)):
        # Anzahl verschobener Stimmen = halbe L1-Distanz
        moved = int(np.abs(np.asarray(candidate) - counts).sum()) // 2
        if moved <= rho and aggregate(candidate) != winner:
            return False
    return True


# =============================================================================
# Vollständige Aufzählung
# =============================================================================

def label_flip_count(m, num_classes, rho):
    return sum(math.comb(m, j) * (num_classes - 1) ** j for j in range(rho + 1))


def removal_count(m, rho):
    return sum(math.comb(m, j) for j in range(min(rho, m) + 1))


def _as_matrix(xs, dim):
    X = np.asarray(xs)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != dim:
        raise InvalidArgumentError(f"Testsample hat Dimension {X.shape[1]}, erwartet {dim}")
    return X


def _enumerate_and_check(threat, d, config, X, rhos, attacks, progress):
    """
    Gemeinsamer Kern: trainiert für jede Angriffsmenge neu und vergleicht
    die Vorhersagen aller Testsamples, deren Budget die Menge abdeckt.
    """
    started = time.perf_counter()
    baseline = ensemble_predictions(run_pipeline(d, config), X)

    verdicts = [Verdict(threat=threat, rho=int(r), sets_checked=1) for r in rhos]
    open_ = set(range(len(X)))

    for size, description, poisoned in tqdm(attacks, disable=not progress, desc="Orakel"):
        relevant = [i for i in open_ if rhos[i] >= size]
        if not relevant:
            if all(rhos[i] < size for i in open_):
                break
            continue

        predictions = ensemble_predictions(run_pipeline(poisoned, config), X[relevant])
        for i, pred in zip(relevant, predictions.tolist()):
            verdicts[i].sets_checked += 1
            if pred != baseline[i]:
                verdicts[i].verdict = 'counterexample'
                verdicts[i].counterexample = dict(description, prediction_before=int(baseline[i]), prediction_after=int(pred))
                open_.discard(i)

        if not open_:
            break

    elapsed = (time.perf_counter() - started) * 1000.0
    for v in verdicts:
        v.wall_time_ms = elapsed
    return verdicts


def _label_flip_attacks(canon, max_rho):
    """Flip-Mengen in lexikographischer Reihenfolge, nach Größe aufsteigend."""
    labels = canon.labels
    for size in range(1, max_rho + 1):
        for indices in itertools.combinations(range(canon.m), size):
            choices = [[c for c in range(canon.num_classes) if c != labels[i]] for i in indices]
            for new_labels in itertools.product(*choices):
                flipped = labels.copy()
                flipped[list(indices)] = new_labels
                description = {'flips': [
                    {'index': int(i), 'from': int(labels[i]), 'to': int(n)}
                    for i, n in zip(indices, new_labels)
                ]}
                yield size, description, canon.with_labels(flipped)


def _removal_attacks(canon, max_rho):
    for size in range(1, min(max_rho, canon.m) + 1):
        for indices in itertools.combinations(range(canon.m), size):
            yield size, {'removed': [int(i) for i in indices]}, canon.without(indices)


def exhaustive_label_flip_verify_many(d, config, xs, rhos, cap=DEFAULT_ENUMERATION_CAP, progress=False):
    canon = d.canonical
    X = _as_matrix(xs, canon.dim)
    rhos = [int(r) for r in rhos]
    max_rho = max(rhos) if rhos else 0

    required = label_flip_count(canon.m, canon.num_classes, max_rho)
    if required > cap:
        raise EnumerationCapExceeded(required, cap)

    return _enumerate_and_check('label-flip', canon, config, X, rhos, _label_flip_attacks(canon, max_rho), progress)


def exhaustive_label_flip_verify(d, config, x, rho, cap=DEFAULT_ENUMERATION_CAP, progress=False):
    """Trainiert für jede Flip-Menge der Größe <= rho neu; sound wenn x stabil bleibt."""
    return exhaustive_label_flip_verify_many(d, config, [x], [rho], cap, progress)[0]


def exhaustive_removal_verify_many(d, config, xs, rhos, cap=DEFAULT_ENUMERATION_CAP, progress=False):
    if Strategy(config.strategy) is not Strategy.DPA_HASH:
        raise InvalidArgumentError("Entfernen wird nur für dpa-hash zertifiziert")
    canon = d.canonical
    X = _as_matrix(xs, canon.dim)
    rhos = [int(r) for r in rhos]
    max_rho = max(rhos) if rhos else 0

    required = removal_count(canon.m, max_rho)
    if required > cap:
        raise EnumerationCapExceeded(required, cap)

    return _enumerate_and_check('removal', canon, config, X, rhos, _removal_attacks(canon, max_rho), progress)


def exhaustive_removal_verify(d, config, x, rho, cap=DEFAULT_ENUMERATION_CAP, progress=False):
    return exhaustive_removal_verify_many(d, config, [x], [rho], cap, progress)[0]


# =============================================================================
# Einfügen
# =============================================================================

def craft_sample(dim, pixel_sum):
    """Sample mit vorgegebener Pixelsumme (von vorne mit 255 aufgefüllt)."""
    features = np.zeros(dim, dtype=np.uint8)
    remaining = pixel_sum
    for j in range(dim):
        value = min(255, remaining)
        features[j] = value
        remaining -= value
        if remaining == 0:
            break
    return features


def craft_insertions(d, targets, k, label, seed=0):
    """
    Ein neues Sample pro Zielpartition, dessen Pixelsumme ≡ Ziel (mod k)
    ist und das im Datensatz noch nicht vorkommt.
    """
    rng = np.random.default_rng(seed)
    existing = {row.tobytes() for row, lab in zip(d.features, d.labels) if lab == label}
    max_sum = 255 * d.dim
    crafted = []

    for target in targets:
        step = int(rng.integers(0, 50))
        while True:
            pixel_sum = target + k * step
            if pixel_sum > max_sum:
                raise InvalidArgumentError(f"Keine freie Pixelsumme für Partition {target}")
            sample = craft_sample(d.dim, pixel_sum)
            if sample.tobytes() not in existing:
                break
            step += 1
        existing.add(sample.tobytes())
        crafted.append(sample)

    return np.stack(crafted) if crafted else np.zeros((0, d.dim), dtype=np.uint8)


def insertion_adversary_verify(d, config, x, rho, spot_check=True, seed=0):
    """
    Einfügungen auf Stimmen-Ebene: bis zu rho Partitionen dürfen beliebig
    stimmen. Zusätzlich (dpa-hash) ein konkreter Angriff mit rho gezielt
    gehashten Samples, der nie pessimistischer sein darf als die Abschätzung.
    """
    if rho > config.k:
        raise InvalidArgumentError(f"rho={rho} größer als k={config.k}")

    started = time.perf_counter()
    canon = d.canonical
    X = _as_matrix(x, canon.dim)

    e = run_pipeline(canon, config)
    counts = count_matrix(prediction_matrix(e, X), e.num_classes)[0]
    winner = aggregate(counts)
    vote_level_sound = vote_flip_check(counts, rho)

    verdict = Verdict(threat='insertion', rho=int(rho), sets_checked=1)
    verdict.details['vote_level'] = 'sound' if vote_level_sound else 'counterexample'
    if not vote_level_sound:
        verdict.verdict = 'counterexample'
        verdict.counterexample = {'counts': counts.tolist(), 'affected_partitions': int(rho)}

    if spot_check and rho > 0 and Strategy(config.strategy) is Strategy.DPA_HASH:
        # Ziel: Partitionen, die für den Gewinner stimmen, zuerst
        preds = prediction_matrix(e, X)[:, 0]
        order = sorted(range(e.k), key=lambda i: (preds[i] != winner, i))
        targets = order[:rho]

        challengers = [(int(counts[c]) + (1 if c < winner else 0), -c) for c in range(len(counts)) if c != winner]
        label = -max(challengers)[1] if challengers else winner

        inserted = craft_insertions(canon, targets, config.k, label, seed=seed)
        poisoned = canon.with_items(inserted, [label] * len(inserted))
        after = int(ensemble_predictions(run_pipeline(poisoned, config), X)[0])

        verdict.sets_checked += 1
        verdict.details['spot_check'] = {
            'inserted': len(inserted),
            'target_partitions': [int(t) for t in targets],
            'label': int(label),
            'prediction_after': after,
            'stable': after == winner,
        }
        if after != winner and vote_level_sound:
            # konkreter Angriff schlägt die Überabschätzung: Implementierungsfehler
            verdict.verdict = 'counterexample'
            verdict.counterexample = {'spot_check': verdict.details['spot_check']}

    verdict.wall_time_ms = (time.perf_counter() - started) * 1000.0
    return verdict


# =============================================================================
# Vergleich mit Randomized Ablation
# =============================================================================

def ra_poison_prob(m, s, r):
    """
    Wahrscheinlichkeit, dass ein zufällig gewählter Basis-Klassifikator
    (s von m Labels behalten) mindestens eines von r geflippten Labels sieht:
    1 - C(m - r, s) / C(m, s), exakt über Brüche.
    """
    if m < 0 or not 0 <= s <= m or not 0 <= r <= m:
        raise InvalidArgumentError(f"Erwartet 0 <= s <= m und 0 <= r <= m (m={m}, s={s}, r={r})")
    survive = Fraction(math.comb(m - r, s), math.comb(m, s))
    return float(1 - survive)


def dpa_poison_bound(r, k):
    """Union-Bound für disjunkte Partitionen: min(r / k, 1)."""
    if k < 1:
        raise InvalidArgumentError("k muss >= 1 sein")
    if r < 0:
        raise InvalidArgumentError("r muss >= 0 sein")
    return min(r / k, 1.0)


def required_vote_gap(poison_prob):
    """Abstand der zwei stärksten Klassenanteile, der für Robustheit nötig ist."""
    return 2.0 * poison_prob
