"""
Partitionierung der Trainingsmenge in k disjunkte Teile

Strategien:
    dpa-hash    Pixelsummen-Hash mod k (zertifiziert Einfügen/Löschen)
    ssdpa-sort  Index im sortierten, ungelabelten Datensatz mod k (Label-Flips)
    ssdpa-hash  Pixelsummen-Hash mod k, ohne Label im Hash (Label-Flips)

Die Zuordnung ist immer in der kanonischen Reihenfolge des Datensatzes
abgelegt; Pläne aus beliebig permutierten Kopien sind damit identisch.
"""

import hashlib
import json
import logging
import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from dataset import feature_ranks, pixel_sums, verify_unique_samples
from errors import DatasetParseError, InvalidArgumentError, PreconditionError

logger = logging.getLogger(__name__)

SIDECAR_MAGIC = b'DPAP'
SIDECAR_HEADER = struct.Struct('<4sIQ')


class Strategy(str, Enum):
    DPA_HASH = 'dpa-hash'
    SSDPA_SORT = 'ssdpa-sort'
    SSDPA_HASH = 'ssdpa-hash'

    @property
    def semi_supervised(self):
        return self is not Strategy.DPA_HASH

    @property
    def threat(self):
        return 'symmetric-difference' if self is Strategy.DPA_HASH else 'label-flip'


@dataclass(frozen=True, eq=False)
class PartitionPlan:
    """
    assignment[j] = Partition des j-ten Elements in kanonischer Reihenfolge.
    """
    k: int
    strategy: Strategy
    assignment: np.ndarray
    dataset_hash: str

    @property
    def m(self):
        return len(self.assignment)

    def partition_sizes(self):
        return np.bincount(self.assignment, minlength=self.k).astype(np.int64)

    def members(self, i):
        """Indizes (kanonische Reihenfolge) der Elemente in Partition i."""
        return np.flatnonzero(self.assignment == i)

    def empty_partitions(self):
        return np.flatnonzero(self.partition_sizes() == 0)

    def to_json(self):
        return {
            'k': self.k,
            'strategy': self.strategy.value,
            'partition_sizes': self.partition_sizes().tolist(),
            'content_hash_of_dataset': self.dataset_hash,
        }

    def sidecar_bytes(self):
        header = SIDECAR_HEADER.pack(SIDECAR_MAGIC, self.k, self.m)
        return header + self.assignment.astype('<u4').tobytes()

    def plan_hash(self):
        hasher = hashlib.sha256()
        hasher.update(json.dumps(self.to_json(), sort_keys=True).encode('utf-8'))
        hasher.update(self.sidecar_bytes())
        return hasher.hexdigest()


def _check_k(k):
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool) or k < 1:
        raise InvalidArgumentError(f"k muss eine positive Ganzzahl sein, nicht {k!r}")
    return int(k)


def _plan(d, k, strategy, assignment):
    assignment = np.ascontiguousarray(assignment, dtype=np.int64)
    assignment.setflags(write=False)
    plan = PartitionPlan(k=k, strategy=strategy, assignment=assignment, dataset_hash=d.content_hash)

    empty = len(plan.empty_partitions())
    if empty:
        logger.warning("%d von %d Partitionen sind leer (%s)", empty, k, strategy.value)
    return plan


def dpa_partition(d, k):
    """Element t geht in Partition pixel_sum_hash(t) mod k."""
    k = _check_k(k)
    canon = d.canonical
    return _plan(d, k, Strategy.DPA_HASH, pixel_sums(canon.features) % k)


def ssdpa_partition(d, k, merge_labels=False):
    """
    Element mit Index j im sortierten ungelabelten Datensatz geht in j mod k.

    Ohne merge_labels dürfen Merkmalsvektoren nicht mit verschiedenen Labels
    vorkommen. Mit merge_labels teilen sich alle Elemente mit gleichem
    Merkmalsvektor einen Index (ihre Labelmenge wird als ein Sample gezählt).
    """
    k = _check_k(k)
    if not merge_labels:
        report = verify_unique_samples(d)
        if not report.ok:
            raise PreconditionError(
                f"{len(report.collisions)} Merkmalsvektoren mit mehreren Labels; "
                "SS-DPA braucht eindeutige Samples (oder --merge-labels)"
            )
    return _plan(d, k, Strategy.SSDPA_SORT, feature_ranks(d) % k)


def ssdpa_hash_partition(d, k):
    """Wie dpa_partition; der Hash ignoriert das Label, Flips verschieben nichts."""
    k = _check_k(k)
    canon = d.canonical
    return _plan(d, k, Strategy.SSDPA_HASH, pixel_sums(canon.features) % k)


def make_plan(d, k, strategy, merge_labels=False):
    strategy = Strategy(strategy)
    if strategy is Strategy.DPA_HASH:
        return dpa_partition(d, k)
    if strategy is Strategy.SSDPA_SORT:
        return ssdpa_partition(d, k, merge_labels=merge_labels)
    return ssdpa_hash_partition(d, k)


def partition_contents(d, plan):
    """Inhalt jeder Partition als frozenset von (Merkmals-Bytes, Label)."""
    canon = d.canonical
    if plan.dataset_hash != d.content_hash:
        raise InvalidArgumentError("Plan gehört zu einem anderen Datensatz")
    contents = [set() for _ in range(plan.k)]
    for row, label, part in zip(canon.features, canon.labels.tolist(), plan.assignment.tolist()):
        contents[part].add((row.tobytes(), label))
    return [frozenset(c) for c in contents]


def changed_partitions(contents_a, contents_b):
    """Anzahl Partitionen mit unterschiedlichem Inhalt."""
    return sum(1 for a, b in zip(contents_a, contents_b) if a != b)


# =============================================================================
# Persistenz
# =============================================================================

def write_plan(plan, json_path, sidecar_path):
    with open(json_path, 'w', encoding='utf-8') as f:
        json.dump(plan.to_json(), f, indent=2)
    with open(sidecar_path, 'wb') as f:
        f.write(plan.sidecar_bytes())


def read_plan(json_path, sidecar_path):
    with open(json_path, 'r', encoding='utf-8') as f:
        meta = json.load(f)
    with open(sidecar_path, 'rb') as f:
        data = f.read()

    if len(data) < SIDECAR_HEADER.size:
        raise DatasetParseError("Plan-Sidecar endet im Header", path=sidecar_path, offset=len(data))
    magic, k, m = SIDECAR_HEADER.unpack_from(data, 0)
    if magic != SIDECAR_MAGIC or k != meta['k']:
        raise DatasetParseError("Plan-Sidecar passt nicht zur Plan-Datei", path=sidecar_path, offset=0)
    if len(data) != SIDECAR_HEADER.size + 4 * m:
        raise DatasetParseError("Plan-Sidecar hat falsche Länge", path=sidecar_path, offset=SIDECAR_HEADER.size)

    assignment = np.frombuffer(data, dtype='<u4', offset=SIDECAR_HEADER.size).astype(np.int64)
    assignment.setflags(write=False)
    plan = PartitionPlan(
        k=k, strategy=Strategy(meta['strategy']),
        assignment=assignment, dataset_hash=meta['content_hash_of_dataset'],
    )
    if plan.partition_sizes().tolist() != meta['partition_sizes']:
        raise DatasetParseError("Partitionsgrößen stimmen nicht mit dem Sidecar überein", path=json_path)
    return plan
