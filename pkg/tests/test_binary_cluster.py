"""
Tests for binary SS-DPA with 2-means clustering.
"""

import itertools

import numpy as np
import pytest

from binary_cluster import (
    H_STRAIGHT,
    H_SWAPPED,
    assign_cluster,
    binary_certify,
    consensus,
    fit_two_means_model,
    run_binary_experiment,
    two_means,
)
from dataset import Dataset
from ensemble import certify_counts, count_matrix, prediction_matrix, train_ensemble
from errors import DegenerateInputError, InvalidArgumentError
from learners import FeatureMapConfig, LearnerConfig
from partitioning import make_plan

NEAR = [[0, 0], [0, 1], [1, 0], [1, 1]]
FAR = [[100, 100], [100, 101], [101, 100], [101, 101]]


@pytest.fixture
def seven_to_one():
    """Cluster 1 mostly labeled 0 (one outlier), cluster 2 all labeled 1."""
    return Dataset.from_arrays(np.array(NEAR + FAR), np.array([0, 0, 0, 1, 1, 1, 1, 1]), 2)


class TestTwoMeans:
    """Tests for the deterministic 2-means."""

    def test_separated_clusters(self, seven_to_one):
        mu1, mu2 = two_means(seven_to_one.features)
        assert mu1.tolist() == [0.5, 0.5]
        assert mu2.tolist() == [100.5, 100.5]

    def test_input_order_does_not_matter(self, seven_to_one):
        a = two_means(seven_to_one.features)
        b = two_means(seven_to_one.features[::-1])
        assert np.array_equal(a[0], b[0])
        assert np.array_equal(a[1], b[1])

    def test_duplicates_are_one_sample(self):
        with pytest.raises(DegenerateInputError):
            two_means(np.array([[3, 3], [3, 3]]))

    def test_needs_two_samples(self):
        with pytest.raises(DegenerateInputError):
            two_means(np.array([[3, 3]]))

    def test_two_points(self):
        mu1, mu2 = two_means(np.array([[9, 9], [1, 1]]))
        assert mu1.tolist() == [1.0, 1.0]
        assert mu2.tolist() == [9.0, 9.0]


class TestAssignCluster:
    """Tests for cluster assignment."""

    def test_equidistant_goes_to_cluster_one(self):
        assert assign_cluster([5, 5], [0, 0], [10, 10]) == 1

    def test_closer_to_second(self):
        assert assign_cluster([6, 6], [0, 0], [10, 10]) == 2

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            assign_cluster([1, 2, 3], [0, 0], [10, 10])


class TestConsensus:
    """Tests for the hypothesis vote."""

    @pytest.mark.parametrize('straight, swapped, hypothesis, rho_bar', [
        (7, 1, H_STRAIGHT, 3),
        (5, 5, H_STRAIGHT, 0),
        (4, 6, H_SWAPPED, 0),
        (2, 7, H_SWAPPED, 2),
        (0, 8, H_SWAPPED, 3),
    ])
    def test_examples(self, straight, swapped, hypothesis, rho_bar):
        assert consensus(straight, swapped) == (hypothesis, rho_bar)


class TestTwoMeansModel:
    """Tests for fitting and certifying."""

    def test_votes(self, seven_to_one):
        model = fit_two_means_model(seven_to_one)
        assert model.votes.tolist() == [[3, 1], [0, 4]]
        assert model.vote_totals == (7, 1)
        assert model.hypothesis == H_STRAIGHT
        assert model.rho_bar == 3

    def test_predictions_share_one_certificate(self, seven_to_one):
        result = binary_certify(seven_to_one, np.array([[0, 0], [100, 100], [2, 2]]))
        assert result.predictions.tolist() == [0, 1, 0]
        assert result.rho_bar == 3

    def test_single_sample(self, seven_to_one):
        assert binary_certify(seven_to_one, [101, 101]).predictions.tolist() == [1]

    def test_swapped_labels(self):
        d = Dataset.from_arrays(np.array(NEAR + FAR), np.array([1, 1, 1, 1, 0, 0, 0, 0]), 2)
        model = fit_two_means_model(d)
        assert model.hypothesis == H_SWAPPED
        assert model.rho_bar == 3
        assert model.predict_batch(np.array([[0, 0], [100, 100]])).tolist() == [1, 0]

    def test_rejects_more_classes(self):
        d = Dataset.from_arrays(np.array(NEAR), np.array([0, 1, 2, 0]), 3)
        with pytest.raises(InvalidArgumentError):
            fit_two_means_model(d)

    def test_certificate_holds_against_every_flip_set(self, seven_to_one):
        labels = seven_to_one.labels
        for size in range(1, 4):
            for indices in itertools.combinations(range(seven_to_one.m), size):
                flipped = labels.copy()
                flipped[list(indices)] = 1 - flipped[list(indices)]
                model = fit_two_means_model(seven_to_one.with_labels(flipped))
                assert model.hypothesis == H_STRAIGHT, indices

    def test_four_flips_can_switch(self, seven_to_one):
        switched = []
        for indices in itertools.combinations(range(seven_to_one.m), 4):
            flipped = seven_to_one.labels.copy()
            flipped[list(indices)] = 1 - flipped[list(indices)]
            if fit_two_means_model(seven_to_one.with_labels(flipped)).hypothesis == H_SWAPPED:
                switched.append(indices)
        assert switched


class TestGenericPipeline:
    """The one-item-per-partition pipeline agrees with the binary model."""

    PROBES = np.array([[0, 0], [1, 1], [100, 100], [101, 101]])

    def generic_certificates(self, d):
        plan = make_plan(d, d.m, 'ssdpa-sort')
        e = train_ensemble(d, plan, LearnerConfig(kind='cluster-label'), FeatureMapConfig(kind='two-means'))
        return certify_counts(count_matrix(prediction_matrix(e, self.PROBES), e.num_classes))

    def test_same_predictions(self, seven_to_one):
        certificates = self.generic_certificates(seven_to_one)
        binary = binary_certify(seven_to_one, self.PROBES)
        assert [c.predicted for c in certificates] == binary.predictions.tolist()

    def test_cluster_one_has_the_same_radius(self, seven_to_one):
        certificates = self.generic_certificates(seven_to_one)
        binary = binary_certify(seven_to_one, self.PROBES)
        assert [c.rho_bar for c in certificates[:2]] == [binary.rho_bar] * 2

    def test_cluster_two_loses_ties_to_class_zero(self, seven_to_one):
        certificates = self.generic_certificates(seven_to_one)
        model = fit_two_means_model(seven_to_one)
        straight, swapped = model.vote_totals
        # Klasse 1 gewinnt, Gleichstand gegen Klasse 0 zählt als Niederlage
        assert model.rho_bar == (straight - swapped) // 2 == 3
        assert [c.rho_bar for c in certificates[2:]] == [(straight - swapped - 1) // 2] * 2 == [2, 2]


class TestBinaryExperiment:
    """Tests for run_binary_experiment on a multi-class dataset."""

    def test_two_of_three_classes(self):
        features = NEAR + FAR + [[50, 50], [50, 51]]
        labels = [3] * 4 + [7] * 4 + [5, 5]
        train = Dataset.from_arrays(np.array(features), np.array(labels), 10)
        test = Dataset.from_arrays(np.array([[1, 1], [100, 100], [50, 50]]), np.array([3, 7, 5]), 10)

        result = run_binary_experiment(train, test, 3, 7)
        assert result == {
            'clean_accuracy': 1.0,
            'certified_accuracy': 1.0,
            'rho_bar': 4,
            'votes': [[4, 0], [0, 4]],
            'hypothesis': H_STRAIGHT,
            'm': 8,
        }
