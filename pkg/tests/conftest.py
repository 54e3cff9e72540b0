"""
pytest configuration and fixtures for the dpa tests.
"""

import os
import sys

import numpy as np
import pytest

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dataset import Dataset
from parsers import format_csv, write_idx_images, write_idx_labels


TOY_FEATURES = [[0, 0], [1, 0], [0, 1], [10, 10], [11, 10], [10, 11]]
TOY_LABELS = [0, 0, 0, 1, 1, 1]


@pytest.fixture
def toy_dataset():
    """Two well separated clusters with three samples each."""
    return Dataset.from_arrays(np.array(TOY_FEATURES), np.array(TOY_LABELS), 2)


@pytest.fixture
def toy_test():
    """Probe points: one near each cluster plus one more near cluster 0."""
    return Dataset.from_arrays(np.array([[1, 1], [9, 9], [0, 2]]), np.array([0, 1, 0]), 2)


@pytest.fixture
def idx_pair(tmp_path):
    """Small IDX image/label pair (3 images of 2x2 pixels)."""
    images = np.array([[0, 1, 2, 3], [4, 5, 6, 7], [255, 0, 255, 0]], dtype=np.uint8)
    labels = np.array([0, 1, 2], dtype=np.uint8)
    images_path = tmp_path / 'images.idx3-ubyte'
    labels_path = tmp_path / 'labels.idx1-ubyte'
    write_idx_images(images_path, images, 2, 2)
    write_idx_labels(labels_path, labels)
    return str(images_path), str(labels_path)


@pytest.fixture
def toy_csv_files(tmp_path):
    """Toy train and test sets as CSV files."""
    train_path = tmp_path / 'train.csv'
    test_path = tmp_path / 'test.csv'
    train_path.write_text(format_csv(np.array(TOY_FEATURES), np.array(TOY_LABELS)))
    test_path.write_text(format_csv(np.array([[1, 1], [9, 9], [0, 2]]), np.array([0, 1, 0])))
    return str(train_path), str(test_path)


@pytest.fixture(scope='session')
def mnist_dir():
    """MNIST directory from MNIST_DIR; acceptance tests skip without it."""
    path = os.environ.get('MNIST_DIR')
    if not path or not os.path.isdir(path):
        pytest.skip("MNIST_DIR nicht gesetzt")
    return path
