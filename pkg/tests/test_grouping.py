import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from feds3a.errors import ConfigurationError, InputError
from feds3a.grouping import GroupingConfig, group_clients, kmeans, normalize_histogram


def test_two_obvious_clusters():
    hist = [(0, [1, 0, 0]), (1, [0.9, 0.1, 0]), (2, [0, 0, 1]), (3, [0, 0.1, 0.9])]
    groups = group_clients(hist, GroupingConfig(n_groups=2))
    assert groups == {0: 0, 1: 0, 2: 1, 3: 1}


def test_relabel_independent_of_input_order():
    hist = [(5, [0, 1.0]), (2, [1.0, 0]), (9, [0.1, 0.9])]
    a = group_clients(hist, GroupingConfig(n_groups=2))
    b = group_clients(list(reversed(hist)), GroupingConfig(n_groups=2))
    assert a == b and a[2] == 0


def test_single_group_and_single_participant():
    assert group_clients([(0, [1.0, 0]), (1, [0, 1.0])], GroupingConfig(n_groups=1)) == {0: 0, 1: 0}
    assert group_clients([(4, [0.5, 0.5])], GroupingConfig(n_groups=3)) == {4: 0}


def test_duplicates_collapse_to_fewer_groups():
    hist = [(i, [0.5, 0.5]) for i in range(4)]
    assert set(group_clients(hist, GroupingConfig(n_groups=3)).values()) == {0}


def test_histograms_must_be_distributions():
    with pytest.raises(InputError):
        group_clients([(0, [3, 1])], GroupingConfig())
    with pytest.raises(ConfigurationError):
        GroupingConfig(n_groups=0)


def test_normalize_histogram_uniform_on_empty():
    assert normalize_histogram([0, 0, 0, 0]).tolist() == [0.25] * 4
    assert normalize_histogram([1, 3]).tolist() == [0.25, 0.75]


@given(st.integers(0, 10_000), st.integers(1, 12), st.integers(1, 5))
def test_group_labels_are_dense_and_deterministic(seed, n, k):
    rng = np.random.default_rng(seed)
    hists = [(i, normalize_histogram(rng.integers(0, 10, size=4))) for i in range(n)]
    a = group_clients(hists, GroupingConfig(n_groups=k, seed=seed), round_index=3)
    b = group_clients(hists, GroupingConfig(n_groups=k, seed=seed), round_index=3)
    assert a == b
    labels = sorted(set(a.values()))
    assert labels == list(range(len(labels))) and len(labels) <= k


@given(st.integers(0, 10_000))
def test_kmeans_lloyd_fixed_point(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(15, 2))
    lab = kmeans(pts, 3, np.random.default_rng(seed))
    centers = np.stack([pts[lab == j].mean(axis=0) for j in np.unique(lab)])
    reassigned = np.unique(lab)[((pts[:, None] - centers[None]) ** 2).sum(axis=2).argmin(axis=1)]
    assert np.array_equal(reassigned, lab)
