import numpy as np
import pytest
from hypothesis import given, strategies as st

from dpditto.core import (STREAM_NOISE, AssumptionParams, ClientDataset, PrivacySpec, TrainingConfig,
                          partition_dataset, seeded_rng)
from dpditto.errors import InvalidPartitionError


def labelled(n, classes=10, seed=0):
    rng = np.random.default_rng(seed)
    return ClientDataset(rng.normal(size=(n, 3)), np.arange(n) % classes)


def test_same_seed_and_stream_repeat():
    a = seeded_rng(1, 0).random(100)
    b = seeded_rng(1, 0).random(100)
    assert np.array_equal(a, b)


def test_streams_and_seeds_differ():
    base = seeded_rng(1, 0).random(100)
    assert not np.array_equal(base, seeded_rng(1, 1).random(100))
    assert not np.array_equal(base, seeded_rng(2, 0).random(100))


def test_tuple_streams_are_order_independent():
    first = seeded_rng(3, (STREAM_NOISE, 2, 5)).random(5)
    seeded_rng(3, (STREAM_NOISE, 0, 0)).random(1000)
    assert np.array_equal(first, seeded_rng(3, (STREAM_NOISE, 2, 5)).random(5))


def test_iid_partition_equal_and_disjoint():
    p = partition_dataset(labelled(100), 20, "iid", rng=seeded_rng(0))
    assert [d.size for d in p] == [5] * 20
    allidx = np.concatenate(p.indices)
    assert len(np.unique(allidx)) == 100


def test_partition_drops_surplus():
    p = partition_dataset(labelled(101), 20, "iid", rng=seeded_rng(0))
    assert [d.size for d in p] == [5] * 20
    assert p.dropped == 1


def test_partition_too_small():
    with pytest.raises(InvalidPartitionError):
        partition_dataset(labelled(3), 5)


@pytest.mark.parametrize("seed", range(10))
def test_label_shard_two_labels(seed):
    p = partition_dataset(labelled(2000, seed=seed), 20, "label-shard", rng=seeded_rng(seed), k=2)
    for d in p:
        assert len(np.unique(d.targets)) <= 2
    assert len(np.unique(np.concatenate(p.indices))) == 2000


@given(st.integers(1, 30), st.integers(0, 200), st.sampled_from(["iid", "label-shard"]), st.integers(0, 10**6))
def test_partitions_disjoint_equal(n, extra, scheme, seed):
    size = n * 2 + extra
    p = partition_dataset(labelled(size), n, scheme, rng=seeded_rng(seed), k=2)
    sizes = {d.size for d in p}
    assert sizes == {size // n}
    allidx = np.concatenate(p.indices)
    assert len(np.unique(allidx)) == len(allidx) == (size // n) * n


def test_dataset_is_read_only():
    d = labelled(10)
    with pytest.raises(ValueError):
        d.features[0, 0] = 1.0


def test_config_validation():
    with pytest.raises(ValueError):
        TrainingConfig(n_clients=2, rounds=1, eta_g=0.1, eta_l=0.1, lam=2.5)
    with pytest.raises(ValueError):
        PrivacySpec(epsilon=1, delta=1.0, clip_c=1)
    with pytest.raises(ValueError):
        AssumptionParams(mu=2, l_smooth=1, g0=0, m_dist=0, psi1=0, psi2=0)


def test_assumption_violations_listed():
    a = AssumptionParams(mu=0.5, l_smooth=1, g0=1, m_dist=1, psi1=1, psi2=1)
    v = a.violations(eta_g=3.0, lam=0.0)
    assert len(v) == 2
