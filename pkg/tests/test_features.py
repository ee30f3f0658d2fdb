import math

import numpy as np
import pytest

from softlspi.errors import ContractError, DataError
from softlspi.features import (FourierMap, TabularMap, compose_state_action,
                               fourier_state_features, load_weights, q_all, q_all_many,
                               save_weights)
from softlspi.navsim import Pose


def test_fourier_sizes():
    assert FourierMap(10).p == 500 and FourierMap(10).m == 1500
    assert FourierMap(6).m == 540


def test_fourier_entries_by_hand():
    x, y, t = 0.3, 0.7, 1.1
    f = fourier_state_features(Pose(x, y, t), 3)
    heading = [1, math.cos(t), math.sin(t), math.cos(2 * t), math.sin(2 * t)]
    i = 0
    for kx in range(3):
        for ky in range(3):
            for h in heading:
                assert math.isclose(f[i], math.cos(math.pi * kx * x) * math.cos(math.pi * ky * y) * h,
                                    abs_tol=1e-14)
                i += 1
    assert f[0] == 1.0


def test_fourier_domain_check():
    with pytest.raises(ContractError):
        FourierMap(2).state_features(np.array([[1.2, 0.1, 0.0]]))
    FourierMap(2, check_domain=False).state_features(np.array([[1.2, 0.1, 0.0]]))


def test_block_layout():
    fm = FourierMap(2)
    s = np.array([0.2, 0.4, 0.5])
    for a in range(3):
        phi = fm.features(s, a)
        assert np.array_equal(phi, compose_state_action(fm.state_features_one(s), a))
        assert np.count_nonzero(phi[:a * fm.p]) == 0
        assert np.count_nonzero(phi[(a + 1) * fm.p:]) == 0
    w = np.random.default_rng(0).normal(size=fm.m)
    q = q_all(fm, w, s)
    assert np.allclose(q, [fm.features(s, a) @ w for a in range(3)], atol=1e-13)


def test_q_all_many_shape_check():
    fm = TabularMap(4, 2)
    with pytest.raises(ContractError):
        q_all_many(fm, np.zeros(7), np.zeros((2, 1)))
    assert q_all_many(fm, np.arange(8.0), np.array([[1], [3]])).tolist() == [[1, 5], [3, 7]]


def test_weights_roundtrip(tmp_path):
    fm = FourierMap(3)
    w = np.random.default_rng(1).normal(size=fm.m)
    save_weights(w, fm, tmp_path / "w.csv")
    w2, meta = load_weights(tmp_path / "w.csv")
    assert np.array_equal(w, w2) and meta["m"] == str(fm.m)


def test_weights_bad_header(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("# m=5\n1\n2\n")
    with pytest.raises(DataError):
        load_weights(p)
