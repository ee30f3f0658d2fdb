import numpy as np
import pytest

from softlspi.errors import ContractError, DataError
from softlspi.navsim import Batch, collect_random_walk, make_world
from softlspi.sfa import (SfaMap, embed_state, fit_sfa, gaussian_kernel, load_model, save_model,
                          select_dictionary, whitening_condition)


@pytest.fixture(scope="module")
def nav_batch():
    return collect_random_walk(make_world("U"), 4000, 5)


@pytest.fixture(scope="module")
def nav_model(nav_batch):
    D = select_dictionary(nav_batch, 0.2, 300, 0.2)
    return fit_sfa(nav_batch, D, 0.2, 1e-5, 20)


def circle_walk(n=4000, seed=0):
    """Heading random walk at a fixed spot; position jitters slightly."""
    rng = np.random.default_rng(seed)
    th = np.mod(np.cumsum(rng.choice([-1, 0, 1], size=n + 1) * np.pi / 4), 2 * np.pi)
    xy = 0.5 + 0.002 * rng.normal(size=(n + 1, 2))
    S = np.column_stack([xy, th])
    return Batch(S[:-1], np.zeros(n, int), np.zeros(n), S[1:], np.zeros(n, bool))


def test_dictionary_rule(nav_batch):
    nu, sigma = 0.2, 0.2
    D = select_dictionary(nav_batch, nu, 10_000, sigma)
    K = gaussian_kernel(embed_state(nav_batch.states), D, sigma)
    in_dict = np.isclose(K, 1.0, rtol=0, atol=1e-15).any(axis=1)
    assert np.all((K.max(axis=1) >= nu) | in_dict)
    assert len(select_dictionary(nav_batch, nu, 7, sigma)) == 7


def test_output_constraints(nav_batch, nav_model):
    Y = nav_model.transform(nav_batch.states)
    assert np.max(np.abs(Y.mean(0))) <= 1e-6
    C = np.cov(Y.T, bias=True)
    assert np.max(np.abs(np.diag(C) - 1)) <= 1e-4
    assert np.max(np.abs(C - np.diag(np.diag(C)))) <= 1e-4
    assert np.all(np.diff(nav_model.slowness) >= -1e-12)
    dY = nav_model.transform(nav_batch.next_states) - Y
    assert np.allclose(np.mean(dY ** 2, 0), nav_model.slowness, atol=1e-6)
    assert np.allclose(Y, nav_model.train_features, atol=1e-10)


def test_circle_walk_recovers_heading():
    b = circle_walk()
    D = select_dictionary(b, 0.2, 200, 0.2)
    m = fit_sfa(b, D, 0.2, 1e-6, min(5, len(D)))
    Y = m.transform(b.states)[:, :2]
    H = np.column_stack([np.cos(b.states[:, 2]), np.sin(b.states[:, 2])])
    qy, _ = np.linalg.qr(Y - Y.mean(0))
    qh, _ = np.linalg.qr(H - H.mean(0))
    cc = np.linalg.svd(qy.T @ qh, compute_uv=False)
    assert cc.min() >= 0.9


def test_constant_input_is_data_error():
    S = np.tile([0.5, 0.5, 0.0], (100, 1))
    b = Batch(S, np.zeros(100, int), np.zeros(100), S, np.zeros(100, bool))
    with pytest.raises(DataError):
        fit_sfa(b, select_dictionary(b), 0.2, 0.0, 1)


def test_p_out_of_range(nav_batch):
    D = select_dictionary(nav_batch, 0.2, 5, 0.2)
    with pytest.raises(ContractError):
        fit_sfa(nav_batch, D, 0.2, 1e-5, 6)


def test_ridge_improves_conditioning(nav_batch):
    D = select_dictionary(nav_batch, 0.2, 300, 0.2)
    conds = [whitening_condition(nav_batch, D, 0.2, r) for r in (1e-8, 1e-6, 1e-4, 1e-2)]
    assert all(a >= b for a, b in zip(conds, conds[1:]))


def test_time_sign_convention(nav_batch, nav_model):
    t = np.arange(len(nav_batch)) - (len(nav_batch) - 1) / 2
    assert np.all(t @ nav_model.train_features >= 0)


def test_episode_boundaries_excluded():
    # two disjoint halves glued together: the jump between them must not count
    b1 = circle_walk(1500, 1)
    b2 = circle_walk(1500, 2)
    b2.states[:, 0] += 0.3
    b2.next_states[:, 0] += 0.3
    glued = Batch(np.vstack([b1.states, b2.states]), np.zeros(3000, int), np.zeros(3000),
                  np.vstack([b1.next_states, b2.next_states]), np.zeros(3000, bool), [1499])
    D = select_dictionary(glued, 0.2, 300, 0.2)
    m = fit_sfa(glued, D, 0.2, 1e-6, 3)
    Y = m.transform(glued.states)
    # the slowest feature separates the halves and is almost constant within each
    assert m.slowness[0] < 1e-3
    assert abs(Y[:1500, 0].mean() - Y[1500:, 0].mean()) > 1.5


def test_map_and_roundtrip(tmp_path, nav_batch, nav_model):
    fm = SfaMap(nav_model)
    F = fm.state_features(nav_batch.states[:10])
    assert fm.p == nav_model.p + 1 and np.all(F[:, 0] == 1.0)
    save_model(nav_model, tmp_path / "m.npz")
    m2 = load_model(tmp_path / "m.npz")
    assert np.array_equal(m2.transform(nav_batch.states[:10]), nav_model.transform(nav_batch.states[:10]))
    assert m2.params["p"] == 20
    (tmp_path / "bad.npz").write_bytes(b"junk")
    with pytest.raises(DataError):
        load_model(tmp_path / "bad.npz")
