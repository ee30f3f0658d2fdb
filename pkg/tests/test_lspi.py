import numpy as np
import pytest

from oracles import random_mdp, ref_policy
from softlspi.errors import ContractError, DataError, SolverError
from softlspi.features import FourierMap, TabularMap
from softlspi.lspi import LstdSystem, lspi_train, lstd_assemble, lstd_solve, write_run_log
from softlspi.navsim import Batch, collect_random_walk, make_world
from softlspi.policy import GREEDY, ImprovementConfig

SOFT = [GREEDY, ImprovementConfig("softmax", beta=1.5),
        ImprovementConfig("softmax", beta=4.0, normalize=True),
        ImprovementConfig("egreedy", epsilon=0.3)]


def tabular(mdp):
    return TabularMap(mdp.nS, mdp.nA)


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("cfg", SOFT, ids=lambda c: c.label)
def test_assemble_matches_counts(seed, cfg):
    mdp = random_mdp(seed)
    w = np.random.default_rng(seed + 100).normal(size=mdp.nS * mdp.nA)
    pi = ref_policy(mdp.table(w), cfg.kind, cfg.beta, cfg.epsilon, cfg.normalize)
    A_ref, b_ref = mdp.count_matrix(pi, 0.9)
    sys_ = lstd_assemble(mdp.batch, tabular(mdp), w, 0.9, cfg)
    assert np.max(np.abs(sys_.A - A_ref)) <= 1e-12
    assert np.max(np.abs(sys_.b - b_ref)) <= 1e-12
    Q = mdp.evaluate(pi, 0.9)
    assert np.max(np.abs(lstd_solve(sys_, ridge=0.0) - mdp.flat(Q))) <= 1e-8


def test_ridge_is_applied():
    A = np.array([[1.0, 0.0], [0.0, 2.0]])
    w = lstd_solve(LstdSystem(A, np.array([1.0, 1.0]), 1), ridge=1.0)
    assert np.allclose(w, [0.5, 1 / 3])


def test_singular_raises():
    with pytest.raises(SolverError):
        lstd_solve(LstdSystem(np.zeros((3, 3)), np.ones(3), 1), ridge=0.0)
    with pytest.raises(SolverError):
        lstd_solve(LstdSystem(np.array([[1.0, 1.0], [1.0, 1.0]]), np.ones(2), 1), ridge=0.0)


def test_unvisited_action_singular_without_ridge():
    # action 1 never taken: its block of A is all zero
    b = Batch(np.array([0.0, 1.0]), [0, 0], [1.0, 0.0], np.array([1.0, 0.0]), [False, False])
    sys_ = lstd_assemble(b, TabularMap(2, 2), np.zeros(4), 0.5, GREEDY)
    with pytest.raises(SolverError):
        lstd_solve(sys_, ridge=0.0)
    assert np.all(np.isfinite(lstd_solve(sys_, ridge=1e-6)))


@pytest.mark.parametrize("seed", range(5))
def test_lspi_greedy_optimal(seed):
    mdp = random_mdp(1000 + seed, p_terminal=0.05)
    Qs = mdp.value_iteration(0.9)
    res = lspi_train(mdp.batch, tabular(mdp), 0.9, GREEDY, ridge=0.0)
    assert res.converged
    assert np.array_equal(np.argmax(mdp.table(res.w), 1), np.argmax(Qs, 1))
    assert np.allclose(mdp.table(res.w), Qs, atol=1e-8)


def test_gamma_zero_regresses_reward():
    mdp = random_mdp(7)
    res = lspi_train(mdp.batch, tabular(mdp), 0.0, GREEDY, ridge=0.0)
    assert np.allclose(mdp.table(res.w), mdp.Rsum / mdp.N, atol=1e-12)


def test_contract_errors():
    mdp = random_mdp(3)
    with pytest.raises(ContractError):
        lstd_assemble(mdp.batch, tabular(mdp), np.zeros(mdp.nS * mdp.nA), 1.0, GREEDY)
    with pytest.raises(ContractError):
        lstd_assemble(mdp.batch, tabular(mdp), np.zeros(3 + mdp.nS * mdp.nA), 0.5, GREEDY)
    bad = Batch(np.array([0.0]), [0], [np.nan], np.array([0.0]), [False])
    with pytest.raises(DataError):
        lstd_assemble(bad, TabularMap(1, 1), np.zeros(1), 0.5, GREEDY)


def test_navigation_run_and_log(tmp_path):
    batch = collect_random_walk(make_world("U"), 3000, 0)
    res = lspi_train(batch, FourierMap(3), 0.9, ImprovementConfig("softmax", beta=2.0,
                                                                  normalize=True), max_iters=5)
    assert 1 <= res.iterations <= 5 and len(res.weight_deltas) == res.iterations
    assert np.all(np.isfinite(res.w))
    write_run_log(res, tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == "iteration,delta,condition_estimate" and len(lines) == res.iterations + 1
