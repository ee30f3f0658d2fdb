"""LSTD-Q with a pluggable improvement operator, and the LSPI outer loop.

The system solved per iteration is

    A = 1/n sum_t phi(x_t, a_t) (phi(x_t, a_t) - gamma * Gamma[phi | q](x'_t))^T
    b = 1/n sum_t phi(x_t, a_t) r_t

where ``Gamma[phi | q](x') = sum_a pi(a | x') phi(x', a)`` and ``pi`` is the
improved policy built from the previous weights. Terminal transitions drop
the bootstrap term.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .errors import ContractError, DataError, SolverError
from .features import FeatureMap, q_from_state_features
from .navsim import Batch
from .policy import ImprovementConfig, improvement_policy

log = logging.getLogger(__name__)

DEFAULT_RIDGE = 1e-6
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITERS = 50
CYCLE_DECIMALS = 12


@dataclass
class LstdSystem:
    A: np.ndarray
    b: np.ndarray
    n: int


@dataclass
class LspiResult:
    w: np.ndarray
    iterations: int
    converged: bool
    weight_deltas: list[float] = field(default_factory=list)
    condition_estimates: list[float] = field(default_factory=list)
    cycle_detected: bool = False


class Design:
    """State features of a batch, computed once and reused across iterations."""

    def __init__(self, batch: Batch, fmap: FeatureMap):
        if len(batch) == 0:
            raise ContractError("batch is empty")
        self.n = len(batch)
        self.p = fmap.p
        self.n_actions = fmap.n_actions
        self.S = fmap.state_features(batch.states)
        self.S_next = fmap.state_features(batch.next_states)
        self.rewards = batch.rewards
        if not (np.all(np.isfinite(self.S)) and np.all(np.isfinite(self.S_next))):
            raise DataError("non-finite feature values in batch")
        if not np.all(np.isfinite(self.rewards)):
            raise DataError("non-finite rewards in batch")
        if np.any((batch.actions < 0) | (batch.actions >= self.n_actions)):
            raise DataError("batch contains out-of-range actions")
        self.cont = (~batch.terminals).astype(float)
        self.groups = [np.flatnonzero(batch.actions == a) for a in range(self.n_actions)]
        p = self.p
        # policy-independent parts: Gram blocks and b
        self.gram = [self.S[g].T @ self.S[g] for g in self.groups]
        self.b = np.zeros(p * self.n_actions)
        for a, g in enumerate(self.groups):
            self.b[a * p:(a + 1) * p] = self.S[g].T @ self.rewards[g]
        self.b /= self.n

    @property
    def m(self) -> int:
        return self.p * self.n_actions


def next_policy(design: Design, w_policy, config: ImprovementConfig) -> np.ndarray:
    """``(n, n_actions)`` improved-policy probabilities at every next state."""
    w = np.asarray(w_policy, dtype=float)
    if w.shape != (design.m,):
        raise ContractError(f"policy weights have shape {w.shape}, expected ({design.m},)")
    return improvement_policy(q_from_state_features(design.S_next, w, design.n_actions), config)


def assemble(design: Design, w_policy, gamma: float, config: ImprovementConfig) -> LstdSystem:
    """Assemble ``(A, b)`` from precomputed features (see :func:`lstd_assemble`)."""
    if not 0.0 <= gamma < 1.0:
        raise ContractError(f"gamma must lie in [0, 1), got {gamma}")
    p, k = design.p, design.n_actions
    coef = gamma * design.cont[:, None] * next_policy(design, w_policy, config)
    A = np.zeros((design.m, design.m))
    for a, g in enumerate(design.groups):
        if len(g) == 0:
            continue
        rows = slice(a * p, (a + 1) * p)
        A[rows, rows] += design.gram[a]
        Sa, Sn, ca = design.S[g], design.S_next[g], coef[g]
        for a2 in range(k):
            sel = np.flatnonzero(ca[:, a2])
            if len(sel) == 0:
                continue
            A[rows, a2 * p:(a2 + 1) * p] -= Sa[sel].T @ (Sn[sel] * ca[sel, a2, None])
    A /= design.n
    return LstdSystem(A, design.b.copy(), design.n)


def lstd_assemble(batch: Batch, fmap: FeatureMap, w_policy, gamma: float,
                  config: ImprovementConfig) -> LstdSystem:
    """Soft-LSTD system for evaluating the policy improved from ``w_policy``.

    Only the taken action's feature block is nonzero in ``phi(x_t, a_t)``, so
    ``A`` is built block-wise from per-action subsets of the batch.
    """
    return assemble(Design(batch, fmap), w_policy, gamma, config)


def _factor(M: np.ndarray):
    try:
        lu, piv = sla.lu_factor(M, check_finite=True)
    except ValueError as exc:
        raise DataError(f"LSTD matrix is not finite: {exc}") from exc
    anorm = np.linalg.norm(M, 1)
    rcond = sla.lapack.dgecon(lu, anorm, norm="1")[0] if anorm > 0 else 0.0
    return lu, piv, rcond


def lstd_solve(system: LstdSystem, ridge: float = DEFAULT_RIDGE, *, return_cond: bool = False):
    """Solve ``(A + ridge I) w = b`` by LU factorization.

    Raises :class:`SolverError` when the matrix is numerically singular
    (reciprocal 1-norm condition estimate below machine epsilon).
    """
    M = system.A + ridge * np.eye(len(system.b))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv, rcond = _factor(M)
        singular = rcond < np.finfo(float).eps or np.any(np.diag(lu) == 0)
        w = None if singular else sla.lu_solve((lu, piv), system.b)
    cond = np.inf if rcond == 0 else 1.0 / rcond
    if singular or not np.all(np.isfinite(w)):
        raise SolverError(
            f"LSTD system is singular (1-norm condition estimate {cond:.3g}, ridge={ridge:g}); "
            "increase the ridge")
    return (w, cond) if return_cond else w


def _cycle_key(w: np.ndarray) -> bytes:
    # + 0.0 folds -0.0 into 0.0 so rounding does not split equal vectors
    return (np.round(w, CYCLE_DECIMALS) + 0.0).tobytes()


def lspi_train(batch: Batch | Design, fmap: FeatureMap | None, gamma: float,
               config: ImprovementConfig, max_iters: int = DEFAULT_MAX_ITERS,
               tol: float = DEFAULT_TOL, ridge: float = DEFAULT_RIDGE,
               evaluate: Callable[[np.ndarray], float] | None = None) -> LspiResult:
    """Least-squares policy iteration starting from ``w = 0``.

    Stops when the max-norm weight change drops to ``tol``, after
    ``max_iters`` solves, or when an earlier iterate repeats (greedy LSPI can
    oscillate). On a cycle the last iterate is returned, or the cycle member
    scoring best under ``evaluate`` when one is given.

    ``batch`` may be a prebuilt :class:`Design` to share feature evaluation
    across runs; ``fmap`` is then ignored.
    """
    if max_iters < 1:
        raise ContractError("max_iters must be >= 1")
    if not tol > 0:
        raise ContractError("tol must be > 0")
    design = batch if isinstance(batch, Design) else Design(batch, fmap)
    w = np.zeros(design.m)
    seen = {_cycle_key(w): 0}
    iterates = [w]
    result = LspiResult(w=w, iterations=0, converged=False)
    for it in range(1, max_iters + 1):
        w_new, cond = lstd_solve(assemble(design, w, gamma, config), ridge, return_cond=True)
        delta = float(np.max(np.abs(w_new - w)))
        result.weight_deltas.append(delta)
        result.condition_estimates.append(cond)
        result.iterations = it
        iterates.append(w_new)
        if delta <= tol:
            result.w, result.converged = w_new, True
            break
        key = _cycle_key(w_new)
        if key in seen:
            members = iterates[seen[key] + 1:]
            log.debug("LSPI cycle of length %d detected at iteration %d", len(members), it)
            result.cycle_detected = True
            if evaluate is not None:
                w_new = max(members, key=evaluate)
            result.w = w_new
            break
        seen[key] = it
        w = w_new
        result.w = w
    return result


def write_run_log(result: LspiResult, path: str | Path) -> None:
    """CSV of ``iteration, delta, condition_estimate`` per LSPI iteration."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iteration", "delta", "condition_estimate"])
        for i, (d, c) in enumerate(zip(result.weight_deltas, result.condition_estimates), 1):
            wr.writerow([i, repr(d), repr(c)])
