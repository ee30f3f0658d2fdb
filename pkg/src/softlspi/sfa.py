"""Sparse-kernel slow feature analysis on random-walk batches.

Poses are embedded as ``(x, y, cos theta, sin theta)``. A dictionary of
support points is picked greedily by kernel novelty; every state is then
represented by its Gaussian-kernel activations against the dictionary, and
linear SFA is run on those activations:

1. center the activations and whiten them with the eigenvectors of
   ``Cov + ridge * I`` (directions with negligible variance dropped),
2. diagonalize the covariance of temporal differences in whitened
   coordinates and keep the ``p`` slowest directions,
3. re-solve the generalized eigenproblem ``C_dot v = lambda C v`` exactly
   inside that ``p``-dimensional subspace, so the outputs are exactly
   centered, unit-variance and decorrelated even when the ridge is nonzero.

Temporal differences are taken between each transition's state and its own
successor, so resets at episode boundaries never enter the statistics.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import ContractError, DataError
from .features import FeatureMap
from .navsim import Batch

DEFAULTS = dict(max_size=800, novelty=0.2, kernel_width=0.2, ridge=1e-5, p=63)
EIG_FLOOR = 1e-10


def embed_state(pose) -> np.ndarray:
    """``(x, y, cos theta, sin theta)`` for one pose or an ``(N, 3)`` array."""
    if hasattr(pose, "as_array"):
        pose = pose.as_array()
    s = np.asarray(pose, dtype=float)
    th = s[..., 2]
    return np.stack([s[..., 0], s[..., 1], np.cos(th), np.sin(th)], axis=-1)


def gaussian_kernel(U, V, width: float) -> np.ndarray:
    """``exp(-|u - v|^2 / (2 width^2))`` between rows of ``U`` and ``V``."""
    U = np.atleast_2d(U)
    V = np.atleast_2d(V)
    d2 = (np.sum(U * U, 1)[:, None] + np.sum(V * V, 1)[None, :] - 2.0 * U @ V.T)
    return np.exp(-np.maximum(d2, 0.0) / (2.0 * width * width))


def select_dictionary(batch: Batch | np.ndarray, novelty: float = DEFAULTS["novelty"],
                      max_size: int = DEFAULTS["max_size"],
                      kernel_width: float = DEFAULTS["kernel_width"]) -> np.ndarray:
    """Greedy single-pass sparsification of the batch's embedded states.

    A state joins the dictionary when its largest kernel value against the
    current dictionary is below ``novelty``; the pass stops at ``max_size``.
    ``batch`` may also be an ``(N, 3)`` pose array. Returns ``(d, 4)``.
    """
    states = batch.states if isinstance(batch, Batch) else np.asarray(batch, dtype=float)
    if len(states) == 0:
        raise ContractError("cannot build a dictionary from an empty batch")
    X = embed_state(states)
    inv = 1.0 / (2.0 * kernel_width * kernel_width)
    # novelty test on squared distances: k < nu  <=>  d2 > -log(nu) / inv
    d2_min = -np.log(novelty) / inv if novelty > 0 else np.inf
    D = np.empty((min(max_size, len(X)), X.shape[1]))
    D[0] = X[0]
    d = 1
    for x in X[1:]:
        if d >= max_size:
            break
        diff = D[:d] - x
        if np.min(np.einsum("ij,ij->i", diff, diff)) > d2_min:
            D[d] = x
            d += 1
    return D[:d].copy()


@dataclass
class SfaModel:
    dictionary: np.ndarray
    alpha: np.ndarray
    mean_offset: np.ndarray
    kernel_width: float
    slowness: np.ndarray
    params: dict = field(default_factory=dict)
    train_features: np.ndarray | None = field(default=None, repr=False)

    @property
    def p(self) -> int:
        return len(self.slowness)

    def transform(self, states) -> np.ndarray:
        """``(N, p)`` slow features of ``(N, 3)`` poses (no constant column)."""
        K = gaussian_kernel(embed_state(np.asarray(states, dtype=float)), self.dictionary,
                            self.kernel_width)
        return K @ self.alpha.T - self.mean_offset


def _time_signs(Y: np.ndarray, t0: float = 0.0) -> np.ndarray:
    t = np.arange(len(Y), dtype=float) + t0
    corr = (t - t.mean()) @ (Y - Y.mean(0))
    return np.where(corr < 0, -1.0, 1.0)


def fit_sfa(batch: Batch, dictionary: np.ndarray | None = None,
            kernel_width: float = DEFAULTS["kernel_width"], ridge: float = DEFAULTS["ridge"],
            p: int = DEFAULTS["p"]) -> SfaModel:
    """Fit ``p`` slow features on an ordered batch.

    Features are sign-flipped to correlate non-negatively with time.
    Raises :class:`DataError` when the kernel activations have no usable
    variance (increase ``ridge`` or feed more varied data).
    """
    if dictionary is None:
        dictionary = select_dictionary(batch, kernel_width=kernel_width)
    dictionary = np.asarray(dictionary, dtype=float)
    d = len(dictionary)
    if not 1 <= p <= d:
        raise ContractError(f"p={p} must lie in [1, dictionary size {d}]")
    if ridge < 0:
        raise ContractError("ridge must be >= 0")

    K = gaussian_kernel(embed_state(batch.states), dictionary, kernel_width)
    K_next = gaussian_kernel(embed_state(batch.next_states), dictionary, kernel_width)
    mean = K.mean(axis=0)
    Kc = K - mean
    cov = Kc.T @ Kc / len(K)
    evals, evecs = np.linalg.eigh(cov + ridge * np.eye(d))
    top = evals[-1]
    keep = evals > EIG_FLOOR * top if top > 0 else np.zeros(d, bool)
    raw_var = np.diag(evecs.T @ cov @ evecs)
    keep &= raw_var > EIG_FLOOR * max(top, 0.0)
    if keep.sum() < p:
        raise DataError(
            f"kernel covariance has only {int(keep.sum())} usable directions for p={p}; "
            "the input has (near) zero variance: raise the ridge or use more varied data")
    W = evecs[:, keep] / np.sqrt(evals[keep])

    dK = K_next - K
    dZ = dK @ W
    cdot = dZ.T @ dZ / len(dK)
    _, V = np.linalg.eigh(cdot)
    P = W @ V[:, :p]

    # exact generalized eigenproblem inside the retained subspace
    Y = Kc @ P
    dY = dK @ P
    C = Y.T @ Y / len(Y)
    Cd = dY.T @ dY / len(dY)
    slowness, U = sla.eigh(Cd, C)
    alpha = (P @ U).T
    feats = Kc @ alpha.T
    signs = _time_signs(feats)
    alpha *= signs[:, None]
    feats *= signs
    model = SfaModel(
        dictionary=dictionary, alpha=alpha, mean_offset=alpha @ mean,
        kernel_width=float(kernel_width), slowness=slowness,
        params=dict(DEFAULTS, kernel_width=float(kernel_width), ridge=float(ridge), p=int(p),
                    dictionary_size=int(d)),
        train_features=feats)
    return model


def whitening_condition(batch: Batch, dictionary, kernel_width: float, ridge: float) -> float:
    """Condition number of the regularized activation covariance used for whitening."""
    K = gaussian_kernel(embed_state(batch.states), dictionary, kernel_width)
    Kc = K - K.mean(axis=0)
    evals = np.linalg.eigvalsh(Kc.T @ Kc / len(K) + ridge * np.eye(len(dictionary)))
    return float(evals[-1] / evals[0]) if evals[0] > 0 else np.inf


class SfaMap(FeatureMap):
    """State features ``[1, y_1(s), ..., y_p(s)]`` from a fitted model."""

    def __init__(self, model: SfaModel):
        self.model = model
        self.p = model.p + 1
        self.name = f"sfa{model.p}"

    def state_features(self, states) -> np.ndarray:
        Y = self.model.transform(states)
        return np.column_stack([np.ones(len(Y)), Y])


def sfa_state_features(model: SfaModel, pose) -> np.ndarray:
    if hasattr(pose, "as_array"):
        pose = pose.as_array()
    return SfaMap(model).state_features_one(pose)


def save_model(model: SfaModel, path: str | Path) -> None:
    """Store a model as ``.npz`` with its hyperparameters as a JSON string."""
    with open(path, "wb") as fh:
        np.savez(fh, dictionary=model.dictionary, alpha=model.alpha,
                 mean_offset=model.mean_offset, kernel_width=model.kernel_width,
                 slowness=model.slowness, params=json.dumps(model.params, sort_keys=True))


def load_model(path: str | Path) -> SfaModel:
    try:
        with np.load(path) as z:
            return SfaModel(z["dictionary"], z["alpha"], z["mean_offset"],
                            float(z["kernel_width"]), z["slowness"],
                            json.loads(str(z["params"])))
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"{path}: not an SFA model file ({exc})") from exc
