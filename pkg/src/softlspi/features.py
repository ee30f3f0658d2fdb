"""Linear state-action feature maps.

Every map here factors as ``phi(s, a) = e_a (x) psi(s)``: a state feature
vector ``psi(s)`` of length ``p`` placed into the block of the taken action,
so ``m = p * n_actions``. Weight vectors are laid out block by block, action 0
first.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError
from .navsim import N_ACTIONS, TWO_PI

INDEX_ORDER_VERSION = 1


class FeatureMap:
    """Base class for block-structured state-action features.

    Subclasses implement :meth:`state_features` on an ``(N, k)`` array of
    states. Everything else is derived from it.
    """

    name = "abstract"
    n_actions = N_ACTIONS
    p: int

    @property
    def m(self) -> int:
        return self.p * self.n_actions

    def state_features(self, states) -> np.ndarray:
        raise NotImplementedError

    def state_features_one(self, state) -> np.ndarray:
        return self.state_features(np.asarray(state, dtype=float)[None, :])[0]

    def features(self, state, action: int) -> np.ndarray:
        return compose_state_action(self.state_features_one(state), action, self.n_actions)

    def describe(self) -> str:
        return self.name


class FourierMap(FeatureMap):
    """Outer-product Fourier basis over ``(x, y, theta)``.

    Spatial factors are ``cos(pi k u)`` for ``k = 0..n_freq-1`` on ``[0, 1]``;
    the heading factor is one of ``1, cos t, sin t, cos 2t, sin 2t``. Index
    order is k_x-major, then k_y, then heading factor (in the order listed).
    ``n_freq=10`` gives the full 500 state features (1500 state-action);
    ``n_freq=6`` the 180/540 desk-scale variant.
    """

    def __init__(self, n_freq: int = 10, check_domain: bool = True):
        if n_freq < 1:
            raise ContractError("n_freq must be >= 1")
        self.n_freq = int(n_freq)
        self.p = self.n_freq * self.n_freq * 5
        self.check_domain = check_domain
        self.name = f"fourier{self.n_freq}"

    def state_features(self, states) -> np.ndarray:
        s = np.asarray(states, dtype=float)
        if s.ndim != 2 or s.shape[1] != 3:
            raise ContractError(f"expected (N, 3) poses, got shape {s.shape}")
        x, y, th = s[:, 0], s[:, 1], s[:, 2]
        if self.check_domain and (
            np.any((x < 0) | (x > 1) | (y < 0) | (y > 1)) or np.any((th < 0) | (th >= TWO_PI))
            or not np.all(np.isfinite(s))
        ):
            raise ContractError("pose outside [0,1]^2 x [0, 2pi)")
        k = np.arange(self.n_freq) * math.pi
        fx = np.cos(x[:, None] * k)
        fy = np.cos(y[:, None] * k)
        g = np.column_stack([np.ones_like(th), np.cos(th), np.sin(th), np.cos(2 * th), np.sin(2 * th)])
        out = fx[:, :, None, None] * fy[:, None, :, None] * g[:, None, None, :]
        return out.reshape(len(s), self.p)


def fourier_state_features(pose, n_freq: int = 10) -> np.ndarray:
    """Fourier state features of a single pose (500 entries by default)."""
    if hasattr(pose, "as_array"):
        pose = pose.as_array()
    return FourierMap(n_freq).state_features_one(pose)


class TabularMap(FeatureMap):
    """One-hot state features for finite MDPs (states stored as an index column)."""

    def __init__(self, n_states: int, n_actions: int = N_ACTIONS):
        self.p = int(n_states)
        self.n_actions = int(n_actions)
        self.name = f"tabular{self.p}"

    def state_features(self, states) -> np.ndarray:
        idx = np.asarray(states).reshape(len(states), -1)[:, 0].astype(np.int64)
        out = np.zeros((len(idx), self.p))
        out[np.arange(len(idx)), idx] = 1.0
        return out


def compose_state_action(state_feats, action: int, n_actions: int = N_ACTIONS) -> np.ndarray:
    """Place ``state_feats`` into the block of ``action``; zeros elsewhere."""
    s = np.asarray(state_feats, dtype=float)
    if not 0 <= action < n_actions:
        raise ContractError(f"invalid action {action}")
    p = len(s)
    out = np.zeros(p * n_actions)
    out[action * p:(action + 1) * p] = s
    return out


def q_all(fmap: FeatureMap, w, state) -> np.ndarray:
    """Q-values of every action at one state."""
    return q_all_many(fmap, w, np.asarray(state, dtype=float)[None, :])[0]


def q_all_many(fmap: FeatureMap, w, states) -> np.ndarray:
    """``(N, n_actions)`` Q-values for a batch of states."""
    w = np.asarray(w, dtype=float)
    if w.shape != (fmap.m,):
        raise ContractError(f"weight vector has shape {w.shape}, feature map needs ({fmap.m},)")
    return q_from_state_features(fmap.state_features(states), w, fmap.n_actions)


def q_from_state_features(S: np.ndarray, w: np.ndarray, n_actions: int) -> np.ndarray:
    return S @ w.reshape(n_actions, -1).T


def save_weights(w, fmap: FeatureMap, path: str | Path) -> None:
    """Write weights as CSV: one metadata header line, then one value per line."""
    w = np.asarray(w, dtype=float)
    if w.shape != (fmap.m,):
        raise ContractError("weights do not match feature map")
    header = f"# m={fmap.m} p={fmap.p} map={fmap.describe()} order={INDEX_ORDER_VERSION}"
    np.savetxt(path, w, fmt="%.17g", header=header, comments="")


def load_weights(path: str | Path) -> tuple[np.ndarray, dict]:
    """Read a weights file; returns ``(w, metadata)``."""
    try:
        with open(path) as fh:
            head = fh.readline()
            w = np.loadtxt(fh, ndmin=1)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    if not head.startswith("#"):
        raise DataError(f"{path}: missing weights header")
    meta = dict(kv.split("=", 1) for kv in head[1:].split())
    if int(meta.get("m", -1)) != len(w):
        raise DataError(f"{path}: header m={meta.get('m')} but {len(w)} values")
    if not np.all(np.isfinite(w)):
        raise DataError(f"{path}: non-finite weights")
    return w, meta
