"""Action distributions and policy-improvement operators over Q-value vectors.

All functions act on the last axis, so a single state's ``(n_actions,)``
vector and an ``(N, n_actions)`` batch are handled alike. Argmax ties are
broken toward the lowest action index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError
from .features import q_all

KINDS = ("greedy", "softmax", "epsilon_greedy")
_KIND_ALIASES = {"egreedy": "epsilon_greedy", "epsilon-greedy": "epsilon_greedy", "eps": "epsilon_greedy"}

SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class ImprovementConfig:
    """Which improvement operator to use and its parameters.

    ``beta`` is the inverse stochasticity of the softmax (0 is uniform,
    large values approach greedy). ``normalize`` standardizes Q across
    actions before the policy is formed.
    """

    kind: str = "greedy"
    beta: float = 1.0
    epsilon: float = 0.1
    normalize: bool = False

    def __post_init__(self):
        kind = _KIND_ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ConfigError(f"unknown improvement kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        if kind == "softmax" and not (math.isfinite(self.beta) and self.beta >= 0):
            raise ConfigError(f"softmax beta must be finite and >= 0, got {self.beta}")
        if kind == "epsilon_greedy" and not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must lie in [0, 1], got {self.epsilon}")

    @property
    def label(self) -> str:
        if self.kind == "softmax":
            return f"softmax(beta={self.beta:g}{', norm' if self.normalize else ''})"
        if self.kind == "epsilon_greedy":
            return f"egreedy(eps={self.epsilon:g}{', norm' if self.normalize else ''})"
        return "greedy"


GREEDY = ImprovementConfig("greedy")


def _as_q(q_values) -> np.ndarray:
    q = np.asarray(q_values, dtype=float)
    if np.isnan(q).any():
        raise ContractError("Q-values contain NaN")
    return q


def greedy_policy(q_values) -> np.ndarray:
    q = _as_q(q_values)
    out = np.zeros_like(q)
    np.put_along_axis(out, np.argmax(q, axis=-1)[..., None], 1.0, axis=-1)
    return out


def softmax_policy(q_values, beta: float) -> np.ndarray:
    """Boltzmann distribution ``exp(beta q) / sum exp(beta q)``."""
    q = _as_q(q_values)
    if not beta >= 0:
        raise ContractError(f"beta must be >= 0, got {beta}")
    z = beta * (q - q.max(axis=-1, keepdims=True))
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def epsilon_greedy_policy(q_values, epsilon: float) -> np.ndarray:
    """Mass ``epsilon`` spread uniformly, ``1 - epsilon`` on the argmax."""
    q = _as_q(q_values)
    if not 0.0 <= epsilon <= 1.0:
        raise ContractError(f"epsilon must lie in [0, 1], got {epsilon}")
    n = q.shape[-1]
    return np.full_like(q, epsilon / n) + (1.0 - epsilon) * greedy_policy(q)


def normalize_q(q_values) -> np.ndarray:
    """Standardize Q across actions (population std); all-zero when std < 1e-12."""
    q = _as_q(q_values)
    mu = q.mean(axis=-1, keepdims=True)
    c = q - mu
    sigma = np.sqrt(np.mean(c * c, axis=-1, keepdims=True))
    ok = sigma >= SIGMA_FLOOR
    return np.where(ok, c / np.where(ok, sigma, 1.0), 0.0)


def improvement_policy(q_values, config: ImprovementConfig) -> np.ndarray:
    q = _as_q(q_values)
    if config.normalize:
        q = normalize_q(q)
    if config.kind == "softmax":
        return softmax_policy(q, config.beta)
    if config.kind == "epsilon_greedy":
        return epsilon_greedy_policy(q, config.epsilon)
    return greedy_policy(q)


def apply_operator(f_values, q_values, config: ImprovementConfig):
    """Expectation of ``f`` under the improved policy derived from ``q``.

    For the greedy operator this is ``f`` at the argmax of ``q``.
    """
    f = np.asarray(f_values, dtype=float)
    q = _as_q(q_values)
    if f.shape != q.shape:
        raise ContractError(f"f has shape {f.shape} but q has shape {q.shape}")
    if config.kind == "greedy":
        qq = normalize_q(q) if config.normalize else q
        out = np.take_along_axis(f, np.argmax(qq, axis=-1)[..., None], axis=-1)[..., 0]
    else:
        out = np.sum(improvement_policy(q, config) * f, axis=-1)
        # guard the convex-combination bound against summation round-off
        out = np.clip(out, f.min(axis=-1), f.max(axis=-1))
    return out[()] if out.ndim == 0 else out


def soft_td_error(transition, fmap, w, gamma: float, config: ImprovementConfig) -> float:
    """TD residual ``r + gamma * Gamma[q|q](x') - q(x, a)``; no bootstrap on terminal steps."""
    if not 0.0 <= gamma < 1.0:
        raise ContractError(f"gamma must lie in [0, 1), got {gamma}")
    q_now = q_all(fmap, w, transition.state)[transition.action]
    delta = transition.reward - q_now
    if not transition.terminal:
        q_next = q_all(fmap, w, transition.next_state)
        delta += gamma * float(apply_operator(q_next, q_next, config))
    return float(delta)
