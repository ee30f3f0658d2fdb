"""Experiment harness: greedy evaluation, discount/temperature sweeps, CSV and SVG output.

RNG streams are derived from each root seed with :func:`derive_rng`, keyed by
purpose and grid values, so adding grid points never changes existing cells:

* training batch: ``(seed, "collect")``
* evaluation starts: ``(seed, "eval", round(gamma * 1e6))``, shared by all
  operators at the same discount so they face identical start states.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .errors import ConfigError, DataError, SoftLspiError, SolverError
from .features import FeatureMap, FourierMap, q_all_many
from .lspi import DEFAULT_MAX_ITERS, DEFAULT_RIDGE, DEFAULT_TOL, Design, lspi_train
from .navsim import WorldSpec, collect_random_walk, make_world, sample_start, step_many
from .policy import ImprovementConfig
from .sfa import DEFAULTS as SFA_DEFAULTS, SfaMap, fit_sfa, select_dictionary

log = logging.getLogger(__name__)

DEFAULT_GAMMAS = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.97, 0.99]
DEFAULT_BETAS = ["greedy", 1.0, 2.0, 5.0, 10.0, 20.0, 50.0]

CSV_COLUMNS = ["world", "representation", "operator", "normalize", "gamma", "beta", "epsilon",
               "seed", "batch_size", "success_fraction", "iterations", "converged",
               "wall_time_s", "error"]


def derive_rng(root_seed: int, purpose: str, *keys: int) -> np.random.Generator:
    """Independent generator for ``(root_seed, purpose, *keys)``."""
    spawn_key = (zlib.crc32(purpose.encode()),) + tuple(int(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(int(root_seed), spawn_key=spawn_key))


def _grid_key(v: float) -> int:
    return int(round(v * 1e6))


# -- evaluation ---------------------------------------------------------------

def rollout_successes(world: WorldSpec, starts: np.ndarray,
                      policy_fn: Callable[[np.ndarray], np.ndarray], horizon: int) -> np.ndarray:
    """Boolean success flag per start: goal reached within ``horizon`` actions, no crash.

    A crash aborts the trajectory as a failure.
    """
    S = np.array(starts, dtype=float, copy=True)
    alive = np.ones(len(S), dtype=bool)
    success = np.zeros(len(S), dtype=bool)
    for _ in range(horizon):
        idx = np.flatnonzero(alive)
        if len(idx) == 0:
            break
        actions = np.asarray(policy_fn(S[idx]))
        nxt, _, goal, crashed = step_many(world, S[idx], actions)
        S[idx] = nxt
        success[idx[goal]] = True
        alive[idx[goal | crashed]] = False
    return success


def greedy_actions(fmap: FeatureMap, w) -> Callable[[np.ndarray], np.ndarray]:
    """Greedy policy of a linear Q-function (ties to the lowest action)."""
    w = np.array(w, dtype=float, copy=True)
    return lambda states: np.argmax(q_all_many(fmap, w, states), axis=1)


def sample_starts(world: WorldSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    return np.array([sample_start(world, rng).as_array() for _ in range(n)]).reshape(n, 3)


def evaluate_policy(world: WorldSpec, fmap: FeatureMap | None, w, eval_starts: int = 200,
                    horizon: int = 100, rng: np.random.Generator | int = 0,
                    policy_fn: Callable[[np.ndarray], np.ndarray] | None = None) -> float:
    """Fraction of greedy rollouts from random starts that succeed.

    ``policy_fn`` replaces the greedy Q-policy (maps ``(N, 3)`` states to
    actions); it exists so scripted controllers can be scored with the same
    counting logic.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    starts = sample_starts(world, eval_starts, rng)
    if policy_fn is None:
        policy_fn = greedy_actions(fmap, w)
    return int(rollout_successes(world, starts, policy_fn, horizon).sum()) / eval_starts


# -- configuration ------------------------------------------------------------

@dataclass
class SfaParams:
    max_size: int = SFA_DEFAULTS["max_size"]
    novelty: float = SFA_DEFAULTS["novelty"]
    kernel_width: float = SFA_DEFAULTS["kernel_width"]
    ridge: float = SFA_DEFAULTS["ridge"]
    p: int = SFA_DEFAULTS["p"]


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class ExperimentConfig:
    """One sweep: a world, a representation and a grid of discount/temperature values.

    When ``improvement.kind`` is ``"softmax"`` every ``beta_grid`` entry
    becomes its own series; the entry ``"greedy"`` adds a greedy series.
    For the other kinds ``beta_grid`` is ignored.
    """

    world: str = "U"
    representation: str = "fourier"
    improvement: ImprovementConfig = field(
        default_factory=lambda: ImprovementConfig("softmax", normalize=True))
    gamma_grid: list = field(default_factory=lambda: list(DEFAULT_GAMMAS))
    beta_grid: list = field(default_factory=lambda: list(DEFAULT_BETAS))
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    batch_size: int = 20000
    eval_starts: int = 200
    horizon: int = 100
    ridge: float = DEFAULT_RIDGE
    tol: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS
    fourier_freqs: int = 6
    sfa: SfaParams = field(default_factory=SfaParams)
    record_wall_time: bool = False

    def __post_init__(self):
        self.world = make_world(self.world).name
        if self.representation not in ("fourier", "sfa"):
            raise ConfigError(f"representation must be 'fourier' or 'sfa', got {self.representation!r}")
        if not self.gamma_grid or not self.seeds:
            raise ConfigError("gamma_grid and seeds must be non-empty")
        if any(not 0.0 <= g < 1.0 for g in self.gamma_grid):
            raise ConfigError("every gamma must lie in [0, 1)")
        if self.improvement.kind == "softmax":
            if not self.beta_grid:
                raise ConfigError("beta_grid must be non-empty for softmax sweeps")
            for b in self.beta_grid:
                if b != "greedy" and not (isinstance(b, (int, float)) and math.isfinite(b) and b >= 0):
                    raise ConfigError(f"invalid beta_grid entry {b!r}")
        if min(self.batch_size, self.eval_starts, self.horizon, self.max_iters) < 1:
            raise ConfigError("batch_size, eval_starts, horizon and max_iters must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if "improvement" in data:
            data["improvement"] = _build(ImprovementConfig, data["improvement"], "improvement")
        if "sfa" in data:
            data["sfa"] = _build(SfaParams, data["sfa"], "sfa")
        return _build(cls, data, "experiment config")

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def cell_configs(self) -> list[ImprovementConfig]:
        imp = self.improvement
        if imp.kind != "softmax":
            return [imp]
        out = []
        for b in self.beta_grid:
            if b == "greedy":
                out.append(ImprovementConfig("greedy"))
            else:
                out.append(dataclasses.replace(imp, beta=float(b)))
        return out

    def feature_map(self, batch) -> FeatureMap:
        if self.representation == "fourier":
            return FourierMap(self.fourier_freqs)
        D = select_dictionary(batch, self.sfa.novelty, self.sfa.max_size, self.sfa.kernel_width)
        p = min(self.sfa.p, len(D))
        return SfaMap(fit_sfa(batch, D, self.sfa.kernel_width, self.sfa.ridge, p))


def desk_preset(world: str = "U", **overrides) -> ExperimentConfig:
    """Laptop-scale sweep: 20000 samples, 5 seeds, 540 Fourier state-action features."""
    return ExperimentConfig(world=world, **overrides)


def full_preset(world: str = "U", **overrides) -> ExperimentConfig:
    """Full-scale sweep: 50000 samples, 10 seeds, 1500 Fourier features."""
    kw = dict(batch_size=50000, seeds=list(range(10)), fourier_freqs=10)
    kw.update(overrides)
    return ExperimentConfig(world=world, **kw)


# -- sweep --------------------------------------------------------------------

@dataclass
class SweepCell:
    world: str
    representation: str
    operator: str
    normalize: bool
    gamma: float
    beta: float | None
    epsilon: float | None
    seed: int
    batch_size: int
    success_fraction: float | None
    iterations: int | None
    converged: bool | None
    wall_time: float | None = None
    error: str = ""

    @property
    def series(self) -> tuple:
        return (self.operator, self.beta, self.epsilon, self.normalize, self.representation)

    @property
    def label(self) -> str:
        if self.operator == "softmax":
            op = f"softmax beta={self.beta:g}"
        elif self.operator == "epsilon_greedy":
            op = f"epsilon_greedy eps={self.epsilon:g}"
        else:
            op = "greedy"
        return f"{op}{' normalize' if self.normalize else ''} ({self.representation})"


def _sort_key(c: SweepCell):
    return (c.gamma, -math.inf if c.beta is None else c.beta,
            c.seed, c.operator, c.epsilon if c.epsilon is not None else -math.inf,
            c.representation, c.world)


def _cell(cfg: ExperimentConfig, imp: ImprovementConfig, gamma: float, seed: int, **kw) -> SweepCell:
    return SweepCell(
        world=cfg.world, representation=cfg.representation, operator=imp.kind,
        normalize=bool(imp.normalize) if imp.kind != "greedy" else False,
        gamma=float(gamma), beta=float(imp.beta) if imp.kind == "softmax" else None,
        epsilon=float(imp.epsilon) if imp.kind == "epsilon_greedy" else None,
        seed=int(seed), batch_size=cfg.batch_size, **kw)


def run_sweep(config: ExperimentConfig, progress: Callable[[SweepCell], None] | None = None,
              batch_cache: dict | None = None) -> list[SweepCell]:
    """Train and evaluate every ``(seed, gamma, operator)`` cell.

    Solver or data failures are recorded in the cell instead of aborting.
    ``batch_cache`` (keyed by world, size and seed) lets several sweeps over
    the same seeds share their random-walk batches.
    """
    world = make_world(config.world)
    cells = []
    for seed in config.seeds:
        key = (world.name, config.batch_size, int(seed))
        if batch_cache is not None and key in batch_cache:
            batch = batch_cache[key]
        else:
            batch = collect_random_walk(world, config.batch_size, derive_rng(seed, "collect"))
            batch.seed = int(seed)
            if batch_cache is not None:
                batch_cache[key] = batch
        try:
            fmap = config.feature_map(batch)
            design = Design(batch, fmap)
        except SoftLspiError as exc:
            for gamma in config.gamma_grid:
                for imp in config.cell_configs():
                    cells.append(_cell(config, imp, gamma, seed, success_fraction=None,
                                       iterations=None, converged=None, error=str(exc)))
            continue
        for gamma in config.gamma_grid:
            starts = sample_starts(world, config.eval_starts,
                                   derive_rng(seed, "eval", _grid_key(gamma)))
            for imp in config.cell_configs():
                t0 = time.perf_counter()
                try:
                    res = lspi_train(design, None, gamma, imp, config.max_iters, config.tol,
                                     config.ridge)
                    ok = rollout_successes(world, starts, greedy_actions(fmap, res.w),
                                           config.horizon)
                    cell = _cell(config, imp, gamma, seed,
                                 success_fraction=int(ok.sum()) / config.eval_starts,
                                 iterations=res.iterations, converged=res.converged)
                except (SolverError, DataError) as exc:
                    cell = _cell(config, imp, gamma, seed, success_fraction=None,
                                 iterations=None, converged=None, error=str(exc))
                if config.record_wall_time:
                    cell.wall_time = time.perf_counter() - t0
                cells.append(cell)
                if progress is not None:
                    progress(cell)
    return sorted(cells, key=_sort_key)


def aggregate(cells: Iterable[SweepCell]) -> list[dict]:
    """Mean and population std of success per ``(series, gamma)`` over seeds."""
    groups: dict = {}
    labels = {}
    for c in cells:
        if c.success_fraction is None:
            continue
        groups.setdefault((c.series, c.gamma), []).append(c.success_fraction)
        labels[c.series] = c.label
    rows = []
    for (series, gamma), vals in sorted(groups.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
        v = np.asarray(vals)
        rows.append(dict(series=series, label=labels[series], gamma=gamma, n=len(v),
                         mean=float(v.mean()), std=float(v.std())))
    return rows


# -- CSV / SVG ----------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(cells: Iterable[SweepCell], path: str | Path) -> None:
    """Write sweep cells sorted by ``(gamma, beta, seed)``; header always present."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(CSV_COLUMNS)
            for c in sorted(cells, key=_sort_key):
                wr.writerow([_fmt(v) for v in (
                    c.world, c.representation, c.operator, c.normalize, c.gamma, c.beta,
                    c.epsilon, c.seed, c.batch_size, c.success_fraction, c.iterations,
                    c.converged, c.wall_time, c.error)])
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def _opt(s: str, cast):
    return None if s == "" else cast(s)


def _bool(s: str) -> bool:
    return s == "true"


def read_csv(path: str | Path) -> list[SweepCell]:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd, None)
            if header != CSV_COLUMNS:
                raise DataError(f"{path}: unexpected header {header}")
            rows = list(rd)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return [SweepCell(r[0], r[1], r[2], _bool(r[3]), float(r[4]), _opt(r[5], float),
                      _opt(r[6], float), int(r[7]), int(r[8]), _opt(r[9], float),
                      _opt(r[10], int), _opt(r[11], _bool), _opt(r[12], float), r[13])
            for r in rows]


def render_chart(cells: Iterable[SweepCell], path: str | Path, title: str | None = None) -> dict:
    """SVG of mean success vs. discount with std error bars, one series per operator.

    Returns ``{"labels": [...], "ylim": (lo, hi)}`` describing what was drawn.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = aggregate(cells)
    if not rows:
        raise ConfigError("cannot render an empty table")
    with matplotlib.rc_context({"svg.fonttype": "none", "svg.hashsalt": "softlspi"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        series = {}
        for r in rows:
            series.setdefault(r["label"], []).append(r)
        for label, rs in series.items():
            g = [r["gamma"] for r in rs]
            ax.errorbar(g, [r["mean"] for r in rs], yerr=[r["std"] for r in rs],
                        marker="o", capsize=3, label=label)
        ax.set_xlabel("discount factor gamma")
        ax.set_ylabel("fraction of successful trajectories")
        ax.set_ylim(0.0, 1.0)
        if title:
            ax.set_title(title)
        ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        ylim = ax.get_ylim()
        plt.close(fig)
    return {"labels": list(series), "ylim": tuple(float(v) for v in ylim)}
