"""Command line entry point: ``softlspi {collect,sfa-fit,train,eval,sweep}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .errors import ConfigError, ContractError, DataError, GeometryError, SolverError
from .features import FourierMap, load_weights, save_weights
from .lspi import DEFAULT_MAX_ITERS, DEFAULT_RIDGE, DEFAULT_TOL, lspi_train, write_run_log
from .navsim import collect_random_walk, load_batch, make_world, save_batch
from .policy import ImprovementConfig
from .sfa import DEFAULTS as SFA_DEFAULTS, SfaMap, fit_sfa, load_model, save_model, select_dictionary

log = logging.getLogger("softlspi")

EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 2, 3, 4


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _improvement(args) -> ImprovementConfig:
    return ImprovementConfig(args.operator, beta=args.beta, epsilon=args.epsilon,
                             normalize=args.normalize)


def _feature_map(args):
    if args.representation == "sfa":
        if not args.sfa_model:
            raise ConfigError("--sfa-model is required for the sfa representation")
        return SfaMap(load_model(args.sfa_model))
    return FourierMap(args.fourier_freqs)


def cmd_collect(args):
    batch = collect_random_walk(make_world(args.world), args.batch_size, args.seed)
    path = _out_dir(args) / f"batch_{batch.world}_{args.seed}.csv"
    save_batch(batch, path)
    print(path)


def cmd_sfa_fit(args):
    batch = load_batch(args.batch)
    D = select_dictionary(batch, args.novelty, args.max_size, args.kernel_width)
    model = fit_sfa(batch, D, args.kernel_width, args.sfa_ridge, min(args.p, len(D)))
    path = _out_dir(args) / "sfa_model.npz"
    save_model(model, path)
    print(path)


def cmd_train(args):
    fmap = _feature_map(args)
    batch = load_batch(args.batch)
    res = lspi_train(batch, fmap, args.gamma, _improvement(args), args.max_iters, args.tol,
                     args.ridge)
    out = _out_dir(args)
    save_weights(res.w, fmap, out / "weights.csv")
    write_run_log(res, out / "runlog.csv")
    print(json.dumps(dict(weights=str(out / "weights.csv"), iterations=res.iterations,
                          converged=res.converged, cycle=res.cycle_detected)))


def cmd_eval(args):
    w, meta = load_weights(args.weights)
    fmap = _feature_map(args)
    if fmap.m != len(w):
        raise DataError(f"weights have {len(w)} entries, {fmap.describe()} needs {fmap.m}")
    frac = bench.evaluate_policy(make_world(args.world), fmap, w, args.eval_starts,
                                 args.horizon, np.random.default_rng(args.seed))
    print(f"{frac:.6f}")


def cmd_sweep(args):
    if args.config:
        cfg = bench.ExperimentConfig.from_json(args.config)
    elif args.preset == "full":
        cfg = bench.full_preset(args.world.upper())
    else:
        cfg = bench.desk_preset(args.world.upper())
    out = _out_dir(args)
    cells = bench.run_sweep(cfg, progress=lambda c: log.info(
        "gamma=%g %s seed=%d success=%s", c.gamma, c.label, c.seed, c.success_fraction))
    bench.write_csv(cells, out / "sweep.csv")
    if any(c.success_fraction is not None for c in cells):
        bench.render_chart(cells, out / "sweep.svg",
                           title=f"{cfg.world}-world, {cfg.representation}")
    print(out / "sweep.csv")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="softlspi", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, world=True):
        if world:
            sp.add_argument("--world", choices=["u", "s", "U", "S"], default="u")
        sp.add_argument("--out", default=".")

    def rep(sp):
        sp.add_argument("--representation", choices=["fourier", "sfa"], default="fourier")
        sp.add_argument("--fourier-freqs", type=int, default=6)
        sp.add_argument("--sfa-model")

    sp = sub.add_parser("collect", help="collect a random-walk batch")
    common(sp)
    sp.add_argument("--batch-size", type=int, default=20000)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_collect)

    sp = sub.add_parser("sfa-fit", help="fit slow features on a batch")
    common(sp, world=False)
    sp.add_argument("--batch", required=True)
    sp.add_argument("--max-size", type=int, default=SFA_DEFAULTS["max_size"])
    sp.add_argument("--novelty", type=float, default=SFA_DEFAULTS["novelty"])
    sp.add_argument("--kernel-width", type=float, default=SFA_DEFAULTS["kernel_width"])
    sp.add_argument("--sfa-ridge", type=float, default=SFA_DEFAULTS["ridge"])
    sp.add_argument("--p", type=int, default=SFA_DEFAULTS["p"])
    sp.set_defaults(func=cmd_sfa_fit)

    sp = sub.add_parser("train", help="run LSPI on a batch")
    common(sp, world=False)
    rep(sp)
    sp.add_argument("--batch", required=True)
    sp.add_argument("--gamma", type=float, required=True)
    sp.add_argument("--operator", choices=["greedy", "softmax", "egreedy"], default="greedy")
    sp.add_argument("--beta", type=float, default=1.0)
    sp.add_argument("--epsilon", type=float, default=0.1)
    sp.add_argument("--normalize", action="store_true")
    sp.add_argument("--ridge", type=float, default=DEFAULT_RIDGE)
    sp.add_argument("--tol", type=float, default=DEFAULT_TOL)
    sp.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="score the greedy policy of a weights file")
    common(sp)
    rep(sp)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--eval-starts", type=int, default=200)
    sp.add_argument("--horizon", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("sweep", help="run a gamma x beta x seed sweep")
    common(sp)
    sp.add_argument("--config", help="JSON experiment config")
    sp.add_argument("--preset", choices=["desk", "full"], default="desk")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, ContractError, GeometryError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return 0


if __name__ == "__main__":
    sys.exit(main())
