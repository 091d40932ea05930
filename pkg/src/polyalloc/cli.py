"""Experiment front-end.

Subcommands: gen-polytope | debias | sample | train | eval.  Train runs
from a single JSON config; sample and train render matplotlib figures next
to their CSV outputs unless --no-plot is given.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 infeasible
polytope.  POLYALLOC_THREADS caps numba's thread pool.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import ar_sampler, debias, envs, neural, polytope, ppo
from .errors import (
    AcceptanceTooLow,
    FitFailed,
    InfeasibleSystem,
    NumericalFailure,
    PolyallocError,
)

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INFEASIBLE = 4


def _apply_thread_cap():
    cap = os.environ.get("POLYALLOC_THREADS")
    if cap:
        os.environ.setdefault("NUMBA_NUM_THREADS", cap)
        os.environ.setdefault("OMP_NUM_THREADS", cap)


def _resolve_polytope(args) -> polytope.Polytope:
    if getattr(args, "polytope", None):
        return polytope.load(args.polytope)
    kind = getattr(args, "gen", None)
    if kind is None:
        raise SystemExit2("one of --polytope or --gen is required")
    n = args.n
    if kind == "simplex":
        return polytope.build([], [], n)
    if kind == "random":
        return polytope.gen_random_halfspaces(n, args.constraints, args.seed)
    if kind == "hull":
        return polytope.gen_hull_polytope(n, args.points, args.seed)
    raise SystemExit2(f"unknown generator kind {kind!r}")


class SystemExit2(Exception):
    """Config-level error; mapped to exit code 2."""


def cmd_gen_polytope(args) -> int:
    p = _resolve_polytope(args)
    polytope.save(p, args.out)
    print(f"wrote {args.out}: n={p.n_entities}, {p.n_user_rows} constraint rows "
          f"(+{p.n_rows - p.n_user_rows} simplex rows)")
    return 0


def cmd_debias(args) -> int:
    p = _resolve_polytope(args)
    rng = np.random.default_rng(args.seed)
    _, rate = ar_sampler.uniform_rejection_batch(p, min(args.k, 1000), np.random.default_rng(args.seed))
    terms = debias.fit(p, args.k, rng)
    debias.save(terms, args.out)
    print(f"rejection acceptance rate ~ {rate:.3f}")
    for i, (a, b) in enumerate(zip(terms.alphas, terms.betas)):
        print(f"step {i + 1}: alpha={a:.4f} beta={b:.4f}")
    print(f"wrote {args.out}")
    return 0


def cmd_sample(args) -> int:
    p = _resolve_polytope(args)
    n = p.n_entities
    if args.terms:
        terms = debias.load(args.terms)
        if terms.alphas.shape[0] != n - 1:
            raise SystemExit2("terms file does not match the polytope dimension")
        alphas, betas = terms.alphas, terms.betas
    else:
        alphas = np.ones(n - 1)
        betas = np.ones(n - 1)

    rng = np.random.default_rng(args.seed)
    if args.count > 0:
        actions, _, step_logps, _ = ar_sampler.sample_batch(p, alphas, betas, args.count, rng)
        logps = step_logps.sum(axis=1)
    else:
        actions = np.empty((0, n))
        logps = np.empty(0)

    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"a_{i + 1}" for i in range(n)] + ["log_prob"])
        for row, lp_ in zip(actions, logps):
            w.writerow([repr(float(v)) for v in row] + [repr(float(lp_))])
        if args.count > 0:
            w.writerow([repr(float(m)) for m in actions.mean(axis=0)] + ["mean"])
    print(f"wrote {args.out} ({args.count} samples)")

    if not args.no_plot and args.count > 0:
        fig_path = str(Path(args.out).with_suffix(".png"))
        from . import report

        report.plot_allocations(actions, fig_path,
                                title="de-biased" if args.terms else "flat (1,1)")
        print(f"wrote {fig_path}")
    return 0


def _load_run_config(path) -> dict:
    with open(path) as f:
        cfg = json.load(f)
    if "env" not in cfg:
        raise SystemExit2("run config must contain an 'env' block")
    return cfg


def cmd_train(args) -> int:
    cfg = _load_run_config(args.config)
    env_spec = cfg["env"]
    train_cfg = ppo.TrainConfig.from_dict(cfg.get("train", {}))
    if "seed" in cfg:
        train_cfg.seed = int(cfg["seed"])

    out_dir = Path(cfg.get("out_dir", args.out or "run"))
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "resolved_config.json", "w") as f:
        json.dump({**cfg, "train": vars(train_cfg)}, f, indent=2)

    base_env = envs.make_env(env_spec)
    p = base_env.action_polytope()
    order = None
    if cfg.get("order", "forward") == "reversed":
        order = np.arange(p.n_entities)[::-1]

    terms = None
    db_cfg = cfg.get("debias", {})
    if db_cfg.get("enabled", True):
        p_sample = p if order is None else polytope.permute(p, order)
        reuse = db_cfg.get("file")
        if reuse and Path(reuse).exists():
            terms = debias.load(reuse)
            if terms.polytope_hash != p_sample.digest():
                raise SystemExit2(f"terms file {reuse} was fitted on a different polytope")
        else:
            k = int(db_cfg.get("k", 10_000))
            terms = debias.fit(p_sample, k, np.random.default_rng(train_cfg.seed))
            debias.save(terms, out_dir / "debias_terms.json")

    metrics_path = out_dir / "metrics.csv"

    def progress(rec, _stats):
        print(f"steps={rec.steps} mean_reward={rec.mean_reward:.4f} "
              f"entropy={rec.entropy:.3f} violations={rec.violations} "
              f"wall={rec.wall_ms:.0f}ms", flush=True)

    ppo.train(
        env_spec, train_cfg, terms=terms, order=order,
        metrics_path=metrics_path,
        checkpoint_path=out_dir / "checkpoint.json",
        progress=progress,
    )
    print(f"wrote {metrics_path} and {out_dir / 'checkpoint.json'}")
    if not args.no_plot:
        from . import report

        report.plot_learning_curve(metrics_path, out_dir / "metrics.png")
        print(f"wrote {out_dir / 'metrics.png'}")
    return 0


def cmd_eval(args) -> int:
    policy, value_net, extra, _ = neural.load_checkpoint(args.checkpoint)
    env_spec = extra.get("env_spec")
    if env_spec is None:
        raise SystemExit2("checkpoint carries no env spec; cannot evaluate")
    order = extra.get("order")
    mean, std, violations = ppo.evaluate(
        env_spec, policy, value_net, args.episodes, seed=args.seed,
        order=order, deterministic=args.eval_deterministic,
    )
    print(f"episodes={args.episodes} mean_reward={mean:.4f} +/- {std:.4f} "
          f"violations={violations}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="polyalloc",
        description="Constraint-satisfying autoregressive allocation policies.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def add_polytope_source(sp):
        sp.add_argument("--polytope", help="polytope JSON file")
        sp.add_argument("--gen", choices=["simplex", "random", "hull"],
                        help="generate the polytope instead of loading it")
        sp.add_argument("--n", type=int, default=3, help="number of entities")
        sp.add_argument("--constraints", type=int, default=5,
                        help="extra random constraints (--gen random)")
        sp.add_argument("--points", type=int, default=30, help="hull points (--gen hull)")

    sp = sub.add_parser("gen-polytope", help="write a polytope JSON file")
    add_polytope_source(sp)
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_polytope)

    sp = sub.add_parser("debias", help="fit de-bias terms (JSON output)")
    add_polytope_source(sp)
    sp.add_argument("--k", type=int, default=10_000, help="uniform samples for the fit")
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_debias)

    sp = sub.add_parser(
        "sample",
        help="draw allocations; CSV columns a_1..a_n,log_prob plus a mean row",
    )
    add_polytope_source(sp)
    sp.add_argument("--terms", help="de-bias terms JSON (default: flat (1,1))")
    sp.add_argument("--flat", action="store_true", help="force flat (1,1) parameters")
    sp.add_argument("--count", type=int, default=2500)
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-plot", action="store_true")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("train", help="train PPO from a JSON run config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", help="output directory (config out_dir wins)")
    sp.add_argument("--no-plot", action="store_true")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--episodes", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--eval-deterministic", action="store_true",
                    help="use per-step distribution means instead of sampling")
    sp.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    _apply_thread_cap()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit2 as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, json.JSONDecodeError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleSystem as e:
        print(f"infeasible polytope: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericalFailure, AcceptanceTooLow, FitFailed) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except PolyallocError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
