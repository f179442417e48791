"""Command-line front end.

Subcommands: gen-scenarios, train, evaluate, plan, inspect. Option values
merge with precedence CLI flag > --config file > built-in default; the
environment variable HYDROSAC_SEED supplies the seed when nothing else
does. Exit codes: 0 success, 2 usage or input error, 3 training aborted on
a non-finite loss, 4 corrupt artifact.
"""

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from . import scenario as sc
from . import trainer as tr
from .env import LAST_WEEK_PRICE, MAX_PRICE, EnvConfig
from .sac import SacConfig, TrainingAborted
from .scenario import ArtificialConfig, DataError
from .trainer import CheckpointError, TrainConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TRAINING_ABORT = 3
EXIT_CORRUPT = 4

PLAN_HEADER = "week,price,inflow,action,release_volume_Mm3,storage,spill,reward"


class CliError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _load_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise CliError(f"config file {path} is not valid JSON ({e})", code=EXIT_CORRUPT)
    if not isinstance(doc, dict):
        raise CliError(f"config file {path} must hold a JSON object", code=EXIT_CORRUPT)
    unknown = sorted(set(doc) - {"train", "env", "artificial"})
    if unknown:
        raise CliError(f"unknown sections {unknown} in config file {path}")
    try:
        merged_train = dict(doc.get("train", {}))
        if "env" in merged_train:
            raise CliError(
                "put the environment section at the top level ('env'), not inside 'train'"
            )
        merged_train["env"] = dict(doc.get("env", {}))
        cfg = tr.train_config_from_dict(merged_train, where="config file")
        artificial = tr._dataclass_from_dict(
            ArtificialConfig, doc.get("artificial", {}), "artificial"
        )
    except CliError:
        raise
    except (TypeError, ValueError) as e:
        raise CliError(f"bad config file {path}: {e}")
    given = {
        "train": frozenset(doc.get("train", {})),
        "env": frozenset(doc.get("env", {})),
    }
    return cfg, artificial, given


def _load_config_or_defaults(args):
    """Returns (train config, artificial config, keys the file explicitly set)."""
    if getattr(args, "config", None):
        return _load_config_file(args.config)
    return TrainConfig(), ArtificialConfig(), {"train": frozenset(), "env": frozenset()}


def _default_seed():
    env = os.environ.get("HYDROSAC_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"HYDROSAC_SEED must be an integer, got {env!r}")
    return 0


def _pick(flag_value, fallback):
    return fallback if flag_value is None else flag_value


def _artificial_from_args(args, base):
    cfg = dataclasses.replace(base)
    for attr in (
        "samples_per_week",
        "price_low",
        "price_noise",
        "inflow_noise",
        "annual_inflow",
        "r_max",
    ):
        value = getattr(args, attr, None)
        if value is not None:
            setattr(cfg, attr, value)
    return cfg


def _env_overrides(args):
    pairs = (
        ("f_max", "f_max"),
        ("r_max", "r_max"),
        ("k_price", "k_price"),
        ("q_price", "q_price"),
        ("init_low", "init_low"),
        ("init_high", "init_high"),
        ("terminal_low", "terminal_low"),
        ("terminal_high", "terminal_high"),
        ("terminal_rule", "terminal_price_rule"),
    )
    out = {}
    for flag, attr in pairs:
        value = getattr(args, flag, None)
        if value is not None:
            out[attr] = value
    return out


def _agent_overrides(args):
    out = {}
    for attr in ("alpha", "gamma", "tau", "lr_value", "lr_q", "lr_policy", "hidden_width"):
        value = getattr(args, attr, None)
        if value is not None:
            out[attr] = value
    return out


def _get_pools(args, artificial_cfg, seed):
    """Load pools from --pools, or generate artificial pools inline."""
    if getattr(args, "pools", None):
        try:
            return sc.load_pools(args.pools)
        except FileNotFoundError:
            raise CliError(f"pools file not found: {args.pools}")
        except DataError as e:
            raise CliError(str(e), code=EXIT_CORRUPT)
    return sc.generate_artificial_pools(artificial_cfg, seed)


def _add_artificial_flags(p):
    p.add_argument("--samples-per-week", type=int, dest="samples_per_week")
    p.add_argument("--price-low", type=float, dest="price_low")
    p.add_argument("--price-noise", type=float, dest="price_noise")
    p.add_argument("--inflow-noise", type=float, dest="inflow_noise")
    p.add_argument("--annual-inflow", type=float, dest="annual_inflow")


def _add_env_flags(p):
    p.add_argument("--f-max", type=float, dest="f_max")
    p.add_argument("--r-max", type=float, dest="r_max")
    p.add_argument("--k-price", type=float, dest="k_price")
    p.add_argument("--q-price", type=float, dest="q_price")
    p.add_argument("--init-low", type=float, dest="init_low")
    p.add_argument("--init-high", type=float, dest="init_high")
    p.add_argument("--terminal-low", type=float, dest="terminal_low")
    p.add_argument("--terminal-high", type=float, dest="terminal_high")
    p.add_argument(
        "--terminal-rule", choices=[LAST_WEEK_PRICE, MAX_PRICE], dest="terminal_rule"
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hydrosac",
        description="Train and apply a soft actor-critic reservoir scheduling agent.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scenarios", help="build a pools file")
    p.add_argument("--mode", choices=[sc.ARTIFICIAL, sc.HISTORIC], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--prices", nargs="+", metavar="FILE")
    p.add_argument("--inflows", nargs="+", metavar="FILE")
    p.add_argument("--r-max", type=float, dest="r_max")
    p.add_argument(
        "--synthetic-historic",
        action="store_true",
        help="historic mode without data files: artificial profiles with wide noise",
    )
    _add_artificial_flags(p)

    p = sub.add_parser("train", help="train an agent")
    p.add_argument("--pools")
    p.add_argument("--config")
    p.add_argument("--out", default="checkpoint.json")
    p.add_argument("--log", default="train_log.csv")
    p.add_argument("--seed", type=int)
    p.add_argument("--total-weeks", type=int, dest="total_weeks")
    p.add_argument("--exploration-weeks", type=int, dest="exploration_weeks")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    p.add_argument("--include-replay", action="store_true")
    _add_env_flags(p)
    _add_artificial_flags(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--lr-value", type=float, dest="lr_value")
    p.add_argument("--lr-q", type=float, dest="lr_q")
    p.add_argument("--lr-policy", type=float, dest="lr_policy")
    p.add_argument("--hidden-width", type=int, dest="hidden_width")

    p = sub.add_parser("evaluate", help="evaluate a checkpoint over sampled scenarios")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pools")
    p.add_argument("--config")
    p.add_argument("--episodes", type=int, default=5)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="eval.csv")
    _add_env_flags(p)
    _add_artificial_flags(p)

    p = sub.add_parser("plan", help="produce a 52-week plan for one scenario")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scenario", help="CSV week,price,inflow with 52 rows")
    p.add_argument("--pools")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="plan.csv")
    _add_artificial_flags(p)

    p = sub.add_parser("inspect", help="summarize a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--json", action="store_true", dest="as_json")

    return parser


def cmd_gen_scenarios(args):
    _, artificial, _ = _load_config_or_defaults(args)
    seed = _pick(args.seed, _default_seed())
    artificial = _artificial_from_args(args, artificial)
    if args.mode == sc.ARTIFICIAL:
        pools = sc.generate_artificial_pools(artificial, seed)
    elif args.synthetic_historic:
        wide = dataclasses.replace(
            artificial,
            price_noise=max(artificial.price_noise, 0.5),
            inflow_noise=max(artificial.inflow_noise, 0.8),
        )
        pools = sc.generate_artificial_pools(wide, seed, mode=sc.HISTORIC)
    else:
        if not args.prices or not args.inflows:
            raise CliError(
                "historic mode needs --prices and --inflows (or --synthetic-historic)"
            )
        r_max = _pick(args.r_max, artificial.r_max)
        try:
            price_series = [sc.load_csv_series(f, sc.PRICE) for f in args.prices]
            inflow_series = [sc.load_csv_series(f, sc.INFLOW) for f in args.inflows]
        except FileNotFoundError as e:
            raise CliError(f"input file not found: {e.filename}")
        pools = sc.build_pools(price_series, inflow_series, r_max)
    sc.save_pools(pools, args.out)
    for w in range(sc.WEEKS):
        print(
            f"week {w + 1:02d}: price={len(pools.price_pool[w])} "
            f"inflow={len(pools.inflow_pool[w])}"
        )
    print(f"wrote {args.out} ({pools.mode}, price_max={pools.price_max:g})")
    return EXIT_OK


def _build_train_config(args):
    base, artificial, given = _load_config_or_defaults(args)
    artificial = _artificial_from_args(args, artificial)
    if args.seed is not None:
        seed = args.seed
    elif "seed" in given["train"]:
        seed = base.seed
    else:
        seed = _default_seed()
    pools = _get_pools(args, artificial, seed)

    env_overrides = _env_overrides(args)
    env_kwargs = dataclasses.asdict(base.env)
    env_kwargs.update(env_overrides)
    # Default terminal valuation follows the data mode: last-week price for
    # artificial pools, maximum price for historic ones.
    if "terminal_price_rule" not in env_overrides and "terminal_price_rule" not in given["env"]:
        env_kwargs["terminal_price_rule"] = (
            MAX_PRICE if pools.mode == sc.HISTORIC else LAST_WEEK_PRICE
        )
    agent_kwargs = dataclasses.asdict(base.agent)
    agent_kwargs.update(_agent_overrides(args))

    if args.exploration_weeks is not None:
        exploration = args.exploration_weeks
    elif "exploration_weeks" in given["train"]:
        exploration = base.exploration_weeks
    else:
        exploration = 50_000 if pools.mode == sc.HISTORIC else 10_000

    cfg = TrainConfig(
        total_weeks=_pick(args.total_weeks, base.total_weeks),
        exploration_weeks=exploration,
        batch_size=_pick(args.batch_size, base.batch_size),
        seed=seed,
        checkpoint_every_episodes=_pick(
            args.checkpoint_every, base.checkpoint_every_episodes
        ),
        include_replay_in_checkpoint=args.include_replay
        or base.include_replay_in_checkpoint,
        pools_path=args.pools or "",
        env=EnvConfig(**env_kwargs),
        agent=SacConfig(**agent_kwargs),
    )
    if cfg.exploration_weeks > cfg.total_weeks:
        cfg.exploration_weeks = cfg.total_weeks
    return cfg, pools


def cmd_train(args):
    cfg, pools = _build_train_config(args)
    try:
        cfg.validate()
    except ValueError as e:
        raise CliError(str(e))
    try:
        ckpt, records = tr.train(cfg, pools, checkpoint_path=args.out)
    except TrainingAborted as e:
        if e.records is not None:
            tr.write_train_log(e.records, args.log)
        print(f"training aborted: {e} (report: {e.report})", file=sys.stderr)
        return EXIT_TRAINING_ABORT
    tr.write_train_log(records, args.log)
    rewards = np.array([r.total_reward for r in records])
    tail = rewards[-max(1, len(rewards) // 10):]
    print(f"episodes: {len(records)}")
    print(f"mean total reward, last 10% of episodes: {tail.mean():.3f}")
    print(f"wrote {args.out} and {args.log}")
    return EXIT_OK


def _load_checkpoint_or_die(path):
    try:
        return tr.load_checkpoint(path)
    except FileNotFoundError:
        raise CliError(f"checkpoint not found: {path}")
    except CheckpointError as e:
        raise CliError(str(e), code=EXIT_CORRUPT)


def _warn_env_mismatch(args, ckpt):
    """The checkpoint's environment echo wins over CLI overrides."""
    overrides = _env_overrides(args)
    echo = dataclasses.asdict(ckpt.config.env)
    for attr, value in overrides.items():
        if echo.get(attr) != value:
            print(
                f"warning: --{attr.replace('_', '-')}={value} differs from the "
                f"checkpoint's {attr}={echo.get(attr)}; using the checkpoint value",
                file=sys.stderr,
            )


def cmd_evaluate(args):
    ckpt = _load_checkpoint_or_die(args.checkpoint)
    _warn_env_mismatch(args, ckpt)
    _, artificial, _ = _load_config_or_defaults(args)
    seed = _pick(args.seed, _default_seed())
    artificial = _artificial_from_args(args, artificial)
    pools = _get_pools(args, artificial, seed)
    if args.episodes < 1:
        raise CliError("--episodes must be >= 1")
    report = tr.evaluate(ckpt, pools, args.episodes, args.deterministic, seed)
    tr.write_eval_csv(report, args.out)
    totals = report.total_rewards()
    print(f"episodes: {len(report.episodes)}")
    print(
        f"mean total reward: {totals.mean():.3f} "
        f"(min {totals.min():.3f}, max {totals.max():.3f})"
    )
    print(f"wrote {args.out}")
    return EXIT_OK


def _load_scenario_csv(path):
    rows = []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [c.strip().lower() for c in header] != [
                "week",
                "price",
                "inflow",
            ]:
                raise CliError(
                    f"{path}: expected header 'week,price,inflow'", code=EXIT_CORRUPT
                )
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    rows.append((int(row[0]), float(row[1]), float(row[2])))
                except (ValueError, IndexError):
                    raise CliError(
                        f"{path}: malformed row at line {lineno}", code=EXIT_CORRUPT
                    )
    except FileNotFoundError:
        raise CliError(f"scenario file not found: {path}")
    rows.sort()
    if [r[0] for r in rows] != list(range(1, sc.WEEKS + 1)):
        raise CliError(
            f"{path}: scenario must contain weeks 1..{sc.WEEKS} exactly once each",
            code=EXIT_CORRUPT,
        )
    prices = np.array([r[1] for r in rows])
    inflows = np.array([r[2] for r in rows])
    if prices.min() < 0 or prices.max() > 1 or inflows.min() < 0 or inflows.max() > 1:
        raise CliError(f"{path}: values must lie in [0, 1]", code=EXIT_CORRUPT)
    return sc.Scenario(prices=prices, inflows=inflows)


def cmd_plan(args):
    ckpt = _load_checkpoint_or_die(args.checkpoint)
    seed = _pick(args.seed, _default_seed())
    if args.scenario:
        scn = _load_scenario_csv(args.scenario)
    else:
        _, artificial, _ = _load_config_or_defaults(args)
        artificial = _artificial_from_args(args, artificial)
        pools = _get_pools(args, artificial, seed)
        scn = sc.sample_scenario(pools, np.random.default_rng(seed))
    agent = ckpt.restore_agent()
    env_cfg = ckpt.config.env
    total, trace = tr.rollout(
        lambda obs, rng: agent.policy.mean_action(obs),
        scn,
        env_cfg,
        np.random.default_rng(seed),
    )
    lines = [PLAN_HEADER]
    for row in trace:
        week, price, inflow, action, storage, reward, _, spill = row
        release = action * env_cfg.f_max * env_cfg.r_max
        lines.append(
            f"{int(week)},{float(price)!r},{float(inflow)!r},{float(action)!r},"
            f"{float(release)!r},{float(storage)!r},{float(spill)!r},{float(reward)!r}"
        )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"total reward: {total:.3f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_inspect(args):
    ckpt = _load_checkpoint_or_die(args.checkpoint)
    shapes = {}
    for name, layers in ckpt.networks.items():
        widths = [layers[0][0].shape[1]] + [w.shape[0] for w, _, _ in layers]
        shapes[name] = widths
    if args.as_json:
        doc = {
            "version": ckpt.version,
            "episode": ckpt.episode,
            "replay_size": ckpt.replay_size,
            "network_shapes": shapes,
            "config": dataclasses.asdict(ckpt.config),
        }
        print(json.dumps(doc, indent=2))
    else:
        print(f"version: {ckpt.version}")
        print(f"episodes trained: {ckpt.episode}")
        print(f"replay size: {ckpt.replay_size}")
        for name in sorted(shapes):
            print(f"network {name}: {shapes[name]}")
        cfg = ckpt.config
        print(
            f"seed: {cfg.seed}  total_weeks: {cfg.total_weeks}  "
            f"exploration_weeks: {cfg.exploration_weeks}  batch_size: {cfg.batch_size}"
        )
        print(
            f"env: f_max={cfg.env.f_max} r_max={cfg.env.r_max} "
            f"terminal_rule={cfg.env.terminal_price_rule}"
        )
        print(f"agent: alpha={cfg.agent.alpha} gamma={cfg.agent.gamma} tau={cfg.agent.tau}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "gen-scenarios": cmd_gen_scenarios,
        "train": cmd_train,
        "evaluate": cmd_evaluate,
        "plan": cmd_plan,
        "inspect": cmd_inspect,
    }
    try:
        return handlers[args.command](args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CORRUPT
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
