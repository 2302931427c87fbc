"""Command-line interface: train, eval, verify, and map subcommands.

Diagnostics go to stderr, data to stdout; the effective configuration is
echoed before anything runs so every invocation is reproducible from its
output plus seeds. Exit status is 0 iff no errors.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import checks as checksmod
from .env import OBS_SIZE
from .grid import (
    MapFormatError,
    MapSpec,
    component_count,
    generate_random_map,
    parse_movingai,
    serialize_movingai,
)
from .harness import (
    RUN_ROOT_ENV,
    ActorPolicy,
    SuiteSpec,
    config_from_text,
    config_to_text,
    evaluate,
    run_training,
)
from .learner import CRITIC_INDEPENDENT, CRITIC_QMIX, TrainConfig
from .nn import load_net


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def _echo_config(config: TrainConfig, suites) -> None:
    line = " ".join(
        part.replace(" = ", "=")
        for part in config_to_text(config, suites).strip().splitlines()
    )
    _err(f"config: {line}")


def _run_root() -> Path:
    return Path(os.environ.get(RUN_ROOT_ENV, "runs"))


def _int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _float_tuple(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mapfrl",
        description="Curriculum-driven multi-agent path-finding RL toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training session")
    p_train.add_argument("--config", type=Path, help="key = value config file")
    p_train.add_argument("--out", type=Path, help="run directory")
    p_train.add_argument("--resume", action="store_true",
                         help="continue from the newest checkpoint in --out")
    p_train.add_argument("--eval-every", type=int, default=0, metavar="N",
                         help="evaluate the suites every N epochs")
    p_train.add_argument("--checkpoint-every", type=int, default=0, metavar="N")
    p_train.add_argument("--suite", action="append", default=[],
                         metavar="K=..,delta=..,N=..", help="eval suite (repeatable)")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--episodes", type=int, dest="episodes_per_epoch")
    p_train.add_argument("--agents", type=int, dest="num_agents")
    p_train.add_argument("--horizon", type=int)
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--lr", type=float, dest="learning_rate")
    p_train.add_argument("--critic", choices=(CRITIC_QMIX, CRITIC_INDEPENDENT))
    p_train.add_argument("--threshold", type=float)
    p_train.add_argument("--deviation", type=float)
    p_train.add_argument("--entropy", type=float, dest="entropy_coef")
    p_train.add_argument("--map-sizes", type=_int_tuple, dest="map_sizes")
    p_train.add_argument("--densities", type=_float_tuple)
    p_train.add_argument("--workers", type=int,
                         help="rollout workers (default: available cores)")
    group = p_train.add_mutually_exclusive_group()
    group.add_argument("--curriculum", dest="curriculum", action="store_true",
                       default=None)
    group.add_argument("--no-curriculum", dest="curriculum", action="store_false")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on seeded suites")
    p_eval.add_argument("checkpoint", type=Path,
                        help="checkpoint directory (containing actor.net)")
    p_eval.add_argument("--suite", action="append", default=[], required=False,
                        metavar="K=..,delta=..,N=..")
    p_eval.add_argument("--sample", action="store_true",
                        help="sample actions instead of greedy argmax")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--horizon", type=int, default=256)
    p_eval.add_argument("--out", type=Path, help="write the report CSV here")
    p_eval.set_defaults(func=cmd_eval)

    p_verify = sub.add_parser("verify", help="run property verification suites")
    p_verify.add_argument("--all", action="store_true")
    p_verify.add_argument("--conflicts", action="store_true")
    p_verify.add_argument("--gradients", action="store_true")
    p_verify.add_argument("--igm", action="store_true")
    p_verify.add_argument("--returns", action="store_true")
    p_verify.add_argument("--curriculum", action="store_true")
    p_verify.add_argument("--oracle", action="store_true")
    p_verify.add_argument("--maps", action="store_true")
    p_verify.add_argument("--steps", type=int, default=10_000,
                          help="steps for the conflict audit")
    p_verify.add_argument("--trials", type=int, default=1000,
                          help="trials for the IGM suite")
    p_verify.add_argument("--seeds", type=int, default=100,
                          help="seeds for the gradient suite")
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.set_defaults(func=cmd_verify)

    p_map = sub.add_parser("map", help="map tooling")
    map_sub = p_map.add_subparsers(dest="map_command", required=True)
    p_gen = map_sub.add_parser("generate", help="write a MovingAI-format map")
    p_gen.add_argument("--size", type=int, required=True)
    p_gen.add_argument("--density", type=float, required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", type=Path, help="output file (default stdout)")
    p_gen.set_defaults(func=cmd_map_generate)
    p_parse = map_sub.add_parser("parse", help="validate a MovingAI-format file")
    p_parse.add_argument("path", type=Path)
    p_parse.set_defaults(func=cmd_map_parse)
    p_inspect = map_sub.add_parser("inspect", help="print map statistics")
    p_inspect.add_argument("path", type=Path)
    p_inspect.set_defaults(func=cmd_map_inspect)
    return parser


OVERRIDE_KEYS = (
    "epochs", "episodes_per_epoch", "num_agents", "horizon", "seed",
    "learning_rate", "critic", "threshold", "deviation", "entropy_coef",
    "map_sizes", "densities", "curriculum", "workers",
)


def cmd_train(args) -> int:
    suites = []
    if args.config is not None:
        try:
            config, suites = config_from_text(args.config.read_text())
        except (OSError, ValueError) as exc:
            _err(f"error: {exc}")
            return 2
    else:
        config = TrainConfig()
    overrides = {
        key: getattr(args, key)
        for key in OVERRIDE_KEYS
        if getattr(args, key, None) is not None
    }
    if "workers" not in overrides and config.workers == 1 and args.workers is None:
        overrides["workers"] = max(1, os.cpu_count() or 1)
    try:
        config = replace(config, **overrides)
    except ValueError as exc:
        _err(f"error: {exc}")
        return 2
    try:
        suites = suites + [SuiteSpec.parse(s) for s in args.suite]
    except ValueError as exc:
        _err(f"error: {exc}")
        return 2
    out = args.out
    if out is None:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        out = _run_root() / f"{config.critic}-seed{config.seed}-{stamp}"
    _echo_config(config, suites)
    try:
        run_dir = run_training(
            config,
            out,
            eval_suites=suites,
            eval_every=args.eval_every,
            checkpoint_every=args.checkpoint_every,
            resume=args.resume,
            log=_err,
        )
    except (OSError, ValueError, RuntimeError) as exc:
        _err(f"error: {exc}")
        return 1
    print(run_dir)
    return 0


def cmd_eval(args) -> int:
    actor_path = args.checkpoint / "actor.net"
    if not actor_path.exists():
        _err(f"error: no checkpoint at {args.checkpoint} (missing actor.net)")
        return 2
    try:
        actor = load_net(actor_path)
    except (OSError, ValueError) as exc:
        _err(f"error: could not load {actor_path}: {exc}")
        return 2
    if actor.layer_sizes[0] != OBS_SIZE:
        _err(
            f"error: checkpoint expects input size {actor.layer_sizes[0]}, "
            f"but observations have size {OBS_SIZE}"
        )
        return 2
    try:
        suites = [SuiteSpec.parse(s) for s in args.suite] or [SuiteSpec(10, 0.0, 4)]
    except ValueError as exc:
        _err(f"error: {exc}")
        return 2
    _err(
        "eval: checkpoint=%s greedy=%s seed=%d suites=%s"
        % (args.checkpoint, not args.sample, args.seed,
           ";".join(s.describe() for s in suites))
    )
    report = evaluate(
        ActorPolicy(actor), suites, greedy=not args.sample,
        seed=args.seed, horizon=args.horizon,
    )
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(report.to_csv())
        _err(f"wrote {args.out}")
    print(report.table())
    print(f"mean completion {report.mean_completion:.4f}")
    return 0


def cmd_verify(args) -> int:
    selected = [
        name for name in checksmod.CHECKS
        if args.all or getattr(args, name, False)
    ]
    if not selected:
        _err("error: nothing selected; pass --all or any of "
             + " ".join(f"--{n}" for n in checksmod.CHECKS))
        return 2
    _err(f"verify: running {', '.join(selected)} (seed {args.seed})")
    failed = 0
    for name in selected:
        kwargs = {"seed": args.seed}
        if name == "conflicts":
            kwargs["total_steps"] = args.steps
        elif name == "igm":
            kwargs["trials"] = args.trials
        elif name == "gradients":
            kwargs["seeds"] = args.seeds
        result = checksmod.CHECKS[name](**kwargs)
        print(result.line())
        if not result.passed:
            failed += 1
    if failed:
        _err(f"verify: {failed} of {len(selected)} suites failed")
        return 1
    return 0


def cmd_map_generate(args) -> int:
    try:
        grid = generate_random_map(MapSpec(args.size, args.density, args.seed))
    except ValueError as exc:
        _err(f"error: {exc}")
        return 2
    text = serialize_movingai(grid)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text)
        _err(f"wrote {args.out} ({grid.num_obstacles} obstacles)")
    return 0


def _load_map(path: Path):
    try:
        return parse_movingai(path.read_text())
    except OSError as exc:
        _err(f"error: {exc}")
        return None
    except MapFormatError as exc:
        _err(f"error: {path}: {exc}")
        return None


def cmd_map_parse(args) -> int:
    grid = _load_map(args.path)
    if grid is None:
        return 2
    print(f"{args.path}: {grid.width}x{grid.height}, "
          f"{grid.num_obstacles} obstacles, valid")
    return 0


def cmd_map_inspect(args) -> int:
    grid = _load_map(args.path)
    if grid is None:
        return 2
    density = grid.num_obstacles / grid.num_cells
    print(f"size: {grid.width}x{grid.height}")
    print(f"obstacles: {grid.num_obstacles} (density {density:.4f})")
    print(f"free cells: {grid.num_free}")
    print(f"connected components: {component_count(grid)}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
