"""Command-line entry point: gen-scenes, train, eval, replay."""
import argparse
import logging
import os
import sys
from pathlib import Path

from dotenv import load_dotenv
from pydantic import ValidationError

from .config import RunConfig, config_hash, dump_config, load_config
from .env import MechanicalSearchEnv, head_for
from .errors import ConfigurationError, IntegrityError, MechSearchError, TrainingDivergenceError
from .evaluation import read_records, replay_episode, run_ablation_suite, write_records, write_summary
from .generation import generate_scene
from .policy import save_checkpoint
from .ppo import train
from .shared import EXIT_INTEGRITY, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, LEARNED_METHODS, METHODS, SCENE_FAMILIES

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def configure_logging() -> None:
    level = os.getenv("MECHSEARCH_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML config, or a config.json written by an earlier run")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="dotted-path override, repeatable")
    common.add_argument("--seed", type=int, help="global seed (also the eval base seed)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--jobs", type=int, help="parallel episodes during evaluation")

    parser = ArgumentParser(prog="mechsearch", description="Priority-guided mechanical search: train, evaluate, replay")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    gen = sub.add_parser("gen-scenes", parents=[common], help="write seeded scene snapshots")
    gen.add_argument("--objects", type=int, nargs="+", help="object counts (default: eval.object_counts)")
    gen.add_argument("--scenes", type=int, default=10, help="scenes per object count")
    gen.add_argument("--family", choices=SCENE_FAMILIES)

    tr = sub.add_parser("train", parents=[common], help="train a policy with PPO")
    tr.add_argument("--method", choices=LEARNED_METHODS, default="xpg")

    ev = sub.add_parser("eval", parents=[common], help="evaluate methods over object counts")
    ev.add_argument("--checkpoint", action="append", default=[], metavar="[METHOD=]PATH", help="checkpoint per learned method; a bare path is for xpg")
    ev.add_argument("--methods", nargs="+", choices=METHODS)
    ev.add_argument("--objects", type=int, nargs="+")
    ev.add_argument("--scenes", type=int)
    ev.add_argument("--family", choices=SCENE_FAMILIES)

    rp = sub.add_parser("replay", parents=[common], help="re-simulate a recorded episode and dump its frames")
    rp.add_argument("episodes", type=Path, help="episodes.jsonl written by eval")
    rp.add_argument("--index", type=int, default=0)
    return parser


def resolve_config(args) -> tuple[RunConfig, Path]:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides += [f"seed={args.seed}", f"eval.base_seed={args.seed}"]
    if args.jobs is not None:
        overrides.append(f"eval.jobs={args.jobs}")
    config_path = args.config
    if config_path is None and args.command == "replay":
        recorded = args.episodes.parent / "config.json"
        config_path = recorded if recorded.exists() else None
    config = load_config(config_path, overrides)
    out = args.out or Path(os.getenv("MECHSEARCH_OUTPUT_DIR") or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return config, out


def cmd_gen_scenes(args, config: RunConfig, out: Path) -> int:
    family = args.family or config.scene.family
    scene_config = config.scene.model_copy(update={"family": family})
    counts = args.objects or config.eval.object_counts
    scene_dir = out / "scenes"
    scene_dir.mkdir(parents=True, exist_ok=True)
    for n in counts:
        for i in range(args.scenes):
            seed = config.seed + i
            scene = generate_scene(n, seed, scene_config)
            (scene_dir / f"{family}_{n:02d}obj_seed{seed}.json").write_text(scene.to_json())
    dump_config(config, out / "config.json")
    logger.info(f"✓ Wrote {len(counts) * args.scenes} scenes to {scene_dir}")
    return EXIT_OK


def cmd_train(args, config: RunConfig, out: Path) -> Path:
    method = args.method
    head = head_for(method)
    cfg_hash = config_hash(config)
    dump_config(config, out / "config.json")

    def env_factory():
        return MechanicalSearchEnv(config, method)

    checkpoint = out / f"checkpoint_{method}.json"
    try:
        result = train(env_factory, config.ppo, config.seed, config.policy, head)
    except TrainingDivergenceError as e:
        if e.last_good is not None:
            saved = save_checkpoint(out / f"checkpoint_{method}_last_good.json", e.last_good, None, method, cfg_hash, config.seed)
            logger.error(f"❌ Training diverged; last good parameters saved to {saved}")
        raise
    save_checkpoint(checkpoint, result.params, result.obs_normalizer, method, cfg_hash, config.seed)
    result.log.to_csv(out / f"training_log_{method}.csv", config_hash=cfg_hash, seed=config.seed)
    logger.info(f"✓ Training log written to {out / f'training_log_{method}.csv'}")
    return checkpoint


def parse_checkpoints(values: list[str]) -> dict[str, Path]:
    checkpoints = {}
    for value in values:
        method, sep, path = value.partition("=")
        if not sep:
            method, path = "xpg", value
        if method not in LEARNED_METHODS:
            raise UsageError(f"--checkpoint: {method!r} is not a learned method ({', '.join(LEARNED_METHODS)})")
        checkpoints[method] = Path(path)
    return checkpoints


def cmd_eval(args, config: RunConfig, out: Path) -> list[Path]:
    checkpoints = parse_checkpoints(args.checkpoint)
    methods = args.methods or config.eval.methods
    table, records = run_ablation_suite(
        config,
        checkpoints,
        methods=methods,
        object_counts=args.objects,
        n_scenes=args.scenes,
        family=args.family,
    )
    paths = [out / "metrics.csv", out / "table.csv", out / "episodes.jsonl", out / "summary.json"]
    provenance = {"config_hash": config_hash(config), "base_seed": config.eval.base_seed}
    table.to_csv(paths[0], **provenance)
    table.to_wide_csv(paths[1], **provenance)
    write_records(records, paths[2])
    write_summary(paths[3], table, config, {"methods": methods, "checkpoints": {m: str(p) for m, p in checkpoints.items()}})
    dump_config(config, out / "config.json")
    logger.info("=" * 80)
    for line in table.to_wide_frame().to_string(index=False).splitlines():
        logger.info(line)
    logger.info("=" * 80)
    logger.info(f"✓ Metrics written to {out}")
    return paths


def cmd_replay(args, config: RunConfig, out: Path) -> int:
    try:
        records = read_records(args.episodes)
    except ValidationError as e:
        raise IntegrityError(f"{args.episodes} holds an invalid episode record: {e}") from e
    if not 0 <= args.index < len(records):
        raise UsageError(f"--index {args.index} out of range; {args.episodes} has {len(records)} episodes")
    report = replay_episode(records[args.index], config, out / f"replay_{args.index:04d}")
    logger.info(f"✓ {len(report.images)} frames written to {out / f'replay_{args.index:04d}'}")
    return EXIT_OK


COMMANDS = {"gen-scenes": cmd_gen_scenes, "train": cmd_train, "eval": cmd_eval, "replay": cmd_replay}


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logger.info("=" * 80)
    logger.info(f"🎯 MECHSEARCH {args.command.upper()}")
    logger.info("=" * 80)
    try:
        config, out = resolve_config(args)
        logger.info(f"Config hash: {config_hash(config)}  seed: {config.seed}  out: {out}")
        COMMANDS[args.command](args, config, out)
    except (UsageError, ConfigurationError) as e:
        logger.error(f"❌ {e}")
        return EXIT_USAGE
    except IntegrityError as e:
        logger.error(f"❌ Integrity check failed: {e}")
        return EXIT_INTEGRITY
    except MechSearchError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"❌ Unexpected error: {e}")
        logger.exception(e)
        return EXIT_RUNTIME
    return EXIT_OK
