"""Command-line entry points: train, eval, export-heatmaps."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import TrainConfig, load_config
from .envs import make_env


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prefhrl")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run a training loop")
    train.add_argument("--env", choices=("four-rooms", "point-push"))
    train.add_argument("--labeler", choices=("oracle", "human", "fallback"))
    train.add_argument("--config", type=Path, help="flat key = value config file")
    train.add_argument("--seed", type=int)
    train.add_argument("--episodes", type=int)
    train.add_argument("--out", dest="out_dir")
    train.add_argument("--no-hf", action="store_true", help="freeze the reward model")
    train.add_argument("--no-ddc", action="store_true", help="disable the distance constraint")
    train.add_argument("--no-eed", action="store_true",
                       help="collapse exploration and base policies")
    train.add_argument("--serve-port", type=int,
                       help="serve the annotation API/UI on this port")
    train.add_argument("--resume", type=Path, help="checkpoint to resume from")

    evaluate = sub.add_parser("eval", help="evaluate a checkpoint greedily")
    evaluate.add_argument("--checkpoint", type=Path, required=True)
    evaluate.add_argument("--episodes", type=int, default=50)
    evaluate.add_argument("--seed", type=int, default=12345)

    heatmaps = sub.add_parser("export-heatmaps", help="dump reward/distance grids to CSV")
    heatmaps.add_argument("--checkpoint", type=Path, required=True)
    heatmaps.add_argument("--resolution", type=int, default=41)
    heatmaps.add_argument("--out", dest="out_dir", default="heatmaps")
    return parser


def _train_config(args) -> TrainConfig:
    overrides = {}
    for name in ("env", "labeler", "seed", "episodes", "out_dir", "serve_port"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    for flag in ("no_hf", "no_ddc", "no_eed"):
        if getattr(args, flag):
            overrides[flag] = True
    if args.config is not None:
        return load_config(args.config, overrides)
    cfg = TrainConfig(**overrides)
    return cfg.validate()


def cmd_train(args) -> int:
    from .trainer import run_training

    cfg = _train_config(args)
    bridge = None
    server = None
    if cfg.labeler in ("human", "fallback") or cfg.serve_port:
        from .service import AnnotationBridge
        from .service.app import serve_in_thread

        env = make_env(cfg.env)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        bridge = AnnotationBridge(
            spool_path=str(out / "annotation_spool.jsonl"),
            env_geometry=env.geometry(),
            env_kind=cfg.env,
        )
        if cfg.serve_port:
            server, _ = serve_in_thread(bridge, cfg.serve_port)
            print(f"annotation service on http://127.0.0.1:{cfg.serve_port}/ui/")

    trainer, metrics = run_training(cfg, bridge=bridge, resume_from=args.resume)
    first = metrics.first_full_success_episode
    print(f"trained {trainer.episode} episodes; "
          f"first 100% evaluation: {first if first is not None else 'never'}; "
          f"labels used: {trainer.labels_total}")
    print(f"artifacts in {cfg.out_dir}/ (metrics.csv, checkpoint_final.bin, summary.json)")
    if server is not None:
        server.should_exit = True
    return 0


def cmd_eval(args) -> int:
    from .trainer import evaluate_checkpoint

    rate = evaluate_checkpoint(args.checkpoint, episodes=args.episodes, seed=args.seed)
    print(f"success rate over {args.episodes} episodes: {rate:.3f}")
    return 0


def cmd_export_heatmaps(args) -> int:
    from .trainer import export_heatmaps, load_checkpoint

    trainer = load_checkpoint(args.checkpoint)
    export_heatmaps(trainer, args.resolution, args.out_dir)
    print(f"wrote heatmap CSVs to {args.out_dir}/")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "train": cmd_train,
        "eval": cmd_eval,
        "export-heatmaps": cmd_export_heatmaps,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
