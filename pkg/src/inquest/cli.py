"""Command-line entry points.

Exit codes: 0 success, 2 configuration error (also argparse's own code for
bad flags), 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

# training is dominated by small-matrix GEMMs that run fastest (and
# bit-reproducibly) on a single BLAS thread
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np

from .config import AppConfig, ConfigError, load_config
from .env import Environment, write_scene_corpus
from .checkpoint import CheckpointError
from .evaluation import (
    ablation_suite,
    belief_trace,
    build_report,
)
from .guesser import GuesserParams
from .model import QuestionerParams
from .training import (
    build_sl_corpus,
    rl_train,
    run_pipeline,
    sl_train,
    train_guesser,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inquest",
        description="Belief-tracking question-asking agent for object guessing games.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, default=None, help="TOML config file")
        p.add_argument("--seed", type=int, default=None, help="run seed")

    p = sub.add_parser("train-guesser", help="train the guesser on scripted dialogues")
    common(p)
    p.add_argument("--games", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--out", type=Path, required=True, help="checkpoint file to write")

    p = sub.add_parser("train-sl", help="supervised pre-training of the questioner")
    common(p)
    p.add_argument("--games", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--max-questions", type=int, default=None)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("train-rl", help="policy-gradient fine-tuning")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True, help="SL checkpoint")
    p.add_argument("--guesser", type=Path, required=True, help="guesser checkpoint")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--games", type=int, default=None)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("pipeline", help="guesser + SL + RL in one run")
    common(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--skip-rl", action="store_true")

    p = sub.add_parser("eval", help="evaluation report for a checkpoint")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--guesser", type=Path, required=True)
    p.add_argument("--games", type=int, default=500)
    p.add_argument(
        "--modes",
        type=str,
        default="sampling,greedy",
        help="comma-separated subset of sampling,greedy,beam",
    )
    p.add_argument("--beam-games", type=int, default=100)
    p.add_argument("--traces", type=int, default=0, help="belief traces to attach")
    p.add_argument("--out", type=Path, default=None, help="write the report JSON here")

    p = sub.add_parser("ablate", help="train and compare ablated variants")
    common(p)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--eval-games", type=int, default=200)
    p.add_argument("--workers", type=int, default=1, help="parallel training processes")
    p.add_argument("--out", type=Path, default=None, help="output directory")

    p = sub.add_parser("play", help="terminal human-as-oracle game")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--guesser", type=Path, required=True)
    p.add_argument("--scene-seed", type=int, default=None)
    p.add_argument("--decode", choices=["greedy", "sample"], default="greedy")

    p = sub.add_parser("trace", help="belief trace for one scene as JSON")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--scene-seed", type=int, required=True)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("serve", help="run the HTTP service")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--guesser", type=Path, required=True)
    p.add_argument("--host", type=str, default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--journal", type=Path, default=None)
    p.add_argument("--ui", type=Path, default=None, help="static UI directory")

    return parser


def _config_from_args(args: argparse.Namespace) -> AppConfig:
    overrides: dict = {"train": {}}
    if args.seed is not None:
        overrides["train"]["seed"] = args.seed
    mapping = {
        "train-guesser": {"games": "guesser_games", "epochs": "guesser_epochs"},
        "train-sl": {
            "games": "sl_games",
            "epochs": "sl_epochs",
            "max_questions": "max_questions",
        },
        "train-rl": {"games": "rl_games", "epochs": "rl_epochs"},
    }
    for flag, key in mapping.get(args.command, {}).items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides["train"][key] = value
    return load_config(args.config, overrides)


def _load_questioner(path: Path) -> QuestionerParams:
    if not path.exists():
        raise ConfigError(f"checkpoint not found: {path}")
    return QuestionerParams.load(path)


def _load_guesser(path: Path) -> GuesserParams:
    if not path.exists():
        raise ConfigError(f"guesser checkpoint not found: {path}")
    return GuesserParams.load(path)


def _check_vocab(env: Environment, *parts) -> None:
    for part in parts:
        if part.vocab.tokens != env.vocab.tokens:
            raise ConfigError(
                "checkpoint vocabulary does not match the configured environment"
            )


def cmd_train_guesser(args) -> int:
    cfg = _config_from_args(args)
    env = Environment(cfg.env)
    params, report = train_guesser(env, cfg.train, cfg.train.seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    params.save(args.out)
    print(f"guesser saved to {args.out}")
    print(
        f"train accuracy {report['train_accuracy']:.3f}, "
        f"holdout accuracy {report['holdout_accuracy']:.3f}"
    )
    return EXIT_OK


def cmd_train_sl(args) -> int:
    cfg = _config_from_args(args)
    env = Environment(cfg.env)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    corpus = build_sl_corpus(env, cfg.train.sl_games, cfg.train.max_questions, cfg.train.seed)
    write_scene_corpus(out / "scenes.jsonl", [g.scene for g in corpus], env)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(cfg.train.seed, 11)))
    params = QuestionerParams.create(
        cfg.model,
        slots=cfg.env.slots,
        feature_dim=cfg.env.feature_dim,
        vocab=env.vocab,
        rng=rng,
    )
    history = sl_train(params, corpus, cfg.train, rng, log_path=out / "sl-log.csv")
    params.save(out / "sl.ckpt")
    print(f"SL checkpoint saved to {out / 'sl.ckpt'}")
    print(f"final epoch loss {history[-1]['loss']:.4f}")
    return EXIT_OK


def cmd_train_rl(args) -> int:
    cfg = _config_from_args(args)
    env = Environment(cfg.env)
    params = _load_questioner(args.checkpoint)
    guesser = _load_guesser(args.guesser)
    _check_vocab(env, params, guesser)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    history = rl_train(
        params,
        guesser,
        env,
        cfg.train,
        cfg.train.seed,
        log_path=out / "rl-log.csv",
        checkpoint_dir=out,
    )
    params.save(out / "rl.ckpt")
    print(f"RL checkpoint saved to {out / 'rl.ckpt'}")
    print(f"final epoch success rate {history[-1]['success_rate']:.3f}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _config_from_args(args)
    pipeline = run_pipeline(cfg, cfg.train.seed, out_dir=args.out, skip_rl=args.skip_rl)
    print(f"artifacts in {args.out}")
    if pipeline.rl_history:
        print(f"final RL success rate {pipeline.rl_history[-1]['success_rate']:.3f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.games < 1:
        raise ConfigError("--games must be a positive number of games")
    cfg = _config_from_args(args)
    env = Environment(cfg.env)
    params = _load_questioner(args.checkpoint)
    guesser = _load_guesser(args.guesser)
    _check_vocab(env, params, guesser)
    modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    for mode in modes:
        if mode not in ("sampling", "greedy", "beam"):
            raise ConfigError(f"unknown eval mode {mode!r}")
    report = build_report(
        params,
        guesser,
        env,
        cfg,
        run_seed=cfg.train.seed,
        n_games=args.games,
        beam_games=args.beam_games,
        modes=modes,
        n_traces=args.traces,
    )
    text = report.to_json()
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
        print(f"report written to {args.out}")
    else:
        print(text)
    return EXIT_OK


def cmd_ablate(args) -> int:
    if args.seeds < 1:
        raise ConfigError("--seeds must be positive")
    cfg = _config_from_args(args)
    table = ablation_suite(
        cfg, args.seeds, eval_games=args.eval_games, out_dir=args.out,
        workers=args.workers,
    )
    print(table.to_markdown())
    return EXIT_OK


def cmd_trace(args) -> int:
    cfg = _config_from_args(args)
    env = Environment(cfg.env)
    params = _load_questioner(args.checkpoint)
    _check_vocab(env, params)
    scene, _ = env.generate_scene(args.scene_seed)
    trace = belief_trace(params, env, scene, cfg.train.max_questions)
    text = json.dumps(trace, sort_keys=True, indent=2)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
        print(f"trace written to {args.out}")
    else:
        print(text)
    return EXIT_OK


def cmd_play(args) -> int:
    from .model import new_dialogue_state, play_round

    cfg = _config_from_args(args)
    env = Environment(cfg.env)
    params = _load_questioner(args.checkpoint)
    guesser = _load_guesser(args.guesser)
    _check_vocab(env, params, guesser)
    scene_seed = args.scene_seed if args.scene_seed is not None else cfg.train.seed
    scene, features = env.generate_scene(scene_seed)
    print(f"Scene {scene_seed}: pick one object and keep it secret.")
    for i, obj in enumerate(scene.objects):
        print(
            f"  [{i}] {obj.size} {env.color_words[obj.color]} "
            f"{env.category_words[obj.category]} in the {obj.quadrant} quadrant"
        )
    state = new_dialogue_state(params, features, scene.n_real)
    rng = np.random.default_rng(cfg.train.seed)
    rounds = []

    def ask_human(tokens) -> str:
        print(f"Q{len(rounds) + 1}: {env.vocab.text(tokens)}")
        while True:
            reply = input("  your answer [yes/no/na]: ").strip().lower()
            if reply in ("yes", "no", "na"):
                return reply
            if reply in ("y",):
                return "yes"
            if reply in ("n",):
                return "no"
            print("  please answer yes, no or na")

    for _ in range(cfg.train.max_questions):
        round_rec, state = play_round(
            params, state, ask_human, mode=args.decode,
            max_words=cfg.train.max_words, rng=rng,
        )
        rounds.append(round_rec)
        print(f"  belief: {np.round(state.belief.pi[: scene.n_real], 3).tolist()}")
    from .guesser import guesser_score

    dist = guesser_score(
        guesser, features, scene.n_real, [(r.question_tokens, r.answer) for r in rounds]
    )
    guess = int(dist.argmax())
    obj = scene.objects[guess]
    print(
        f"My guess: object [{guess}] — the {obj.size} {env.color_words[obj.color]} "
        f"{env.category_words[obj.category]} in the {obj.quadrant} quadrant."
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = _config_from_args(args)
    env = Environment(cfg.env)
    params = _load_questioner(args.checkpoint)
    guesser = _load_guesser(args.guesser)
    _check_vocab(env, params, guesser)
    if args.ui is not None and not args.ui.is_dir():
        raise ConfigError(f"--ui directory not found: {args.ui}")
    app = create_app(
        params, guesser, env, cfg, journal_path=args.journal, ui_dir=args.ui
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


COMMANDS = {
    "train-guesser": cmd_train_guesser,
    "train-sl": cmd_train_sl,
    "train-rl": cmd_train_rl,
    "pipeline": cmd_pipeline,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "trace": cmd_trace,
    "play": cmd_play,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, CheckpointError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
