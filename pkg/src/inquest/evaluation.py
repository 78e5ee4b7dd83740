"""Measurement suite: guessing success by decode mode and eval split,
dialogue-quality metrics, question-strategy analysis, ablation comparisons,
and per-round belief traces.

Eval splits: "new_object" reuses training scenes with a fresh target;
"new_game" uses scene seeds disjoint from every training seed.
"""

from __future__ import annotations

import hashlib
import json
import math
import statistics
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import AblationConfig, AppConfig
from .env import Environment, SceneSpec
from .guesser import GuesserParams
from .model import QuestionerParams, new_dialogue_state, play_round
from .training import (
    GameRecord,
    eval_scene_seeds,
    repeated_fraction,
    rollout_batch,
    rollout_single,
    train_scene_seeds,
)

SPLITS = ("new_object", "new_game")
MODES = ("sampling", "greedy", "beam")


@dataclass
class EvalReport:
    success: dict  # mode -> split -> {"rate", "half_width", "n_games"}
    repeated_question_rate: float
    lexical_diversity: float
    strategy_adherence: float
    config_fingerprint: str
    belief_traces: list | None = None

    def to_json(self) -> str:
        payload = asdict(self)
        return json.dumps(payload, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))


def config_fingerprint(cfg: AppConfig, run_seed: int, extra: dict | None = None) -> str:
    payload = {"config": asdict(cfg), "run_seed": run_seed, "extra": extra or {}}
    digest = hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode("utf-8")
    ).hexdigest()
    return digest[:16]


# ----------------------------------------------------------------------
# splits and rollout collection
# ----------------------------------------------------------------------


def split_scenes(
    env: Environment, split: str, n_games: int, run_seed: int, train_pool: int
) -> list[tuple[SceneSpec, np.ndarray]]:
    if n_games < 1:
        raise ValueError("n_games must be positive")
    if split == "new_game":
        seeds = eval_scene_seeds(run_seed, n_games)
        train_seeds = train_scene_seeds(run_seed, train_pool)
        assert set(seeds).isdisjoint(train_seeds), "eval seeds overlap training seeds"
        return [env.generate_scene(s) for s in seeds]
    if split == "new_object":
        if n_games > train_pool:
            raise ValueError(
                f"new_object split reuses training scenes; {n_games} > pool {train_pool}"
            )
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(run_seed, 37)))
        out = []
        for s in train_scene_seeds(run_seed, n_games):
            scene, features = env.generate_scene(s)
            out.append((env.retarget(scene, rng), features))
        return out
    raise ValueError(f"unknown split {split!r}; expected one of {SPLITS}")


def collect_games(
    params: QuestionerParams,
    guesser: GuesserParams,
    env: Environment,
    cfg: AppConfig,
    split: str,
    mode: str,
    n_games: int,
    run_seed: int,
    batch: int = 64,
) -> list[GameRecord]:
    """Play eval rollouts; deterministic for a given (config, seed, mode)."""
    scene_feats = split_scenes(env, split, n_games, run_seed, cfg.train.sl_games)
    records: list[GameRecord] = []
    if mode == "beam":
        for scene, _ in scene_feats:
            records.append(
                rollout_single(params, guesser, env, scene, cfg.train, mode="beam")
            )
        return records
    decode_mode = {"sampling": "sample", "greedy": "greedy"}.get(mode)
    if decode_mode is None:
        raise ValueError(f"unknown decode mode {mode!r}; expected one of {MODES}")
    rng = (
        np.random.default_rng(np.random.SeedSequence(entropy=(run_seed, 41)))
        if decode_mode == "sample"
        else None
    )
    for start in range(0, len(scene_feats), batch):
        chunk = scene_feats[start : start + batch]
        recs, _ = rollout_batch(
            params,
            guesser,
            env,
            [s for s, _ in chunk],
            [f for _, f in chunk],
            cfg.train,
            decode_mode,
            rng,
        )
        records.extend(recs)
    return records


def success_rate(records: Sequence[GameRecord]) -> dict:
    n = len(records)
    if n == 0:
        raise ValueError("cannot compute a success rate over zero games")
    rate = sum(r.reward for r in records) / n
    half_width = 1.96 * math.sqrt(rate * (1.0 - rate) / n)
    return {"rate": rate, "half_width": half_width, "n_games": n}


def eval_success(
    params: QuestionerParams,
    guesser: GuesserParams,
    env: Environment,
    cfg: AppConfig,
    split: str,
    mode: str,
    n_games: int,
    run_seed: int,
) -> dict:
    records = collect_games(params, guesser, env, cfg, split, mode, n_games, run_seed)
    return success_rate(records)


def chance_rate(scenes: Sequence[SceneSpec]) -> float:
    """Expected success of a uniform guess: mean of 1/object-count."""
    return float(np.mean([1.0 / s.n_real for s in scenes]))


# ----------------------------------------------------------------------
# dialogue-quality metrics
# ----------------------------------------------------------------------


def repeated_question_rate(records: Sequence[GameRecord]) -> float:
    """Fraction of games with at least one exact duplicate token sequence."""
    return repeated_fraction(records)


def lexical_diversity(records: Sequence[GameRecord]) -> float:
    """Unique word tokens over total word tokens across all questions."""
    if not records:
        raise ValueError("lexical diversity of an empty game set is undefined")
    seen: set[int] = set()
    total = 0
    for rec in records:
        for rnd in rec.rounds:
            seen.update(rnd.question_tokens)
            total += len(rnd.question_tokens)
    if total == 0:
        raise ValueError("no tokens emitted in any game")
    return len(seen) / total


def game_adheres_to_strategy(env: Environment, rec: GameRecord) -> bool:
    """Entity questions until the first yes, attribute questions after."""
    if not rec.rounds:
        return False
    in_entity_phase = True
    for rnd in rec.rounds:
        label = env.question_label(rnd.question_tokens)
        if in_entity_phase:
            if label != "entity":
                return False
            if rnd.answer == "yes":
                in_entity_phase = False
        else:
            if label != "attribute":
                return False
    return True


def strategy_adherence(env: Environment, records: Sequence[GameRecord]) -> float:
    if not records:
        raise ValueError("strategy adherence of an empty game set is undefined")
    return sum(game_adheres_to_strategy(env, r) for r in records) / len(records)


# ----------------------------------------------------------------------
# belief traces
# ----------------------------------------------------------------------


def belief_trace(
    params: QuestionerParams,
    env: Environment,
    scene: SceneSpec,
    max_questions: int,
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
    max_words: int = 12,
) -> dict:
    """Per-round (belief, question, answer) log for one game."""
    features = env.regenerate_features(scene)
    state = new_dialogue_state(params, features, scene.n_real)
    rounds = [
        {
            "round": 0,
            "belief": state.belief.pi.tolist(),
            "question": None,
            "question_tokens": None,
            "answer": None,
        }
    ]
    for j in range(max_questions):
        round_rec, state = play_round(
            params,
            state,
            lambda toks: env.oracle_answer(scene, toks),
            mode=mode,
            max_words=max_words,
            rng=rng,
        )
        rounds.append(
            {
                "round": j + 1,
                "belief": state.belief.pi.tolist(),
                "question": env.vocab.text(round_rec.question_tokens),
                "question_tokens": list(round_rec.question_tokens),
                "answer": round_rec.answer,
            }
        )
    return {
        "scene": scene.to_dict(env),
        "n_real": scene.n_real,
        "rounds": rounds,
    }


# ----------------------------------------------------------------------
# top-level report
# ----------------------------------------------------------------------


def build_report(
    params: QuestionerParams,
    guesser: GuesserParams,
    env: Environment,
    cfg: AppConfig,
    run_seed: int,
    n_games: int = 500,
    beam_games: int = 100,
    beam_width: int = 20,
    modes: Sequence[str] = ("sampling", "greedy"),
    n_traces: int = 0,
) -> EvalReport:
    success: dict = {}
    greedy_new_game: list[GameRecord] = []
    for mode in modes:
        success[mode] = {}
        for split in SPLITS:
            count = beam_games if mode == "beam" else n_games
            records = collect_games(
                params, guesser, env, cfg, split, mode, count, run_seed
            )
            success[mode][split] = success_rate(records)
            if mode == "greedy" and split == "new_game":
                greedy_new_game = records
    if not greedy_new_game:
        greedy_new_game = collect_games(
            params, guesser, env, cfg, "new_game", "greedy", n_games, run_seed
        )
    traces = None
    if n_traces:
        traces = [
            belief_trace(
                params, env, scene, cfg.train.max_questions, mode="greedy"
            )
            for scene, _ in split_scenes(env, "new_game", n_traces, run_seed, cfg.train.sl_games)
        ]
    return EvalReport(
        success=success,
        repeated_question_rate=repeated_question_rate(greedy_new_game),
        lexical_diversity=lexical_diversity(greedy_new_game),
        strategy_adherence=strategy_adherence(env, greedy_new_game),
        config_fingerprint=config_fingerprint(cfg, run_seed, {"n_games": n_games}),
        belief_traces=traces,
    )


# ----------------------------------------------------------------------
# ablations
# ----------------------------------------------------------------------

ABLATION_VARIANTS = (
    ("full", AblationConfig()),
    ("-state-tracking", AblationConfig(disable_state_tracking=True)),
    ("-difference-attention", AblationConfig(disable_difference_attention=True)),
)


@dataclass
class AblationResult:
    variant: str
    seed: int
    success: dict  # mode -> split -> rate
    repeated_question_rate: float
    lexical_diversity: float


@dataclass
class AblationTable:
    results: list[AblationResult]
    n_seeds: int
    eval_games: int

    def rates(self, variant: str, mode: str, split: str) -> list[float]:
        return [
            r.success[mode][split]
            for r in self.results
            if r.variant == variant
        ]

    def mean(self, variant: str, mode: str, split: str) -> float:
        return statistics.fmean(self.rates(variant, mode, split))

    def stdev(self, variant: str, mode: str, split: str) -> float:
        vals = self.rates(variant, mode, split)
        return statistics.stdev(vals) if len(vals) > 1 else 0.0

    def repeated_rates(self, variant: str) -> list[float]:
        return [r.repeated_question_rate for r in self.results if r.variant == variant]

    def to_markdown(self) -> str:
        lines = [
            f"Success rate over {self.n_seeds} seeds, {self.eval_games} games each "
            "(mean +/- stdev, %).",
            "",
        ]
        for split, title in (("new_object", "New Object"), ("new_game", "New Game")):
            lines.append(f"### {title}")
            lines.append("")
            lines.append("| # | Model | Sampling | Greedy |")
            lines.append("|---|-------|----------|--------|")
            for idx, (variant, _) in enumerate(ABLATION_VARIANTS, start=1):
                samp = 100.0 * self.mean(variant, "sampling", split)
                samp_sd = 100.0 * self.stdev(variant, "sampling", split)
                greedy = 100.0 * self.mean(variant, "greedy", split)
                greedy_sd = 100.0 * self.stdev(variant, "greedy", split)
                lines.append(
                    f"| {idx} | {variant} | {samp:.2f} +/- {samp_sd:.2f} "
                    f"| {greedy:.2f} +/- {greedy_sd:.2f} |"
                )
            lines.append("")
        lines.append("### Repeated-question rate (greedy, New Game, %)")
        lines.append("")
        lines.append("| Model | Rate |")
        lines.append("|-------|------|")
        for variant, _ in ABLATION_VARIANTS:
            mean_rate = 100.0 * statistics.fmean(self.repeated_rates(variant))
            lines.append(f"| {variant} | {mean_rate:.2f} |")
        lines.append("")
        return "\n".join(lines)


def _ablation_run(args: tuple) -> dict:
    """Train and evaluate one (seed, variant); module-level for pickling."""
    cfg, seed, variant, ablation, eval_games = args
    from .model import QuestionerParams
    from .training import build_sl_corpus, rl_train, sl_train, train_guesser

    env = Environment(cfg.env)
    # guesser and corpus depend only on (config, seed), so every variant of
    # a seed trains against the identical opponent and supervision
    guesser, _ = train_guesser(env, cfg.train, seed)
    corpus = build_sl_corpus(env, cfg.train.sl_games, cfg.train.max_questions, seed)
    variant_cfg = replace(cfg, model=replace(cfg.model, ablation=ablation))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 11)))
    questioner = QuestionerParams.create(
        variant_cfg.model,
        slots=cfg.env.slots,
        feature_dim=cfg.env.feature_dim,
        vocab=env.vocab,
        rng=rng,
    )
    sl_train(questioner, corpus, cfg.train, rng)
    rl_train(questioner, guesser, env, cfg.train, seed)
    success: dict = {}
    repeated = None
    diversity = None
    for mode in ("sampling", "greedy"):
        success[mode] = {}
        for split in SPLITS:
            records = collect_games(
                questioner, guesser, env, variant_cfg, split, mode, eval_games, seed
            )
            success[mode][split] = success_rate(records)["rate"]
            if mode == "greedy" and split == "new_game":
                repeated = repeated_question_rate(records)
                diversity = lexical_diversity(records)
    return {
        "variant": variant,
        "seed": seed,
        "success": success,
        "repeated_question_rate": repeated,
        "lexical_diversity": diversity,
    }


def ablation_suite(
    cfg: AppConfig,
    n_seeds: int,
    eval_games: int = 200,
    out_dir: str | Path | None = None,
    workers: int = 1,
) -> AblationTable:
    """Train and evaluate the full model and both ablations on shared seeds.

    Every (seed, variant) run is independent and deterministic, so they may
    execute in parallel worker processes without changing the table.
    """
    jobs = [
        (cfg, seed, variant, ablation, eval_games)
        for seed in range(n_seeds)
        for variant, ablation in ABLATION_VARIANTS
    ]
    if workers > 1:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(workers) as pool:
            raw = pool.map(_ablation_run, jobs)
    else:
        raw = [_ablation_run(job) for job in jobs]
    results = [AblationResult(**r) for r in raw]
    table = AblationTable(results=results, n_seeds=n_seeds, eval_games=eval_games)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.md").write_text(table.to_markdown(), encoding="utf-8")
        (out / "ablation.json").write_text(
            json.dumps([asdict(r) for r in results], sort_keys=True, indent=2),
            encoding="utf-8",
        )
    return table
