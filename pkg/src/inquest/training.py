"""Training: scripted supervision corpus, guesser training, supervised
pre-training of the questioner, self-play rollouts, and policy-gradient
fine-tuning with a zero-one game reward.

Reward plumbing: a game that ends in a correct guess earns reward 1, else
0. The reward is spread uniformly over the game's emitted tokens
(r_a = r / T), and a scalar running-average baseline is subtracted on the
same per-token scale, so the per-action advantage is (r - baseline) / T and
a batch whose rewards all equal the baseline contributes a zero gradient.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .config import AppConfig, TrainConfig
from .env import Environment, SceneSpec, scripted_dialogue
from .guesser import GuesserParams, guess_batch, object_logits_batch, encode_dialogue_batch
from .model import (
    BatchPending,
    DialogueRound,
    QuestionerParams,
    absorb_batch,
    begin_batch,
    propose_batch,
)
from .optim import Adam, Sgd, clip_global_norm, ensure_grads


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; aborting is better than training on NaNs."""


TRAIN_SEED_BLOCK = 1_000_000_000
EVAL_SEED_OFFSET = 500_000_000


def train_scene_seeds(run_seed: int, n: int) -> range:
    base = run_seed * TRAIN_SEED_BLOCK
    return range(base, base + n)


def eval_scene_seeds(run_seed: int, n: int) -> range:
    base = run_seed * TRAIN_SEED_BLOCK + EVAL_SEED_OFFSET
    return range(base, base + n)


# ----------------------------------------------------------------------
# scripted supervision corpus
# ----------------------------------------------------------------------


@dataclass
class GoldGame:
    scene: SceneSpec
    features: np.ndarray
    rounds: list[tuple[np.ndarray, str]]  # (question token ids, answer)
    guess_index: int


def build_sl_corpus(
    env: Environment, n_games: int, max_questions: int, run_seed: int
) -> list[GoldGame]:
    """Scripted-policy dialogues over deterministic scene seeds."""
    corpus = []
    for seed in train_scene_seeds(run_seed, n_games):
        scene, features = env.generate_scene(seed)
        rounds, guess = scripted_dialogue(env, scene, max_questions)
        corpus.append(GoldGame(scene=scene, features=features, rounds=rounds, guess_index=guess))
    return corpus


def build_guesser_corpus(
    env: Environment, cfg: TrainConfig, run_seed: int
) -> list[GoldGame]:
    """Scripted dialogues plus a noisy-script slice for guesser training.

    The noisy slice replays the same scenes with a detouring variant of the
    script (random template questions, duplicates allowed), so the guesser
    learns to decode answer content rather than the clean script's shape.
    """
    from .env import ScriptedQuestioner

    n_noisy = int(cfg.guesser_games * cfg.guesser_noisy_fraction)
    n_clean = cfg.guesser_games - n_noisy
    corpus = build_sl_corpus(env, n_clean, cfg.max_questions, run_seed)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(run_seed, 71)))
    templates = env.templates()
    for seed in train_scene_seeds(run_seed, n_noisy):
        scene, features = env.generate_scene(seed)
        script = ScriptedQuestioner(env, scene)
        rounds = []
        for _ in range(cfg.max_questions):
            if rng.random() < cfg.guesser_detour_p:
                template = templates[rng.integers(len(templates))]
                tokens = env.vocab.encode(template.words)
                answer = env.oracle_answer(scene, tokens)
            else:
                question = script.next_question()
                tokens = script.tokens_for(question)
                answer = env.oracle_answer(scene, tokens)
                script.observe(answer)
            rounds.append((tokens, answer))
        corpus.append(
            GoldGame(scene=scene, features=features, rounds=rounds, guess_index=script.guess())
        )
    return corpus


# ----------------------------------------------------------------------
# game records
# ----------------------------------------------------------------------


@dataclass
class GameRecord:
    """Full trajectory of one self-play game."""

    scene: SceneSpec
    rounds: list[DialogueRound]
    guess_index: int
    reward: float  # 1.0 iff guess_index == scene.target_index
    action_rewards: list[float]  # reward / token count, one per emitted token
    baseline: float
    decode_mode: str
    seed: int

    @property
    def token_count(self) -> int:
        return sum(len(r.question_tokens) for r in self.rounds)

    def questions(self) -> list[tuple[int, ...]]:
        return [tuple(r.question_tokens) for r in self.rounds]


# ----------------------------------------------------------------------
# batching helpers
# ----------------------------------------------------------------------


def _pad_gold_round(
    games: Sequence[GoldGame], r: int, pad_id: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    width = max(len(g.rounds[r][0]) for g in games)
    tokens = np.full((len(games), width), pad_id, dtype=np.int64)
    mask = np.zeros((len(games), width))
    answers = np.zeros(len(games), dtype=np.int64)
    for b, g in enumerate(games):
        ids, answer = g.rounds[r]
        tokens[b, : len(ids)] = ids
        mask[b, : len(ids)] = 1.0
        answers[b] = {"yes": 0, "no": 1, "na": 2}[answer]
    return tokens, mask, answers


def _batched(items: list, size: int):
    for start in range(0, len(items), size):
        yield items[start : start + size]


# ----------------------------------------------------------------------
# supervised pre-training
# ----------------------------------------------------------------------


def sl_train(
    params: QuestionerParams,
    corpus: list[GoldGame],
    cfg: TrainConfig,
    rng: np.random.Generator,
    log_path: str | Path | None = None,
) -> list[dict]:
    """Teacher-forced cross-entropy over whole dialogues.

    Belief updates run through the model's own matching network on the gold
    question/answer pairs, so the state-tracking path stays in the training
    graph.
    """
    if not corpus:
        raise ValueError("empty supervision corpus")
    optimizer = Adam(params.tensors(), lr=cfg.sl_lr)
    history = []
    writer = _TrainLog(log_path)
    n_rounds = len(corpus[0].rounds)
    for epoch in range(cfg.sl_epochs):
        order = rng.permutation(len(corpus))
        total_loss = 0.0
        for batch_idx in _batched(list(order), cfg.sl_batch):
            games = [corpus[i] for i in batch_idx]
            bsz = len(games)
            with Tape() as tape:
                state = begin_batch(
                    params,
                    [g.features for g in games],
                    [g.scene.n_real for g in games],
                )
                loss_terms = []
                for r in range(n_rounds):
                    tokens, mask, answers = _pad_gold_round(games, r, params.vocab.pad_id)
                    pending = propose_batch(
                        params,
                        state,
                        mode="teacher",
                        max_words=cfg.max_words,
                        gold_tokens=tokens,
                        gold_mask=mask,
                    )
                    loss_terms.append(ad.sum_all(ad.mul(pending.nll, Tensor(mask))))
                    state, _ = absorb_batch(params, state, pending, answers)
                loss = loss_terms[0]
                for term in loss_terms[1:]:
                    loss = ad.add(loss, term)
                loss = ad.mul(loss, 1.0 / bsz)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDiverged(f"SL loss became {value} at epoch {epoch}")
            tape.backward(loss)
            ensure_grads(params.tensors())
            clip_global_norm(params.tensors(), cfg.clip_norm)
            optimizer.step()
            total_loss += value * bsz
        epoch_loss = total_loss / len(corpus)
        history.append({"epoch": epoch, "loss": epoch_loss})
        writer.row(epoch=epoch, loss=epoch_loss)
    writer.close()
    return history


# ----------------------------------------------------------------------
# self-play rollouts
# ----------------------------------------------------------------------


def rollout_batch(
    params: QuestionerParams,
    guesser: GuesserParams,
    env: Environment,
    scenes: Sequence[SceneSpec],
    features: Sequence[np.ndarray],
    cfg: TrainConfig,
    mode: str,
    rng: np.random.Generator | None,
    baseline: float = 0.0,
) -> tuple[list[GameRecord], list[BatchPending]]:
    """Play a batch of games against the oracle and guesser.

    Inside an active tape this leaves the per-token losses connected to the
    graph (the returned pendings), which is what policy-gradient training
    consumes.
    """
    bsz = len(scenes)
    state = begin_batch(params, features, [s.n_real for s in scenes])
    pendings: list[BatchPending] = []
    game_rounds: list[list[DialogueRound]] = [[] for _ in range(bsz)]
    answer_rng = (
        np.random.default_rng(rng.integers(2**63)) if env.cfg.oracle_noise_p > 0 and rng else None
    )
    for _ in range(cfg.max_questions):
        pending = propose_batch(params, state, mode, cfg.max_words, rng)
        answers = np.zeros(bsz, dtype=np.int64)
        answer_words = []
        for b, scene in enumerate(scenes):
            length = int(pending.token_mask[b].sum())
            tokens = pending.tokens[b, :length]
            word = env.oracle_answer(scene, tokens, answer_rng)
            answer_words.append(word)
            answers[b] = {"yes": 0, "no": 1, "na": 2}[word]
        state, h_a = absorb_batch(params, state, pending, answers)
        for b in range(bsz):
            length = int(pending.token_mask[b].sum())
            game_rounds[b].append(
                DialogueRound(
                    question_tokens=[int(t) for t in pending.tokens[b, :length]],
                    answer=answer_words[b],
                    h=pending.h_end.data[b].copy(),
                    h_a=h_a.data[b].copy(),
                    log_probs=[-float(x) for x in pending.nll.data[b, :length]],
                )
            )
        pendings.append(pending)

    with ad.no_grad():  # the guesser is fixed; keep it off the tape
        guesses = _guess_for_rounds(guesser, features, scenes, game_rounds)
    records = []
    for b, scene in enumerate(scenes):
        reward = 1.0 if guesses[b] == scene.target_index else 0.0
        count = sum(len(r.question_tokens) for r in game_rounds[b])
        per_action = reward / count if count else 0.0
        records.append(
            GameRecord(
                scene=scene,
                rounds=game_rounds[b],
                guess_index=int(guesses[b]),
                reward=reward,
                action_rewards=[per_action] * count,
                baseline=baseline,
                decode_mode=mode,
                seed=scene.seed,
            )
        )
    return records, pendings


def _guess_for_rounds(guesser, features, scenes, game_rounds) -> np.ndarray:
    games = [
        [(r.question_tokens, r.answer) for r in rounds] for rounds in game_rounds
    ]
    dist = guess_batch(guesser, features, [s.n_real for s in scenes], games)
    return dist.argmax(axis=1)


def rollout_single(
    params: QuestionerParams,
    guesser: GuesserParams,
    env: Environment,
    scene: SceneSpec,
    cfg: TrainConfig,
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
    baseline: float = 0.0,
    beam_width: int = 20,
) -> GameRecord:
    """One game through the same single-game path the HTTP service uses.

    Supports beam decoding, which the lockstep batch path does not.
    """
    from .guesser import guesser_score
    from .model import new_dialogue_state, play_round

    features = env.regenerate_features(scene)
    state = new_dialogue_state(params, features, scene.n_real)
    rounds: list[DialogueRound] = []
    answer_rng = (
        np.random.default_rng(rng.integers(2**63)) if env.cfg.oracle_noise_p > 0 and rng else None
    )
    for _ in range(cfg.max_questions):
        round_rec, state = play_round(
            params,
            state,
            lambda toks: env.oracle_answer(scene, toks, answer_rng),
            mode=mode,
            max_words=cfg.max_words,
            rng=rng,
            beam_width=beam_width,
        )
        rounds.append(round_rec)
    dist = guesser_score(
        guesser, features, scene.n_real, [(r.question_tokens, r.answer) for r in rounds]
    )
    guess = int(dist.argmax())
    reward = 1.0 if guess == scene.target_index else 0.0
    count = sum(len(r.question_tokens) for r in rounds)
    per_action = reward / count if count else 0.0
    return GameRecord(
        scene=scene,
        rounds=rounds,
        guess_index=guess,
        reward=reward,
        action_rewards=[per_action] * count,
        baseline=baseline,
        decode_mode=mode,
        seed=scene.seed,
    )


# ----------------------------------------------------------------------
# policy-gradient fine-tuning
# ----------------------------------------------------------------------


def _validation_games(
    env: Environment, cfg: TrainConfig, run_seed: int
) -> tuple[list[SceneSpec], list[np.ndarray]]:
    """Retargeted scenes from the tail of the training pool.

    Disjoint from the new_game eval split (unseen seeds) and from the
    new_object eval split (which retargets the head of the pool).
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(run_seed, 53)))
    seeds = train_scene_seeds(run_seed, cfg.rl_games)
    take = min(cfg.rl_validation_games, len(seeds))
    scenes, feats = [], []
    for seed in list(seeds)[-take:]:
        scene, f = env.generate_scene(seed)
        scenes.append(env.retarget(scene, rng) if scene.n_real > 1 else scene)
        feats.append(f)
    return scenes, feats


def greedy_success(
    params: QuestionerParams,
    guesser: GuesserParams,
    env: Environment,
    cfg: TrainConfig,
    scenes: Sequence[SceneSpec],
    feats: Sequence[np.ndarray],
    batch: int = 64,
) -> float:
    wins = 0.0
    with ad.no_grad():
        for start in range(0, len(scenes), batch):
            records, _ = rollout_batch(
                params, guesser, env,
                scenes[start : start + batch], feats[start : start + batch],
                cfg, "greedy", None,
            )
            wins += sum(rec.reward for rec in records)
    return wins / len(scenes)


def rl_train(
    params: QuestionerParams,
    guesser: GuesserParams,
    env: Environment,
    cfg: TrainConfig,
    run_seed: int,
    log_path: str | Path | None = None,
    checkpoint_dir: str | Path | None = None,
) -> list[dict]:
    """REINFORCE over sampled self-play games with the oracle and guesser
    fixed; SGD on the advantage-weighted token losses.

    Greedy success on held-out retargeted scenes is measured before
    training and every ``rl_validate_every`` epochs; the best-validation
    parameters are what training finally returns (and saves as rl-best),
    so a noisy late epoch cannot discard a better earlier policy.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(run_seed, 17)))
    scenes = []
    feats = []
    for seed in train_scene_seeds(run_seed, cfg.rl_games):
        scene, f = env.generate_scene(seed)
        scenes.append(scene)
        feats.append(f)
    val_scenes, val_feats = ([], [])
    if guesser is not None and cfg.rl_validate_every > 0:
        val_scenes, val_feats = _validation_games(env, cfg, run_seed)
    optimizer = Sgd(params.tensors(), lr=cfg.rl_lr)
    baseline = 0.0
    history = []
    best_success = -1.0
    best_validation = -1.0
    best_params: list[np.ndarray] | None = None
    writer = _TrainLog(log_path)
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir else None
    if ckpt_dir:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    def validate() -> float | None:
        nonlocal best_validation, best_params
        if not val_scenes:
            return None
        rate = greedy_success(params, guesser, env, cfg, val_scenes, val_feats)
        if rate > best_validation:
            best_validation = rate
            best_params = [t.data.copy() for t in params.tensors()]
            if ckpt_dir:
                params.save(ckpt_dir / "rl-best.ckpt")
        return rate

    validate()  # the pre-training policy is a valid candidate
    for epoch in range(cfg.rl_epochs):
        order = rng.permutation(len(scenes))
        epoch_rewards: list[float] = []
        epoch_records: list[GameRecord] = []
        epoch_loss = 0.0
        for batch_idx in _batched(list(order), cfg.rl_batch):
            batch_scenes = [scenes[i] for i in batch_idx]
            batch_feats = [feats[i] for i in batch_idx]
            bsz = len(batch_scenes)
            with Tape() as tape:
                records, pendings = rollout_batch(
                    params, guesser, env, batch_scenes, batch_feats,
                    cfg, "sample", rng, baseline,
                )
                rewards = np.array([rec.reward for rec in records])
                counts = np.array([max(rec.token_count, 1) for rec in records], dtype=np.float64)
                advantage = (rewards - baseline) / counts  # per-token advantage
                loss = None
                for pending in pendings:
                    weights = pending.token_mask * advantage[:, None]
                    term = ad.sum_all(ad.mul(pending.nll, Tensor(weights)))
                    loss = term if loss is None else ad.add(loss, term)
                loss = ad.mul(loss, 1.0 / bsz)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDiverged(f"RL loss became {value} at epoch {epoch}")
            tape.backward(loss)
            ensure_grads(params.tensors())
            clip_global_norm(params.tensors(), cfg.clip_norm)
            optimizer.step()
            baseline = cfg.baseline_decay * baseline + (1 - cfg.baseline_decay) * float(
                rewards.mean()
            )
            epoch_rewards.extend(rewards.tolist())
            epoch_records.extend(records)
            epoch_loss += value * bsz
        success = float(np.mean(epoch_rewards))
        repeated = repeated_fraction(epoch_records)
        if len(set(epoch_rewards)) == 1:
            warnings.warn(
                f"reward variance is zero across epoch {epoch}; policy may have collapsed",
                RuntimeWarning,
            )
        entry = {
            "epoch": epoch,
            "loss": epoch_loss / len(scenes),
            "success_rate": success,
            "avg_reward": success,
            "repeated_q_rate": repeated,
        }
        if cfg.rl_validate_every > 0 and (epoch + 1) % cfg.rl_validate_every == 0:
            rate = validate()
            if rate is not None:
                entry["validation_success"] = rate
        history.append(entry)
        writer.row(**entry)
        if ckpt_dir and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            params.save(ckpt_dir / f"rl-epoch{epoch + 1:04d}.ckpt")
        if success > best_success:
            best_success = success
    if cfg.rl_epochs % max(cfg.rl_validate_every, 1):
        validate()
    if best_params is not None:
        for tensor, data in zip(params.tensors(), best_params):
            tensor.data[...] = data
        if ckpt_dir:
            params.save(ckpt_dir / "rl-best.ckpt")
    writer.close()
    return history


def repeated_fraction(records: Sequence[GameRecord]) -> float:
    """Fraction of games containing at least one exact duplicate question."""
    if not records:
        return 0.0
    hits = 0
    for rec in records:
        questions = rec.questions()
        if len(questions) != len(set(questions)):
            hits += 1
    return hits / len(records)


# ----------------------------------------------------------------------
# guesser training
# ----------------------------------------------------------------------


def train_guesser(
    env: Environment,
    cfg: TrainConfig,
    run_seed: int,
    holdout_fraction: float = 0.1,
    corpus: list[GoldGame] | None = None,
) -> tuple[GuesserParams, dict]:
    """Supervised training on scripted dialogues; reports held-out accuracy."""
    if corpus is None:
        corpus = build_guesser_corpus(env, cfg, run_seed)
    if not corpus:
        raise ValueError("empty guesser corpus")
    n_holdout = max(1, int(len(corpus) * holdout_fraction)) if len(corpus) > 1 else 0
    train_games = corpus[: len(corpus) - n_holdout]
    holdout_games = corpus[len(corpus) - n_holdout :]
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(run_seed, 23)))
    params = GuesserParams.create(
        slots=env.cfg.slots,
        hidden=cfg.guesser_hidden,
        feature_dim=env.cfg.feature_dim,
        vocab=env.vocab,
        rng=rng,
    )
    optimizer = Adam(params.tensors(), lr=cfg.guesser_lr)
    history = []
    for epoch in range(cfg.guesser_epochs):
        order = rng.permutation(len(train_games))
        total = 0.0
        for batch_idx in _batched(list(order), cfg.guesser_batch):
            games = [train_games[i] for i in batch_idx]
            bsz = len(games)
            with Tape() as tape:
                loss = _guesser_batch_loss(params, games)
                loss = ad.mul(loss, 1.0 / bsz)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDiverged(f"guesser loss became {value} at epoch {epoch}")
            tape.backward(loss)
            optimizer.step()
            total += value * bsz
        history.append({"epoch": epoch, "loss": total / len(train_games)})
    report = {
        "history": history,
        "train_accuracy": guesser_accuracy(params, train_games),
        "holdout_accuracy": guesser_accuracy(params, holdout_games) if holdout_games else None,
    }
    return params, report


def _guesser_batch_loss(params: GuesserParams, games: list[GoldGame]) -> Tensor:
    bsz = len(games)
    n_rounds = len(games[0].rounds)
    round_tokens, round_masks, round_answers = [], [], []
    for r in range(n_rounds):
        tokens, mask, answers = _pad_gold_round(games, r, params.vocab.pad_id)
        round_tokens.append(tokens)
        round_masks.append(mask)
        round_answers.append(answers)
    encoding = encode_dialogue_batch(params, round_tokens, round_masks, round_answers, bsz)
    raw_flat = Tensor(np.concatenate([g.features for g in games], axis=0))
    logits = object_logits_batch(
        params, raw_flat, encoding, [g.scene.n_real for g in games]
    )
    targets = np.array([g.scene.target_index for g in games], dtype=np.int64)
    return ad.sum_all(ad.nll_rows(logits, targets))


def guesser_accuracy(params: GuesserParams, games: Sequence[GoldGame], batch: int = 64) -> float:
    if not games:
        return float("nan")
    correct = 0
    for chunk in _batched(list(games), batch):
        dist = guess_batch(
            params,
            [g.features for g in chunk],
            [g.scene.n_real for g in chunk],
            [[(ids, ans) for ids, ans in g.rounds] for g in chunk],
        )
        preds = dist.argmax(axis=1)
        correct += int(
            (preds == np.array([g.scene.target_index for g in chunk])).sum()
        )
    return correct / len(games)


# ----------------------------------------------------------------------
# CSV logging
# ----------------------------------------------------------------------


class _TrainLog:
    COLUMNS = [
        "epoch", "loss", "success_rate", "avg_reward", "repeated_q_rate",
        "validation_success",
    ]

    def __init__(self, path: str | Path | None):
        self._fh = None
        self._writer = None
        if path is not None:
            self._fh = Path(path).open("w", newline="", encoding="utf-8")
            self._writer = csv.DictWriter(self._fh, fieldnames=self.COLUMNS)
            self._writer.writeheader()

    def row(self, **values) -> None:
        if self._writer is None:
            return
        self._writer.writerow({col: values.get(col, "") for col in self.COLUMNS})

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()


# ----------------------------------------------------------------------
# full pipeline
# ----------------------------------------------------------------------


@dataclass
class Pipeline:
    """Everything a trained system consists of."""

    env: Environment
    questioner: QuestionerParams
    guesser: GuesserParams
    sl_history: list[dict] = field(default_factory=list)
    rl_history: list[dict] = field(default_factory=list)
    guesser_report: dict = field(default_factory=dict)


def run_pipeline(
    cfg: AppConfig,
    run_seed: int,
    out_dir: str | Path | None = None,
    skip_rl: bool = False,
) -> Pipeline:
    """Guesser training, SL pre-training, then RL fine-tuning."""
    env = Environment(cfg.env)
    guesser, guesser_report = train_guesser(env, cfg.train, run_seed)
    corpus = build_sl_corpus(env, cfg.train.sl_games, cfg.train.max_questions, run_seed)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(run_seed, 11)))
    params = QuestionerParams.create(
        cfg.model,
        slots=cfg.env.slots,
        feature_dim=cfg.env.feature_dim,
        vocab=env.vocab,
        rng=rng,
    )
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    sl_history = sl_train(
        params, corpus, cfg.train, rng, log_path=out / "sl-log.csv" if out else None
    )
    if out:
        params.save(out / "sl.ckpt")
        guesser.save(out / "guesser.ckpt")
    rl_history = []
    if not skip_rl:
        rl_history = rl_train(
            params,
            guesser,
            env,
            cfg.train,
            run_seed,
            log_path=out / "rl-log.csv" if out else None,
            checkpoint_dir=out if out and cfg.train.checkpoint_every else None,
        )
        if out:
            params.save(out / "rl.ckpt")
    return Pipeline(
        env=env,
        questioner=params,
        guesser=guesser,
        sl_history=sl_history,
        rl_history=rl_history,
        guesser_report=guesser_report,
    )
