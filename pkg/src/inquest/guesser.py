"""The guesser: picks the target object from the finished dialogue.

Independent of the questioner: it embeds the generated question tokens with
its own encoder LSTM, fuses each round's question encoding with its own
answer embedding, runs a second LSTM over the per-round vectors, and scores
every object by the dot product between an MLP over the object's raw
features and that dialogue encoding. Padding slots are masked out before
the softmax, so they can never receive probability mass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .env import Vocabulary
from .model import PAD_LOGIT, INIT_SCALE, LSTM_FORGET_BIAS

Rounds = Sequence[tuple[Sequence[int], str]]  # [(question token ids, answer)]


@dataclass
class GuesserParams:
    slots: int
    hidden: int
    vocab: Vocabulary
    feature_dim: int
    word_emb: Tensor
    q_wx: Tensor
    q_wh: Tensor
    q_b: Tensor
    ans_emb: Tensor
    r_wx: Tensor
    r_wh: Tensor
    r_b: Tensor
    obj_w1: Tensor
    obj_b1: Tensor
    obj_w2: Tensor
    obj_b2: Tensor

    FIELD_ORDER = (
        "word_emb",
        "q_wx",
        "q_wh",
        "q_b",
        "ans_emb",
        "r_wx",
        "r_wh",
        "r_b",
        "obj_w1",
        "obj_b1",
        "obj_w2",
        "obj_b2",
    )

    @classmethod
    def create(
        cls,
        slots: int,
        hidden: int,
        feature_dim: int,
        vocab: Vocabulary,
        rng: np.random.Generator,
    ) -> "GuesserParams":
        def weight(*shape):
            return ad.parameter(rng.uniform(-INIT_SCALE, INIT_SCALE, shape))

        def bias(n):
            return ad.parameter(np.zeros(n))

        q_b = bias(4 * hidden)
        q_b.data[hidden : 2 * hidden] = LSTM_FORGET_BIAS
        r_b = bias(4 * hidden)
        r_b.data[hidden : 2 * hidden] = LSTM_FORGET_BIAS
        return cls(
            slots=slots,
            hidden=hidden,
            vocab=vocab,
            feature_dim=feature_dim,
            word_emb=weight(vocab.size, hidden),
            q_wx=weight(hidden, 4 * hidden),
            q_wh=weight(hidden, 4 * hidden),
            q_b=q_b,
            ans_emb=weight(3, hidden),
            r_wx=weight(2 * hidden, 4 * hidden),
            r_wh=weight(hidden, 4 * hidden),
            r_b=r_b,
            obj_w1=weight(feature_dim, hidden),
            obj_b1=bias(hidden),
            obj_w2=weight(hidden, hidden),
            obj_b2=bias(hidden),
        )

    def tensors(self) -> list[Tensor]:
        return [getattr(self, name) for name in self.FIELD_ORDER]

    def save(self, path) -> None:
        hyper = {
            "slots": self.slots,
            "hidden": self.hidden,
            "feature_dim": self.feature_dim,
            "vocab": self.vocab.tokens,
        }
        save_checkpoint(
            path, "guesser", hyper, [(n, getattr(self, n).data) for n in self.FIELD_ORDER]
        )

    @classmethod
    def load(cls, path) -> "GuesserParams":
        kind, hyper, arrays = load_checkpoint(path)
        if kind != "guesser":
            raise CheckpointError(f"{path}: expected a guesser checkpoint, got {kind}")
        return cls(
            slots=hyper["slots"],
            hidden=hyper["hidden"],
            vocab=Vocabulary(hyper["vocab"]),
            feature_dim=hyper["feature_dim"],
            **{n: ad.parameter(arrays[n]) for n in cls.FIELD_ORDER},
        )


def _encode_question_batch(
    params: GuesserParams, tokens: np.ndarray, mask: np.ndarray
) -> Tensor:
    """LSTM over token columns; returns each game's hidden state at its
    question's final token, shape (B, hidden)."""
    batch, steps = tokens.shape
    hid = params.hidden
    h = Tensor(np.zeros((batch, hid)))
    c = Tensor(np.zeros((batch, hid)))
    h_end = Tensor(np.zeros((batch, hid)))
    lengths = mask.sum(axis=1).astype(np.int64)
    for t in range(steps):
        emb = ad.embedding(params.word_emb, tokens[:, t])
        h, c = ad.lstm_cell(emb, h, c, params.q_wx, params.q_wh, params.q_b)
        ends_now = (mask[:, t] * (t == lengths - 1)).reshape(batch, 1)
        if np.any(ends_now):
            h_end = ad.add(h_end, ad.mul(h, Tensor(ends_now)))
    return h_end


def encode_dialogue_batch(
    params: GuesserParams,
    round_tokens: Sequence[np.ndarray],
    round_masks: Sequence[np.ndarray],
    round_answers: Sequence[np.ndarray],
    batch: int,
) -> Tensor:
    """Order-respecting encoding of a whole dialogue, shape (B, hidden)."""
    hid = params.hidden
    h = Tensor(np.zeros((batch, hid)))
    c = Tensor(np.zeros((batch, hid)))
    for tokens, mask, answers in zip(round_tokens, round_masks, round_answers):
        q_enc = _encode_question_batch(params, tokens, mask)
        ans = ad.embedding(params.ans_emb, answers)
        step = ad.concat([q_enc, ans], axis=1)
        h, c = ad.lstm_cell(step, h, c, params.r_wx, params.r_wh, params.r_b)
    return h


def object_logits_batch(
    params: GuesserParams,
    raw_flat: Tensor,
    encoding: Tensor,
    n_real: Sequence[int],
) -> Tensor:
    """Dot-product scores per object slot with padding pushed to -inf."""
    m = params.slots
    batch = encoding.data.shape[0]
    hidden1 = ad.swish(ad.add(ad.matmul(raw_flat, params.obj_w1), params.obj_b1))
    obj_vec = ad.add(ad.matmul(hidden1, params.obj_w2), params.obj_b2)
    enc_rep = ad.repeat_rows(encoding, m)
    scores = ad.sum_axis(ad.mul(obj_vec, enc_rep), axis=1, keepdims=True)
    logits = ad.reshape(scores, (batch, m))
    pad = np.zeros((batch, m))
    for b, n in enumerate(n_real):
        pad[b, n:] = PAD_LOGIT
    return ad.add(logits, Tensor(pad))


def guess_batch(
    params: GuesserParams,
    features: Sequence[np.ndarray],
    n_real: Sequence[int],
    games_rounds: Sequence[Rounds],
) -> np.ndarray:
    """Guess distributions for a batch of finished games, shape (B, slots)."""
    batch = len(games_rounds)
    n_rounds = len(games_rounds[0]) if games_rounds else 0
    for rounds in games_rounds:
        if len(rounds) != n_rounds:
            raise ValueError("games in a guessing batch must have equal round counts")
    round_tokens, round_masks, round_answers = [], [], []
    for r in range(n_rounds):
        width = max(len(g[r][0]) for g in games_rounds)
        toks = np.full((batch, max(width, 1)), params.vocab.pad_id, dtype=np.int64)
        mask = np.zeros((batch, max(width, 1)))
        answers = np.zeros(batch, dtype=np.int64)
        for b, rounds in enumerate(games_rounds):
            ids, answer = rounds[r]
            toks[b, : len(ids)] = ids
            mask[b, : len(ids)] = 1.0
            answers[b] = Vocabulary.answer_index(answer)
        round_tokens.append(toks)
        round_masks.append(mask)
        round_answers.append(answers)
    encoding = encode_dialogue_batch(params, round_tokens, round_masks, round_answers, batch)
    raw_flat = Tensor(np.concatenate([np.asarray(f) for f in features], axis=0))
    logits = object_logits_batch(params, raw_flat, encoding, n_real)
    probs = ad.softmax(logits, axis=1).data
    out = probs.copy()
    for b, n in enumerate(n_real):
        out[b, n:] = 0.0  # exp(PAD_LOGIT) already underflows to exactly 0
    return out


def guesser_score(
    params: GuesserParams, raw: np.ndarray, n_real: int, rounds: Rounds
) -> np.ndarray:
    """Distribution over one game's slots given its full dialogue."""
    if n_real < 1:
        raise ValueError("cannot guess in a scene with no real objects")
    return guess_batch(params, [raw], [n_real], [rounds])[0]
