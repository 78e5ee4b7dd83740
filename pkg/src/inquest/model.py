"""The question generator with tracked dialogue state.

The dialogue state is the pair (belief over objects, object representations).
Each round:

1. object rows are rescaled by the current belief,
2. a difference-based attention over object pairs produces the visual
   context for the decoder (one vector per glimpse, concatenated),
3. an LSTM decodes the next question from that context,
4. the question's final hidden state is fused with the answer embedding and
   matched against the object rows, and
5. the resulting evidence distribution multiplies into the belief, which is
   renormalized.

Everything here is written batched: B games advance in lockstep, object
rows stored as a flat (B*slots, d) matrix. Single-game entry points wrap a
batch of one, so the interactive service and training share one code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import AblationConfig, ModelConfig
from .env import Vocabulary

INIT_SCALE = 0.08
LSTM_FORGET_BIAS = 1.0
EVIDENCE_FLOOR = 1e-9
PAD_LOGIT = -1e30


class BeliefDegenerateError(RuntimeError):
    """The multiplicative belief update lost all probability mass."""


class DecodeError(ValueError):
    """Bad decoding request (unknown mode, beam width < 1, ...)."""


# ----------------------------------------------------------------------
# parameters
# ----------------------------------------------------------------------


@dataclass
class QuestionerParams:
    """All learnable tensors plus the sizes they were built for."""

    slots: int
    embed_dim: int
    glimpses: int
    vocab: Vocabulary
    feature_dim: int
    scale_by_slots: bool
    ablation: AblationConfig
    proj_w: Tensor
    proj_b: Tensor
    word_emb: Tensor
    lstm_wx_ctx: Tensor  # context block of the decoder input weights
    lstm_wx_emb: Tensor  # word-embedding block of the decoder input weights
    lstm_wh: Tensor
    lstm_b: Tensor
    out_w: Tensor
    out_b: Tensor
    attn_w: Tensor
    match_u: Tensor
    match_v: Tensor
    ans_emb: Tensor

    FIELD_ORDER = (
        "proj_w",
        "proj_b",
        "word_emb",
        "lstm_wx_ctx",
        "lstm_wx_emb",
        "lstm_wh",
        "lstm_b",
        "out_w",
        "out_b",
        "attn_w",
        "match_u",
        "match_v",
        "ans_emb",
    )

    @classmethod
    def create(
        cls,
        model_cfg: ModelConfig,
        slots: int,
        feature_dim: int,
        vocab: Vocabulary,
        rng: np.random.Generator,
    ) -> "QuestionerParams":
        d = model_cfg.embed_dim
        g = model_cfg.glimpses
        v = vocab.size

        def weight(*shape):
            return ad.parameter(rng.uniform(-INIT_SCALE, INIT_SCALE, shape))

        def bias(n):
            return ad.parameter(np.zeros(n))

        lstm_b = bias(4 * d)
        lstm_b.data[d : 2 * d] = LSTM_FORGET_BIAS
        return cls(
            slots=slots,
            embed_dim=d,
            glimpses=g,
            vocab=vocab,
            feature_dim=feature_dim,
            scale_by_slots=model_cfg.scale_by_slots,
            ablation=model_cfg.ablation,
            proj_w=weight(feature_dim, d),
            proj_b=bias(d),
            word_emb=weight(v, d),
            lstm_wx_ctx=weight(g * d, 4 * d),
            lstm_wx_emb=weight(d, 4 * d),
            lstm_wh=weight(d, 4 * d),
            lstm_b=lstm_b,
            out_w=weight(d, v),
            out_b=bias(v),
            attn_w=weight(slots * d, g),
            match_u=weight(d, d),
            match_v=weight(2 * d, d),
            ans_emb=weight(3, d),
        )

    def tensors(self) -> list[Tensor]:
        return [getattr(self, name) for name in self.FIELD_ORDER]

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        return [(name, getattr(self, name).data) for name in self.FIELD_ORDER]

    def save(self, path) -> None:
        hyper = {
            "slots": self.slots,
            "embed_dim": self.embed_dim,
            "glimpses": self.glimpses,
            "hidden_dim": self.embed_dim,
            "feature_dim": self.feature_dim,
            "scale_by_slots": self.scale_by_slots,
            "vocab": self.vocab.tokens,
            "ablation": {
                "disable_state_tracking": self.ablation.disable_state_tracking,
                "disable_difference_attention": self.ablation.disable_difference_attention,
            },
        }
        save_checkpoint(path, "questioner", hyper, self.named_arrays())

    @classmethod
    def load(cls, path) -> "QuestionerParams":
        kind, hyper, arrays = load_checkpoint(path)
        if kind != "questioner":
            raise CheckpointError(f"{path}: expected a questioner checkpoint, got {kind}")
        vocab = Vocabulary(hyper["vocab"])
        params = {name: ad.parameter(arrays[name]) for name in cls.FIELD_ORDER}
        return cls(
            slots=hyper["slots"],
            embed_dim=hyper["embed_dim"],
            glimpses=hyper["glimpses"],
            vocab=vocab,
            feature_dim=hyper["feature_dim"],
            scale_by_slots=hyper["scale_by_slots"],
            ablation=AblationConfig(
                disable_state_tracking=hyper["ablation"]["disable_state_tracking"],
                disable_difference_attention=hyper["ablation"][
                    "disable_difference_attention"
                ],
            ),
            **params,
        )


# ----------------------------------------------------------------------
# state containers
# ----------------------------------------------------------------------


@dataclass
class ObjectSet:
    """Object feature rows for one game, padded to the model's slot count."""

    slots: int
    n_real: int
    raw: np.ndarray  # (slots, feature_dim)
    initial: np.ndarray  # (slots, d), never mutated after projection
    current: np.ndarray  # (slots, d), rescaled every round


@dataclass
class BeliefState:
    pi: np.ndarray  # (slots,), zero on padding slots
    round_index: int = 0


@dataclass
class DialogueState:
    objects: ObjectSet
    belief: BeliefState


@dataclass
class DialogueRound:
    question_tokens: list[int]
    answer: str
    h: np.ndarray  # decoder hidden at the question's final token, (d,)
    h_a: np.ndarray  # [h; answer embedding], (2d,)
    log_probs: list[float]


@dataclass
class PendingQuestion:
    """A decoded question waiting for its answer."""

    tokens: list[int]
    log_probs: list[float]
    h_end: Tensor  # (1, d)
    objects_tensor: Tensor  # (slots, d) representations the question was decoded from


def uniform_belief(n_real: int, slots: int) -> np.ndarray:
    pi = np.zeros(slots, dtype=np.float64)
    pi[:n_real] = 1.0 / n_real
    return pi


def new_dialogue_state(params: QuestionerParams, raw: np.ndarray, n_real: int) -> DialogueState:
    """Project raw features and start from the uniform belief."""
    initial = project_objects(Tensor(raw), params).data
    objects = ObjectSet(
        slots=params.slots,
        n_real=n_real,
        raw=np.array(raw, dtype=np.float64),
        initial=initial,
        current=initial.copy(),
    )
    return DialogueState(objects=objects, belief=BeliefState(pi=uniform_belief(n_real, params.slots)))


# ----------------------------------------------------------------------
# custom tensor kernels for the attention
# ----------------------------------------------------------------------


def self_difference_blocks(rows: Tensor, group_size: int) -> Tensor:
    """Per group of rows, all guided pairwise differences.

    Input (B*m, d); output (B*m, m*d) where output row (b, i), block k is
    x_i * (x_i - x_k). The self block (k == i) is zero.
    """
    total, d = rows.data.shape
    m = group_size
    if m < 1 or total % m:
        raise ad.ShapeError(f"{total} rows not divisible into groups of {m}")
    x = rows.data.reshape(-1, m, d)
    blocks = x[:, :, None, :] - x[:, None, :, :]  # (B, m, m, d)
    blocks *= x[:, :, None, :]
    out = Tensor(blocks.reshape(total, m * d))

    def backward(gs):
        (g,) = gs
        gb = g.reshape(-1, m, m, d)
        # d blocks[b,i,k] / d x_i = 2 x_i - x_k ; d / d x_k = -x_i
        d_rows = 2.0 * x * gb.sum(axis=2)
        d_rows -= np.einsum("bikd,bkd->bid", gb, x)
        d_rows -= np.einsum("bikd,bid->bkd", gb, x)
        return (d_rows.reshape(total, d),)

    ad.record((rows,), (out,), backward)
    return out


def attend_groups(weights: Tensor, values: Tensor, group_size: int) -> Tensor:
    """Per-group weighted sums, one per attention column, concatenated.

    weights (B*m, g) and values (B*m, d) -> (B, g*d), glimpse-major.
    """
    total, g = weights.data.shape
    m = group_size
    d = values.data.shape[1]
    if values.data.shape[0] != total or total % m:
        raise ad.ShapeError(
            f"attend_groups shapes {weights.data.shape} vs {values.data.shape}"
        )
    w3 = weights.data.reshape(-1, m, g)
    v3 = values.data.reshape(-1, m, d)
    out3 = np.einsum("bmg,bmd->bgd", w3, v3)
    out = Tensor(out3.reshape(-1, g * d))

    def backward(gs):
        (grad,) = gs
        g3 = grad.reshape(-1, g, d)
        d_w = np.einsum("bgd,bmd->bmg", g3, v3)
        d_v = np.einsum("bgd,bmg->bmd", g3, w3)
        return (d_w.reshape(total, g), d_v.reshape(total, d))

    ad.record((weights, values), (out,), backward)
    return out


# ----------------------------------------------------------------------
# batched core
# ----------------------------------------------------------------------


@dataclass
class BatchMasks:
    """Constant per-batch masks derived from each game's real-object count."""

    real: Tensor  # (B, slots), 1 on real objects
    pad_logit: Tensor  # (B*slots, 1), 0 on real rows, PAD_LOGIT on padding
    averaging: Tensor  # (B, B*slots), mean over real rows of each game

    @classmethod
    def build(cls, n_real: Sequence[int], slots: int) -> "BatchMasks":
        batch = len(n_real)
        real = np.zeros((batch, slots))
        for b, n in enumerate(n_real):
            real[b, :n] = 1.0
        pad_logit = np.where(real.reshape(-1, 1) > 0, 0.0, PAD_LOGIT)
        averaging = np.zeros((batch, batch * slots))
        for b, n in enumerate(n_real):
            averaging[b, b * slots : b * slots + n] = 1.0 / n
        return cls(Tensor(real), Tensor(pad_logit), Tensor(averaging))


@dataclass
class BatchState:
    """B games in lockstep; object rows flattened to (B*slots, d)."""

    slots: int
    n_real: list[int]
    initial: Tensor  # (B*slots, d)
    belief: Tensor  # (B, slots)
    masks: BatchMasks
    round_index: int = 0

    @property
    def batch(self) -> int:
        return len(self.n_real)


@dataclass
class BatchPending:
    tokens: np.ndarray  # (B, T)
    token_mask: np.ndarray  # (B, T), 1.0 where a real token was emitted
    nll: Tensor  # (B, T), per-token negative log-likelihood
    h_end: Tensor  # (B, d)
    objects: Tensor  # (B*slots, d) used for this round


@dataclass
class DecodedQuestion:
    tokens: list[int]
    log_probs: list[float]
    h: np.ndarray


def project_objects(raw: Tensor, params: QuestionerParams) -> Tensor:
    """Map raw features to initial object representations (rows x d)."""
    if raw.data.ndim != 2 or raw.data.shape[1] != params.feature_dim:
        raise ad.ShapeError(
            f"raw features {raw.data.shape} do not match feature_dim {params.feature_dim}"
        )
    return ad.swish(ad.add(ad.matmul(raw, params.proj_w), params.proj_b))


def begin_batch(params: QuestionerParams, features: Sequence[np.ndarray], n_real: Sequence[int]) -> BatchState:
    raw_flat = Tensor(np.concatenate([np.asarray(f) for f in features], axis=0))
    initial = project_objects(raw_flat, params)
    masks = BatchMasks.build(list(n_real), params.slots)
    belief = Tensor(np.stack([uniform_belief(n, params.slots) for n in n_real]))
    return BatchState(
        slots=params.slots,
        n_real=list(n_real),
        initial=initial,
        belief=belief,
        masks=masks,
    )


def _reweight_batch(state: BatchState, params: QuestionerParams) -> Tensor:
    pi_col = ad.reshape(state.belief, (state.batch * state.slots, 1))
    current = ad.mul(state.initial, pi_col)
    if params.scale_by_slots:
        current = ad.mul(current, float(state.slots))
    return current


def _attention_context(objects: Tensor, state: BatchState, params: QuestionerParams) -> Tensor:
    blocks = self_difference_blocks(objects, state.slots)
    logits = ad.add(ad.matmul(blocks, params.attn_w), state.masks.pad_logit)
    attn = ad.softmax_groups(logits, state.slots)
    return attend_groups(attn, objects, state.slots)


def _mean_context(objects: Tensor, state: BatchState, params: QuestionerParams) -> Tensor:
    mean = ad.matmul(state.masks.averaging, objects)  # (B, d)
    return ad.concat([mean] * params.glimpses, axis=1)


def _match_batch(objects: Tensor, exchange: Tensor, state: BatchState, params: QuestionerParams) -> Tensor:
    """Evidence distribution over slots from the question-answer vector."""
    left = ad.matmul(objects, ad.transpose(params.match_u))  # (B*m, d)
    right = ad.repeat_rows(ad.matmul(exchange, params.match_v), state.slots)
    fused = ad.mul(ad.tanh(ad.mul(left, right)), 1.0 / math.sqrt(params.embed_dim))
    logits = ad.sum_axis(fused, axis=1, keepdims=True)  # (B*m, 1)
    evidence = ad.softmax_groups(logits, state.slots)
    return ad.reshape(evidence, (state.batch, state.slots))


def _update_belief_batch(belief: Tensor, evidence: Tensor, masks: BatchMasks) -> Tensor:
    floored = ad.clamp_min(evidence, EVIDENCE_FLOOR)
    masked = ad.mul(ad.mul(belief, floored), masks.real)
    denom = ad.sum_axis(masked, axis=1, keepdims=True)
    if np.any(denom.data < 1e-30):
        raise BeliefDegenerateError(
            "belief update lost all mass; evidence and prior are disjoint"
        )
    return ad.div(masked, denom)


def _decode_batch(
    params: QuestionerParams,
    context: Tensor,
    mode: str,
    max_words: int,
    rng: np.random.Generator | None,
    gold_tokens: np.ndarray | None = None,
    gold_mask: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, Tensor, Tensor]:
    """Run the decoder loop for a batch of games.

    Returns (tokens (B,T), token_mask (B,T), nll Tensor (B,T), h_end (B,d)).
    In teacher mode the gold tokens drive the loop; otherwise tokens are
    chosen greedily or sampled, stopping once every game has emitted the
    question-end token or hit max_words.
    """
    batch = context.data.shape[0]
    d = params.embed_dim
    vocab = params.vocab
    if mode == "teacher":
        if gold_tokens is None or gold_mask is None:
            raise DecodeError("teacher mode needs gold tokens and mask")
        steps = gold_tokens.shape[1]
        lengths = gold_mask.sum(axis=1).astype(np.int64)
    elif mode in ("greedy", "sample"):
        if mode == "sample" and rng is None:
            raise DecodeError("sample mode needs an rng")
        steps = max_words
        lengths = None
    else:
        raise DecodeError(f"unknown decode mode {mode!r}")

    h = Tensor(np.zeros((batch, d)))
    c = Tensor(np.zeros((batch, d)))
    h_end = Tensor(np.zeros((batch, d)))
    prev = np.full(batch, vocab.start_id, dtype=np.int64)
    alive = np.ones(batch, dtype=bool)
    tokens_cols: list[np.ndarray] = []
    mask_cols: list[np.ndarray] = []
    nll_parts: list[Tensor] = []
    # the visual context is constant within a question: project it once
    ctx_pre = ad.matmul(context, params.lstm_wx_ctx)

    for t in range(steps):
        emb = ad.embedding(params.word_emb, prev)
        h, c = ad.lstm_cell(
            emb, h, c, params.lstm_wx_emb, params.lstm_wh, params.lstm_b, z_extra=ctx_pre
        )
        logits = ad.affine(h, params.out_w, params.out_b)

        if mode == "teacher":
            tok = gold_tokens[:, t]
            step_mask = gold_mask[:, t]
            ends_now = step_mask * (t == lengths - 1)
        else:
            if mode == "greedy":
                chosen = logits.data.argmax(axis=1)
            else:
                probs = np.exp(logits.data - logits.data.max(axis=1, keepdims=True))
                probs /= probs.sum(axis=1, keepdims=True)
                draws = rng.random(batch)
                chosen = np.minimum(
                    (probs.cumsum(axis=1) < draws[:, None]).sum(axis=1),
                    vocab.size - 1,
                )
            tok = np.where(alive, chosen, vocab.pad_id)
            step_mask = alive.astype(np.float64)
            ends_now = step_mask * ((tok == vocab.end_id) | (t == max_words - 1))

        nll_parts.append(ad.nll_rows(logits, tok))
        tokens_cols.append(tok)
        mask_cols.append(step_mask)
        if np.any(ends_now):
            h_end = ad.add_scaled(h_end, h, ends_now.reshape(batch, 1))
        prev = tok
        if mode != "teacher":
            alive = alive & (tok != vocab.end_id)
            if not alive.any():
                break

    tokens = np.stack(tokens_cols, axis=1)
    token_mask = np.stack(mask_cols, axis=1).astype(np.float64)
    nll = ad.concat(nll_parts, axis=1)
    return tokens, token_mask, nll, h_end


def propose_batch(
    params: QuestionerParams,
    state: BatchState,
    mode: str,
    max_words: int,
    rng: np.random.Generator | None = None,
    gold_tokens: np.ndarray | None = None,
    gold_mask: np.ndarray | None = None,
) -> BatchPending:
    """Decode one round's questions for every game in the batch."""
    if params.ablation.disable_state_tracking:
        objects = state.initial
    else:
        objects = _reweight_batch(state, params)
    if params.ablation.disable_difference_attention:
        context = _mean_context(objects, state, params)
    else:
        context = _attention_context(objects, state, params)
    tokens, token_mask, nll, h_end = _decode_batch(
        params, context, mode, max_words, rng, gold_tokens, gold_mask
    )
    return BatchPending(
        tokens=tokens, token_mask=token_mask, nll=nll, h_end=h_end, objects=objects
    )


def absorb_batch(
    params: QuestionerParams,
    state: BatchState,
    pending: BatchPending,
    answer_ids: np.ndarray,
) -> tuple[BatchState, Tensor]:
    """Fold one round's answers into the belief; returns (state, h_a)."""
    ans_vec = ad.embedding(params.ans_emb, answer_ids)
    h_a = ad.concat([pending.h_end, ans_vec], axis=1)  # (B, 2d)
    if params.ablation.disable_state_tracking:
        belief = state.belief
    else:
        evidence = _match_batch(pending.objects, h_a, state, params)
        belief = _update_belief_batch(state.belief, evidence, state.masks)
    new_state = BatchState(
        slots=state.slots,
        n_real=state.n_real,
        initial=state.initial,
        belief=belief,
        masks=state.masks,
        round_index=state.round_index + 1,
    )
    return new_state, h_a


# ----------------------------------------------------------------------
# single-game operations (batch-of-one wrappers)
# ----------------------------------------------------------------------


def _single_state(params: QuestionerParams, state: DialogueState) -> BatchState:
    masks = BatchMasks.build([state.objects.n_real], params.slots)
    return BatchState(
        slots=params.slots,
        n_real=[state.objects.n_real],
        initial=Tensor(state.objects.initial),
        belief=Tensor(state.belief.pi.reshape(1, -1)),
        masks=masks,
        round_index=state.belief.round_index,
    )


def reweight_objects(
    initial: Tensor, belief: Tensor, scale_by_count: bool = False
) -> Tensor:
    """Scale object row k by belief[k]; the initial rows are untouched."""
    m, _ = initial.data.shape
    if belief.data.shape != (m,):
        raise ad.ShapeError(
            f"belief length {belief.data.shape} does not match {m} objects"
        )
    out = ad.mul(initial, ad.reshape(belief, (m, 1)))
    if scale_by_count:
        out = ad.mul(out, float(m))
    return out


def difference_attention(
    objects: Tensor, attn_w: Tensor, glimpses: int, n_real: int | None = None
) -> Tensor:
    """Guided pairwise-difference attention for one game -> (g*d,) context."""
    m, d = objects.data.shape
    if attn_w.data.shape != (m * d, glimpses):
        raise ad.ShapeError(
            f"attention weights {attn_w.data.shape} do not match "
            f"{m} objects of width {d} with {glimpses} glimpses"
        )
    blocks = self_difference_blocks(objects, m)
    logits = ad.matmul(blocks, attn_w)
    if n_real is not None and n_real < m:
        pad = np.zeros((m, 1))
        pad[n_real:] = PAD_LOGIT
        logits = ad.add(logits, Tensor(pad))
    attn = ad.softmax_groups(logits, m)
    return ad.reshape(attend_groups(attn, objects, m), (glimpses * d,))


def match_exchange(
    objects: Tensor, exchange: Tensor, match_u: Tensor, match_v: Tensor
) -> Tensor:
    """Evidence distribution over one game's objects from [h; answer]."""
    m, d = objects.data.shape
    if exchange.data.shape != (2 * d,):
        raise ad.ShapeError(
            f"exchange vector {exchange.data.shape} must have length {2 * d}"
        )
    left = ad.matmul(objects, ad.transpose(match_u))
    right = ad.repeat_rows(ad.matmul(ad.reshape(exchange, (1, 2 * d)), match_v), m)
    fused = ad.mul(ad.tanh(ad.mul(left, right)), 1.0 / math.sqrt(d))
    logits = ad.sum_axis(fused, axis=1, keepdims=True)
    return ad.reshape(ad.softmax_groups(logits, m), (m,))


def update_belief(prev: Tensor, evidence: Tensor, n_real: int | None = None) -> Tensor:
    """Multiplicative belief update with renormalization.

    Padding slots (beyond n_real) are forced to zero before renormalizing.
    """
    (m,) = prev.data.shape
    if evidence.data.shape != (m,):
        raise ad.ShapeError(f"evidence length {evidence.data.shape} != {m}")
    n = m if n_real is None else n_real
    masks = BatchMasks.build([n], m)
    out = _update_belief_batch(
        ad.reshape(prev, (1, m)), ad.reshape(evidence, (1, m)), masks
    )
    return ad.reshape(out, (m,))


def decode_question(
    context: Tensor,
    params: QuestionerParams,
    mode: str = "greedy",
    max_words: int = 12,
    rng: np.random.Generator | None = None,
    beam_width: int = 20,
) -> DecodedQuestion:
    """Decode one question from a (g*d,) context vector."""
    if max_words < 1:
        raise DecodeError("max_words must be >= 1")
    if mode == "beam":
        return beam_decode(context, params, beam_width, max_words)
    ctx = ad.reshape(context, (1, context.data.shape[0]))
    tokens, token_mask, nll, h_end = _decode_batch(params, ctx, mode, max_words, rng)
    length = int(token_mask[0].sum())
    return DecodedQuestion(
        tokens=[int(t) for t in tokens[0, :length]],
        log_probs=[-float(x) for x in nll.data[0, :length]],
        h=h_end.data[0].copy(),
    )


def beam_decode(
    context: Tensor, params: QuestionerParams, beam_width: int, max_words: int
) -> DecodedQuestion:
    """Beam search over question prefixes; returns the best finished
    hypothesis by summed log-probability."""
    if beam_width < 1:
        raise DecodeError(f"beam width must be >= 1, got {beam_width}")
    d = params.embed_dim
    vocab = params.vocab
    ctx_pre_row = context.data.reshape(1, -1) @ params.lstm_wx_ctx.data

    # hypotheses: (tokens, per-token logps, total logp, h, c)
    hyps = [([], [], 0.0, np.zeros(d), np.zeros(d))]
    finished: list[tuple[list[int], list[float], float, np.ndarray]] = []
    for t in range(max_words):
        if not hyps:
            break
        prev = np.array(
            [h[0][-1] if h[0] else vocab.start_id for h in hyps], dtype=np.int64
        )
        h_mat = np.stack([h[3] for h in hyps])
        c_mat = np.stack([h[4] for h in hyps])
        emb = params.word_emb.data[prev]
        z_extra = Tensor(np.repeat(ctx_pre_row, len(hyps), axis=0))
        h2, c2 = ad.lstm_cell(
            Tensor(emb), Tensor(h_mat), Tensor(c_mat),
            params.lstm_wx_emb, params.lstm_wh, params.lstm_b, z_extra=z_extra,
        )
        logits = h2.data @ params.out_w.data + params.out_b.data
        shifted = logits - logits.max(axis=1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

        candidates = []
        for i, (toks, lps, total, _, _) in enumerate(hyps):
            for w in range(vocab.size):
                step_lp = float(logp[i, w])
                entry = (
                    toks + [w],
                    lps + [step_lp],
                    total + step_lp,
                    h2.data[i],
                    c2.data[i],
                )
                if w == vocab.end_id or t == max_words - 1:
                    finished.append((entry[0], entry[1], entry[2], entry[3]))
                else:
                    candidates.append(entry)
        candidates.sort(key=lambda e: -e[2])
        hyps = candidates[:beam_width]

    best = max(finished, key=lambda e: e[2])
    return DecodedQuestion(tokens=best[0], log_probs=best[1], h=best[3].copy())


def propose_question(
    params: QuestionerParams,
    state: DialogueState,
    mode: str = "greedy",
    max_words: int = 12,
    rng: np.random.Generator | None = None,
    beam_width: int = 20,
) -> PendingQuestion:
    """First half of a round: decode the next question for one game."""
    batch_state = _single_state(params, state)
    if mode == "beam":
        if params.ablation.disable_state_tracking:
            objects = batch_state.initial
        else:
            objects = _reweight_batch(batch_state, params)
        if params.ablation.disable_difference_attention:
            context = _mean_context(objects, batch_state, params)
        else:
            context = _attention_context(objects, batch_state, params)
        decoded = beam_decode(
            ad.reshape(context, (context.data.shape[1],)), params, beam_width, max_words
        )
        state.objects.current = objects.data.copy()
        return PendingQuestion(
            tokens=decoded.tokens,
            log_probs=decoded.log_probs,
            h_end=Tensor(decoded.h.reshape(1, -1)),
            objects_tensor=objects,
        )
    pending = propose_batch(params, batch_state, mode, max_words, rng)
    length = int(pending.token_mask[0].sum())
    state.objects.current = pending.objects.data.copy()
    return PendingQuestion(
        tokens=[int(t) for t in pending.tokens[0, :length]],
        log_probs=[-float(x) for x in pending.nll.data[0, :length]],
        h_end=pending.h_end,
        objects_tensor=pending.objects,
    )


def absorb_answer(
    params: QuestionerParams,
    state: DialogueState,
    pending: PendingQuestion,
    answer: str,
) -> tuple[DialogueRound, DialogueState]:
    """Second half of a round: fold the oracle's answer into the belief."""
    answer_idx = Vocabulary.answer_index(answer)
    batch_state = _single_state(params, state)
    batch_pending = BatchPending(
        tokens=np.array([pending.tokens]),
        token_mask=np.ones((1, len(pending.tokens))),
        nll=Tensor(np.zeros((1, max(len(pending.tokens), 1)))),
        h_end=pending.h_end,
        objects=pending.objects_tensor,
    )
    new_batch, h_a = absorb_batch(
        params, batch_state, batch_pending, np.array([answer_idx], dtype=np.int64)
    )
    round_rec = DialogueRound(
        question_tokens=list(pending.tokens),
        answer=answer,
        h=pending.h_end.data[0].copy(),
        h_a=h_a.data[0].copy(),
        log_probs=list(pending.log_probs),
    )
    new_state = DialogueState(
        objects=ObjectSet(
            slots=state.objects.slots,
            n_real=state.objects.n_real,
            raw=state.objects.raw,
            initial=state.objects.initial,
            current=pending.objects_tensor.data.copy(),
        ),
        belief=BeliefState(
            pi=new_batch.belief.data[0].copy(),
            round_index=state.belief.round_index + 1,
        ),
    )
    return round_rec, new_state


def play_round(
    params: QuestionerParams,
    state: DialogueState,
    answer_provider: Callable[[list[int]], str],
    mode: str = "greedy",
    max_words: int = 12,
    rng: np.random.Generator | None = None,
    beam_width: int = 20,
) -> tuple[DialogueRound, DialogueState]:
    """One full question/answer exchange for a single game."""
    pending = propose_question(params, state, mode, max_words, rng, beam_width)
    answer = answer_provider(pending.tokens)
    return absorb_answer(params, state, pending, answer)
