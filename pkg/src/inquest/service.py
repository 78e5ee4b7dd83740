"""Local HTTP/JSON service exposing live games for a human oracle.

The human holds the secret target: the server renders the scene, generates
questions, updates its belief from the human's yes/no/na answers, and
finally guesses. The target index baked into a generated scene is never
used or serialized by any endpoint.

Sessions live in memory with TTL eviction. An optional JSON-lines journal
records every session event; on restart the journal is replayed through
the model, restoring sessions exactly (replay asserts that regenerated
questions match the recorded ones).
"""

from __future__ import annotations

import json
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .config import AppConfig
from .env import Environment, SceneSpec
from .guesser import GuesserParams, guesser_score
from .model import (
    DialogueRound,
    DialogueState,
    PendingQuestion,
    QuestionerParams,
    absorb_answer,
    new_dialogue_state,
    propose_question,
)

DEFAULT_TTL_SECONDS = 30 * 60

AWAITING_QUESTION = "awaiting_question"
AWAITING_ANSWER = "awaiting_answer"
GUESSED = "guessed"
DONE = "done"


@dataclass
class GameSession:
    session_id: str
    scene: SceneSpec
    features: np.ndarray
    state: DialogueState
    max_questions: int
    max_words: int
    decode_mode: str
    sample_seed: int
    status: str = AWAITING_QUESTION
    rounds: list[DialogueRound] = field(default_factory=list)
    belief_history: list[list[float]] = field(default_factory=list)
    pending: Optional[PendingQuestion] = None
    guess_index: Optional[int] = None
    success: Optional[bool] = None
    last_access: float = field(default_factory=time.monotonic)
    lock: threading.Lock = field(default_factory=threading.Lock)
    rng: np.random.Generator = field(
        default_factory=lambda: np.random.default_rng(0)
    )

    @property
    def rounds_played(self) -> int:
        return len(self.rounds)


class CreateGameRequest(BaseModel):
    seed: Optional[int] = None
    max_questions: Optional[int] = None
    decode: Literal["greedy", "sample"] = "greedy"
    sample_seed: Optional[int] = None


class AnswerRequest(BaseModel):
    answer: Literal["yes", "no", "na"]


class ResultRequest(BaseModel):
    success: bool


class SessionStore:
    def __init__(self, ttl_seconds: float = DEFAULT_TTL_SECONDS):
        self._sessions: dict[str, GameSession] = {}
        self._lock = threading.Lock()
        self.ttl = ttl_seconds

    def add(self, session: GameSession) -> None:
        with self._lock:
            self._sessions[session.session_id] = session

    def get(self, session_id: str) -> GameSession:
        self.evict_expired()
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        session.last_access = time.monotonic()
        return session

    def evict_expired(self) -> None:
        now = time.monotonic()
        with self._lock:
            dead = [
                sid
                for sid, s in self._sessions.items()
                if now - s.last_access > self.ttl
            ]
            for sid in dead:
                del self._sessions[sid]

    def all_ids(self) -> list[str]:
        with self._lock:
            return list(self._sessions)


class Journal:
    """Append-only JSON-lines event log; enough to replay every session."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, event: dict) -> None:
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")

    def events(self) -> list[dict]:
        if not self.path.exists():
            return []
        out = []
        with self.path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    out.append(json.loads(line))
        return out


class GameService:
    """Session logic shared by the HTTP layer and journal replay."""

    def __init__(
        self,
        params: QuestionerParams,
        guesser: GuesserParams,
        env: Environment,
        cfg: AppConfig,
        journal: Journal | None = None,
        ttl_seconds: float = DEFAULT_TTL_SECONDS,
    ):
        self.params = params
        self.guesser = guesser
        self.env = env
        self.cfg = cfg
        self.journal = journal
        self.store = SessionStore(ttl_seconds)
        if journal is not None:
            self._replay(journal.events())

    # -- session operations ------------------------------------------------

    def create_game(
        self,
        seed: int | None,
        max_questions: int | None,
        decode: str,
        sample_seed: int | None,
        _journal: bool = True,
        _session_id: str | None = None,
    ) -> GameSession:
        scene_seed = seed if seed is not None else secrets.randbits(48)
        sample_seed = sample_seed if sample_seed is not None else secrets.randbits(48)
        scene, features = self.env.generate_scene(scene_seed)
        state = new_dialogue_state(self.params, features, scene.n_real)
        session = GameSession(
            session_id=_session_id or secrets.token_hex(8),
            scene=scene,
            features=features,
            state=state,
            max_questions=max_questions
            if max_questions is not None
            else self.cfg.train.max_questions,
            max_words=self.cfg.train.max_words,
            decode_mode=decode,
            sample_seed=sample_seed,
            rng=np.random.default_rng(np.random.SeedSequence(sample_seed)),
        )
        session.belief_history.append(session.state.belief.pi.tolist())
        self.store.add(session)
        if self.journal is not None and _journal:
            self.journal.append(
                {
                    "event": "create",
                    "session_id": session.session_id,
                    "seed": scene_seed,
                    "max_questions": session.max_questions,
                    "decode": decode,
                    "sample_seed": sample_seed,
                }
            )
        return session

    def next_question(self, session: GameSession, _journal: bool = True) -> DialogueRound | None:
        with session.lock:
            if session.status != AWAITING_QUESTION:
                raise HTTPException(
                    status_code=409,
                    detail=f"cannot ask a question while status is {session.status}",
                )
            if session.rounds_played >= session.max_questions:
                raise HTTPException(
                    status_code=409,
                    detail=f"question budget of {session.max_questions} exhausted",
                )
            session.pending = propose_question(
                self.params,
                session.state,
                mode=session.decode_mode,
                max_words=session.max_words,
                rng=session.rng,
            )
            session.status = AWAITING_ANSWER
        if self.journal is not None and _journal:
            self.journal.append(
                {
                    "event": "question",
                    "session_id": session.session_id,
                    "tokens": list(session.pending.tokens),
                }
            )
        return None

    def answer(self, session: GameSession, answer: str, _journal: bool = True) -> None:
        with session.lock:
            if session.status != AWAITING_ANSWER:
                raise HTTPException(
                    status_code=409,
                    detail=f"cannot answer while status is {session.status}",
                )
            round_rec, new_state = absorb_answer(
                self.params, session.state, session.pending, answer
            )
            session.state = new_state
            session.rounds.append(round_rec)
            session.belief_history.append(new_state.belief.pi.tolist())
            session.pending = None
            session.status = AWAITING_QUESTION
        if self.journal is not None and _journal:
            self.journal.append(
                {
                    "event": "answer",
                    "session_id": session.session_id,
                    "answer": answer,
                }
            )

    def guess(self, session: GameSession, _journal: bool = True) -> int:
        with session.lock:
            if session.status != AWAITING_QUESTION:
                raise HTTPException(
                    status_code=409,
                    detail=f"cannot guess while status is {session.status}",
                )
            dist = guesser_score(
                self.guesser,
                session.features,
                session.scene.n_real,
                [(r.question_tokens, r.answer) for r in session.rounds],
            )
            session.guess_index = int(dist.argmax())
            session.status = GUESSED
        if self.journal is not None and _journal:
            self.journal.append(
                {
                    "event": "guess",
                    "session_id": session.session_id,
                    "guess_index": session.guess_index,
                }
            )
        return session.guess_index

    def record_result(self, session: GameSession, success: bool, _journal: bool = True) -> None:
        with session.lock:
            if session.status != GUESSED:
                raise HTTPException(
                    status_code=409,
                    detail=f"cannot record a result while status is {session.status}",
                )
            session.success = success
            session.status = DONE
        if self.journal is not None and _journal:
            self.journal.append(
                {
                    "event": "result",
                    "session_id": session.session_id,
                    "success": success,
                }
            )

    # -- journal replay ----------------------------------------------------

    def _replay(self, events: list[dict]) -> None:
        for event in events:
            kind = event["event"]
            if kind == "create":
                self.create_game(
                    seed=event["seed"],
                    max_questions=event["max_questions"],
                    decode=event["decode"],
                    sample_seed=event["sample_seed"],
                    _journal=False,
                    _session_id=event["session_id"],
                )
                continue
            session = self.store.get(event["session_id"])
            if kind == "question":
                self.next_question(session, _journal=False)
                if list(session.pending.tokens) != list(event["tokens"]):
                    raise RuntimeError(
                        f"journal replay diverged for session {session.session_id}: "
                        "the checkpoint does not reproduce the recorded question"
                    )
            elif kind == "answer":
                self.answer(session, event["answer"], _journal=False)
            elif kind == "guess":
                replayed = self.guess(session, _journal=False)
                if replayed != event["guess_index"]:
                    raise RuntimeError(
                        f"journal replay diverged for session {session.session_id}: "
                        "the checkpoint does not reproduce the recorded guess"
                    )
            elif kind == "result":
                self.record_result(session, event["success"], _journal=False)
            else:
                raise RuntimeError(f"unknown journal event {kind!r}")

    # -- serialization -----------------------------------------------------

    def scene_payload(self, session: GameSession) -> list[dict]:
        env = self.env
        return [
            {
                "index": i,
                "category": env.category_words[o.category],
                "color": env.color_words[o.color],
                "quadrant": o.quadrant,
                "size": o.size,
                "box": list(o.box),
            }
            for i, o in enumerate(session.scene.objects)
        ]

    def session_payload(self, session: GameSession) -> dict:
        return {
            "session_id": session.session_id,
            "status": session.status,
            "objects": self.scene_payload(session),
            "n_real": session.scene.n_real,
            "max_questions": session.max_questions,
            "rounds_played": session.rounds_played,
            "decode": session.decode_mode,
            "belief": session.state.belief.pi.tolist(),
            "belief_history": [list(b) for b in session.belief_history],
            "rounds": [
                {
                    "question": self.env.vocab.text(r.question_tokens),
                    "question_tokens": list(r.question_tokens),
                    "answer": r.answer,
                }
                for r in session.rounds
            ],
            "pending_question": (
                {
                    "question": self.env.vocab.text(session.pending.tokens),
                    "question_tokens": list(session.pending.tokens),
                }
                if session.pending is not None
                else None
            ),
            "guess_index": session.guess_index,
            "success": session.success,
        }


def create_app(
    params: QuestionerParams,
    guesser: GuesserParams,
    env: Environment,
    cfg: AppConfig,
    journal_path: str | Path | None = None,
    ttl_seconds: float = DEFAULT_TTL_SECONDS,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    journal = Journal(journal_path) if journal_path else None
    service = GameService(params, guesser, env, cfg, journal, ttl_seconds)
    app = FastAPI(title="inquest", version="0.1.0")
    app.state.service = service

    @app.post("/games", status_code=201)
    def create_game(request: CreateGameRequest) -> dict:
        session = service.create_game(
            request.seed, request.max_questions, request.decode, request.sample_seed
        )
        return service.session_payload(session)

    @app.get("/games/{session_id}/question")
    def get_question(session_id: str) -> dict:
        session = service.store.get(session_id)
        service.next_question(session)
        return {
            "question": service.env.vocab.text(session.pending.tokens),
            "question_tokens": list(session.pending.tokens),
            "round": session.rounds_played + 1,
            "belief": session.state.belief.pi.tolist(),
        }

    @app.post("/games/{session_id}/answer")
    def post_answer(session_id: str, request: AnswerRequest) -> dict:
        session = service.store.get(session_id)
        service.answer(session, request.answer)
        return {
            "belief": session.state.belief.pi.tolist(),
            "rounds_played": session.rounds_played,
            "status": session.status,
        }

    @app.post("/games/{session_id}/guess")
    def post_guess(session_id: str) -> dict:
        session = service.store.get(session_id)
        guess = service.guess(session)
        return {
            "guess_index": guess,
            "belief": session.state.belief.pi.tolist(),
            "status": session.status,
        }

    @app.post("/games/{session_id}/result")
    def post_result(session_id: str, request: ResultRequest) -> dict:
        session = service.store.get(session_id)
        service.record_result(session, request.success)
        return {"status": session.status}

    @app.get("/games/{session_id}")
    def get_session(session_id: str) -> dict:
        session = service.store.get(session_id)
        return service.session_payload(session)

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
