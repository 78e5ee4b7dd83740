"""Synthetic guessing-game environment.

Scenes are sets of schematic objects (category, color, quadrant, size) with
bounding boxes in [-1, 1] image coordinates. Object features are synthetic:
a static block built from per-attribute embedding vectors plus Gaussian
noise, concatenated with the 8-value spatial layout
[x_min, y_min, x_max, y_max, x_center, y_center, w_box, h_box].

Questions are template-based ("is it a cat ?", "is it red ?", "is it in the
top left ?", "is it big ?"); a rule-based oracle parses them and answers
yes/no against the hidden target, or "na" when a question does not parse.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .config import ConfigError, EnvConfig

CATEGORY_WORDS = [
    "cat", "dog", "car", "bus", "chair", "lamp",
    "bird", "fish", "tree", "book", "cup", "ball",
]
SUPERCATEGORY_WORDS = ["animal", "vehicle", "furniture", "plant"]
COLOR_WORDS = ["red", "blue", "green", "yellow", "black", "white", "purple", "orange"]
SIZE_WORDS = ["small", "big"]
VERTICAL_WORDS = ["top", "bottom"]
HORIZONTAL_WORDS = ["left", "right"]
FUNCTION_WORDS = ["is", "it", "a", "in", "the"]

START_TOKEN = "<start>"
END_TOKEN = "?"
PAD_TOKEN = "<pad>"
ANSWER_TOKENS = ["yes", "no", "na"]

QUADRANTS = ["tl", "tr", "bl", "br"]

# Box areas per size class; the class boundary is 0.25 of a quadrant's area,
# with a margin so generated sizes are never ambiguous.
SMALL_AREA = (0.04, 0.20)
BIG_AREA = (0.30, 0.81)
SIZE_AREA_THRESHOLD = 0.25


class Vocabulary:
    """Dense token<->id maps; ids 0-5 are reserved specials."""

    def __init__(self, tokens: list[str]):
        self.tokens = list(tokens)
        self._ids = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self._ids) != len(self.tokens):
            raise ConfigError("duplicate tokens in vocabulary")
        self.start_id = self._ids[START_TOKEN]
        self.end_id = self._ids[END_TOKEN]
        self.pad_id = self._ids[PAD_TOKEN]
        self.yes_id = self._ids["yes"]
        self.no_id = self._ids["no"]
        self.na_id = self._ids["na"]

    @property
    def size(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self._ids[token]

    def encode(self, words: Iterable[str]) -> np.ndarray:
        return np.array([self._ids[w] for w in words], dtype=np.int64)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[int(i)] for i in ids]

    def text(self, ids: Iterable[int]) -> str:
        return " ".join(self.decode(ids))

    @staticmethod
    def answer_index(answer: str) -> int:
        return ANSWER_TOKENS.index(answer)


@dataclass(frozen=True)
class SceneObject:
    category: int
    color: int
    quadrant: str
    size: str
    box: tuple[float, float, float, float]  # x_min, y_min, x_max, y_max


@dataclass
class SceneSpec:
    objects: list[SceneObject]
    target_index: int
    seed: int

    @property
    def n_real(self) -> int:
        return len(self.objects)

    @property
    def target(self) -> SceneObject:
        return self.objects[self.target_index]

    def to_dict(self, env: "Environment") -> dict:
        return {
            "seed": self.seed,
            "target_index": self.target_index,
            "objects": [
                {
                    "category": env.category_words[o.category],
                    "color": env.color_words[o.color],
                    "quadrant": o.quadrant,
                    "size": o.size,
                    "box": list(o.box),
                }
                for o in self.objects
            ],
        }

    @classmethod
    def from_dict(cls, data: dict, env: "Environment") -> "SceneSpec":
        objects = [
            SceneObject(
                category=env.category_words.index(o["category"]),
                color=env.color_words.index(o["color"]),
                quadrant=o["quadrant"],
                size=o["size"],
                box=tuple(o["box"]),
            )
            for o in data["objects"]
        ]
        return cls(objects=objects, target_index=data["target_index"], seed=data["seed"])


class ParsedQuestion(NamedTuple):
    kind: str  # category | supercategory | color | location | size
    value: str

    @property
    def is_entity(self) -> bool:
        return self.kind in ("category", "supercategory")


class QuestionTemplate(NamedTuple):
    kind: str
    value: str
    words: tuple[str, ...]


def spatial_vector(box: tuple[float, float, float, float]) -> np.ndarray:
    x0, y0, x1, y1 = box
    return np.array(
        [x0, y0, x1, y1, (x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0],
        dtype=np.float64,
    )


def quadrant_of_box(box: tuple[float, float, float, float]) -> str:
    xc = (box[0] + box[2]) / 2.0
    yc = (box[1] + box[3]) / 2.0
    return ("t" if yc < 0 else "b") + ("l" if xc < 0 else "r")


PAD_SPATIAL = np.array([-1.0, -1.0, -1.0, -1.0, -1.0, -1.0, 0.0, 0.0])


class Environment:
    """Scene generator, vocabulary, templates and oracle for one config."""

    def __init__(self, cfg: EnvConfig):
        cfg.validate()
        if cfg.n_categories > len(CATEGORY_WORDS):
            raise ConfigError(f"at most {len(CATEGORY_WORDS)} categories supported")
        if cfg.n_colors > len(COLOR_WORDS):
            raise ConfigError(f"at most {len(COLOR_WORDS)} colors supported")
        self.cfg = cfg
        self.category_words = CATEGORY_WORDS[: cfg.n_categories]
        self.color_words = COLOR_WORDS[: cfg.n_colors]
        n_super = -(-cfg.n_categories // 3)  # ceil
        self.supercategory_words = SUPERCATEGORY_WORDS[:n_super]

        setup_rng = np.random.default_rng(np.random.SeedSequence(cfg.env_seed))
        order = setup_rng.permutation(cfg.n_categories)
        self.taxonomy = np.empty(cfg.n_categories, dtype=np.int64)
        for rank, cat in enumerate(order):
            self.taxonomy[cat] = rank % n_super
        self._category_vecs = setup_rng.normal(size=(cfg.n_categories, cfg.category_dim))
        self._color_vecs = setup_rng.normal(size=(cfg.n_colors, cfg.color_dim))
        self._size_vecs = setup_rng.normal(size=(2, cfg.size_dim))

        self.vocab = Vocabulary(
            [START_TOKEN, END_TOKEN, PAD_TOKEN]
            + ANSWER_TOKENS
            + FUNCTION_WORDS
            + self.category_words
            + self.supercategory_words
            + self.color_words
            + VERTICAL_WORDS
            + HORIZONTAL_WORDS
            + SIZE_WORDS
        )

    # ------------------------------------------------------------------
    # scenes
    # ------------------------------------------------------------------
    def generate_scene(self, seed: int) -> tuple[SceneSpec, np.ndarray]:
        """Deterministically build a scene and its slots x feature_dim matrix."""
        cfg = self.cfg
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        count = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
        n_active = int(
            rng.integers(cfg.min_scene_categories, cfg.max_scene_categories + 1)
        )
        palette = rng.choice(cfg.n_categories, size=n_active, replace=False)
        objects = []
        for _ in range(count):
            category = int(palette[rng.integers(n_active)])
            color = int(rng.integers(cfg.n_colors))
            quadrant = QUADRANTS[int(rng.integers(4))]
            size = SIZE_WORDS[int(rng.integers(2))]
            box = self._sample_box(rng, quadrant, size)
            objects.append(SceneObject(category, color, quadrant, size, box))
        target = int(rng.integers(count))
        scene = SceneSpec(objects=objects, target_index=target, seed=seed)

        features = np.zeros((cfg.slots, cfg.feature_dim), dtype=np.float64)
        features[:, cfg.static_dim :] = PAD_SPATIAL
        for i, obj in enumerate(objects):
            static = np.concatenate(
                [
                    self._category_vecs[obj.category],
                    self._color_vecs[obj.color],
                    self._size_vecs[SIZE_WORDS.index(obj.size)],
                ]
            )
            if cfg.noise_sigma > 0:
                static = static + rng.normal(0.0, cfg.noise_sigma, cfg.static_dim)
            features[i, : cfg.static_dim] = static
            features[i, cfg.static_dim :] = spatial_vector(obj.box)
        return scene, features

    @staticmethod
    def _sample_box(rng: np.random.Generator, quadrant: str, size: str) -> tuple:
        lo, hi = SMALL_AREA if size == "small" else BIG_AREA
        area = rng.uniform(lo, hi)
        aspect = float(np.exp(rng.uniform(-0.45, 0.45)))
        w = float(np.sqrt(area * aspect))
        w = min(max(w, area / 0.95), 0.95)
        h = area / w
        qx = 0.0 if quadrant[1] == "l" else 1.0  # right end of quadrant x-range
        qy = 0.0 if quadrant[0] == "t" else 1.0
        x0 = (qx - 1.0) + rng.uniform(0.0, 1.0 - w)
        y0 = (qy - 1.0) + rng.uniform(0.0, 1.0 - h)
        return (x0, y0, x0 + w, y0 + h)

    def regenerate_features(self, scene: SceneSpec) -> np.ndarray:
        """Rebuild the feature matrix from the scene's stored seed."""
        rebuilt, features = self.generate_scene(scene.seed)
        if rebuilt.objects != scene.objects:
            raise ConfigError(
                f"scene seed {scene.seed} does not reproduce under this env config"
            )
        return features

    def retarget(self, scene: SceneSpec, rng: np.random.Generator) -> SceneSpec:
        """Same scene, a different target object."""
        if scene.n_real < 2:
            raise ValueError("cannot retarget a single-object scene")
        shift = int(rng.integers(1, scene.n_real))
        new_target = (scene.target_index + shift) % scene.n_real
        return SceneSpec(objects=scene.objects, target_index=new_target, seed=scene.seed)

    # ------------------------------------------------------------------
    # questions
    # ------------------------------------------------------------------
    def templates(self) -> list[QuestionTemplate]:
        out = []
        for word in self.category_words:
            out.append(QuestionTemplate("category", word, ("is", "it", "a", word, "?")))
        for word in self.supercategory_words:
            out.append(
                QuestionTemplate("supercategory", word, ("is", "it", "a", word, "?"))
            )
        for word in self.color_words:
            out.append(QuestionTemplate("color", word, ("is", "it", word, "?")))
        for quad in QUADRANTS:
            v = VERTICAL_WORDS[0] if quad[0] == "t" else VERTICAL_WORDS[1]
            h = HORIZONTAL_WORDS[0] if quad[1] == "l" else HORIZONTAL_WORDS[1]
            out.append(
                QuestionTemplate("location", quad, ("is", "it", "in", "the", v, h, "?"))
            )
        for word in SIZE_WORDS:
            out.append(QuestionTemplate("size", word, ("is", "it", word, "?")))
        return out

    def parse_question(self, token_ids) -> ParsedQuestion | None:
        words = []
        for tid in token_ids:
            tid = int(tid)
            if not (0 <= tid < self.vocab.size):
                return None
            words.append(self.vocab.tokens[tid])
        n = len(words)
        if n == 5 and words[:3] == ["is", "it", "a"] and words[4] == "?":
            noun = words[3]
            if noun in self.category_words:
                return ParsedQuestion("category", noun)
            if noun in self.supercategory_words:
                return ParsedQuestion("supercategory", noun)
            return None
        if n == 4 and words[:2] == ["is", "it"] and words[3] == "?":
            attr = words[2]
            if attr in self.color_words:
                return ParsedQuestion("color", attr)
            if attr in SIZE_WORDS:
                return ParsedQuestion("size", attr)
            return None
        if (
            n == 7
            and words[:4] == ["is", "it", "in", "the"]
            and words[4] in VERTICAL_WORDS
            and words[5] in HORIZONTAL_WORDS
            and words[6] == "?"
        ):
            quad = ("t" if words[4] == VERTICAL_WORDS[0] else "b") + (
                "l" if words[5] == HORIZONTAL_WORDS[0] else "r"
            )
            return ParsedQuestion("location", quad)
        return None

    def question_matches(self, parsed: ParsedQuestion, obj: SceneObject) -> bool:
        if parsed.kind == "category":
            return self.category_words[obj.category] == parsed.value
        if parsed.kind == "supercategory":
            return self.supercategory_words[self.taxonomy[obj.category]] == parsed.value
        if parsed.kind == "color":
            return self.color_words[obj.color] == parsed.value
        if parsed.kind == "location":
            return obj.quadrant == parsed.value
        if parsed.kind == "size":
            return obj.size == parsed.value
        raise ValueError(f"unknown question kind {parsed.kind!r}")

    def oracle_answer(
        self, scene: SceneSpec, token_ids, rng: np.random.Generator | None = None
    ) -> str:
        """Answer a question about the scene's target; unparseable -> 'na'."""
        parsed = self.parse_question(token_ids)
        if parsed is None:
            return "na"
        answer = "yes" if self.question_matches(parsed, scene.target) else "no"
        if self.cfg.oracle_noise_p > 0.0:
            if rng is None:
                raise ValueError("oracle_noise_p > 0 requires an rng")
            if rng.random() < self.cfg.oracle_noise_p:
                answer = "no" if answer == "yes" else "yes"
        return answer

    def question_label(self, token_ids) -> str:
        """Coarse strategy label: entity, attribute, or other."""
        parsed = self.parse_question(token_ids)
        if parsed is None:
            return "other"
        return "entity" if parsed.is_entity else "attribute"


class ScriptedQuestioner:
    """Deterministic question policy used to build training dialogues.

    Asks category questions (most common candidate category first) until a
    "yes", then narrows color, location and size among the remaining
    candidates, and finally fills the question budget with fresh attribute
    questions so a game always uses exactly its budget without repeats.
    """

    def __init__(self, env: Environment, scene: SceneSpec):
        self.env = env
        self.scene = scene
        self.candidates = list(range(scene.n_real))
        self.asked: set[tuple[str, str]] = set()
        self.category_known = False
        self._pending: ParsedQuestion | None = None

    def _candidate_objects(self) -> list[SceneObject]:
        return [self.scene.objects[i] for i in self.candidates]

    def _ranked_values(self, kind: str) -> list[str]:
        values: dict[str, int] = {}
        for obj in self._candidate_objects():
            if kind == "category":
                val = self.env.category_words[obj.category]
            elif kind == "color":
                val = self.env.color_words[obj.color]
            elif kind == "location":
                val = obj.quadrant
            else:
                val = obj.size
            values[val] = values.get(val, 0) + 1
        ranked = sorted(values.items(), key=lambda kv: (-kv[1], kv[0]))
        return [v for v, _ in ranked if (kind, v) not in self.asked]

    def next_question(self) -> ParsedQuestion:
        if not self.candidates:  # only reachable under a noisy oracle
            self.candidates = list(range(self.scene.n_real))
            self.category_known = False
        if not self.category_known:
            options = self._ranked_values("category")
            if options:
                return self._pick(ParsedQuestion("category", options[0]))
        for kind in ("color", "location", "size"):
            options = self._ranked_values(kind)
            if len(options) > 1:
                return self._pick(ParsedQuestion(kind, options[0]))
        # Budget filler: unasked attribute questions over the whole grammar,
        # then entity questions as a last resort.
        for template in sorted(
            self.env.templates(),
            key=lambda t: (t.kind in ("category", "supercategory"), t.kind, t.value),
        ):
            if (template.kind, template.value) not in self.asked:
                return self._pick(ParsedQuestion(template.kind, template.value))
        raise RuntimeError("question grammar exhausted")  # budgets never get this far

    def _pick(self, question: ParsedQuestion) -> ParsedQuestion:
        self.asked.add((question.kind, question.value))
        self._pending = question
        return question

    def tokens_for(self, question: ParsedQuestion) -> np.ndarray:
        for template in self.env.templates():
            if (template.kind, template.value) == (question.kind, question.value):
                return self.env.vocab.encode(template.words)
        raise ValueError(f"no template for {question}")

    def observe(self, answer: str) -> None:
        question = self._pending
        if question is None:
            raise RuntimeError("observe called before next_question")
        self._pending = None
        if answer == "na":
            return
        keep = answer == "yes"
        self.candidates = [
            i
            for i in self.candidates
            if self.env.question_matches(question, self.scene.objects[i]) == keep
        ]
        if keep and question.kind == "category":
            self.category_known = True

    def guess(self) -> int:
        return self.candidates[0] if self.candidates else 0


def scripted_dialogue(
    env: Environment, scene: SceneSpec, max_questions: int
) -> tuple[list[tuple[np.ndarray, str]], int]:
    """Play the scripted policy against the oracle.

    Returns ([(question_token_ids, answer)], guess_index).
    """
    script = ScriptedQuestioner(env, scene)
    rounds = []
    for _ in range(max_questions):
        question = script.next_question()
        tokens = script.tokens_for(question)
        answer = env.oracle_answer(scene, tokens)
        script.observe(answer)
        rounds.append((tokens, answer))
    return rounds, script.guess()


def write_scene_corpus(path: str | Path, scenes: list[SceneSpec], env: Environment) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for scene in scenes:
            fh.write(json.dumps(scene.to_dict(env), sort_keys=True) + "\n")


def read_scene_corpus(path: str | Path, env: Environment) -> list[SceneSpec]:
    scenes = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                scenes.append(SceneSpec.from_dict(json.loads(line), env))
    return scenes
