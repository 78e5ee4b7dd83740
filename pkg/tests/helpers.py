"""Shared test utilities: the finite-difference gradient oracle and tiny
environment/model builders.

The finite-difference code must stay independent of the autodiff engine:
it only ever calls a user-supplied forward function on plain numpy arrays.
"""

from __future__ import annotations

import numpy as np

from inquest.config import AppConfig, EnvConfig, ModelConfig, TrainConfig
from inquest.env import Environment
from inquest.model import QuestionerParams

FD_STEP = 1e-5
FD_RTOL = 1e-4


def numeric_grad(forward, arrays: list[np.ndarray], step: float = FD_STEP) -> list[np.ndarray]:
    """Central finite differences of a scalar-valued forward pass.

    ``forward`` is called with no arguments and must read the (mutated)
    arrays afresh on every call.
    """
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = forward()
            flat[i] = orig - step
            lo = forward()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * step)
        grads.append(g)
    return grads


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    # Central differences resolve gradients down to ~1e-9 absolute (roundoff
    # eps*|loss|/step); below a 1e-3 magnitude floor the comparison degrades
    # to an absolute check at 1e-7, still far above that noise.
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-3)
    return float(np.max(np.abs(analytic - numeric) / denom))


def assert_grads_close(analytic: list[np.ndarray], numeric: list[np.ndarray], rtol: float = FD_RTOL):
    for a, n in zip(analytic, numeric):
        err = rel_error(a, n)
        assert err < rtol, f"gradient mismatch: rel err {err:.3e} >= {rtol}"


def tiny_env(**overrides) -> Environment:
    """A very small environment for fast oracle tests."""
    defaults = dict(
        slots=3,
        min_objects=2,
        max_objects=3,
        n_categories=3,
        n_colors=2,
        category_dim=3,
        color_dim=2,
        size_dim=2,
        noise_sigma=0.05,
        env_seed=11,
    )
    defaults.update(overrides)
    n_cats = defaults["n_categories"]
    defaults.setdefault("min_scene_categories", min(2, n_cats))
    defaults.setdefault("max_scene_categories", min(3, n_cats))
    return Environment(EnvConfig(**defaults))


def tiny_model_config(**overrides) -> ModelConfig:
    defaults = dict(embed_dim=6, glimpses=2)
    defaults.update(overrides)
    return ModelConfig(**defaults)


def tiny_params(env: Environment, model_cfg: ModelConfig | None = None, seed: int = 0) -> QuestionerParams:
    cfg = model_cfg or tiny_model_config()
    rng = np.random.default_rng(seed)
    return QuestionerParams.create(
        cfg, slots=env.cfg.slots, feature_dim=env.cfg.feature_dim, vocab=env.vocab, rng=rng
    )


def tiny_app_config(**train_overrides) -> AppConfig:
    """Small but complete end-to-end config for fast training tests."""
    train_defaults = dict(
        max_questions=3,
        max_words=8,
        sl_games=40,
        sl_epochs=3,
        sl_batch=16,
        rl_epochs=3,
        rl_games=40,
        rl_batch=16,
        guesser_games=60,
        guesser_epochs=3,
        guesser_batch=16,
        guesser_hidden=16,
        seed=0,
    )
    train_defaults.update(train_overrides)
    return AppConfig(
        env=EnvConfig(
            slots=4,
            min_objects=2,
            max_objects=4,
            n_categories=3,
            n_colors=2,
            category_dim=4,
            color_dim=3,
            size_dim=2,
            noise_sigma=0.05,
            env_seed=5,
        ),
        model=ModelConfig(embed_dim=8, glimpses=2),
        train=TrainConfig(**train_defaults),
    ).validate()
