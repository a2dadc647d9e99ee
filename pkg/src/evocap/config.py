"""Flat dotted-key run configuration.

A run config is a JSON object whose keys all come from the registry below;
files and ``--set key=value`` overrides merge on top of the defaults, and the
effective result is echoed next to every run's outputs so a run can be
reproduced from its snapshot alone.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .evolution import ELEMENT_THEN_SUBSPACE
from .model import ModelConfig
from .objectives import LossConfig
from .training import TrainConfig

SEED_ENV_VAR = "EVOCAP_SEED"

DEFAULTS: dict[str, object] = {
    "seed": 0,
    # model
    "model.d_video": 300,
    "model.d_text": 300,
    "model.d_emotion": 300,
    "model.hidden_size": 512,
    "model.top_k": 5,
    "model.extension_size": 100,
    "model.subspace_sizes": [2, 3, 5, 6, 10],
    "model.heads": 1,
    "model.ff_dim": None,
    "model.positional": False,
    "model.prev_word_input": True,
    "model.evolution_order": ELEMENT_THEN_SUBSPACE,
    "model.element_level": True,
    "model.subspace_level": True,
    "model.max_caption_len": 15,
    # training
    "train.learning_rate": 7e-4,
    "train.batch_size": 8,
    "train.steps": 500,
    "train.grad_clip": None,
    "train.shuffle": True,
    # loss
    "loss.emotion_penalty": 0.1,
    "loss.caption_weight": 1.0,
    "loss.classification_weight": 0.2,
    # decoding
    "decode.mode": "greedy",
    "decode.beam_size": 3,
    "decode.max_len": 15,
    # evaluation
    "eval.hybrid_weight": 0.5,
    # synthetic corpus
    "synth.videos": 16,
    "synth.vocab_size": 60,
    "synth.categories": 2,
    "synth.words_per_category": 4,
    "synth.frames": 4,
    "synth.d_appearance": 16,
    "synth.d_motion": 16,
    "synth.phases": 1,
}


class ConfigError(Exception):
    pass


def _check_keys(keys, where: str) -> None:
    unknown = [k for k in keys if k not in DEFAULTS]
    if unknown:
        raise ConfigError(f"unknown config keys in {where}: {sorted(unknown)}")


def load_config(path: Path | str | None = None, overrides: list[str] | None = None,
                seed_flag: int | None = None) -> dict:
    """Merge defaults <- config file <- --set overrides <- --seed flag.

    The EVOCAP_SEED environment variable supplies the seed only when nothing
    else set one explicitly.
    """
    cfg = dict(DEFAULTS)
    seed_explicit = False
    if path is not None:
        try:
            file_cfg = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        _check_keys(file_cfg, str(path))
        cfg.update(file_cfg)
        seed_explicit = seed_explicit or "seed" in file_cfg
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        key = key.strip()
        _check_keys([key], "--set")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        cfg[key] = value
        seed_explicit = seed_explicit or key == "seed"
    if seed_flag is not None:
        cfg["seed"] = seed_flag
        seed_explicit = True
    if not seed_explicit and os.environ.get(SEED_ENV_VAR):
        cfg["seed"] = int(os.environ[SEED_ENV_VAR])
    cfg["seed"] = int(cfg["seed"])
    return cfg


def write_effective(cfg: dict, out_dir: Path | str) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "effective_config.json").write_text(
        json.dumps(cfg, sort_keys=True, indent=1) + "\n")


def model_config(cfg: dict, d_appearance: int, d_motion: int) -> ModelConfig:
    return ModelConfig(
        d_appearance=d_appearance,
        d_motion=d_motion,
        d_video=int(cfg["model.d_video"]),
        d_text=int(cfg["model.d_text"]),
        d_emotion=int(cfg["model.d_emotion"]),
        hidden_size=int(cfg["model.hidden_size"]),
        top_k=int(cfg["model.top_k"]),
        extension_size=int(cfg["model.extension_size"]),
        subspace_sizes=tuple(cfg["model.subspace_sizes"]),
        heads=int(cfg["model.heads"]),
        ff_dim=None if cfg["model.ff_dim"] is None else int(cfg["model.ff_dim"]),
        positional=bool(cfg["model.positional"]),
        prev_word_input=bool(cfg["model.prev_word_input"]),
        evolution_order=str(cfg["model.evolution_order"]),
        element_level=bool(cfg["model.element_level"]),
        subspace_level=bool(cfg["model.subspace_level"]),
        max_caption_len=int(cfg["model.max_caption_len"]),
        seed=int(cfg["seed"]),
    )


def train_config(cfg: dict) -> TrainConfig:
    loss = LossConfig(
        emotion_penalty=float(cfg["loss.emotion_penalty"]),
        caption_weight=float(cfg["loss.caption_weight"]),
        classification_weight=float(cfg["loss.classification_weight"]),
    )
    clip = cfg["train.grad_clip"]
    return TrainConfig(
        learning_rate=float(cfg["train.learning_rate"]),
        batch_size=int(cfg["train.batch_size"]),
        steps=int(cfg["train.steps"]),
        seed=int(cfg["seed"]),
        grad_clip=None if clip is None else float(clip),
        shuffle=bool(cfg["train.shuffle"]),
        loss=loss,
    )
