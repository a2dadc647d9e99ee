"""Teacher-forced training loop with adaptive-moment updates, plus bitwise
checkpointing.

Determinism contract: fixed seed fixes the shuffle order, every reduction is
an explicit Python-ordered sum, and parameters update in sorted name order, so
two runs with the same seed produce identical loss curves and identical
checkpoint bytes.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arrays import read_array, write_array
from .corpus import DatasetManifest, EmotionTaxonomy, Vocabulary
from .model import DualPathModel, ModelConfig
from .objectives import LossConfig
from .tensor import Tensor


class TrainingError(Exception):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 7e-4
    batch_size: int = 8
    steps: int = 500
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float | None = None
    shuffle: bool = True
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size <= 0 or self.steps < 0:
            raise ValueError("rates and sizes must be positive")

    def to_dict(self) -> dict:
        d = {k: v for k, v in vars(self).items() if k != "loss"}
        d["loss"] = vars(self.loss).copy()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["loss"] = LossConfig(**d.get("loss", {}))
        return cls(**d)


class Adam:
    """Adaptive-moment estimation over a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(sorted(params.items()))
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


def clip_global_norm(params: dict[str, Tensor], max_norm: float) -> None:
    total = 0.0
    for name in sorted(params):
        g = params[name].grad
        if g is not None:
            total += float((g * g).sum())
    norm = np.sqrt(total)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for name in sorted(params):
            if params[name].grad is not None:
                params[name].grad *= scale


@dataclass
class TrainResult:
    model: DualPathModel
    curve: list[tuple[int, float, float, float]]  # step, total, caption, classification
    final_step: int
    rng_state: dict


def train(manifest: DatasetManifest, taxonomy: EmotionTaxonomy, vocab: Vocabulary,
          model_config: ModelConfig, config: TrainConfig,
          model: DualPathModel | None = None) -> TrainResult:
    """Run ``config.steps`` teacher-forced updates over the manifest.

    Each batch averages per-caption total losses; a non-finite batch loss
    aborts immediately, naming the step.
    """
    if model is None:
        model = DualPathModel(model_config, taxonomy, vocab)
    samples = manifest.load_samples(taxonomy)
    items = [(i, j) for i, s in enumerate(samples) for j in range(len(s.captions))]
    if not items:
        raise TrainingError("no captions to train on")
    rng = np.random.default_rng(config.seed)
    params = model.parameters()
    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps)

    curve: list[tuple[int, float, float, float]] = []
    queue: list[tuple[int, int]] = []
    for step in range(1, config.steps + 1):
        batch: list[tuple[int, int]] = []
        while len(batch) < config.batch_size:
            if not queue:
                order = rng.permutation(len(items)) if config.shuffle else np.arange(len(items))
                queue = [items[k] for k in order]
            batch.append(queue.pop(0))
        opt.zero_grad()
        total = Tensor(0.0)
        cap_sum = cls_sum = 0.0
        for si, ci in batch:
            t, cap, cls = model.sample_losses(samples[si], ci, config.loss)
            total = total + t
            cap_sum += float(cap.data)
            cls_sum += float(cls.data)
        total = total / float(len(batch))
        if not np.isfinite(total.data):
            raise TrainingError(f"non-finite loss at step {step} "
                                f"(batch {[samples[si].id for si, _ in batch]})")
        total.backward()
        if config.grad_clip is not None:
            clip_global_norm(params, config.grad_clip)
        opt.step()
        curve.append((step, float(total.data), cap_sum / len(batch), cls_sum / len(batch)))
    return TrainResult(model, curve, config.steps, rng.bit_generator.state)


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------


def _param_file(name: str) -> str:
    return name.replace(".", "__")


def save_checkpoint(out_dir: Path | str, model: DualPathModel, config: TrainConfig,
                    step: int, rng_state: dict | None = None,
                    curve: list | None = None) -> None:
    """Write parameters as f64 arrays plus config.json / loss_curve.csv.

    Float64 payloads make the reload-forward bitwise identical; the f32 flavor
    of the same container stays reserved for feature matrices.
    """
    out_dir = Path(out_dir)
    param_dir = out_dir / "params"
    if param_dir.exists():
        shutil.rmtree(param_dir)
    param_dir.mkdir(parents=True)
    params = model.parameters()
    for name in sorted(params):
        write_array(param_dir / _param_file(name), params[name].data, dtype="f64")
    meta = {
        "model": model.config.to_dict(),
        "train": config.to_dict(),
        "step": step,
        "rng_state": rng_state,
        "param_names": sorted(params),
    }
    (out_dir / "config.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    model.taxonomy.save(out_dir / "taxonomy.json")
    model.vocab.save(out_dir / "vocab.json")
    if curve is not None:
        write_loss_curve(out_dir / "loss_curve.csv", curve)


def write_loss_curve(path: Path | str, curve: list) -> None:
    lines = ["step,total_loss,caption_loss,classification_loss"]
    for step, total, cap, cls in curve:
        lines.append(f"{step},{total!r},{cap!r},{cls!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_loss_curve(path: Path | str) -> list[tuple[int, float, float, float]]:
    rows = Path(path).read_text().splitlines()[1:]
    out = []
    for row in rows:
        s, t, cap, cls = row.split(",")
        out.append((int(s), float(t), float(cap), float(cls)))
    return out


def load_checkpoint(ckpt_dir: Path | str) -> tuple[DualPathModel, TrainConfig, dict]:
    """Rebuild the model and overwrite its parameters bitwise."""
    ckpt_dir = Path(ckpt_dir)
    meta = json.loads((ckpt_dir / "config.json").read_text())
    taxonomy = EmotionTaxonomy.load(ckpt_dir / "taxonomy.json")
    vocab = Vocabulary.load(ckpt_dir / "vocab.json")
    model_config = ModelConfig.from_dict(meta["model"])
    model = DualPathModel(model_config, taxonomy, vocab)
    params = model.parameters()
    if sorted(params) != meta["param_names"]:
        raise TrainingError("checkpoint parameter names do not match the rebuilt model")
    for name in meta["param_names"]:
        arr = read_array(ckpt_dir / "params" / (_param_file(name) + ".f64"))
        if arr.shape != params[name].data.shape:
            raise TrainingError(f"checkpoint shape mismatch for {name}")
        params[name].data = arr.astype(np.float64)
    return model, TrainConfig.from_dict(meta["train"]), meta
