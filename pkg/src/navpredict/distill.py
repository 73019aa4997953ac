"""Teacher-student knowledge distillation and the training loop.

The teacher is an HD-view model trained first and then frozen. During
student training, every scene is passed through both models: the
teacher's embedding (a constant, no gradient flows into it) guides the
first ``d_t`` coordinates of the student's embedding via a mean squared
error term, weighted into the total loss. Any remaining student
coordinates stay unguided and free to encode nav-map-specific
information.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model as m
from .scenario import MapPair, Scene, view_points

__all__ = [
    "EmbeddingSpec",
    "DistillConfig",
    "TrainConfig",
    "TrainResult",
    "distill_loss",
    "total_loss",
    "prepare_map_inputs",
    "train",
    "train_teacher",
    "train_student",
]


@dataclass(frozen=True)
class EmbeddingSpec:
    """Teacher width, student width and the guided prefix (= d_t)."""

    d_t: int
    d: int

    def __post_init__(self):
        if not 1 <= self.d_t <= self.d:
            raise ValueError(
                f"widths must satisfy d >= d_t >= 1, got d={self.d}, "
                f"d_t={self.d_t}"
            )

    @property
    def guided(self) -> int:
        return self.d_t

    @property
    def unguided(self) -> int:
        return self.d - self.d_t


def student_width(d_t: int, variant: str) -> int:
    """Student embedding width for a distillation variant."""
    if variant == "matched":
        return d_t
    if variant == "shared":
        return round(1.5 * d_t)
    raise ValueError(f"unknown variant {variant!r}")


@dataclass(frozen=True)
class DistillConfig:
    alpha: float = 1.0
    beta: float = 1.0
    variant: str = "shared"          # matched | shared
    teacher_checkpoint: str | None = None

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise ValueError("alpha and beta must be finite")
        if self.alpha < 0.0 or self.beta < 0.0:
            raise ValueError("alpha and beta must be non-negative")
        if self.variant not in ("matched", "shared"):
            raise ValueError(f"unknown variant {self.variant!r}")


def distill_loss(xi_teacher: np.ndarray, xi_student: np.ndarray) -> float:
    """Mean squared error over the guided prefix of the student embedding.

    Student coordinates beyond the teacher width are ignored.
    """
    d_t = xi_teacher.size
    if xi_student.size < d_t:
        raise ValueError(
            f"student embedding width {xi_student.size} is smaller than "
            f"teacher width {d_t}"
        )
    diff = xi_student[:d_t] - xi_teacher
    return float(np.mean(diff * diff))


def total_loss(l_model: float, l_dist: float, cfg: DistillConfig) -> float:
    """Weighted sum of model loss and distillation loss."""
    if not (np.isfinite(l_model) and np.isfinite(l_dist)):
        raise ValueError("losses must be finite")
    return cfg.alpha * l_model + cfg.beta * l_dist


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 8
    lr: float = 0.002
    momentum: float = 0.9
    lr_decay: float = 0.7            # per-epoch multiplicative decay
    grad_clip: float = 5.0           # global gradient norm ceiling
    seed: int = 0


@dataclass
class TrainResult:
    params: m.ModelParams
    config: m.ModelConfig
    loss_curve: list[float]          # smoothed loss after each epoch
    final_loss: float


def prepare_map_inputs(scenes: list[Scene], map_points: np.ndarray,
                       radius: float) -> list[np.ndarray]:
    """Per-scene map point subsets around the target's last observation."""
    out = []
    for scene in scenes:
        center = scene.agents[scene.target][-1]
        out.append(m.select_map_points(map_points, center, radius))
    return out


def train(scenes: list[Scene], map_points: np.ndarray,
          config: m.ModelConfig, tcfg: TrainConfig,
          teacher: tuple[m.ModelParams, m.ModelConfig] | None = None,
          teacher_map_points: np.ndarray | None = None,
          dcfg: DistillConfig | None = None) -> TrainResult:
    """SGD with momentum over per-scene winner-takes-all losses.

    With a teacher, each step also runs the frozen teacher forward on its
    own (HD) map view and adds the weighted distillation gradient. The
    loop is single-threaded and bit-reproducible for a fixed seed.
    """
    if not scenes:
        raise ValueError("empty training set")
    rng = np.random.default_rng(tcfg.seed)
    params = m.init_params(config, rng)
    velocity = m.zeros_like_params(params)

    scene_maps = prepare_map_inputs(scenes, map_points, config.map_radius)
    teacher_maps = None
    if teacher is not None:
        t_params, t_config = teacher
        if dcfg is None:
            raise ValueError("teacher given without a distillation config")
        spec = EmbeddingSpec(d_t=t_config.d, d=config.d)
        if config.d != student_width(t_config.d, dcfg.variant):
            raise ValueError(
                f"student width {config.d} does not match variant "
                f"{dcfg.variant!r} for teacher width {t_config.d}"
            )
        if teacher_map_points is None:
            raise ValueError("teacher given without its map view")
        teacher_maps = prepare_map_inputs(scenes, teacher_map_points,
                                          t_config.map_radius)

    alpha = dcfg.alpha if dcfg is not None else 1.0
    beta = dcfg.beta if dcfg is not None else 0.0

    smoothed = None
    curve = []
    lr = tcfg.lr
    order = np.arange(len(scenes))
    for _epoch in range(tcfg.epochs):
        rng.shuffle(order)
        for idx in order:
            scene = scenes[idx]
            observed = scene.agents[scene.target]
            xi_teacher = None
            if teacher is not None:
                _pred, xi_teacher, _cache = m.forward(
                    observed, teacher_maps[idx], t_params
                )
            loss, grads, _xi = m.loss_and_grads(
                observed, scene_maps[idx], scene.future, params,
                alpha=alpha, teacher_embedding=xi_teacher, beta=beta,
            )
            gnorm = math.sqrt(sum(float(np.sum(g * g))
                                  for g in grads.arrays()))
            scale = 1.0
            if tcfg.grad_clip > 0.0 and gnorm > tcfg.grad_clip:
                scale = tcfg.grad_clip / gnorm
            for name in m.PARAM_FIELDS:
                v = getattr(velocity, name)
                v *= tcfg.momentum
                v -= lr * scale * getattr(grads, name)
                getattr(params, name)[...] += v
            smoothed = loss if smoothed is None else \
                0.99 * smoothed + 0.01 * loss
            if not np.isfinite(smoothed):
                raise m.NumericError("training loss diverged")
        curve.append(float(smoothed))
        lr *= tcfg.lr_decay
    return TrainResult(params=params, config=config, loss_curve=curve,
                       final_loss=float(smoothed))


def train_teacher(scenes: list[Scene], world: MapPair,
                  config: m.ModelConfig, tcfg: TrainConfig) -> TrainResult:
    """Train the HD-view teacher to its epoch budget."""
    if config.map_source != "hd":
        raise ValueError("teacher must use the hd map source")
    return train(scenes, view_points(world, "hd"), config, tcfg)


def train_student(scenes: list[Scene], world: MapPair,
                  teacher: tuple[m.ModelParams, m.ModelConfig],
                  dcfg: DistillConfig, tcfg: TrainConfig,
                  map_radius: float | None = None) -> TrainResult:
    """Train a nav-view student guided by a frozen teacher."""
    t_params, t_config = teacher
    config = m.ModelConfig(
        d=student_width(t_config.d, dcfg.variant),
        k=t_config.k,
        hidden=t_config.hidden,
        map_radius=map_radius if map_radius is not None
        else t_config.map_radius,
        map_source="nav",
    )
    return train(scenes, view_points(world, "nav"), config, tcfg,
                 teacher=teacher,
                 teacher_map_points=view_points(world, "hd"),
                 dcfg=dcfg)
