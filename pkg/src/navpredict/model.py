"""Map-aware multi-modal trajectory predictor with analytic gradients.

Architecture, kept deliberately small and fully transparent:

* agent encoder: the 19 frame-to-frame displacement vectors of the
  observed track (translation invariant), flattened and passed through
  two affine layers with a ReLU in between;
* map encoder: each map point, expressed relative to the last observed
  position, is lifted by affine+ReLU layers to a key and a value vector;
* fusion: single-query scaled dot-product attention of the agent vector
  over the map keys, added residually -- this produces the latent
  embedding that distillation attaches to;
* decoder: one affine head per mode emitting 30 cumulative displacement
  steps, plus an affine head for confidence logits.

Training uses a winner-takes-all loss: squared error of the best mode
plus cross-entropy on its confidence. All gradients are computed by
hand and validated against central finite differences in the tests.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .scenario import FUTURE_LEN, OBSERVED_LEN

__all__ = [
    "ModelConfig",
    "ModelParams",
    "PARAM_FIELDS",
    "PredictionSet",
    "NumericError",
    "EMBED_PRESETS",
    "init_params",
    "encode_agent",
    "encode_map",
    "fuse",
    "decode",
    "forward",
    "model_loss",
    "loss_and_grads",
    "select_map_points",
    "params_to_vector",
    "vector_to_params",
    "zeros_like_params",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
]

CHECKPOINT_VERSION = 1

# (teacher width, enlarged student width) pairs at the two stock scales.
EMBED_PRESETS = {"small": (64, 96), "large": (128, 192)}

_N_DELTA_FEATURES = 2 * (OBSERVED_LEN - 1)


class NumericError(ArithmeticError):
    """A forward or backward pass produced a non-finite value."""


@dataclass(frozen=True)
class ModelConfig:
    d: int = 64
    k: int = 6
    hidden: int = 64
    map_radius: float = 50.0
    map_source: str = "nav"          # hd | nav | none

    def __post_init__(self):
        if self.d < 1 or self.k < 1 or self.hidden < 1:
            raise ValueError("d, k and hidden must be positive")
        if self.map_source not in ("hd", "nav", "none"):
            raise ValueError(f"unknown map source {self.map_source!r}")


# Field order doubles as the checkpoint layout order.
PARAM_FIELDS = ("w1", "b1", "w2", "b2", "wk", "bk", "wv", "bv",
                 "wdec", "bdec", "wconf", "bconf")


@dataclass
class ModelParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wdec: np.ndarray
    bdec: np.ndarray
    wconf: np.ndarray
    bconf: np.ndarray

    def arrays(self):
        return [getattr(self, name) for name in PARAM_FIELDS]


@dataclass
class PredictionSet:
    trajectories: np.ndarray             # (k, FUTURE_LEN, 2)
    confidences: np.ndarray              # (k,), on the simplex


def _shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    d, h, k = config.d, config.hidden, config.k
    out = 2 * FUTURE_LEN
    return [
        ("w1", (h, _N_DELTA_FEATURES)), ("b1", (h,)),
        ("w2", (d, h)), ("b2", (d,)),
        ("wk", (d, 2)), ("bk", (d,)),
        ("wv", (d, 2)), ("bv", (d,)),
        ("wdec", (k, out, d)), ("bdec", (k, out)),
        ("wconf", (k, d)), ("bconf", (k,)),
    ]


def init_params(config: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """Gaussian init scaled by 1/sqrt(fan_in); biases start at zero.

    Map encoder weights start an extra factor smaller: their inputs are
    point offsets in meters (up to the map radius), so unit-scale init
    would saturate the attention softmax from the first step.
    """
    map_scale = 1.0 / max(config.map_radius, 1.0)
    values = {}
    for name, shape in _shapes(config):
        if name.startswith("b"):
            values[name] = np.zeros(shape)
        else:
            fan_in = shape[-1]
            std = 1.0 / np.sqrt(fan_in)
            if name in ("wk", "wv"):
                std *= map_scale
            values[name] = rng.normal(0.0, std, size=shape)
    return ModelParams(**values)


def zeros_like_params(params: ModelParams) -> ModelParams:
    return ModelParams(**{name: np.zeros_like(getattr(params, name))
                          for name in PARAM_FIELDS})


def params_to_vector(params: ModelParams) -> np.ndarray:
    return np.concatenate([a.ravel() for a in params.arrays()])


def vector_to_params(vec: np.ndarray, config: ModelConfig) -> ModelParams:
    values = {}
    offset = 0
    for name, shape in _shapes(config):
        size = int(np.prod(shape))
        values[name] = vec[offset:offset + size].reshape(shape).copy()
        offset += size
    if offset != vec.size:
        raise ValueError(f"parameter vector has {vec.size} entries, "
                         f"expected {offset}")
    return ModelParams(**values)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def encode_agent(observed: np.ndarray, params: ModelParams):
    """Observed (OBSERVED_LEN, 2) track -> agent embedding of width d."""
    if observed.shape != (OBSERVED_LEN, 2):
        raise ValueError(f"observed track must be ({OBSERVED_LEN}, 2), "
                         f"got {observed.shape}")
    x = np.diff(observed, axis=0).ravel()
    z1 = params.w1 @ x + params.b1
    a1 = np.maximum(z1, 0.0)
    h_a = params.w2 @ a1 + params.b2
    return h_a, (x, z1, a1)


def encode_map(points: np.ndarray, last_pos: np.ndarray,
               params: ModelParams):
    """Map points (m, 2) -> per-point key and value vectors (m, d)."""
    feats = points - last_pos
    zk = feats @ params.wk.T + params.bk
    keys = np.maximum(zk, 0.0)
    zv = feats @ params.wv.T + params.bv
    values = np.maximum(zv, 0.0)
    return keys, values, (feats, zk, zv)


def fuse(h_a: np.ndarray, keys: np.ndarray, values: np.ndarray):
    """Single-query attention over the map set, residual on the agent."""
    if keys.shape[0] == 0:
        return h_a.copy(), None
    scale = 1.0 / np.sqrt(h_a.size)
    scores = keys @ h_a * scale
    weights = _softmax(scores)
    xi = h_a + weights @ values
    return xi, (scale, weights)


def decode(xi: np.ndarray, last_pos: np.ndarray, params: ModelParams):
    """Embedding -> k trajectories (cumulative steps) and confidences."""
    u = np.einsum("koj,j->ko", params.wdec, xi) + params.bdec
    steps = u.reshape(params.wdec.shape[0], FUTURE_LEN, 2)
    trajectories = last_pos + np.cumsum(steps, axis=1)
    logits = params.wconf @ xi + params.bconf
    confidences = _softmax(logits)
    return PredictionSet(trajectories, confidences), (logits,)


def select_map_points(points: np.ndarray, center: np.ndarray,
                      radius: float) -> np.ndarray:
    """Subset of map points within ``radius`` of ``center``."""
    if points.shape[0] == 0:
        return points
    mask = np.linalg.norm(points - center, axis=1) <= radius
    return points[mask]


def forward(observed: np.ndarray, map_points: np.ndarray,
            params: ModelParams):
    """Full forward pass; returns prediction set, embedding and caches."""
    last_pos = observed[-1]
    h_a, agent_cache = encode_agent(observed, params)
    keys, values, map_cache = encode_map(map_points, last_pos, params)
    xi, fuse_cache = fuse(h_a, keys, values)
    pred, dec_cache = decode(xi, last_pos, params)
    cache = (last_pos, h_a, keys, values, xi,
             agent_cache, map_cache, fuse_cache, dec_cache)
    return pred, xi, cache


def model_loss(pred: PredictionSet, future: np.ndarray):
    """Winner-takes-all loss; returns (loss, best mode index).

    The winner is the mode with the lowest average point-wise Euclidean
    error (ties -> lowest index). The loss is its mean squared error over
    all points and coordinates plus the cross-entropy of its confidence.
    """
    if future.shape != (FUTURE_LEN, 2):
        raise ValueError(f"future must be ({FUTURE_LEN}, 2), "
                         f"got {future.shape}")
    diffs = pred.trajectories - future
    avg_err = np.linalg.norm(diffs, axis=2).mean(axis=1)
    m_star = int(np.argmin(avg_err))
    regression = (diffs[m_star] ** 2).sum(axis=1).mean()
    classification = -np.log(pred.confidences[m_star])
    return float(regression + classification), m_star


def loss_and_grads(observed: np.ndarray, map_points: np.ndarray,
                   future: np.ndarray, params: ModelParams,
                   alpha: float = 1.0,
                   teacher_embedding: np.ndarray | None = None,
                   beta: float = 0.0):
    """Total loss, analytic parameter gradients and the embedding.

    With a teacher embedding, the total loss is
    ``alpha * model_loss + beta * distill`` where the distillation term
    is the mean squared error of the first ``len(teacher_embedding)``
    embedding coordinates; the remaining coordinates are unguided.
    """
    pred, xi, cache = forward(observed, map_points, params)
    (last_pos, h_a, keys, values, _xi,
     agent_cache, map_cache, fuse_cache, dec_cache) = cache
    x, z1, a1 = agent_cache
    feats, zk, zv = map_cache
    (logits,) = dec_cache

    lm, m_star = model_loss(pred, future)
    total = alpha * lm
    grads = zeros_like_params(params)
    d = xi.size

    # Decoder heads.
    diff_star = pred.trajectories[m_star] - future
    dtraj = alpha * 2.0 * diff_star / FUTURE_LEN
    dsteps = np.flip(np.cumsum(np.flip(dtraj, axis=0), axis=0), axis=0)
    du = dsteps.ravel()
    grads.wdec[m_star] = np.outer(du, xi)
    grads.bdec[m_star] = du
    dxi = params.wdec[m_star].T @ du

    dlogits = alpha * pred.confidences.copy()
    dlogits[m_star] -= alpha
    grads.wconf = np.outer(dlogits, xi)
    grads.bconf = dlogits
    dxi = dxi + params.wconf.T @ dlogits

    # Distillation term on the guided prefix of the embedding.
    if teacher_embedding is not None:
        dt = teacher_embedding.size
        if d < dt:
            raise ValueError(f"student width {d} smaller than teacher "
                             f"width {dt}")
        prefix = xi[:dt]
        ld = float(np.mean((prefix - teacher_embedding) ** 2))
        total += beta * ld
        dxi[:dt] += beta * 2.0 * (prefix - teacher_embedding) / dt

    # Fusion.
    dh_a = dxi.copy()
    if fuse_cache is not None:
        scale, weights = fuse_cache
        dvalues = weights[:, None] * dxi[None, :]
        dweights = values @ dxi
        dscores = weights * (dweights - weights @ dweights)
        dh_a += keys.T @ dscores * scale
        dkeys = dscores[:, None] * h_a[None, :] * scale

        dzk = dkeys * (zk > 0.0)
        grads.wk = dzk.T @ feats
        grads.bk = dzk.sum(axis=0)
        dzv = dvalues * (zv > 0.0)
        grads.wv = dzv.T @ feats
        grads.bv = dzv.sum(axis=0)

    # Agent encoder.
    grads.w2 = np.outer(dh_a, a1)
    grads.b2 = dh_a
    da1 = params.w2.T @ dh_a
    dz1 = da1 * (z1 > 0.0)
    grads.w1 = np.outer(dz1, x)
    grads.b1 = dz1

    if not np.isfinite(total):
        raise NumericError("non-finite total loss (decoder/loss block)")
    return total, grads, xi


def save_checkpoint(path, params: ModelParams, config: ModelConfig):
    """Write a checkpoint: JSON header line + row-major float64 payload."""
    header = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(config),
        "shapes": [[name, list(getattr(params, name).shape)]
                   for name in PARAM_FIELDS],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for name in PARAM_FIELDS:
            arr = np.ascontiguousarray(getattr(params, name),
                                       dtype="<f8")
            fh.write(arr.tobytes())


def load_checkpoint(path):
    """Read a checkpoint written by :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        header = json.loads(header_line.decode("utf-8"))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"unsupported checkpoint version {header.get('version')}"
            )
        cfg = header["config"]
        config = ModelConfig(
            d=int(cfg["d"]), k=int(cfg["k"]), hidden=int(cfg["hidden"]),
            map_radius=float(cfg["map_radius"]),
            map_source=str(cfg["map_source"]),
        )
        values = {}
        for name, shape in header["shapes"]:
            shape = tuple(int(s) for s in shape)
            count = int(np.prod(shape))
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"checkpoint truncated in array {name!r}")
            values[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    params = ModelParams(**values)
    expected = dict(_shapes(config))
    for name in PARAM_FIELDS:
        if getattr(params, name).shape != expected[name]:
            raise ValueError(f"checkpoint array {name!r} has shape "
                             f"{getattr(params, name).shape}, expected "
                             f"{expected[name]}")
    return params, config
