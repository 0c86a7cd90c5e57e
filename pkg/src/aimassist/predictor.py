"""Neural movement predictor: feature encoding, a small dense network
trained from scratch with backprop, synthetic data generation, and the
blend that applies its output to a movement vector.

The network maps 2N relative cursor-history coordinates plus a G x G
prospective-target grid to a movement direction and a confidence. Training
is plain seeded mini-batch SGD; gradients are verified against central
finite differences in the test suite.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels, scene, seeds

_NORM_EPS2 = 1e-24  # softens the direction norm so the loss is smooth at 0
# training surrogate: cos_m = o.l / sqrt(|o|^2 + m^2). The margin bounds the
# otherwise 1/|o| gradient of the plain cosine, which blows up whenever the
# raw head output starts near zero.
TRAIN_NORM_MARGIN = 1.0
HISTORY_INIT_GAIN = 4.0  # first-layer init gain over the small history columns
# harvested labels closer than this to the target flip too fast to be useful
MIN_LABEL_DIST_PX = 60.0


class DimensionError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    """Contract between a checkpoint and the runtime feature encoding."""
    n_hist: int = 16
    interval_s: float = 0.05
    grid: int = 8
    tick_rate: float = scene.DEFAULT_TICK_RATE

    @property
    def step_ticks(self) -> int:
        return max(1, round(self.interval_s * self.tick_rate))

    @property
    def feature_length(self) -> int:
        return 2 * self.n_hist + self.grid * self.grid

    def to_json(self) -> dict:
        return {"n_hist": self.n_hist, "interval_s": self.interval_s,
                "grid": self.grid, "tick_rate": self.tick_rate}

    @staticmethod
    def from_json(d: dict) -> "EncoderConfig":
        return EncoderConfig(n_hist=int(d["n_hist"]), interval_s=float(d["interval_s"]),
                             grid=int(d["grid"]), tick_rate=float(d["tick_rate"]))


class PredictorModel:
    """Three dense layers (tanh, tanh, linear head of direction + confidence)."""

    def __init__(self, sizes=(96, 64, 64, 3), seed: int = 0,
                 encoder: EncoderConfig | None = None,
                 weights=None, biases=None):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) != 4:
            raise DimensionError(f"expected 4 layer sizes, got {sizes}")
        if sizes[-1] != 3:
            raise DimensionError("output head must be 3 (direction + confidence)")
        self.sizes = sizes
        self.encoder = encoder or EncoderConfig()
        if self.encoder.feature_length != sizes[0]:
            raise DimensionError(
                f"encoder produces {self.encoder.feature_length} features, "
                f"model expects {sizes[0]}")
        self.activations = ("tanh", "tanh", "linear")
        if weights is not None:
            self.w = [np.ascontiguousarray(w, dtype=float) for w in weights]
            self.b = [np.ascontiguousarray(b, dtype=float) for b in biases]
        else:
            rng = seeds.split(seed, "model-init")
            self.w = [rng.normal(0.0, 1.0 / math.sqrt(sizes[i]),
                                 size=(sizes[i + 1], sizes[i]))
                      for i in range(3)]
            self.b = [np.zeros(sizes[i + 1]) for i in range(3)]
            # history offsets are diagonal-normalized and therefore tiny
            # (~1e-2); widen their first-layer columns so the motion signal
            # starts at unit variance like the grid columns
            self.w[0][:, :2 * self.encoder.n_hist] *= HISTORY_INIT_GAIN
        for i in range(3):
            if self.w[i].shape != (self.sizes[i + 1], self.sizes[i]):
                raise DimensionError(f"layer {i} weight shape {self.w[i].shape} "
                                     f"does not chain {self.sizes}")
            if self.b[i].shape != (self.sizes[i + 1],):
                raise DimensionError(f"layer {i} bias shape {self.b[i].shape}")
            if not (np.isfinite(self.w[i]).all() and np.isfinite(self.b[i]).all()):
                raise CheckpointError(f"layer {i} has non-finite parameters")

    def copy(self) -> "PredictorModel":
        return PredictorModel(self.sizes, encoder=self.encoder,
                              weights=[w.copy() for w in self.w],
                              biases=[b.copy() for b in self.b])

    def parameters(self):
        for i in range(3):
            yield f"w{i}", self.w[i]
            yield f"b{i}", self.b[i]


def forward(model: PredictorModel, f: np.ndarray) -> tuple[tuple[float, float], float]:
    """Single-sample forward pass: ((dir_x, dir_y), confidence).

    The direction is unit-normalized; an exactly-zero head falls back to
    (1, 0) with confidence 0.5 (sigmoid of 0).
    """
    f = np.ascontiguousarray(f, dtype=float)
    if f.shape != (model.sizes[0],):
        raise DimensionError(f"feature length {f.shape} != {model.sizes[0]}")
    dx, dy, conf = kernels.mlp_forward(model.w[0], model.b[0], model.w[1],
                                       model.b[1], model.w[2], model.b[2], f)
    return (float(dx), float(dy)), float(conf)


def _batch_forward(model, x):
    z1 = x @ model.w[0].T + model.b[0]
    h1 = np.tanh(z1)
    z2 = h1 @ model.w[1].T + model.b[1]
    h2 = np.tanh(z2)
    o = h2 @ model.w[2].T + model.b[2]
    return h1, h2, o


_CONF_SMOOTH = 0.05


def _head_loss(o, labels, lam):
    """Mean training loss and dL/dO for the margin-cosine + confidence head.

    Direction: norm-margin cosine (bounded gradients near |o| = 0).
    Confidence target: a smooth max(0, cos_m), so the blend weight trains
    toward zero whenever the predicted direction is uninformative; the
    target depends on the direction, so the regularizer feeds back into the
    direction gradient."""
    d = o[:, :2]
    nsoft = np.sqrt(np.einsum("ij,ij->i", d, d) + TRAIN_NORM_MARGIN ** 2)
    dot = np.einsum("ij,ij->i", d, labels)
    cos = dot / nsoft
    conf = 1.0 / (1.0 + np.exp(-o[:, 2]))
    root = np.sqrt(cos ** 2 + _CONF_SMOOTH ** 2)
    a = 0.5 * (cos + root)
    per = (1.0 - cos) + lam * (conf - a) ** 2
    m = o.shape[0]
    da_dcos = 0.5 * (1.0 + cos / root)
    dcos = -1.0 - lam * 2.0 * (conf - a) * da_dcos
    dcos_do = labels / nsoft[:, None] - (cos / nsoft ** 2)[:, None] * d
    do = np.zeros_like(o)
    do[:, :2] = dcos[:, None] * dcos_do / m
    do[:, 2] = 2.0 * lam * (conf - a) * conf * (1.0 - conf) / m
    return float(per.mean()), do


def loss(prediction, label, confidence: float | None = None, lam: float = 0.0) -> float:
    """1 - cosine(prediction, label) plus the confidence regularizer.

    Zero iff the prediction aligns with the (unit) label and the lam-term
    vanishes.
    """
    p = np.asarray(prediction, dtype=float)
    l = np.asarray(label, dtype=float)
    cos = float(p @ l) / math.sqrt(float(p @ p) + _NORM_EPS2)
    out = 1.0 - cos
    if lam and confidence is not None:
        out += lam * (confidence - 0.5 * (1.0 + cos)) ** 2
    return float(out)


def loss_and_gradients(model: PredictorModel, x: np.ndarray, labels: np.ndarray,
                       lam: float = 0.1):
    """Mean loss over a batch and gradients for every parameter tensor."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    labels = np.atleast_2d(np.asarray(labels, dtype=float))
    h1, h2, o = _batch_forward(model, x)
    val, do = _head_loss(o, labels, lam)
    dw2_ = do @ model.w[2]
    dz2 = dw2_ * (1.0 - h2 ** 2)
    dw1_ = dz2 @ model.w[1]
    dz1 = dw1_ * (1.0 - h1 ** 2)
    grads = {
        "w2": do.T @ h2, "b2": do.sum(axis=0),
        "w1": dz2.T @ h1, "b1": dz2.sum(axis=0),
        "w0": dz1.T @ x, "b0": dz1.sum(axis=0),
    }
    return val, grads


def batch_loss(model: PredictorModel, x, labels, lam: float = 0.1) -> float:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    labels = np.atleast_2d(np.asarray(labels, dtype=float))
    _, _, o = _batch_forward(model, x)
    val, _ = _head_loss(o, labels, lam)
    return val


@dataclass(frozen=True)
class TrainHyper:
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0
    lam: float = 0.3
    # fraction of samples whose grid block is zeroed during training; keeps
    # the motion-history pathway primary and the target grid auxiliary, so
    # the model does not latch onto spawn-geometry shortcuts
    grid_dropout: float = 0.7


@dataclass
class TrainingSet:
    features: np.ndarray  # (m, d)
    labels: np.ndarray    # (m, 2), unit rows
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.features) == 0:
            raise DimensionError("training set is empty")
        norms = np.linalg.norm(self.labels, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise DimensionError("labels must be unit length")

    def __len__(self):
        return len(self.features)

    def balance_report(self) -> dict:
        """Label-direction octant counts (45-degree sectors, ccw from +x)."""
        ang = np.arctan2(self.labels[:, 1], self.labels[:, 0])
        octant = ((ang + 2.0 * np.pi) // (np.pi / 4.0)).astype(int) % 8
        counts = np.bincount(octant, minlength=8)
        return {"octants": counts.tolist(), "total": int(len(self)),
                **{k: v for k, v in self.meta.items() if k == "per_class"}}


def train(model: PredictorModel, train_set: TrainingSet,
          hyper: TrainHyper = TrainHyper()) -> tuple[PredictorModel, list[float]]:
    """Seeded mini-batch SGD. Returns a trained copy and the per-epoch mean
    loss curve; aborts on non-finite loss."""
    out = model.copy()
    x = np.ascontiguousarray(train_set.features, dtype=float)
    labels = np.ascontiguousarray(train_set.labels, dtype=float)
    if x.shape[1] != out.sizes[0]:
        raise DimensionError(f"feature dim {x.shape[1]} != model input {out.sizes[0]}")
    rng = seeds.split(hyper.seed, "train-shuffle")
    m = len(x)
    grid_lo = 2 * out.encoder.n_hist
    curve = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(m)
        total = 0.0
        nb = 0
        for lo in range(0, m, hyper.batch_size):
            idx = order[lo:lo + hyper.batch_size]
            xb = x[idx]
            if hyper.grid_dropout > 0.0:
                mask = rng.random(len(idx)) < hyper.grid_dropout
                if mask.any():
                    xb = xb.copy()
                    xb[mask, grid_lo:] = 0.0
            val, grads = loss_and_gradients(out, xb, labels[idx], hyper.lam)
            if not math.isfinite(val):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {nb}: {val}")
            for i in range(3):
                out.w[i] -= hyper.learning_rate * grads[f"w{i}"]
                out.b[i] -= hyper.learning_rate * grads[f"b{i}"]
            total += val
            nb += 1
        curve.append(total / nb)
    return out, curve


def encode(history, targets, viewport, cfg: EncoderConfig = EncoderConfig()) -> np.ndarray:
    """Encode a cursor-history buffer and prospective-target positions.

    history: (k, 2) pixel positions sampled once per tick, most recent
    last (k >= 1; short histories back-pad with the oldest sample).
    targets: iterable of (x, y) screen positions; non-finite entries are
    skipped.
    """
    pos = np.atleast_2d(np.asarray(history, dtype=float))
    if len(pos) < 1:
        raise DimensionError("history needs at least one sample")
    cap = (cfg.n_hist - 1) * cfg.step_ticks + 1
    hist = np.zeros((cap, 2))
    k = len(pos)
    tick_idx = k - 1
    hist_len = min(k, cap)
    for i in range(hist_len):
        idx = tick_idx - i
        hist[idx % cap] = pos[k - 1 - i]
    tlist = [(float(p[0]), float(p[1])) for p in targets]
    if tlist:
        txy = np.asarray(tlist, dtype=float)
        tval = np.array([1 if (math.isfinite(p[0]) and math.isfinite(p[1])) else 0
                         for p in tlist], dtype=np.uint8)
    else:
        txy = np.empty((0, 2))
        tval = np.empty(0, dtype=np.uint8)
    f = np.empty(cfg.feature_length)
    kernels.encode_features(f, hist, hist_len, tick_idx, cfg.step_ticks,
                            cfg.n_hist, cfg.grid, float(viewport[0]),
                            float(viewport[1]), txy, tval)
    return f


def nn_assist(sample, direction, confidence: float, beta: float) -> tuple[float, float]:
    """Blend a raw movement vector toward the predicted direction."""
    if not 0.0 <= beta <= 1.0:
        raise DimensionError("beta must be in [0, 1]")
    vx, vy = kernels.nn_blend(sample.raw[0], sample.raw[1],
                              direction[0], direction[1], confidence, beta)
    return (float(vx), float(vy))


def save_checkpoint(model: PredictorModel, path: str) -> None:
    doc = {
        "schema": "aimassist.model.v1",
        "sizes": list(model.sizes),
        "activations": list(model.activations),
        "encoder": model.encoder.to_json(),
        "weights": [w.reshape(-1).tolist() for w in model.w],
        "biases": [b.tolist() for b in model.b],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path: str, runtime: EncoderConfig | None = None) -> PredictorModel:
    """Load a checkpoint, refusing encoder-contract or shape mismatches."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != "aimassist.model.v1":
        raise CheckpointError(f"{path}: unsupported schema {doc.get('schema')!r}")
    sizes = tuple(doc["sizes"])
    if tuple(doc.get("activations", ())) != ("tanh", "tanh", "linear"):
        raise CheckpointError(f"{path}: unsupported activations {doc.get('activations')}")
    enc = EncoderConfig.from_json(doc["encoder"])
    if runtime is not None and enc != runtime:
        raise CheckpointError(
            f"{path}: encoder contract {enc} does not match runtime {runtime}")
    try:
        weights = [np.asarray(doc["weights"][i], dtype=float).reshape(sizes[i + 1], sizes[i])
                   for i in range(3)]
        biases = [np.asarray(doc["biases"][i], dtype=float) for i in range(3)]
    except ValueError as e:
        raise CheckpointError(f"{path}: weight shapes do not chain {sizes}: {e}")
    return PredictorModel(sizes, encoder=enc, weights=weights, biases=biases)


def _uniform_training_spec(seed: int, n_targets: int, tick_rate: float) -> "scene.TrialSpec":
    """Locate trial with targets uniform over the viewport.

    The canonical center-biased spawn would correlate grid cells with label
    directions and teach the model a geometry shortcut; training data uses
    uniform placements so the target grid carries no spawn prior."""
    rng = seeds.split(seed, "train-spawn")
    cam = scene.Camera()
    w, h = cam.viewport
    targets = []
    for i in range(n_targets):
        sx = float(rng.uniform(0.03 * w, 0.97 * w))
        sy = float(rng.uniform(0.03 * h, 0.97 * h))
        depth = float(rng.uniform(*scene.SPAWN_DEPTH_RANGE_M))
        targets.append(scene.Target(id=i, position=scene._unproject(cam, sx, sy, depth)))
    return scene.TrialSpec(mode="locate", targets=tuple(targets), camera=cam,
                           tick_rate=tick_rate, seed=seed)


def generate_training_set(trials: int, seed: int,
                          classes=("mouse", "controller", "head", "image"),
                          cfg: EncoderConfig = EncoderConfig(),
                          n_targets: int = 4,
                          max_examples: int | None = None) -> TrainingSet:
    """Run seeded agent trials with known intended targets and label every
    sampled tick with the unit vector cursor -> active target."""
    from . import agents, harness  # lazy: avoids a module cycle

    if trials <= 0:
        raise DimensionError("trials must be > 0")
    feats = []
    labels = []
    per_class = {c: 0 for c in classes}
    cap = None if max_examples is None else -(-max_examples // len(classes))
    child_seeds = seeds.trial_seed_sequence(seed, trials)
    for i in range(trials):
        cls = classes[i % len(classes)]
        if cap is not None and per_class[cls] >= cap:
            if all(v >= cap for v in per_class.values()):
                break
            continue
        spec = _uniform_training_spec(child_seeds[i], n_targets, cfg.tick_rate)
        src = agents.AgentSource(agents.preset(cls), seed=child_seeds[i])
        runner = harness.TrialRunner(spec, None, src, feature_cfg=cfg,
                                     min_label_dist=MIN_LABEL_DIST_PX)
        runner.run()
        for f, lab in runner.feature_log:
            if cap is not None and per_class[cls] >= cap:
                break
            feats.append(f)
            labels.append(lab)
            per_class[cls] += 1
    if max_examples is not None:
        feats = feats[:max_examples]
        labels = labels[:max_examples]
    return TrainingSet(features=np.asarray(feats), labels=np.asarray(labels),
                       seed=seed, meta={"per_class": per_class})


def straight_line_set(n: int, seed: int, cfg: EncoderConfig = EncoderConfig(),
                      viewport=scene.DEFAULT_VIEWPORT) -> TrainingSet:
    """Noise-free straight-to-target trajectories (held-out evaluation set)."""
    rng = seeds.split(seed, "straight-set")
    w, h = float(viewport[0]), float(viewport[1])
    feats = []
    labels = []
    for _ in range(n):
        start = np.array([rng.uniform(0.1 * w, 0.9 * w), rng.uniform(0.1 * h, 0.9 * h)])
        tgt = np.array([rng.uniform(0.05 * w, 0.95 * w), rng.uniform(0.05 * h, 0.95 * h)])
        gap = tgt - start
        dist = np.linalg.norm(gap)
        if dist < 50.0:
            tgt = start + np.array([120.0, 0.0])
            gap = tgt - start
            dist = np.linalg.norm(gap)
        u = gap / dist
        speed = rng.uniform(3.0, 14.0)  # px per tick
        # full history windows, like mid-trial runtime encoding
        k = int(rng.integers((cfg.n_hist - 1) * cfg.step_ticks + 2, 120))
        positions = [start + u * speed * j for j in range(k)]
        feats.append(encode(positions, [tuple(tgt)], viewport, cfg))
        labels.append(u)
    return TrainingSet(features=np.asarray(feats), labels=np.asarray(labels), seed=seed)


def evaluate_cosine(model: PredictorModel, eval_set: TrainingSet) -> float:
    """Mean cosine similarity between predicted directions and labels."""
    _, _, o = _batch_forward(model, eval_set.features)
    d = o[:, :2]
    n = np.sqrt(np.einsum("ij,ij->i", d, d) + _NORM_EPS2)
    cos = np.einsum("ij,ij->i", d, eval_set.labels) / n
    return float(cos.mean())
