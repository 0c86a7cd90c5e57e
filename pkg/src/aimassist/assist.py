"""Input-augmentation transforms.

Each method maps a raw per-tick movement vector to an adjusted one given
the cursor position and target knowledge. All transforms are pure; none of
them ever moves a stationary cursor, and deviations scale with the input
magnitude so assistance can never act against a user who is not moving.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

METHODS = ("none", "lerp", "gravity", "predictor")


class AssistConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MoveSample:
    """One raw movement vector (px/tick) with the cursor position it applies to."""
    raw: tuple[float, float]
    t: float
    cursor: tuple[float, float]

    def __post_init__(self):
        vals = (*self.raw, self.t, *self.cursor)
        if not all(math.isfinite(v) for v in vals):
            raise AssistConfigError(f"non-finite move sample: {vals}")


@dataclass(frozen=True)
class LerpParams:
    radius_px: float = 250.0
    alpha_max: float = 0.6
    gamma: float = 1.0
    # gate assistance on movement/target alignment (no pull when moving away)
    cos_gate: bool = True

    def __post_init__(self):
        if self.radius_px <= 0:
            raise AssistConfigError("lerp radius must be > 0")
        if not 0.0 <= self.alpha_max <= 1.0:
            raise AssistConfigError("alpha_max must be in [0, 1]")
        if self.gamma <= 0:
            raise AssistConfigError("gamma must be > 0")


@dataclass(frozen=True)
class GravityField:
    """Compiled multi-attractor field. Immutable; share freely."""
    attractors: tuple[tuple[float, float], ...] = ()
    weights: tuple[float, ...] = ()
    radius_px: float = 250.0
    gamma: float = 1.0
    kappa: float = 0.75
    zones: tuple[tuple[float, float, float, float], ...] = ()

    def __post_init__(self):
        if len(self.attractors) != len(self.weights):
            raise AssistConfigError("attractors and weights length mismatch")
        if any(w < 0 for w in self.weights):
            raise AssistConfigError("attractor weights must be >= 0")
        if self.radius_px <= 0 or self.gamma <= 0 or self.kappa <= 0:
            raise AssistConfigError("radius, gamma and kappa must be > 0")
        for z in self.zones:
            if z[0] > z[2] or z[1] > z[3]:
                raise AssistConfigError(f"degenerate exclusion zone {z}")

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        att = np.asarray(self.attractors, dtype=float).reshape(-1, 2)
        wts = np.asarray(self.weights, dtype=float)
        zones = np.asarray(self.zones, dtype=float).reshape(-1, 4)
        return att, wts, zones


@dataclass(frozen=True)
class AssistConfig:
    """Exactly one active method per trial."""
    method: str = "none"
    lerp: LerpParams = field(default_factory=LerpParams)
    lerp_target_id: int | None = None
    gravity: GravityField = field(default_factory=GravityField)
    predictor_path: str | None = None
    blend: float = 0.4

    def __post_init__(self):
        if self.method not in METHODS:
            raise AssistConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not 0.0 <= self.blend <= 1.0:
            raise AssistConfigError("blend must be in [0, 1]")

    def to_json(self) -> dict:
        d = {"schema": "aimassist.assist.v1", "method": self.method}
        if self.method == "lerp":
            d["lerp"] = {
                "radius_px": self.lerp.radius_px,
                "alpha_max": self.lerp.alpha_max,
                "gamma": self.lerp.gamma,
                "cos_gate": self.lerp.cos_gate,
            }
            if self.lerp_target_id is not None:
                d["target_id"] = self.lerp_target_id
        elif self.method == "gravity":
            d["gravity"] = {
                "attractors": [list(a) for a in self.gravity.attractors],
                "weights": list(self.gravity.weights),
                "radius_px": self.gravity.radius_px,
                "gamma": self.gravity.gamma,
                "kappa": self.gravity.kappa,
                "zones": [list(z) for z in self.gravity.zones],
            }
        elif self.method == "predictor":
            d["model"] = self.predictor_path
            d["blend"] = self.blend
        return d

    @staticmethod
    def from_json(d: dict) -> "AssistConfig":
        schema = d.get("schema", "aimassist.assist.v1")
        if schema != "aimassist.assist.v1":
            raise AssistConfigError(f"unsupported assist schema {schema!r}")
        method = d.get("method", "none")
        if method == "lerp":
            lp = d.get("lerp", {})
            return AssistConfig(
                method="lerp",
                lerp=LerpParams(
                    radius_px=float(lp.get("radius_px", 250.0)),
                    alpha_max=float(lp.get("alpha_max", 0.6)),
                    gamma=float(lp.get("gamma", 1.0)),
                    cos_gate=bool(lp.get("cos_gate", True)),
                ),
                lerp_target_id=d.get("target_id"),
            )
        if method == "gravity":
            g = d.get("gravity", {})
            return AssistConfig(
                method="gravity",
                gravity=GravityField(
                    attractors=tuple(tuple(a) for a in g.get("attractors", [])),
                    weights=tuple(g.get("weights", [])),
                    radius_px=float(g.get("radius_px", 250.0)),
                    gamma=float(g.get("gamma", 1.0)),
                    kappa=float(g.get("kappa", 0.75)),
                    zones=tuple(tuple(z) for z in g.get("zones", [])),
                ),
            )
        if method == "predictor":
            return AssistConfig(method="predictor", predictor_path=d.get("model"),
                                blend=float(d.get("blend", 0.4)))
        if method == "none":
            return AssistConfig(method="none")
        raise AssistConfigError(f"unknown method {method!r}")

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @staticmethod
    def loads(s: str) -> "AssistConfig":
        return AssistConfig.from_json(json.loads(s))


DEFAULT_ATTRACTOR_WEIGHT = 0.5


def lerp_assist(sample: MoveSample, target: tuple[float, float],
                params: LerpParams) -> tuple[float, float]:
    """Deviate a movement vector toward one target by linear interpolation.

    The blend grows as the cursor nears the target and (when gated) with
    the alignment of the movement toward it; a zero vector, a cursor on the
    target, or a cursor outside the influence radius pass through unchanged.
    """
    vx, vy = kernels.lerp_eval(sample.cursor[0], sample.cursor[1],
                               sample.raw[0], sample.raw[1],
                               target[0], target[1],
                               params.radius_px, params.alpha_max, params.gamma,
                               1 if params.cos_gate else 0)
    return (float(vx), float(vy))


def gravity_assist(sample: MoveSample, fld: GravityField) -> tuple[float, float]:
    """Deviate a movement vector through the gravity field.

    Inside an exclusion zone the raw input passes through bitwise; the
    summed attraction is capped so |out - raw| <= kappa * |raw|.
    """
    att, wts, zones = fld.arrays()
    vx, vy = kernels.gravity_eval(sample.cursor[0], sample.cursor[1],
                                  sample.raw[0], sample.raw[1],
                                  att, wts, fld.radius_px, fld.gamma, zones,
                                  fld.kappa)
    return (float(vx), float(vy))


def build_gravity_field(targets, zones=(),
                        radius_px: float = 250.0, gamma: float = 1.0,
                        kappa: float = 0.75,
                        weight: float = DEFAULT_ATTRACTOR_WEIGHT) -> GravityField:
    """Compile a field with one equal-weight attractor per target.

    targets: iterable of (id, (x, y)) screen positions; attractors are
    ordered by target id so rebuilding from the same inputs is bit-identical.
    """
    ordered = sorted(targets, key=lambda t: t[0])
    att = tuple((float(p[0]), float(p[1])) for _id, p in ordered)
    return GravityField(attractors=att, weights=(weight,) * len(att),
                        radius_px=radius_px, gamma=gamma, kappa=kappa,
                        zones=tuple(tuple(z) for z in zones))


@dataclass
class WorldInfo:
    """Active-target screen info handed to apply_assist by the runner."""
    targets: list[tuple[int, tuple[float, float]]] = field(default_factory=list)
    active_id: int | None = None
    # runner-maintained extras for the predictor path
    feature: np.ndarray | None = None
    model: object | None = None

    def active_position(self) -> tuple[float, float] | None:
        for tid, pos in self.targets:
            if tid == self.active_id:
                return pos
        return None


def apply_assist(config: AssistConfig, sample: MoveSample,
                 world: WorldInfo | None = None) -> tuple[float, float]:
    """Dispatch a sample through the configured method.

    Total function over valid configs: with no usable target knowledge the
    raw vector passes through. The predictor method needs world.feature and
    world.model prepared by the caller (the trial runner does this).
    """
    if config.method == "none":
        return (float(sample.raw[0]), float(sample.raw[1]))
    if config.method == "lerp":
        if world is None:
            return (float(sample.raw[0]), float(sample.raw[1]))
        want = config.lerp_target_id if config.lerp_target_id is not None else world.active_id
        pos = None
        for tid, p in world.targets:
            if tid == want:
                pos = p
                break
        if pos is None:
            return (float(sample.raw[0]), float(sample.raw[1]))
        return lerp_assist(sample, pos, config.lerp)
    if config.method == "gravity":
        fld = config.gravity
        if world is not None:
            fld = build_gravity_field(world.targets, zones=fld.zones,
                                      radius_px=fld.radius_px, gamma=fld.gamma,
                                      kappa=fld.kappa,
                                      weight=fld.weights[0] if fld.weights
                                      else DEFAULT_ATTRACTOR_WEIGHT)
        return gravity_assist(sample, fld)
    if config.method == "predictor":
        if world is None or world.model is None:
            raise AssistConfigError("predictor method requires a loaded model")
        if world.feature is None:
            raise AssistConfigError("predictor method requires an encoded feature vector")
        m = world.model
        dx, dy, conf = kernels.mlp_forward(m.w[0], m.b[0], m.w[1], m.b[1],
                                           m.w[2], m.b[2], world.feature)
        vx, vy = kernels.nn_blend(sample.raw[0], sample.raw[1], dx, dy, conf,
                                  config.blend)
        return (float(vx), float(vy))
    raise AssistConfigError(f"unknown method {config.method!r}")
