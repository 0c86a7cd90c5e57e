"""Trial environment: 3D target placement, availability windows, follow
paths, and the perspective projection onto the 2D screen the crosshair
lives in.

Lengths are meters (1 unit : 1 m), screen coordinates are pixels, times
are seconds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels, seeds

MODES = ("locate", "select", "follow")

DEFAULT_FOV_DEG = 60.0
DEFAULT_VIEWPORT = (1920, 1080)
DEFAULT_TARGET_RADIUS_PX = 40.0
DEFAULT_WINDOW_S = 10.0
DEFAULT_DWELL_S = 1.0
DEFAULT_TICK_RATE = 60.0

# spawn tuning: center-biased screen sampling with a small wide component
# that may fall off-screen, and a 20-40 m depth shell
SPAWN_SIGMA_PX = 180.0
SPAWN_WIDE_FRACTION = 0.10
SPAWN_WIDE_MARGIN_PX = 60.0
SPAWN_DEPTH_RANGE_M = (20.0, 40.0)
# trip duration band; length scales with speed, capped by what fits on screen
FOLLOW_FLYTIME_RANGE_S = (4.0, 8.0)
FOLLOW_TRIP_MAX_M = 55.0


class SceneError(ValueError):
    pass


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise SceneError("zero-length direction vector")
    return v / n


@dataclass(frozen=True)
class Camera:
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    forward: tuple[float, float, float] = (0.0, 0.0, 1.0)
    up: tuple[float, float, float] = (0.0, 1.0, 0.0)
    fov_deg: float = DEFAULT_FOV_DEG
    viewport: tuple[int, int] = DEFAULT_VIEWPORT

    def __post_init__(self):
        if not (0.0 < self.fov_deg < 180.0):
            raise SceneError(f"fov must be in (0, 180), got {self.fov_deg}")
        if self.viewport[0] <= 0 or self.viewport[1] <= 0:
            raise SceneError(f"viewport must be positive, got {self.viewport}")
        fwd = _unit(np.asarray(self.forward, dtype=float))
        up = np.asarray(self.up, dtype=float)
        right = np.cross(up, fwd)
        if np.linalg.norm(right) < 1e-12:
            raise SceneError("up is parallel to forward")

    @property
    def focal_px(self) -> float:
        return (self.viewport[1] / 2.0) / math.tan(math.radians(self.fov_deg) / 2.0)

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal (right, up, forward) after Gram-Schmidt; world +x maps
        to screen-right under the default axes."""
        fwd = _unit(np.asarray(self.forward, dtype=float))
        right = _unit(np.cross(np.asarray(self.up, dtype=float), fwd))
        up = np.cross(fwd, right)
        return right, up, fwd

    def packed(self) -> np.ndarray:
        """Camera vector consumed by the kernels: [pos, right, up, fwd, focal, w, h]."""
        right, up, fwd = self.basis()
        return np.concatenate([
            np.asarray(self.position, dtype=float), right, up, fwd,
            [self.focal_px, float(self.viewport[0]), float(self.viewport[1])],
        ])

    def to_json(self) -> dict:
        return {
            "position": list(self.position),
            "forward": list(self.forward),
            "up": list(self.up),
            "fov_deg": self.fov_deg,
            "viewport": list(self.viewport),
        }

    @staticmethod
    def from_json(d: dict) -> "Camera":
        return Camera(
            position=tuple(d["position"]),
            forward=tuple(d["forward"]),
            up=tuple(d["up"]),
            fov_deg=float(d["fov_deg"]),
            viewport=(int(d["viewport"][0]), int(d["viewport"][1])),
        )


@dataclass(frozen=True)
class Target:
    id: int
    position: tuple[float, float, float]
    radius_px: float = DEFAULT_TARGET_RADIUS_PX
    window_s: float = DEFAULT_WINDOW_S
    end: tuple[float, float, float] | None = None
    speed: float | None = None

    def __post_init__(self):
        if self.radius_px <= 0:
            raise SceneError(f"target {self.id}: radius must be > 0")
        if self.window_s <= 0:
            raise SceneError(f"target {self.id}: window must be > 0")
        if self.moving:
            if self.speed is None or self.speed <= 0:
                raise SceneError(f"target {self.id}: moving target needs speed > 0")
            if tuple(self.end) == tuple(self.position):
                raise SceneError(f"target {self.id}: end equals start")

    @property
    def moving(self) -> bool:
        return self.end is not None

    @property
    def fly_distance(self) -> float:
        if not self.moving:
            return 0.0
        d = np.asarray(self.end, dtype=float) - np.asarray(self.position, dtype=float)
        return float(np.linalg.norm(d))

    @property
    def fly_time(self) -> float:
        """Trip duration start to end at constant speed."""
        if not self.moving:
            return 0.0
        return self.fly_distance / float(self.speed)

    def velocity(self) -> np.ndarray:
        if not self.moving:
            return np.zeros(3)
        d = np.asarray(self.end, dtype=float) - np.asarray(self.position, dtype=float)
        return d / np.linalg.norm(d) * float(self.speed)

    def to_json(self) -> dict:
        d = {
            "id": self.id,
            "position": list(self.position),
            "radius_px": self.radius_px,
            "window_s": self.window_s,
            "kind": "moving" if self.moving else "static",
        }
        if self.moving:
            d["end"] = list(self.end)
            d["speed"] = self.speed
        return d

    @staticmethod
    def from_json(d: dict) -> "Target":
        moving = d.get("kind", "static") == "moving"
        return Target(
            id=int(d["id"]),
            position=tuple(d["position"]),
            radius_px=float(d["radius_px"]),
            window_s=float(d["window_s"]),
            end=tuple(d["end"]) if moving else None,
            speed=float(d["speed"]) if moving else None,
        )


@dataclass(frozen=True)
class TrialSpec:
    mode: str
    targets: tuple[Target, ...]
    camera: Camera = field(default_factory=Camera)
    dwell_s: float = DEFAULT_DWELL_S
    tick_rate: float = DEFAULT_TICK_RATE
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise SceneError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not self.targets:
            raise SceneError("targets must be nonempty")
        if self.mode == "select" and self.dwell_s <= 0:
            raise SceneError("select mode needs dwell_s > 0")
        if self.tick_rate <= 0:
            raise SceneError("tick_rate must be > 0")
        if self.mode == "follow":
            for t in self.targets:
                if not t.moving:
                    raise SceneError(f"follow mode target {t.id} is static")

    @property
    def dt(self) -> float:
        return 1.0 / self.tick_rate

    def to_json(self) -> dict:
        return {
            "schema": "aimassist.trialspec.v1",
            "mode": self.mode,
            "dwell_s": self.dwell_s,
            "tick_rate": self.tick_rate,
            "seed": self.seed,
            "camera": self.camera.to_json(),
            "targets": [t.to_json() for t in self.targets],
        }

    @staticmethod
    def from_json(d: dict) -> "TrialSpec":
        schema = d.get("schema", "aimassist.trialspec.v1")
        if schema != "aimassist.trialspec.v1":
            raise SceneError(f"unsupported trial spec schema {schema!r}")
        return TrialSpec(
            mode=d["mode"],
            targets=tuple(Target.from_json(t) for t in d["targets"]),
            camera=Camera.from_json(d["camera"]),
            dwell_s=float(d.get("dwell_s", DEFAULT_DWELL_S)),
            tick_rate=float(d.get("tick_rate", DEFAULT_TICK_RATE)),
            seed=int(d.get("seed", 0)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @staticmethod
    def loads(s: str) -> "TrialSpec":
        return TrialSpec.from_json(json.loads(s))


def project(camera: Camera, point) -> tuple[tuple[float, float], bool]:
    """Perspective-project a world point to viewport pixels.

    Returns ((x, y), visible). visible is False when the point is at or
    behind the camera plane (coordinates are then NaN) or outside the
    viewport.
    """
    p = np.asarray(point, dtype=float)
    sx, sy, depth = kernels.project_point(camera.packed(), p[0], p[1], p[2])
    if depth <= 1e-9:
        return (math.nan, math.nan), False
    w, h = camera.viewport
    visible = 0.0 <= sx <= w and 0.0 <= sy <= h
    return (float(sx), float(sy)), visible


def follow_position(target: Target, t: float) -> np.ndarray:
    """Position of a moving target t seconds into its trip, clamped at the end."""
    if not target.moving:
        raise SceneError(f"target {target.id} is static")
    if t < 0:
        raise SceneError("t must be >= 0")
    tt = min(t, target.fly_time)
    return np.asarray(target.position, dtype=float) + target.velocity() * tt


def activation_schedule(spec: TrialSpec, completions: dict[int, float]) -> list[tuple[float, float]]:
    """Per-target (activation, end) times implied by completions.

    Targets activate strictly sequentially; an uncompleted target ends
    (is deleted) window seconds after activation, a completed one at its
    completion time.
    """
    out = []
    t = 0.0
    for tgt in spec.targets:
        window = min(tgt.window_s, tgt.fly_time) if tgt.moving else tgt.window_s
        end = t + window
        if tgt.id in completions:
            end = min(end, completions[tgt.id])
        out.append((t, end))
        t = end
    return out


def active_target(spec: TrialSpec, t: float, completions: dict[int, float] | None = None):
    """Id of the target available at time t, or None when all are done."""
    if t < 0:
        raise SceneError("t must be >= 0")
    sched = activation_schedule(spec, completions or {})
    for tgt, (start, end) in zip(spec.targets, sched):
        if start <= t < end:
            return tgt.id
    return None


def _sample_screen_point(rng: np.random.Generator, w: float, h: float) -> tuple[float, float]:
    if rng.random() < SPAWN_WIDE_FRACTION:
        m = SPAWN_WIDE_MARGIN_PX
        return (float(rng.uniform(-m, w + m)), float(rng.uniform(-m, h + m)))
    while True:
        x = w * 0.5 + rng.normal(0.0, SPAWN_SIGMA_PX)
        y = h * 0.5 + rng.normal(0.0, SPAWN_SIGMA_PX)
        if 0.0 <= x <= w and 0.0 <= y <= h:
            return (float(x), float(y))


def _unproject(camera: Camera, sx: float, sy: float, depth: float) -> tuple[float, float, float]:
    right, up, fwd = camera.basis()
    w, h = camera.viewport
    f = camera.focal_px
    lateral = ((sx - w * 0.5) / f) * right - ((sy - h * 0.5) / f) * up
    p = np.asarray(camera.position, dtype=float) + depth * (fwd + lateral)
    return (float(p[0]), float(p[1]), float(p[2]))


def make_trial_spec(mode: str, n_targets: int, seed: int,
                    camera: Camera | None = None,
                    radius_px: float = DEFAULT_TARGET_RADIUS_PX,
                    window_s: float = DEFAULT_WINDOW_S,
                    dwell_s: float = DEFAULT_DWELL_S,
                    tick_rate: float = DEFAULT_TICK_RATE,
                    follow_speed: float = 2.0) -> TrialSpec:
    """Generate the canonical trial geometry used by batches and calibration.

    Targets spawn on a center-biased screen distribution (a small fraction
    may start off-screen) at 20-40 m depth, mean camera distance about
    30 m. Follow-mode targets travel a 6-16 m lateral path at follow_speed;
    their availability window is the trip time.
    """
    if n_targets <= 0:
        raise SceneError("n_targets must be > 0")
    if mode not in MODES:
        raise SceneError(f"unknown mode {mode!r}")
    cam = camera or Camera()
    w, h = float(cam.viewport[0]), float(cam.viewport[1])
    rng = seeds.split(seed, "scene", mode)
    right, up, _ = cam.basis()

    targets = []
    for i in range(n_targets):
        sx, sy = _sample_screen_point(rng, w, h)
        depth = float(rng.uniform(*SPAWN_DEPTH_RANGE_M))
        pos = _unproject(cam, sx, sy, depth)
        if mode == "follow":
            trip = min(follow_speed * float(rng.uniform(*FOLLOW_FLYTIME_RANGE_S)),
                       FOLLOW_TRIP_MAX_M)
            # keep the trip end near the screen; shrink the trip when the
            # depth leaves no room for it
            for attempt in range(40):
                eff = trip if attempt < 20 else 0.6 * trip
                phi = float(rng.uniform(0.0, 2.0 * math.pi))
                d3 = math.cos(phi) * right + math.sin(phi) * up
                end = tuple(np.asarray(pos) + eff * d3)
                (ex, ey), _vis = project(cam, end)
                if math.isfinite(ex) and -w * 0.15 <= ex <= w * 1.15 and -h * 0.15 <= ey <= h * 1.15:
                    trip = eff
                    break
            targets.append(Target(id=i, position=pos, radius_px=radius_px,
                                  window_s=trip / follow_speed, end=end,
                                  speed=follow_speed))
        else:
            targets.append(Target(id=i, position=pos, radius_px=radius_px,
                                  window_s=window_s))
    return TrialSpec(mode=mode, targets=tuple(targets), camera=cam,
                     dwell_s=dwell_s, tick_rate=tick_rate, seed=seed)


def with_seed(spec: TrialSpec, seed: int) -> TrialSpec:
    return replace(spec, seed=seed)
