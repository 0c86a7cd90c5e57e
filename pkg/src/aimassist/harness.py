"""Trial execution and scoring.

Runs Locate/Select/Follow trials tick by tick (input -> assist -> cursor
integration -> mode rule), producing one SubtaskRecord per target, and
aggregates records into per-class summary tables.

Two execution paths produce identical records: the fused numba kernel
(agent batches) and the incremental TrialRunner (live sessions, scripted
replays, and the pure-Python mirror of the kernel). Both compose the same
per-tick functions from `kernels` in the same order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from decimal import Decimal, ROUND_HALF_UP

import numpy as np

from . import kernels, scene, seeds
from .agents import AgentParams, AgentSource
from .assist import (DEFAULT_ATTRACTOR_WEIGHT, AssistConfig, MoveSample,
                     WorldInfo, apply_assist)
from .scene import TrialSpec

RECORDS_SCHEMA = "aimassist.records.v1"

_MODE_CODE = {"locate": kernels.MODE_LOCATE, "select": kernels.MODE_SELECT,
              "follow": kernels.MODE_FOLLOW}
_METHOD_CODE = {"none": kernels.METHOD_NONE, "lerp": kernels.METHOD_LERP,
                "gravity": kernels.METHOD_GRAVITY, "predictor": kernels.METHOD_NN}
_CAUSE_NAME = {kernels.CAUSE_NONE: "none", kernels.CAUSE_EXPIRED: "expired",
               kernels.CAUSE_NEVER_VISIBLE: "never_visible"}

# fallback encoder geometry for kernel calls that never use the predictor
_ENC_DEFAULT = (16, 3, 8)  # n_hist, step_ticks, grid


class HarnessError(ValueError):
    pass


class ExportIOError(HarnessError):
    """File-level failure while reading or writing records."""


@dataclass
class SubtaskRecord:
    """Outcome of one target's activation-to-completion-or-expiry episode."""
    target_id: int
    mode: str
    success: bool
    cause: str  # none | expired | never_visible
    appear_x: float
    appear_y: float
    appear_center_dist_px: float
    appear_cursor_dist_px: float
    camera_dist_m: float
    acquire_time_s: float
    overshoot_time_s: float
    extra_time_s: float
    follow_fraction: float
    fly_time_s: float
    fly_distance_m: float
    t_activate_s: float
    t_complete_s: float
    trial: int = 0
    seed: int = 0
    agent: str = ""
    assist: str = "none"
    speed_m_s: float = 0.0


CSV_COLUMNS = [f.name for f in fields(SubtaskRecord)]


class ScriptedSource:
    """Replays a fixed per-tick movement log.

    moves: a sequence of (dx, dy) indexed by global tick, or a dict
    {tick: (dx, dy)}; missing ticks are zero movement.
    """

    def __init__(self, moves):
        if isinstance(moves, dict):
            self._moves = dict(moves)
            self._seq = None
        else:
            self._seq = [tuple(m) for m in moves]
            self._moves = None
        self._tick = 0
        self._dt = 0.0

    def reset(self, dt, cursor):
        self._tick = 0
        self._dt = dt

    def sample(self, cursor, target, dt) -> MoveSample:
        if self._seq is not None:
            m = self._seq[self._tick] if self._tick < len(self._seq) else (0.0, 0.0)
        else:
            m = self._moves.get(self._tick, (0.0, 0.0))
        s = MoveSample(raw=(float(m[0]), float(m[1])), t=self._tick * dt,
                       cursor=(float(cursor[0]), float(cursor[1])))
        self._tick += 1
        return s


class TrialRunner:
    """Incremental per-tick trial execution.

    Used by the live session service, by scripted replays, and as the
    pure-Python mirror of the fused kernel. Call step() per tick (passing a
    raw movement to override the input source), or run() to exhaust an
    agent/scripted source.
    """

    def __init__(self, spec: TrialSpec, config: AssistConfig | None = None,
                 source=None, seed: int | None = None, model=None,
                 feature_cfg=None, min_label_dist: float = 60.0):
        self.spec = spec
        self.config = config or AssistConfig()
        self.source = source
        self.seed = spec.seed if seed is None else seed
        self.dt = spec.dt
        self.mode_code = _MODE_CODE[spec.mode]
        cam = spec.camera
        self._cam = cam.packed()
        self.vw = float(cam.viewport[0])
        self.vh = float(cam.viewport[1])
        self.cursor = (self.vw * 0.5, self.vh * 0.5)
        self.model = model
        if self.config.method == "predictor":
            from . import predictor
            if self.model is None:
                if not self.config.predictor_path:
                    raise HarnessError("predictor assist needs a model or checkpoint path")
                self.model = predictor.load_checkpoint(self.config.predictor_path)
            if abs(self.model.encoder.tick_rate - spec.tick_rate) > 1e-9:
                raise predictor.CheckpointError(
                    f"model encoded at {self.model.encoder.tick_rate} Hz, "
                    f"trial runs at {spec.tick_rate} Hz")
            feature_cfg = self.model.encoder
        self.feature_cfg = feature_cfg
        self.min_label_dist = min_label_dist
        if feature_cfg is not None:
            self._hcap = (feature_cfg.n_hist - 1) * feature_cfg.step_ticks + 1
            self._hist = np.empty((self._hcap, 2))
            self._feat = np.empty(feature_cfg.feature_length)
            self._enc_xy = np.empty((1, 2))
            self._enc_valid = np.zeros(1, np.uint8)
        self.feature_log: list[tuple[np.ndarray, np.ndarray]] = []
        if source is not None:
            source.reset(self.dt, self.cursor)
        self.records: list[SubtaskRecord] = []
        self.tick_global = 0
        self.finished = False
        self.last_raw = (0.0, 0.0)
        self.last_assisted = (0.0, 0.0)
        self._k = -1
        self._advance_target()

    # -- subtask lifecycle ------------------------------------------------

    def _advance_target(self):
        while True:
            self._k += 1
            if self._k >= len(self.spec.targets):
                self.finished = True
                return
            tgt = self.spec.targets[self._k]
            self._tgt = tgt
            self._t_act = self.tick_global * self.dt
            ddx = tgt.position[0] - self._cam[0]
            ddy = tgt.position[1] - self._cam[1]
            ddz = tgt.position[2] - self._cam[2]
            self._cam_dist = math.sqrt(ddx * ddx + ddy * ddy + ddz * ddz)
            fly = tgt.fly_time if tgt.moving else 0.0
            dur = tgt.window_s
            if 0.0 < fly < dur:
                dur = fly
            self._fly = fly
            self._vel3 = tgt.velocity()
            self._n_ticks = int(dur / self.dt - 1e-9) + 1
            sx, sy, sz = kernels.project_point(self._cam, tgt.position[0],
                                               tgt.position[1], tgt.position[2])
            valid = sz > 1e-9
            self._any_vis = bool(valid and 0.0 <= sx <= self.vw and 0.0 <= sy <= self.vh)
            if valid:
                dcx = sx - self.vw * 0.5
                dcy = sy - self.vh * 0.5
                self._appear = (sx, sy, math.sqrt(dcx * dcx + dcy * dcy))
                dux = sx - self.cursor[0]
                duy = sy - self.cursor[1]
                self._appear_cursor = math.sqrt(dux * dux + duy * duy)
            else:
                self._appear = (math.nan, math.nan, math.nan)
                self._appear_cursor = math.nan
            self._st = np.zeros(7)
            self._st[kernels.ST_FIRST_ENTER] = -1.0
            self._completed = False
            self._comp_t = -1.0
            r0x = 0.0
            r0y = 0.0
            if valid:
                r0x = self.cursor[0] - sx
                r0y = self.cursor[1] - sy
                if r0x * r0x + r0y * r0y <= tgt.radius_px * tgt.radius_px:
                    self._st[kernels.ST_INSIDE] = 1.0
                    self._st[kernels.ST_FIRST_ENTER] = 0.0
                    self._st[kernels.ST_TOUCHED] = 1.0
                    if self.mode_code == kernels.MODE_LOCATE:
                        self._completed = True
                        self._comp_t = 0.0
            self._r0 = (r0x, r0y)
            self._tgt_screen = (sx, sy)
            self._tgt_valid = valid
            self._j = 0
            if self._completed:
                self._record()
                continue
            return

    def _record(self):
        st = self._st
        tgt = self._tgt
        success = False
        t_comp = math.nan
        acq = math.nan
        over = math.nan
        extra = math.nan
        frac = math.nan
        if self.mode_code == kernels.MODE_FOLLOW:
            if st[kernels.ST_TOUCHED] > 0.5:
                success = True
                t_comp = self._t_act + st[kernels.ST_TRIP_TICKS] * self.dt
            if st[kernels.ST_TRIP_TICKS] > 0.0:
                frac = st[kernels.ST_ON_TICKS] / st[kernels.ST_TRIP_TICKS]
            else:
                frac = 1.0 if st[kernels.ST_TOUCHED] > 0.5 else 0.0
        elif self._completed:
            success = True
            t_comp = self._t_act + self._comp_t
            if self.mode_code == kernels.MODE_LOCATE:
                acq = self._comp_t
            else:
                over = st[kernels.ST_TOTAL_ON]
                extra = self._comp_t - (st[kernels.ST_FIRST_ENTER] + self.spec.dwell_s)
        if success:
            cause = "none"
        else:
            cause = "expired" if self._any_vis else "never_visible"
        self.records.append(SubtaskRecord(
            target_id=tgt.id, mode=self.spec.mode, success=success, cause=cause,
            appear_x=float(self._appear[0]), appear_y=float(self._appear[1]),
            appear_center_dist_px=float(self._appear[2]),
            appear_cursor_dist_px=float(self._appear_cursor),
            camera_dist_m=float(self._cam_dist),
            acquire_time_s=float(acq), overshoot_time_s=float(over),
            extra_time_s=float(extra), follow_fraction=float(frac),
            fly_time_s=float(self._fly), fly_distance_m=float(tgt.fly_distance),
            t_activate_s=float(self._t_act), t_complete_s=float(t_comp),
            seed=self.seed, assist=self.config.method,
            speed_m_s=float(tgt.speed or 0.0)))

    # -- per-tick execution -----------------------------------------------

    def _encode_current(self):
        cfg = self.feature_cfg
        hl = self.tick_global + 1
        if hl > self._hcap:
            hl = self._hcap
        self._enc_xy[0, 0] = self._tgt_screen[0]
        self._enc_xy[0, 1] = self._tgt_screen[1]
        self._enc_valid[0] = 1 if self._tgt_valid else 0
        kernels.encode_features(self._feat, self._hist, hl, self.tick_global,
                                cfg.step_ticks, cfg.n_hist, cfg.grid,
                                self.vw, self.vh, self._enc_xy, self._enc_valid)

    def step(self, raw=None):
        """Advance one tick; raw (dx, dy) overrides the input source."""
        if self.finished:
            return
        t0 = self._j * self.dt
        if self.feature_cfg is not None:
            hslot = self.tick_global % self._hcap
            self._hist[hslot, 0] = self.cursor[0]
            self._hist[hslot, 1] = self.cursor[1]
        if raw is None:
            sample = self.source.sample(
                self.cursor, self._tgt_screen if self._tgt_valid else None, self.dt)
        else:
            sample = MoveSample(raw=(float(raw[0]), float(raw[1])),
                                t=self.tick_global * self.dt, cursor=self.cursor)
        if self.feature_cfg is not None and self.config.method != "predictor":
            # dataset generation: label = unit vector cursor -> active target
            if self._tgt_valid:
                gx = self._tgt_screen[0] - self.cursor[0]
                gy = self._tgt_screen[1] - self.cursor[1]
                d = math.sqrt(gx * gx + gy * gy)
                if d > self.min_label_dist:
                    self._encode_current()
                    self.feature_log.append(
                        (self._feat.copy(), np.array([gx / d, gy / d])))
        assisted = self._apply(sample)
        self.last_raw = sample.raw
        self.last_assisted = assisted
        cx = self.cursor[0] + assisted[0]
        cy = self.cursor[1] + assisted[1]
        if cx < 0.0:
            cx = 0.0
        elif cx > self.vw:
            cx = self.vw
        if cy < 0.0:
            cy = 0.0
        elif cy > self.vh:
            cy = self.vh
        self.cursor = (cx, cy)
        tl1 = (self._j + 1) * self.dt
        tgt = self._tgt
        px, py, pz = tgt.position
        if self._fly > 0.0:
            tt = tl1 if tl1 < self._fly else self._fly
            px += self._vel3[0] * tt
            py += self._vel3[1] * tt
            pz += self._vel3[2] * tt
        sx1, sy1, sz1 = kernels.project_point(self._cam, px, py, pz)
        v1 = sz1 > 1e-9
        if v1 and 0.0 <= sx1 <= self.vw and 0.0 <= sy1 <= self.vh:
            self._any_vis = True
        r1x = cx - sx1
        r1y = cy - sy1
        done, ct = kernels.subtask_tick(self._st, self._r0[0], self._r0[1],
                                        self._tgt_valid, r1x, r1y, v1,
                                        tgt.radius_px, t0, self.dt,
                                        self.mode_code, self.spec.dwell_s)
        if done:
            self._completed = True
            self._comp_t = ct
        self._r0 = (r1x, r1y)
        self._tgt_screen = (sx1, sy1)
        self._tgt_valid = v1
        self.tick_global += 1
        self._j += 1
        if self._completed or self._j >= self._n_ticks:
            self._record()
            self._advance_target()

    def _apply(self, sample: MoveSample) -> tuple[float, float]:
        method = self.config.method
        if method == "none":
            return sample.raw
        if method in ("lerp", "gravity"):
            if not self._tgt_valid:
                return sample.raw
            world = WorldInfo(targets=[(self._tgt.id, self._tgt_screen)],
                              active_id=self._tgt.id)
            return apply_assist(self.config, sample, world)
        if method == "predictor":
            self._encode_current()
            world = WorldInfo(targets=[(self._tgt.id, self._tgt_screen)]
                              if self._tgt_valid else [],
                              active_id=self._tgt.id, feature=self._feat,
                              model=self.model)
            return apply_assist(self.config, sample, world)
        raise HarnessError(f"unknown assist method {method!r}")

    def run(self) -> list[SubtaskRecord]:
        if self.source is None:
            raise HarnessError("run() needs an input source; use step(raw) for live input")
        while not self.finished:
            self.step()
        return self.records


def _resolve_gravity_weight(config: AssistConfig) -> float:
    if config.gravity.weights:
        return float(config.gravity.weights[0])
    return DEFAULT_ATTRACTOR_WEIGHT


def _run_trial_fused(spec: TrialSpec, params: AgentParams, config: AssistConfig,
                     seed: int, model) -> list[SubtaskRecord]:
    cam = spec.camera.packed()
    targets = spec.targets
    n = len(targets)
    t_pos0 = np.array([t.position for t in targets], dtype=float)
    t_vel = np.array([t.velocity() for t in targets], dtype=float)
    t_fly = np.array([t.fly_time for t in targets], dtype=float)
    t_radius = np.array([t.radius_px for t in targets], dtype=float)
    t_window = np.array([t.window_s for t in targets], dtype=float)
    dt = spec.dt
    total_ticks = 4
    for k in range(n):
        dur = t_window[k]
        if 0.0 < t_fly[k] < dur:
            dur = t_fly[k]
        total_ticks += int(dur / dt - 1e-9) + 1
    rng = seeds.split(seed, "agent")
    phases = rng.random(2) * (2.0 * math.pi)
    tremor_eff = params.tremor_amp_px_s * math.exp(
        params.noise_coeff * rng.standard_normal())
    noise = rng.standard_normal((total_ticks, 4))

    method = _METHOD_CODE[config.method]
    lp = config.lerp
    gf = config.gravity
    zones = np.asarray(gf.zones, dtype=float).reshape(-1, 4)
    if method == kernels.METHOD_NN:
        from . import predictor
        if model is None:
            if not config.predictor_path:
                raise HarnessError("predictor assist needs a model or checkpoint path")
            model = predictor.load_checkpoint(config.predictor_path)
        if abs(model.encoder.tick_rate - spec.tick_rate) > 1e-9:
            raise predictor.CheckpointError(
                f"model encoded at {model.encoder.tick_rate} Hz, "
                f"trial runs at {spec.tick_rate} Hz")
        w = model.w
        b = model.b
        enc = (model.encoder.n_hist, model.encoder.step_ticks, model.encoder.grid)
    else:
        w = [np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((3, 1))]
        b = [np.zeros(1), np.zeros(1), np.zeros(3)]
        enc = _ENC_DEFAULT

    out = kernels.run_trial_kernel(
        cam, t_pos0, t_vel, t_fly, t_radius, t_window,
        _MODE_CODE[spec.mode], dt, spec.dwell_s,
        params.latency_ticks(dt), params.max_speed_px_s, params.gain_hz,
        params.damping, params.noise_coeff, tremor_eff,
        params.tremor_freq_hz, params.lead_s(dt), phases, noise,
        method, lp.radius_px, lp.alpha_max, lp.gamma, 1 if lp.cos_gate else 0,
        gf.radius_px, gf.gamma, gf.kappa, _resolve_gravity_weight(config), zones,
        w[0], b[0], w[1], b[1], w[2], b[2], config.blend, enc[0], enc[1], enc[2])
    (success, cause, appear_x, appear_y, appear_center, appear_cursor, cam_dist,
     acq, over, extra, frac, _on, _trip, t_act, t_comp) = out

    records = []
    for k, tgt in enumerate(targets):
        records.append(SubtaskRecord(
            target_id=tgt.id, mode=spec.mode, success=bool(success[k]),
            cause=_CAUSE_NAME[int(cause[k])] if not success[k] else "none",
            appear_x=float(appear_x[k]), appear_y=float(appear_y[k]),
            appear_center_dist_px=float(appear_center[k]),
            appear_cursor_dist_px=float(appear_cursor[k]),
            camera_dist_m=float(cam_dist[k]),
            acquire_time_s=float(acq[k]), overshoot_time_s=float(over[k]),
            extra_time_s=float(extra[k]), follow_fraction=float(frac[k]),
            fly_time_s=float(tgt.fly_time), fly_distance_m=float(tgt.fly_distance),
            t_activate_s=float(t_act[k]), t_complete_s=float(t_comp[k]),
            seed=seed, assist=config.method, speed_m_s=float(tgt.speed or 0.0)))
    return records


def run_trial(spec: TrialSpec, agent, config: AssistConfig | None = None,
              seed: int | None = None, model=None,
              engine: str = "auto") -> list[SubtaskRecord]:
    """Run one trial and return one record per target.

    agent: AgentParams (fused kernel fast path) or any input source object
    with reset/sample (incremental path). engine: auto | kernel | python;
    both paths produce identical records for the same seed.
    """
    config = config or AssistConfig()
    if seed is None:
        seed = spec.seed
    if engine not in ("auto", "kernel", "python"):
        raise HarnessError(f"unknown engine {engine!r}")
    if isinstance(agent, AgentParams) and engine in ("auto", "kernel"):
        return _run_trial_fused(spec, agent, config, seed, model)
    source = AgentSource(agent, seed=seed) if isinstance(agent, AgentParams) else agent
    runner = TrialRunner(spec, config, source, seed=seed, model=model)
    return runner.run()


# -- batches ---------------------------------------------------------------


def _batch_trial(args):
    (mode, n_targets, follow_speed, child_seed, trial_idx, params, config,
     agent_label, engine) = args
    spec = scene.make_trial_spec(mode, n_targets, seed=child_seed,
                                 follow_speed=follow_speed)
    recs = run_trial(spec, params, config, seed=child_seed, engine=engine)
    for r in recs:
        r.trial = trial_idx
        r.agent = agent_label
    return recs


def run_batch(mode: str, params: AgentParams, config: AssistConfig | None,
              n_trials: int, seed: int, n_targets: int = 5,
              follow_speed: float = 2.0, agent_label: str = "",
              jobs: int = 1, engine: str = "auto") -> list[SubtaskRecord]:
    """Run n_trials independent seeded trials on the canonical geometry."""
    if n_trials <= 0:
        raise HarnessError("n_trials must be > 0")
    config = config or AssistConfig()
    child = seeds.trial_seed_sequence(seed, n_trials)
    args = [(mode, n_targets, follow_speed, child[i], i, params, config,
             agent_label, engine) for i in range(n_trials)]
    records: list[SubtaskRecord] = []
    if jobs <= 1:
        for a in args:
            records.extend(_batch_trial(a))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for recs in pool.map(_batch_trial, args,
                                 chunksize=max(1, n_trials // (jobs * 4))):
                records.extend(recs)
    return records


def evaluate_params(params: AgentParams, budget: int, seed: int,
                    n_targets: int = 5) -> dict:
    """Locate+select metrics for one parameter set (used by calibration)."""
    met = {}
    for mode in ("locate", "select"):
        recs = run_batch(mode, params, AssistConfig(), budget, seed,
                         n_targets=n_targets)
        ok = [r for r in recs if r.success]
        met[f"{mode}_success_pct"] = 100.0 * len(ok) / len(recs)
        if mode == "locate":
            met["locate_avg_time_s"] = (
                float(np.mean([r.acquire_time_s for r in ok])) if ok else None)
        else:
            met["select_avg_overshoot_s"] = (
                float(np.mean([r.overshoot_time_s for r in ok])) if ok else None)
    return met


def evaluate_follow(params: AgentParams, budget: int, seed: int,
                    speeds=(2.0, 5.0, 10.0), n_targets: int = 5) -> dict:
    """Per-speed-band follow success and mean follow fraction."""
    out = {}
    for sp in speeds:
        recs = run_batch("follow", params, AssistConfig(), budget, seed,
                         n_targets=n_targets, follow_speed=sp)
        out[sp] = {
            "success_pct": 100.0 * sum(r.success for r in recs) / len(recs),
            "follow_score_pct": 100.0 * float(np.mean([r.follow_fraction for r in recs])),
        }
    return out


# -- aggregation -----------------------------------------------------------


def round_half_up(x: float, places: int = 1) -> float:
    q = Decimal(10) ** -places
    return float(Decimal(repr(x)).quantize(q, rounding=ROUND_HALF_UP))


@dataclass
class SummaryCell:
    n: int
    success_pct: float
    min_screen_dist_px: float
    max_screen_dist_px: float
    avg_screen_dist_px: float
    avg_score: float
    avg_camera_dist_m: float


@dataclass
class SummaryTable:
    """Per input-class columns; follow mode adds per-speed-band rows."""
    mode: str
    classes: list[str]
    bands: list  # [None] for static modes, else speeds + "average"
    cells: dict  # (band, class) -> SummaryCell

    def to_json(self) -> dict:
        return {
            "schema": "aimassist.summary.v1",
            "mode": self.mode,
            "classes": self.classes,
            "bands": ["average" if b == "average" else b for b in self.bands],
            "cells": {
                f"{band}|{cls}": vars(cell)
                for (band, cls), cell in sorted(self.cells.items(),
                                                key=lambda kv: str(kv[0]))
            },
        }


_CLASS_ORDER = ("head", "image", "mouse", "controller")


def _class_sort_key(name: str):
    return (_CLASS_ORDER.index(name), name) if name in _CLASS_ORDER else (len(_CLASS_ORDER), name)


def _nan_stats(values):
    arr = np.asarray([v for v in values if not math.isnan(v)], dtype=float)
    if arr.size == 0:
        return math.nan, math.nan, math.nan
    return float(arr.min()), float(arr.max()), float(arr.mean())


def _score(mode: str, group: list[SubtaskRecord]) -> float:
    """Mean mode score: locate/select over successful subtasks only, follow
    over all (as a percentage)."""
    if mode == "locate":
        vals = [r.acquire_time_s for r in group if r.success]
    elif mode == "select":
        vals = [r.overshoot_time_s for r in group if r.success]
    else:
        return 100.0 * float(np.mean([r.follow_fraction for r in group]))
    return float(np.mean(vals)) if vals else math.nan


def _cell(mode: str, group: list[SubtaskRecord]) -> SummaryCell:
    n = len(group)
    ok = sum(1 for r in group if r.success)
    mn, mx, avg = _nan_stats([r.appear_center_dist_px for r in group])
    cam = [r.camera_dist_m for r in group if not math.isnan(r.camera_dist_m)]
    return SummaryCell(
        n=n,
        success_pct=round_half_up(100.0 * ok / n, 1),
        min_screen_dist_px=mn, max_screen_dist_px=mx, avg_screen_dist_px=avg,
        avg_score=_score(mode, group),
        avg_camera_dist_m=float(np.mean(cam)) if cam else math.nan)


def aggregate(records: list[SubtaskRecord]) -> SummaryTable:
    """Fold records (one mode) into the per-class summary table."""
    if not records:
        raise HarnessError("no records to aggregate")
    modes = {r.mode for r in records}
    if len(modes) != 1:
        raise HarnessError(f"records mix modes {sorted(modes)}")
    mode = records[0].mode
    classes = sorted({r.agent or "agent" for r in records}, key=_class_sort_key)
    cells = {}
    if mode == "follow":
        bands = sorted({r.speed_m_s for r in records})
        for cls in classes:
            by_cls = [r for r in records if (r.agent or "agent") == cls]
            for band in bands:
                group = [r for r in by_cls if r.speed_m_s == band]
                if group:
                    cells[(band, cls)] = _cell(mode, group)
            cells[("average", cls)] = _cell(mode, by_cls)
        return SummaryTable(mode, classes, list(bands) + ["average"], cells)
    for cls in classes:
        group = [r for r in records if (r.agent or "agent") == cls]
        cells[(None, cls)] = _cell(mode, group)
    return SummaryTable(mode, classes, [None], cells)


def format_summary(table: SummaryTable) -> str:
    """Text rendering shaped like the per-class outcome tables."""
    cols = table.classes
    width = max(12, *(len(c) + 2 for c in cols))
    head = "".join(c.capitalize().rjust(width) for c in cols)
    score_unit = "%" if table.mode == "follow" else " s"

    def fmt_row(label, get):
        row = label.ljust(20)
        for c in cols:
            row += get(c).rjust(width)
        return row

    lines = [f"{table.mode.capitalize()} mode".ljust(20) + head]
    for band in table.bands:
        cellof = lambda c: table.cells.get((band, c))
        if table.mode == "follow":
            label = "Average" if band == "average" else f"{band:g} m/s"
            lines.append(label)
        rows = [
            ("Success", lambda c: f"{cellof(c).success_pct:.1f}%" if cellof(c) else "-"),
            ("Min. Screen Dist.", lambda c: f"{cellof(c).min_screen_dist_px:.0f}px" if cellof(c) else "-"),
            ("Max. Screen Dist.", lambda c: f"{cellof(c).max_screen_dist_px:.0f}px" if cellof(c) else "-"),
            ("Avg. Screen Dist.", lambda c: f"{cellof(c).avg_screen_dist_px:.0f}px" if cellof(c) else "-"),
            ("Avg. Score", lambda c: (f"{cellof(c).avg_score:.3f}{score_unit}"
                                      if cellof(c) and not math.isnan(cellof(c).avg_score) else "-")),
            ("Avg. Distance", lambda c: f"{cellof(c).avg_camera_dist_m:.2f}m" if cellof(c) else "-"),
        ]
        if table.mode == "follow":
            rows = rows[:1] + [rows[4]]  # follow table shows success + score per band
        for label, get in rows:
            lines.append(fmt_row(label, get))
    return "\n".join(lines) + "\n"


# -- import/export ---------------------------------------------------------


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def records_to_csv(records: list[SubtaskRecord]) -> str:
    """Deterministic CSV: fixed column order, shortest-round-trip floats,
    empty cells for NaN. First column carries the schema version."""
    lines = ["schema," + ",".join(CSV_COLUMNS)]
    for r in records:
        vals = [_fmt_value(getattr(r, c)) for c in CSV_COLUMNS]
        lines.append(RECORDS_SCHEMA + "," + ",".join(vals))
    return "\n".join(lines) + "\n"


def records_to_json(records: list[SubtaskRecord]) -> dict:
    def conv(r):
        d = {}
        for c in CSV_COLUMNS:
            v = getattr(r, c)
            if isinstance(v, float) and math.isnan(v):
                v = None
            d[c] = v
        return d
    return {"schema": RECORDS_SCHEMA, "records": [conv(r) for r in records]}


_BOOL_FIELDS = {"success"}
_INT_FIELDS = {"target_id", "trial", "seed"}
_STR_FIELDS = {"mode", "cause", "agent", "assist"}


def _parse_value(col: str, s: str):
    if col in _BOOL_FIELDS:
        return s == "1" or s == "True"
    if col in _INT_FIELDS:
        return int(s)
    if col in _STR_FIELDS:
        return s
    return math.nan if s == "" else float(s)


def csv_to_records(text: str) -> list[SubtaskRecord]:
    lines = [ln for ln in text.splitlines() if ln]
    if not lines:
        raise HarnessError("empty records file")
    header = lines[0].split(",")
    if header[0] != "schema" or header[1:] != CSV_COLUMNS:
        raise HarnessError(f"unexpected records header {header[:3]}...")
    out = []
    for ln in lines[1:]:
        cells = ln.split(",")
        if cells[0] != RECORDS_SCHEMA:
            raise HarnessError(f"unsupported record schema {cells[0]!r}")
        kv = {c: _parse_value(c, s) for c, s in zip(CSV_COLUMNS, cells[1:])}
        out.append(SubtaskRecord(**kv))
    return out


def export_records(records: list[SubtaskRecord], path: str, fmt: str = "csv") -> None:
    import json as _json
    try:
        with open(path, "w") as fh:
            if fmt == "csv":
                fh.write(records_to_csv(records))
            elif fmt == "json":
                _json.dump(records_to_json(records), fh, sort_keys=True)
                fh.write("\n")
            else:
                raise HarnessError(f"unknown format {fmt!r}")
    except OSError as e:
        raise ExportIOError(f"cannot write {path}: {e}") from e


def import_records(path: str) -> list[SubtaskRecord]:
    import json as _json
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ExportIOError(f"cannot read {path}: {e}") from e
    if text.lstrip().startswith("{"):
        doc = _json.loads(text)
        if doc.get("schema") != RECORDS_SCHEMA:
            raise HarnessError(f"unsupported schema {doc.get('schema')!r}")
        out = []
        for d in doc["records"]:
            kv = {c: (math.nan if d[c] is None else d[c]) for c in CSV_COLUMNS}
            kv = {c: _parse_value(c, str(kv[c])) if c in _STR_FIELDS else kv[c]
                  for c in CSV_COLUMNS}
            for c in _BOOL_FIELDS:
                kv[c] = bool(d[c])
            out.append(SubtaskRecord(**kv))
        return out
    return csv_to_records(text)


# -- plot-data series (scatter CSVs for external plotting) -------------------


def plot_series(records: list[SubtaskRecord]) -> dict[str, str]:
    """Per-figure scatter series keyed by file stem."""
    if not records:
        return {}
    mode = records[0].mode
    out = {}
    if mode in ("locate", "select"):
        lines = ["appear_x,appear_y,success"]
        for r in records:
            lines.append(f"{_fmt_value(r.appear_x)},{_fmt_value(r.appear_y)},{int(r.success)}")
        out[f"{mode}_screen_appear"] = "\n".join(lines) + "\n"
        score_col = "acquire_time_s" if mode == "locate" else "extra_time_s"
        lines = [f"camera_dist_m,{score_col},success"]
        for r in records:
            v = r.acquire_time_s if mode == "locate" else r.extra_time_s
            lines.append(f"{_fmt_value(r.camera_dist_m)},{_fmt_value(v)},{int(r.success)}")
        out[f"{mode}_distance_time"] = "\n".join(lines) + "\n"
    else:
        lines = ["fly_time_s,fly_distance_m,success"]
        for r in records:
            lines.append(f"{_fmt_value(r.fly_time_s)},{_fmt_value(r.fly_distance_m)},{int(r.success)}")
        out["follow_flytime_success"] = "\n".join(lines) + "\n"
        lines = ["fly_time_s,follow_fraction,success"]
        for r in records:
            lines.append(f"{_fmt_value(r.fly_time_s)},{_fmt_value(r.follow_fraction)},{int(r.success)}")
        out["follow_flytime_score"] = "\n".join(lines) + "\n"
    return out
