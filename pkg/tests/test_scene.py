import json
import math

import numpy as np
import pytest

from aimassist import scene
from aimassist.scene import (Camera, SceneError, Target, TrialSpec,
                             active_target, follow_position, make_trial_spec,
                             project)


# -- independent projection oracle: full 4x4 homogeneous matrix pipeline ----

def _matrix_project(cam: Camera, point):
    """View + perspective matrices composed the textbook way, NDC -> pixels."""
    right, up, fwd = cam.basis()
    eye = np.asarray(cam.position, dtype=float)
    view = np.eye(4)
    view[0, :3] = right
    view[1, :3] = up
    view[2, :3] = fwd
    view[:3, 3] = -view[:3, :3] @ eye
    w, h = cam.viewport
    aspect = w / h
    f = 1.0 / math.tan(math.radians(cam.fov_deg) / 2.0)
    near, far = 0.1, 1000.0
    proj = np.zeros((4, 4))
    proj[0, 0] = f / aspect
    proj[1, 1] = f
    proj[2, 2] = (far + near) / (far - near)
    proj[2, 3] = -2.0 * far * near / (far - near)
    proj[3, 2] = 1.0
    p = np.array([*point, 1.0], dtype=float)
    clip = proj @ (view @ p)
    ndc = clip[:3] / clip[3]
    return ((ndc[0] + 1.0) * 0.5 * w, (1.0 - ndc[1]) * 0.5 * h)


def test_project_center_of_view(camera):
    (sx, sy), visible = project(camera, (0.0, 0.0, 25.0))
    assert visible
    assert sx == pytest.approx(960.0)
    assert sy == pytest.approx(540.0)


def test_project_behind_camera(camera):
    (sx, sy), visible = project(camera, (0.0, 0.0, -5.0))
    assert not visible
    assert math.isnan(sx) and math.isnan(sy)


def test_project_offscreen_point_not_visible(camera):
    (sx, sy), visible = project(camera, (100.0, 0.0, 10.0))
    assert not visible
    assert sx > 1920.0


def test_project_matches_matrix_oracle():
    rng = np.random.default_rng(7)
    cam = Camera(position=(1.0, -2.0, 3.0), forward=(0.2, -0.1, 1.0),
                 up=(0.0, 1.0, 0.1), fov_deg=55.0, viewport=(1280, 720))
    checked = 0
    worst = 0.0
    while checked < 100:
        p = rng.uniform(-50, 50, 3) + np.asarray(cam.position)
        (sx, sy), _ = project(cam, p)
        if math.isnan(sx):
            continue
        ox, oy = _matrix_project(cam, p)
        worst = max(worst, abs(sx - ox), abs(sy - oy))
        checked += 1
    assert worst < 1e-6


def test_project_pure(camera):
    p = (3.0, 4.0, 22.0)
    assert project(camera, p) == project(camera, p)


def test_follow_position_endpoints():
    t = Target(id=0, position=(0.0, 0.0, 30.0), end=(10.0, 0.0, 30.0),
               speed=2.0, window_s=5.0)
    assert np.allclose(follow_position(t, 0.0), (0.0, 0.0, 30.0))
    assert t.fly_time == pytest.approx(5.0)
    assert np.allclose(follow_position(t, t.fly_time), (10.0, 0.0, 30.0))
    # clamps past the end
    assert np.allclose(follow_position(t, 99.0), (10.0, 0.0, 30.0))


def test_follow_position_midpoint_at_2ms():
    # 10 m path at 2 m/s: t = 2.5 s sits exactly halfway
    t = Target(id=0, position=(-5.0, 0.0, 30.0), end=(5.0, 0.0, 30.0),
               speed=2.0, window_s=5.0)
    assert np.allclose(follow_position(t, 2.5), (0.0, 0.0, 30.0))


def test_follow_position_rejects_static():
    t = Target(id=0, position=(0.0, 0.0, 30.0))
    with pytest.raises(SceneError):
        follow_position(t, 1.0)


def test_follow_position_lipschitz():
    t = Target(id=0, position=(0.0, -3.0, 25.0), end=(7.0, 2.0, 31.0),
               speed=3.0, window_s=10.0)
    rng = np.random.default_rng(3)
    for _ in range(200):
        t1, t2 = rng.uniform(0.0, 6.0, 2)
        d = np.linalg.norm(follow_position(t, t1) - follow_position(t, t2))
        assert d <= 3.0 * abs(t1 - t2) + 1e-12


def _spec_windows(windows):
    cam = Camera()
    targets = tuple(Target(id=i, position=(0.0, 0.0, 30.0), window_s=w)
                    for i, w in enumerate(windows))
    return TrialSpec(mode="locate", targets=targets, camera=cam, seed=1)


def test_active_target_initial():
    spec = _spec_windows([5.0, 5.0, 5.0])
    assert active_target(spec, 0.0) == 0


def test_active_target_after_completion():
    spec = _spec_windows([5.0, 5.0, 5.0])
    assert active_target(spec, 1.5, {0: 1.0}) == 1


def test_active_target_expiry_chain():
    # all windows 5 s, nothing completed: at t=11 the third target is active
    spec = _spec_windows([5.0, 5.0, 5.0])
    assert active_target(spec, 11.0) == 2
    assert active_target(spec, 20.0) is None


def test_active_target_monotone():
    spec = _spec_windows([4.0, 6.0, 3.0, 5.0])
    completions = {1: 5.5}
    last = -1
    for t in np.linspace(0.0, 25.0, 400):
        tid = active_target(spec, float(t), completions)
        if tid is None:
            continue
        assert tid >= last
        last = tid


def test_trialspec_json_round_trip():
    spec = make_trial_spec("follow", 4, seed=9, follow_speed=5.0)
    text = spec.dumps()
    back = TrialSpec.loads(text)
    assert back == spec
    assert back.dumps() == text


def test_trialspec_schema_rejected():
    spec = make_trial_spec("locate", 2, seed=1)
    doc = spec.to_json()
    doc["schema"] = "aimassist.trialspec.v99"
    with pytest.raises(SceneError):
        TrialSpec.from_json(doc)


def test_trialspec_validation():
    with pytest.raises(SceneError):
        TrialSpec(mode="poke", targets=(Target(id=0, position=(0, 0, 30)),))
    with pytest.raises(SceneError):
        TrialSpec(mode="locate", targets=())
    with pytest.raises(SceneError):
        Target(id=0, position=(0, 0, 30), radius_px=-1)
    with pytest.raises(SceneError):
        Target(id=0, position=(0, 0, 30), end=(0, 0, 30), speed=1.0)
    with pytest.raises(SceneError):
        Camera(fov_deg=180.0)


def test_spawn_statistics():
    cam = Camera()
    dists = []
    offscreen = 0
    depths = []
    n = 0
    for seed in range(60):
        spec = make_trial_spec("locate", 10, seed=seed)
        for t in spec.targets:
            (sx, sy), vis = project(cam, t.position)
            assert not math.isnan(sx)  # spawns are always in front
            if not (0 <= sx <= 1920 and 0 <= sy <= 1080):
                offscreen += 1
            dists.append(math.hypot(sx - 960.0, sy - 540.0))
            depths.append(np.linalg.norm(np.asarray(t.position)))
            n += 1
    assert offscreen / n <= 0.10
    # mean camera distance ~30 m, appear distances in the published range
    assert 28.0 <= np.mean(depths) <= 33.0
    assert 200.0 <= np.mean(dists) <= 360.0


def test_spawn_deterministic():
    a = make_trial_spec("select", 6, seed=123)
    b = make_trial_spec("select", 6, seed=123)
    assert a == b


def test_follow_spec_window_is_fly_time():
    spec = make_trial_spec("follow", 5, seed=3, follow_speed=5.0)
    for t in spec.targets:
        assert t.moving
        assert t.window_s == pytest.approx(t.fly_time)
        assert 0.5 <= t.fly_time <= 8.5
