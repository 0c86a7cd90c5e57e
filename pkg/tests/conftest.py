import math

import numpy as np
import pytest

from aimassist import scene
from aimassist.scene import Camera, Target, TrialSpec


@pytest.fixture
def camera():
    return Camera()


def screen_target(cam: Camera, sx: float, sy: float, depth: float = 30.0,
                  tid: int = 0, radius: float = 40.0, window: float = 10.0) -> Target:
    """Static target placed so it projects exactly to (sx, sy)."""
    pos = scene._unproject(cam, sx, sy, depth)
    return Target(id=tid, position=pos, radius_px=radius, window_s=window)


def one_target_spec(mode: str, sx: float, sy: float, *, dwell=1.0, window=10.0,
                    radius=40.0, tick_rate=60.0, depth=30.0) -> TrialSpec:
    cam = Camera()
    return TrialSpec(mode=mode, targets=(screen_target(cam, sx, sy, depth,
                                                       radius=radius,
                                                       window=window),),
                     camera=cam, dwell_s=dwell, tick_rate=tick_rate, seed=1)


def rot90(v):
    return (-v[1], v[0])
