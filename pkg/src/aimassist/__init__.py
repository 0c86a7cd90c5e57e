"""Real-time pointer assistance: lerp/gravity/neural input augmentation,
synthetic device-class agents, a Locate/Select/Follow trial harness, and a
live session service."""

__version__ = "0.1.0"

from .assist import (AssistConfig, GravityField, LerpParams, MoveSample,
                     apply_assist, build_gravity_field, gravity_assist,
                     lerp_assist)
from .scene import Camera, Target, TrialSpec, active_target, follow_position, project

__all__ = [
    "AssistConfig", "GravityField", "LerpParams", "MoveSample",
    "apply_assist", "build_gravity_field", "gravity_assist", "lerp_assist",
    "Camera", "Target", "TrialSpec", "active_target", "follow_position",
    "project",
]
