"""Motion planning toolkit for a 19-DoF mobile dual-arm robot."""

from mobman.kinematics import (
    GeneralizedPose,
    RobotModel,
    default_model,
    forward_kinematics,
    jacobian,
    load_model,
    manipulability,
)

__all__ = [
    "GeneralizedPose",
    "RobotModel",
    "default_model",
    "forward_kinematics",
    "jacobian",
    "load_model",
    "manipulability",
]

__version__ = "0.1.0"
