import numpy as np
import pytest

from tilefusion import Box, CameraIntrinsics, Plane, Scene, Sphere


@pytest.fixture
def small_intr():
    """An 80x60 camera whose math stays hand-checkable."""
    return CameraIntrinsics(fx=100.0, fy=100.0, cx=40.0, cy=30.0, width=80, height=60)


@pytest.fixture
def anchored_scene():
    # sphere + floor + box: no rigid motion leaves this scene invariant,
    # so pose estimation against it is fully constrained
    return Scene(
        (
            Sphere(np.array([0.1, 0.05, 1.5]), 0.35),
            Plane(np.array([0.0, 0.5, 0.0]), np.array([0.0, -1.0, 0.0])),
            Box(np.array([-0.75, 0.1, 1.3]), np.array([-0.35, 0.5, 1.75])),
        )
    )
