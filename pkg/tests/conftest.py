import numpy as np
import pytest

from retinaproj import EyeModel, Scene, SourceGrid, ThinLens, TransferPlate, reference_scene


@pytest.fixture(scope="session")
def fig3():
    return reference_scene("fig3")


@pytest.fixture(scope="session")
def fig5():
    return reference_scene("fig5")


@pytest.fixture(scope="session")
def baseline():
    return reference_scene("baseline")


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


def plate_only_scene(eye_z=200.0, pupil=500.0, **plate_kw):
    """Single plate at z=0 and a wide-open eye far downstream."""
    plate_kw.setdefault("tilt_x", 0.0)
    plate_kw.setdefault("tilt_y", 0.0)
    return Scene(
        SourceGrid((0, 0, -30), 1, 1, 1.0, 4),
        (("plate", TransferPlate((0, 0, 0), **plate_kw)),),
        EyeModel((0, 0, eye_z), pupil_radius=pupil, retina_half_width_u=1e6, retina_half_width_v=1e6),
    )


def lens_scene(f=50.0, diameter=20.0, **eye_kw):
    return Scene(
        SourceGrid((0, 0, -100), 1, 1, 1.0, 16),
        (("L", ThinLens((0, 0, 0), f, diameter)),),
        EyeModel((0, 0, 100), **eye_kw),
    )
