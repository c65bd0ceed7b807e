import numpy as np
import pytest

from retinaproj.elements import Blocked, CircularAperture, Miss, Screen, ThinLens
from retinaproj.eye import EyeModel, eye_stack, eye_trace, eye_trace_many
from retinaproj.experiments import rms_spot
from retinaproj.geometry import Ray


def test_default_stack():
    eye = EyeModel((0, 0, 0))
    pupil, lens, retina = eye_stack(eye)
    assert isinstance(pupil, CircularAperture) and isinstance(lens, ThinLens) and isinstance(retina, Screen)
    assert pupil.radius == 2.0
    assert retina.z - lens.z == pytest.approx(17.0)


def test_offset_moves_pupil_and_lens_not_retina():
    eye = EyeModel((0, 0, 0), offset_u=1.0)
    pupil, lens, retina = eye_stack(eye)
    np.testing.assert_allclose(pupil.frame.origin, [1, 0, 0])
    np.testing.assert_allclose(lens.frame.origin, [1, 0, 0])
    np.testing.assert_allclose(retina.frame.origin, [0, 0, 17])


def test_gap_puts_lens_behind_pupil():
    pupil, lens, retina = eye_stack(EyeModel((0, 0, 0), gap=0.5))
    assert lens.z - pupil.z == pytest.approx(0.5)
    assert retina.z == pytest.approx(17.5)


def test_central_ray_undeviated():
    for f in (14.0, 15.5, 17.0, 30.0):
        u, v, w = eye_trace(Ray((-1, 0, -10), (0.1, 0, 1)), EyeModel((0, 0, 0), focal_length=f))
        assert u == pytest.approx(1.7, abs=1e-12)
        assert v == pytest.approx(0.0, abs=1e-15)


def test_collimated_bundle_focuses_at_f17():
    eye = EyeModel((0, 0, 0), focal_length=17.0)
    xs, ys = np.meshgrid(np.linspace(-1.9, 1.9, 9), np.linspace(-1.9, 1.9, 9))
    o = np.stack([xs.ravel(), ys.ravel(), np.full(xs.size, -5.0)], axis=1)
    uv, status, _ = eye_trace_many(eye, o, np.tile([0.0, 0.0, 1.0], (len(o), 1)))
    ok = status == 0
    assert ok.sum() > 40
    assert rms_spot(uv[ok]) < 1e-12


def test_iris_blocks():
    with pytest.raises(Blocked, match="iris"):
        eye_trace(Ray((2.5, 0, -1), (0, 0, 1)), EyeModel((0, 0, 0)))


def test_off_retina_is_miss():
    with pytest.raises(Miss):
        eye_trace(Ray((0, 0, -1), (0.8, 0, 0.6)), EyeModel((0, 0, 0)))


def test_lens_rim_with_gap():
    eye = EyeModel((0, 0, 0), gap=5.0, lens_diameter=2.0)
    with pytest.raises(Blocked, match="lens"):
        eye_trace(Ray((1.5, 0, -1), (0, 0, 1)), eye)


def test_focused_eye_images_point_exactly(rng):
    """1/f = 1/retina + 1/s: every admitted ray from the point lands on one retina point."""
    s = 250.0
    eye = EyeModel((0, 0, 0), focal_length=1 / (1 / 17 + 1 / s))
    src = np.array([3.0, -2.0, -s])
    targets = np.column_stack([rng.uniform(-2, 2, (500, 2)), np.zeros(500)])
    dirs = targets - src
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    uv, status, _ = eye_trace_many(eye, np.tile(src, (500, 1)), dirs)
    pts = uv[status == 0]
    assert len(pts) > 300
    assert np.max(np.linalg.norm(pts - pts[0], axis=1)) < 1e-9


def test_translation_is_decenter_rule(rng):
    """Admitted rays land at hit_0 + retina_distance * c / f when the eye shifts by c."""
    f = 15.0
    eye0 = EyeModel((0, 0, 0), focal_length=f, pupil_radius=3.0)
    o = np.column_stack([rng.uniform(-4, 4, (2000, 2)), np.full(2000, -10.0)])
    d = np.column_stack([rng.uniform(-0.1, 0.1, (2000, 2)), np.ones(2000)])
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    uv0, st0, _ = eye_trace_many(eye0, o, d)
    for c in [(0.5, 0.0), (-1.0, 0.7), (2.0, -2.0)]:
        eye = EyeModel((0, 0, 0), focal_length=f, pupil_radius=3.0, offset_u=c[0], offset_v=c[1])
        uv, st, _ = eye_trace_many(eye, o, d)
        both = (st == 0) & (st0 == 0)
        assert both.sum() > 100
        np.testing.assert_allclose(uv[both], uv0[both] + 17.0 * np.array(c) / f, atol=1e-9)


def test_invariants():
    with pytest.raises(ValueError):
        EyeModel((0, 0, 0), pupil_radius=0)
    with pytest.raises(ValueError):
        EyeModel((0, 0, 0), retina_distance=-1)
