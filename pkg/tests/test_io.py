import string

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from retinaproj import REFERENCE_SCENES, reference_scene_text
from retinaproj.elements import CircularAperture, SourceGrid, ThinLens, TransferPlate
from retinaproj.experiments import ScanResult
from retinaproj.eye import EyeModel
from retinaproj.io import EmptyScan, IoFailure, ParseError, load_scene, parse_scene, pgm_text, print_scene, read_csv, write_csv, write_pgm
from retinaproj.tracer import RenderSettings, Scene

MINIMAL = """\
[projector]
z = -100
pixels_u = 2
pixels_v = 2
pitch = 1

[aperture]
z = 0
radius = 5

[eye]
z = 50
"""


def test_minimal_scene():
    scene = parse_scene(MINIMAL)
    assert len(scene.elements) == 1
    eid, ap = scene.elements[0]
    assert eid == "aperture1" and isinstance(ap, CircularAperture) and ap.radius == 5.0
    assert scene.eye.position == (0.0, 0.0, 50.0)
    assert scene.source.samples_per_pixel == 64


def test_bad_radius_reports_line():
    text = MINIMAL.replace("radius = 5", "radius = -1")
    with pytest.raises(ParseError) as err:
        parse_scene(text)
    assert err.value.line == 9
    assert "invariant: radius > 0" in str(err.value)


def test_duplicate_eye():
    with pytest.raises(ParseError, match="duplicate eye"):
        parse_scene(MINIMAL + "\n[eye]\nz = 60\n")


@pytest.mark.parametrize(
    "edit, pattern",
    [
        (("[aperture]", "[mirror]"), "unknown section"),
        (("radius = 5", "radius = 5\ncolour = 3"), "unknown key"),
        (("radius = 5", "radius = five"), "non-numeric"),
        (("pixels_u = 2", "pixels_u = 2.5"), "non-int"),
        (("radius = 5", "radius = 5\nradius = 6"), "duplicate key"),
        (("pitch = 1", ""), "missing key"),
        (("radius = 5", "radius = nan"), "non-finite"),
        (("[aperture]", "[aperture"), "unterminated"),
        (("z = 0", "z 0"), "expected 'name = value'"),
    ],
)
def test_parse_errors(edit, pattern):
    with pytest.raises(ParseError, match=pattern):
        parse_scene(MINIMAL.replace(*edit, 1))


def test_missing_sections():
    with pytest.raises(ParseError, match="missing \\[eye\\]"):
        parse_scene(MINIMAL.split("[eye]")[0])
    with pytest.raises(ParseError, match="missing \\[projector\\]"):
        parse_scene("[eye]\nz = 1\n")


def test_plate_needs_tilt():
    with pytest.raises(ParseError, match="tilt_x, tilt_y"):
        parse_scene(MINIMAL + "[plate]\nz = 10\n")


def test_duplicate_ids():
    text = MINIMAL + "[lens id=a]\nz = 10\nfocal_length = 5\ndiameter = 2\n[plate id=a]\nz = 20\ntilt_x = 0\ntilt_y = 0\n"
    with pytest.raises(ParseError, match="duplicate element id"):
        parse_scene(text)


def test_elements_sorted_by_z():
    text = MINIMAL + "[lens id=far]\nz = 30\nfocal_length = 5\ndiameter = 2\n[lens id=near]\nz = -30\nfocal_length = 5\ndiameter = 2\n"
    assert [eid for eid, _ in parse_scene(text).elements] == ["near", "aperture1", "far"]


def test_comments_and_blank_lines():
    text = "# header\n\n" + MINIMAL.replace("radius = 5", "radius = 5   # mm")
    assert parse_scene(text).elements[0][1].radius == 5.0


def test_load_missing_file(tmp_path):
    with pytest.raises(IoFailure):
        load_scene(tmp_path / "nope.scene")


@pytest.mark.parametrize("name", REFERENCE_SCENES)
def test_shipped_scene_round_trip(name):
    scene = parse_scene(reference_scene_text(name))
    text = print_scene(scene)
    again = parse_scene(text)
    assert again == scene
    assert print_scene(again) == text


finite = st.floats(-1e3, 1e3, allow_nan=False)
positive = st.floats(1e-3, 1e3, allow_nan=False)
unit = st.floats(0.0, 1.0)
tilt = st.floats(-60.0, 60.0)


@st.composite
def scenes(draw):
    src = SourceGrid((draw(finite), draw(finite), -1e4), draw(st.integers(0, 4)), draw(st.integers(0, 4)),
                     draw(positive), draw(st.integers(0, 100)), draw(tilt), draw(tilt))
    elements = []
    for k in range(draw(st.integers(0, 4))):
        pos = (draw(finite), draw(finite), draw(finite))
        kind = draw(st.sampled_from(["lens", "aperture", "plate"]))
        if kind == "lens":
            f = draw(st.one_of(positive, positive.map(lambda v: -v)))
            el = ThinLens(pos, f, draw(positive), draw(tilt), draw(tilt))
        elif kind == "aperture":
            el = CircularAperture(pos, draw(positive), draw(finite), draw(finite), draw(tilt), draw(tilt))
        else:
            effs = [draw(unit) / 4 for _ in range(4)]
            el = TransferPlate(pos, draw(tilt), draw(tilt), *effs, draw(st.floats(0.5, 89.5)))
        elements.append((f"e{k}", el))
    elements.sort(key=lambda item: item[1].z)
    eye = EyeModel((draw(finite), draw(finite), 2e4), draw(positive), draw(finite), draw(finite), draw(positive),
                   draw(st.one_of(st.none(), positive)), draw(st.floats(0, 10)), draw(positive),
                   draw(positive), draw(positive), draw(st.integers(1, 200)), draw(st.integers(1, 200)))
    rs = RenderSettings(draw(st.integers(0, 2**31)), draw(st.integers(1, 50)), draw(st.floats(0, 1)), draw(st.floats(0.01, 1)))
    return Scene(src, tuple(elements), eye, rs)


@settings(max_examples=150, deadline=None)
@given(scenes())
def test_random_scene_round_trip(scene):
    assert parse_scene(print_scene(scene)) == scene


@settings(max_examples=150, deadline=None)
@given(st.text(string.ascii_lowercase + "_", min_size=1, max_size=12), st.sampled_from(["[projector]", "[aperture]", "[eye]"]))
def test_unknown_keys_always_rejected(key, section):
    if key in {"x", "y", "z", "pixels_u", "pixels_v", "pitch", "samples", "radius", "offset_u", "offset_v",
               "tilt_x", "tilt_y", "id"} or key in EyeModel.__dataclass_fields__:
        return
    text = MINIMAL.replace(section, f"{section}\n{key} = 1", 1)
    with pytest.raises(ParseError):
        parse_scene(text)


# --- PGM / CSV ---------------------------------------------------------------------

def test_pgm_scaling():
    assert pgm_text([[0, 1], [2, 4]]) == "P2\n2 2\n65535\n0 16384\n32768 65535\n"


def test_pgm_all_zero():
    assert pgm_text(np.zeros((2, 3))) == "P2\n3 2\n65535\n0 0 0\n0 0 0\n"


def test_pgm_single_bin():
    assert pgm_text([[7.0]]) == "P2\n1 1\n65535\n65535\n"


def test_pgm_rejects_bad_input():
    with pytest.raises(ValueError):
        pgm_text([1, 2, 3])
    with pytest.raises(ValueError):
        pgm_text([[1, np.inf]])


def test_write_pgm_bytes(tmp_path):
    path = tmp_path / "a.pgm"
    write_pgm([[0, 1], [2, 4]], path)
    assert path.read_bytes() == b"P2\n2 2\n65535\n0 16384\n32768 65535\n"


def test_csv_lines_and_round_trip(tmp_path, rng):
    scan = ScanResult([0.1, 0.2, 0.3], list(rng.normal(size=3)))
    path = tmp_path / "s.csv"
    write_csv(scan, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 4 and lines[0] == "parameter,value"
    back = read_csv(path)
    np.testing.assert_allclose(back.parameters, scan.parameters, rtol=0, atol=1e-9)
    np.testing.assert_allclose(back.values, scan.values, rtol=0, atol=1e-9)


def test_csv_empty_scan(tmp_path):
    with pytest.raises(EmptyScan):
        write_csv(ScanResult([], []), tmp_path / "e.csv")


def test_csv_unwritable(tmp_path):
    with pytest.raises(IoFailure):
        write_csv(ScanResult([1], [1]), tmp_path / "missing" / "e.csv")
