"""Scene files, PGM irradiance images and CSV scan tables.

Scene file format::

    # comment
    [projector]
    z = -101
    pixels_u = 5
    ...
    [lens id=L1]
    z = -50
    focal_length = 38.25
    diameter = 10

Keys may also be given on the header line as ``key=value`` pairs.
Lengths are millimetres, angles degrees.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .elements import CircularAperture, SourceGrid, ThinLens, TransferPlate
from .experiments import ScanResult
from .eye import EyeModel
from .tracer import IrradianceMap, RenderSettings, Scene


class ParseError(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class IoFailure(OSError):
    pass


class EmptyScan(ValueError):
    pass


_POS = ("x", "y", "z")
_TILT = ("tilt_x", "tilt_y")

# key -> type, per section kind
SECTIONS: dict[str, dict[str, type]] = {
    "projector": {**dict.fromkeys(_POS + _TILT, float), "pixels_u": int, "pixels_v": int, "pitch": float, "samples": int},
    "lens": {"id": str, **dict.fromkeys(_POS + _TILT, float), "focal_length": float, "diameter": float},
    "aperture": {"id": str, **dict.fromkeys(_POS + _TILT, float), "radius": float, "offset_u": float, "offset_v": float},
    "plate": {
        "id": str,
        **dict.fromkeys(_POS + _TILT, float),
        **dict.fromkeys(("eff_image", "eff_ghost_u", "eff_ghost_v", "eff_direct", "theta_max"), float),
    },
    "eye": {
        **dict.fromkeys(_POS, float),
        **dict.fromkeys(
            ("pupil_radius", "offset_u", "offset_v", "focal_length", "lens_diameter", "gap", "retina_distance",
             "retina_half_width_u", "retina_half_width_v"),
            float,
        ),
        "retina_bins_u": int,
        "retina_bins_v": int,
    },
    "render": {"seed": int, "max_events": int, "coverage_threshold": float, "plateau": float},
}

REQUIRED = {
    "projector": {"z", "pixels_u", "pixels_v", "pitch"},
    "lens": {"z", "focal_length", "diameter"},
    "aperture": {"z", "radius"},
    "plate": {"z", "tilt_x", "tilt_y"},
    "eye": {"z"},
    "render": set(),
}

_positive = lambda v: v > 0  # noqa: E731
_unit = lambda v: 0.0 <= v <= 1.0  # noqa: E731
CHECKS = {
    "pitch": (_positive, "pitch > 0"),
    "pixels_u": (lambda v: v >= 0, "pixels_u >= 0"),
    "pixels_v": (lambda v: v >= 0, "pixels_v >= 0"),
    "samples": (lambda v: v >= 0, "samples >= 0"),
    "diameter": (_positive, "diameter > 0"),
    "focal_length": (lambda v: v != 0, "focal_length != 0"),
    "radius": (_positive, "radius > 0"),
    "eff_image": (_unit, "0 <= eff_image <= 1"),
    "eff_ghost_u": (_unit, "0 <= eff_ghost_u <= 1"),
    "eff_ghost_v": (_unit, "0 <= eff_ghost_v <= 1"),
    "eff_direct": (_unit, "0 <= eff_direct <= 1"),
    "theta_max": (lambda v: 0 < v < 90, "0 < theta_max < 90"),
    "pupil_radius": (_positive, "pupil_radius > 0"),
    "lens_diameter": (_positive, "lens_diameter > 0"),
    "gap": (lambda v: v >= 0, "gap >= 0"),
    "retina_distance": (_positive, "retina_distance > 0"),
    "retina_half_width_u": (_positive, "retina_half_width_u > 0"),
    "retina_half_width_v": (_positive, "retina_half_width_v > 0"),
    "retina_bins_u": (lambda v: v >= 1, "retina_bins_u >= 1"),
    "retina_bins_v": (lambda v: v >= 1, "retina_bins_v >= 1"),
    "max_events": (lambda v: v >= 1, "max_events >= 1"),
    "coverage_threshold": (lambda v: v >= 0, "coverage_threshold >= 0"),
    "plateau": (lambda v: 0 < v <= 1, "0 < plateau <= 1"),
}


def _convert(kind: str, key: str, raw: str, line: int):
    types = SECTIONS[kind]
    if key not in types:
        raise ParseError(line, f"unknown key '{key}' in [{kind}]")
    typ = types[key]
    if typ is str:
        if not raw:
            raise ParseError(line, f"empty value for {key}")
        return raw
    try:
        value = int(raw) if typ is int else float(raw)
    except ValueError:
        want = "integer" if typ is int else "numeric"
        raise ParseError(line, f"non-{want} value for {key}: {raw!r}") from None
    if typ is float and not math.isfinite(value):
        raise ParseError(line, f"non-finite value for {key}: {raw!r}")
    if key in CHECKS:
        ok, text = CHECKS[key]
        if not ok(value):
            raise ParseError(line, f"invariant: {text}")
    return value


def _sections(text: str):
    sections = []
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(n, "unterminated section header")
            parts = line[1:-1].split()
            if not parts:
                raise ParseError(n, "empty section header")
            kind = parts[0]
            if kind not in SECTIONS:
                raise ParseError(n, f"unknown section '{kind}'")
            sec = {"kind": kind, "line": n, "values": {}, "lines": {}}
            for token in parts[1:]:
                if "=" not in token:
                    raise ParseError(n, f"expected key=value in header, got {token!r}")
                key, val = (s.strip() for s in token.split("=", 1))
                _store(sec, key, val, n)
            sections.append(sec)
            continue
        if "=" not in line:
            raise ParseError(n, f"expected 'name = value', got {line!r}")
        if not sections:
            raise ParseError(n, "key outside of any section")
        key, val = (s.strip() for s in line.split("=", 1))
        _store(sections[-1], key, val, n)
    return sections


def _store(sec: dict, key: str, raw: str, line: int) -> None:
    if key in sec["values"]:
        raise ParseError(line, f"duplicate key '{key}'")
    sec["values"][key] = _convert(sec["kind"], key, raw, line)
    sec["lines"][key] = line


def _build(sec: dict, factory):
    try:
        return factory(sec["values"])
    except ValueError as exc:
        raise ParseError(sec["line"], str(exc)) from None


def _position(v: dict) -> tuple[float, float, float]:
    return (v.get("x", 0.0), v.get("y", 0.0), v["z"])


def parse_scene(text: str) -> Scene:
    sections = _sections(text)
    last_line = max(1, len(text.splitlines()))
    counts = {"lens": 0, "aperture": 0, "plate": 0}
    projector = eye = settings = None
    elements = []
    for sec in sections:
        kind, v = sec["kind"], sec["values"]
        missing = sorted(REQUIRED[kind] - v.keys())
        if missing:
            raise ParseError(sec["line"], f"missing key(s) {', '.join(missing)} in [{kind}]")
        if kind in ("projector", "eye", "render") and {"projector": projector, "eye": eye, "render": settings}[kind] is not None:
            raise ParseError(sec["line"], f"duplicate {kind}")
        if kind == "projector":
            projector = _build(sec, lambda v: SourceGrid(
                _position(v), v["pixels_u"], v["pixels_v"], v["pitch"], v.get("samples", 64),
                v.get("tilt_x", 0.0), v.get("tilt_y", 0.0)))
        elif kind == "eye":
            keys = set(SECTIONS["eye"]) - set(_POS)
            eye = _build(sec, lambda v: EyeModel(_position(v), **{k: v[k] for k in keys if k in v}))
        elif kind == "render":
            settings = _build(sec, lambda v: RenderSettings(**v))
        else:
            counts[kind] += 1
            eid = v.get("id", f"{kind}{counts[kind]}")
            params = {k: val for k, val in v.items() if k not in ("id", "x", "y", "z")}
            cls = {"lens": ThinLens, "aperture": CircularAperture, "plate": TransferPlate}[kind]
            element = _build(sec, lambda v: cls(_position(v), **params))
            if any(eid == other for other, _, _ in elements):
                raise ParseError(sec["line"], f"duplicate element id '{eid}'")
            elements.append((eid, element, sec["line"]))
    if projector is None:
        raise ParseError(last_line, "missing [projector] section")
    if eye is None:
        raise ParseError(last_line, "missing [eye] section")
    elements.sort(key=lambda item: item[1].z)
    return Scene(projector, tuple((i, e) for i, e, _ in elements), eye, settings or RenderSettings())


def load_scene(path) -> Scene:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return parse_scene(text)


def _fmt(value) -> str:
    return str(value) if isinstance(value, int) else repr(float(value))


def _placement(el) -> list[str]:
    x, y, z = el.position
    return [f"x = {_fmt(x)}", f"y = {_fmt(y)}", f"z = {_fmt(z)}", f"tilt_x = {_fmt(el.tilt_x)}", f"tilt_y = {_fmt(el.tilt_y)}"]


def print_scene(scene: Scene) -> str:
    """Serialize a scene so that ``parse_scene(print_scene(s)) == s``."""
    src = scene.source
    out = ["[projector]", *_placement(src)]
    out += [f"pixels_u = {src.pixels_u}", f"pixels_v = {src.pixels_v}", f"pitch = {_fmt(src.pitch)}", f"samples = {src.samples_per_pixel}", ""]
    for eid, el in scene.elements:
        if isinstance(el, ThinLens):
            out += [f"[lens id={eid}]", *_placement(el), f"focal_length = {_fmt(el.focal_length)}", f"diameter = {_fmt(el.diameter)}"]
        elif isinstance(el, CircularAperture):
            out += [f"[aperture id={eid}]", *_placement(el), f"radius = {_fmt(el.radius)}",
                    f"offset_u = {_fmt(el.offset_u)}", f"offset_v = {_fmt(el.offset_v)}"]
        else:
            out += [f"[plate id={eid}]", *_placement(el)]
            out += [f"{k} = {_fmt(getattr(el, k))}" for k in ("eff_image", "eff_ghost_u", "eff_ghost_v", "eff_direct", "theta_max")]
        out.append("")
    eye = scene.eye
    x, y, z = eye.position
    out += ["[eye]", f"x = {_fmt(x)}", f"y = {_fmt(y)}", f"z = {_fmt(z)}"]
    for key in SECTIONS["eye"]:
        if key in _POS:
            continue
        value = getattr(eye, key)
        if value is not None:
            out.append(f"{key} = {_fmt(value)}")
    out.append("")
    s = scene.settings
    out += ["[render]", f"seed = {s.seed}", f"max_events = {s.max_events}",
            f"coverage_threshold = {_fmt(s.coverage_threshold)}", f"plateau = {_fmt(s.plateau)}"]
    return "\n".join(out) + "\n"


def pgm_text(data) -> str:
    data = np.asarray(data.data if isinstance(data, IrradianceMap) else data, dtype=float)
    if data.ndim != 2:
        raise ValueError("irradiance map must be 2-D")
    if not np.all(np.isfinite(data)):
        raise ValueError("irradiance map has non-finite values")
    peak = data.max() if data.size else 0.0
    if peak > 0:
        values = np.floor(65535.0 * data / peak + 0.5).astype(np.int64)
    else:
        values = np.zeros(data.shape, dtype=np.int64)
    height, width = data.shape
    rows = [" ".join(str(v) for v in row) for row in values]
    return "\n".join(["P2", f"{width} {height}", "65535", *rows]) + "\n"


def write_pgm(data, path) -> None:
    """Plain-text (P2) greyscale image, scaled so the brightest bin is 65535."""
    text = pgm_text(data)
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_csv(scan: ScanResult, path) -> None:
    if len(scan) == 0:
        raise EmptyScan("scan has no points")
    lines = ["parameter,value"] + [f"{p:.17g},{v:.17g}" for p, v in zip(scan.parameters, scan.values)]
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_csv(path) -> ScanResult:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not lines or lines[0] != "parameter,value":
        raise ValueError(f"{path}: missing 'parameter,value' header")
    params, values = [], []
    for line in lines[1:]:
        p, v = line.split(",")
        params.append(float(p))
        values.append(float(v))
    return ScanResult(params, values)
