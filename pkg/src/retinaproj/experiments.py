"""Metrics and parameter scans built on the tracer.

Each scan renders the scene once per parameter value; the renders are
independent, so results depend only on (scene, seed, parameter list).
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Ray, normalize
from .tracer import ClassFilter, RayClass, RetinaHits, Scene, render_retina, trace_hits, trace_ray


class EmptySpot(ValueError):
    """No weighted hits to compute a spot size from."""


class DivisionUndefined(ZeroDivisionError):
    """Image-class weight is zero, so the ghost ratio is undefined."""


@dataclass
class ScanResult:
    parameters: list[float]
    values: list[float]
    metadata: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.parameters = [float(p) for p in self.parameters]
        self.values = [float(v) for v in self.values]
        if len(self.parameters) != len(self.values):
            raise ValueError("parameters and values differ in length")
        steps = np.diff(self.parameters)
        if len(steps) and not (np.all(steps > 0) or np.all(steps < 0)):
            raise ValueError("scan parameters must be strictly monotonic")

    def __len__(self):
        return len(self.parameters)


def scene_hash(scene: Scene) -> str:
    from .io import print_scene

    return hashlib.sha256(print_scene(scene).encode()).hexdigest()[:16]


def rms_spot(points, weights=None) -> float:
    """Weighted RMS distance of retina points from their weighted centroid."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    w = np.ones(len(pts)) if weights is None else np.asarray(weights, dtype=float)
    total = w.sum()
    if len(pts) == 0 or not total > 0:
        raise EmptySpot("no hits")
    centroid = (w[:, None] * pts).sum(axis=0) / total
    r2 = ((pts - centroid) ** 2).sum(axis=1)
    return math.sqrt(max(0.0, float((w * r2).sum() / total)))


def _image_class(scene: Scene) -> ClassFilter:
    # without a plate there is no image mode; all light is direct
    return ClassFilter.IMAGE if scene.plates else ClassFilter.ALL


def coverage_and_intensity(scene: Scene, seed: int | None = None, threshold: float | None = None) -> tuple[float, float]:
    """(fraction of pixels above threshold, total image-class retina weight)."""
    tau = scene.settings.coverage_threshold if threshold is None else threshold
    res = render_retina(scene, seed, _image_class(scene))
    per_pixel = res.emitted / scene.source.n_pixels
    covered = res.pixel_weight > tau * per_pixel
    return float(covered.mean()), float(res.pixel_weight.sum())


def field_coverage(scene: Scene, seed: int | None = None, threshold: float | None = None) -> float:
    return coverage_and_intensity(scene, seed, threshold)[0]


def eyebox_scan(scene: Scene, offsets, seed: int | None = None) -> ScanResult:
    """Coverage versus pupil offset along the eye's u axis.

    Iris and eye lens move together. Total delivered image weight per
    offset is kept in ``extra['intensity']``.
    """
    seed = scene.settings.seed if seed is None else seed
    cov, inten = [], []
    for off in offsets:
        c, i = coverage_and_intensity(scene.with_eye(offset_u=float(off)), seed)
        cov.append(c)
        inten.append(i)
    meta = {"scene": scene_hash(scene), "seed": seed, "metric": "coverage"}
    return ScanResult(list(offsets), cov, meta, {"intensity": inten})


def eyebox_extent(scan: ScanResult, plateau: float = 0.95) -> float:
    """Width of the widest contiguous run of offsets with coverage >= plateau."""
    best = 0.0
    start = None
    for k, (p, v) in enumerate(zip(scan.parameters, scan.values)):
        if v >= plateau:
            if start is None:
                start = k
            best = max(best, abs(p - scan.parameters[start]))
        else:
            start = None
    return best


def per_pixel_spots(hits: RetinaHits, n_pixels: int) -> tuple[np.ndarray, int]:
    """RMS spot per pixel (nan where empty) and the number of empty pixels."""
    spots = np.full(n_pixels, np.nan)
    order = np.argsort(hits.pixel, kind="stable")
    pix = hits.pixel[order]
    bounds = np.searchsorted(pix, np.arange(n_pixels + 1))
    for k in range(n_pixels):
        sl = order[bounds[k]:bounds[k + 1]]
        try:
            spots[k] = rms_spot(hits.uv[sl], hits.weight[sl])
        except EmptySpot:
            pass
    return spots, int(np.isnan(spots).sum())


def _sweep(scene: Scene, f_values, seed: int) -> ScanResult:
    means, empties = [], []
    cls = _image_class(scene)
    for f in f_values:
        hits, _, _ = trace_hits(scene.with_eye(focal_length=float(f)), seed)
        spots, empty = per_pixel_spots(hits.select(cls), scene.source.n_pixels)
        means.append(float(np.nanmean(spots)) if empty < len(spots) else math.nan)
        empties.append(empty)
    meta = {"scene": scene_hash(scene), "seed": seed, "metric": "mean_rms_spot_mm"}
    return ScanResult(list(f_values), means, meta, {"empty_pixels": empties})


@dataclass
class FocusSweep:
    proposed: ScanResult
    baseline: ScanResult | None = None

    @property
    def ratio(self) -> float:
        """max proposed spot / max baseline spot."""
        return max(self.proposed.values) / max(self.baseline.values)


def focus_sweep(scene: Scene, f_values, seed: int | None = None, baseline: Scene | None = None) -> FocusSweep:
    """Mean RMS retina spot versus eye focal length, optionally against a baseline scene."""
    if any(not f > 0 for f in f_values):
        raise ValueError("focal lengths must be positive")
    seed = scene.settings.seed if seed is None else seed
    return FocusSweep(_sweep(scene, f_values, seed), _sweep(baseline, f_values, seed) if baseline is not None else None)


def ghost_ratio(scene: Scene, seed: int | None = None) -> float:
    """Ghost-class over image-class retina weight. Direct light counts in neither."""
    if not scene.plates:
        raise ValueError("ghost_ratio needs a scene with a transfer plate")
    hits, _, _ = trace_hits(scene, seed)
    image = hits.weight[hits.ray_class == 0].sum()
    ghost = hits.weight[hits.ray_class == 1].sum()
    if image == 0:
        raise DivisionUndefined("no image-class light reaches the retina")
    return float(ghost / image)


def _probe_ray(scene: Scene, angle_deg: float) -> Ray | None:
    src = scene.source
    center = src.target.frame.origin
    axis = normalize(center - src.frame.origin)
    w = src.frame.u - (src.frame.u @ axis) * axis
    w = normalize(w)
    a = math.radians(angle_deg)
    d = math.cos(a) * axis + math.sin(a) * w
    denom = d @ src.frame.normal
    if abs(denom) < 1e-12:
        return None
    # start on the source plane, aimed through the target centre
    t = ((center - src.frame.origin) @ src.frame.normal) / denom
    return Ray(center - t * d, d, 1.0)


def probe_admitted(scene: Scene, angle_deg: float) -> bool:
    ray = _probe_ray(scene, angle_deg)
    if ray is None:
        return False
    return any(r.ray_class is RayClass.IMAGE and r.retina_uv is not None for r in trace_ray(ray, scene))


def fov_limit(scene: Scene, angle_step: float, seed: int | None = None, max_angle: float = 90.0) -> float:
    """Full field angle (degrees) over which the image path reaches the retina.

    The probe is the chief ray of a pixel moved off axis: it leaves the
    source plane and passes through the centre of the first lens. The
    probe is deterministic, so ``seed`` has no effect.
    """
    if not angle_step > 0:
        raise ValueError("angle_step must be > 0")
    best = None
    k = 0
    while k * angle_step < max_angle:
        angle = k * angle_step
        if probe_admitted(scene, angle):
            best = angle
        k += 1
    return 0.0 if best is None else 2.0 * best
