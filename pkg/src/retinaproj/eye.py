"""Reduced eye: movable iris, decentred varifocal thin lens, fixed retina."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .elements import Blocked, CircularAperture, Miss, Screen, ThinLens, _as_point, _check
from .geometry import Ray, intersect_many

# eye_trace_many status codes
RETINA = 0
IRIS = 1
LENS_RIM = 2
OFF_RETINA = 3


@dataclass(frozen=True)
class EyeModel:
    """Eye looking along +z; ``position`` is the pupil centre at zero offset.

    The iris and the crystalline lens translate together by
    ``(offset_u, offset_v)``; the retina stays put.
    """

    position: tuple[float, float, float]
    pupil_radius: float = 2.0
    offset_u: float = 0.0
    offset_v: float = 0.0
    focal_length: float = 17.0
    lens_diameter: float | None = None
    gap: float = 0.0
    retina_distance: float = 17.0
    retina_half_width_u: float = 10.0
    retina_half_width_v: float = 10.0
    retina_bins_u: int = 64
    retina_bins_v: int = 64

    def __post_init__(self):
        object.__setattr__(self, "position", _as_point(self.position))
        _check(self.pupil_radius > 0, "pupil_radius > 0")
        _check(self.retina_distance > 0, "retina_distance > 0")
        _check(self.gap >= 0, "gap >= 0")
        _check(self.focal_length != 0, "focal_length != 0")
        if self.lens_diameter is not None:
            _check(self.lens_diameter > 0, "lens_diameter > 0")

    @property
    def effective_lens_diameter(self) -> float:
        return self.lens_diameter if self.lens_diameter is not None else 2.0 * self.pupil_radius

    @cached_property
    def pupil(self) -> CircularAperture:
        x, y, z = self.position
        return CircularAperture((x + self.offset_u, y + self.offset_v, z), self.pupil_radius)

    @cached_property
    def lens(self) -> ThinLens:
        x, y, z = self.position
        return ThinLens(
            (x + self.offset_u, y + self.offset_v, z + self.gap),
            self.focal_length,
            self.effective_lens_diameter,
        )

    @cached_property
    def retina(self) -> Screen:
        x, y, z = self.position
        return Screen(
            (x, y, z + self.gap + self.retina_distance),
            self.retina_half_width_u,
            self.retina_half_width_v,
            self.retina_bins_u,
            self.retina_bins_v,
        )


def eye_stack(eye: EyeModel) -> list:
    return [eye.pupil, eye.lens, eye.retina]


def eye_trace_many(eye: EyeModel, origins: np.ndarray, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sequential pupil -> lens -> retina pass for a batch of rays.

    Returns (retina uv, status code, pupil hit points). Rays that never
    reach the pupil plane are reported as ``IRIS``.
    """
    n = len(origins)
    status = np.full(n, RETINA)
    uv = np.full((n, 2), np.nan)

    t = intersect_many(origins, dirs, eye.pupil.frame)
    hit = origins + np.where(np.isfinite(t), t, 0.0)[:, None] * dirs
    ok = np.isfinite(t) & eye.pupil.passes_many(hit)
    status[~ok] = IRIS
    pupil_hits = hit

    if eye.gap > 0:
        t = intersect_many(hit, dirs, eye.lens.frame)
        ok &= np.isfinite(t)
        hit = hit + np.where(np.isfinite(t), t, 0.0)[:, None] * dirs
    new_dirs, inside = eye.lens.refract_many(hit, dirs)
    status[ok & ~inside] = LENS_RIM
    ok &= inside

    t = intersect_many(hit, new_dirs, eye.retina.frame)
    reached = np.isfinite(t)
    spot, on = eye.retina.locate_many(hit + np.where(reached, t, 0.0)[:, None] * new_dirs)
    landed = ok & reached & on
    status[ok & ~landed] = OFF_RETINA
    uv[landed] = spot[landed]
    return uv, status, pupil_hits


def eye_trace(ray: Ray, eye: EyeModel) -> tuple[float, float, float]:
    """Trace one ray through the eye; returns ``(u, v, weight)`` on the retina.

    Raises ``Blocked`` for iris or lens-rim occlusion and ``Miss`` when the
    ray lands off the retina.
    """
    uv, status, _ = eye_trace_many(eye, ray.origin[None, :], ray.direction[None, :])
    code = int(status[0])
    if code == IRIS:
        raise Blocked("iris")
    if code == LENS_RIM:
        raise Blocked("eye lens rim")
    if code == OFF_RETINA:
        raise Miss("off retina")
    return float(uv[0, 0]), float(uv[0, 1]), ray.weight
