"""Optical elements: thin lens, circular aperture, transfer plate, screen, source grid.

Each element is an immutable dataclass holding its declared placement
(``position`` in mm, ``tilt_x``/``tilt_y`` in degrees) and derives its
``PlaneFrame`` from it. The physics lives in the batched ``*_many``
methods; the module-level functions are single-ray wrappers around them.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import PlaneFrame, Ray, intersect_many, normalize


class Blocked(Exception):
    """Ray stopped by a lens rim or an aperture stop."""


class Rejected(Exception):
    """Incidence angle outside the plate's acceptance window."""


class Miss(Exception):
    """Ray lands outside the screen."""


class PlateMode(enum.Enum):
    IMAGE = "image"
    GHOST_U = "ghost_u"
    GHOST_V = "ghost_v"
    DIRECT = "direct"


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise ValueError(f"invariant: {message}")


def _as_point(p) -> tuple[float, float, float]:
    x, y, z = (float(c) for c in p)
    return (x, y, z)


@dataclass(frozen=True)
class _Placed:
    position: tuple[float, float, float]

    @cached_property
    def frame(self) -> PlaneFrame:
        return PlaneFrame.from_tilt(self.position, self.tilt_x, self.tilt_y)

    @property
    def z(self) -> float:
        return self.position[2]


@dataclass(frozen=True)
class ThinLens(_Placed):
    focal_length: float
    diameter: float
    tilt_x: float = 0.0
    tilt_y: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", _as_point(self.position))
        _check(self.diameter > 0, "diameter > 0")
        _check(self.focal_length != 0 and math.isfinite(self.focal_length), "focal_length != 0")

    @property
    def radius(self) -> float:
        return self.diameter / 2

    def refract_many(self, hits: np.ndarray, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Ideal thin-lens refraction.

        Works with reduced slopes (transverse direction over the normal
        component) so the rule is exact at any height: ``s' = s - p / f``.

        :returns: (outgoing directions, mask of rays inside the lens disk)
        """
        fr = self.frame
        p = fr.to_local(hits)
        inside = np.einsum("ij,ij->i", p, p) <= self.radius**2
        dn = dirs @ fr.normal
        adn = np.abs(dn)
        s = np.stack([dirs @ fr.u, dirs @ fr.v], axis=-1) / adn[:, None]
        s_out = s - p / self.focal_length
        out = (
            np.sign(dn)[:, None] * fr.normal
            + s_out[:, 0:1] * fr.u
            + s_out[:, 1:2] * fr.v
        )
        return normalize(out), inside


@dataclass(frozen=True)
class CircularAperture(_Placed):
    radius: float
    offset_u: float = 0.0
    offset_v: float = 0.0
    tilt_x: float = 0.0
    tilt_y: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", _as_point(self.position))
        _check(self.radius > 0, "radius > 0")

    def passes_many(self, hits: np.ndarray) -> np.ndarray:
        rel = self.frame.to_local(hits) - np.array([self.offset_u, self.offset_v])
        return np.einsum("ij,ij->i", rel, rel) <= self.radius**2


@dataclass(frozen=True)
class TransferPlate(_Placed):
    """Plane-symmetric transfer plate (dihedral corner reflector array).

    A double reflection in the micro mirrors flips both in-plane direction
    components (the imaging path); a single reflection flips only one of
    them (the two ghost families); no reflection leaves the ray as is.
    """

    tilt_x: float = 0.0
    tilt_y: float = 0.0
    eff_image: float = 0.5
    eff_ghost_u: float = 0.15
    eff_ghost_v: float = 0.15
    eff_direct: float = 0.1
    theta_max: float = 45.0

    def __post_init__(self):
        object.__setattr__(self, "position", _as_point(self.position))
        for name in ("eff_image", "eff_ghost_u", "eff_ghost_v", "eff_direct"):
            _check(0.0 <= getattr(self, name) <= 1.0, f"0 <= {name} <= 1")
        total = self.eff_image + self.eff_ghost_u + self.eff_ghost_v + self.eff_direct
        _check(total <= 1.0 + 1e-12, "eff_image + eff_ghost_u + eff_ghost_v + eff_direct <= 1")
        _check(0.0 < self.theta_max < 90.0, "0 < theta_max < 90")

    def efficiency(self, mode: PlateMode) -> float:
        return {
            PlateMode.IMAGE: self.eff_image,
            PlateMode.GHOST_U: self.eff_ghost_u,
            PlateMode.GHOST_V: self.eff_ghost_v,
            PlateMode.DIRECT: self.eff_direct,
        }[mode]

    def incidence_deg(self, dirs: np.ndarray) -> np.ndarray:
        c = np.clip(np.abs(dirs @ self.frame.normal), 0.0, 1.0)
        return np.degrees(np.arccos(c))

    def transfer_many(self, dirs: np.ndarray, mode: PlateMode) -> tuple[np.ndarray, np.ndarray]:
        """Outgoing directions for ``mode`` and the mask of accepted rays.

        Direct transmission is always accepted; the reflecting modes only
        inside the ``theta_max`` incidence window.
        """
        fr = self.frame
        if mode is PlateMode.DIRECT:
            return dirs.copy(), np.ones(len(dirs), dtype=bool)
        if mode is PlateMode.IMAGE:
            out = 2.0 * (dirs @ fr.normal)[:, None] * fr.normal - dirs
        else:
            axis = fr.u if mode is PlateMode.GHOST_U else fr.v
            out = dirs - 2.0 * (dirs @ axis)[:, None] * axis
        return out, self.incidence_deg(dirs) <= self.theta_max


@dataclass(frozen=True)
class Screen(_Placed):
    half_width_u: float
    half_width_v: float
    bins_u: int
    bins_v: int
    tilt_x: float = 0.0
    tilt_y: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", _as_point(self.position))
        _check(self.half_width_u > 0 and self.half_width_v > 0, "half widths > 0")
        _check(self.bins_u >= 1 and self.bins_v >= 1, "bins >= 1")

    def locate_many(self, hits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        uv = self.frame.to_local(hits)
        inside = (np.abs(uv[:, 0]) <= self.half_width_u) & (np.abs(uv[:, 1]) <= self.half_width_v)
        return uv, inside

    def bin_index(self, uv: np.ndarray) -> np.ndarray:
        """Flat bin index, row 0 at +v (top of the image)."""
        iu = np.floor((uv[:, 0] + self.half_width_u) / (2 * self.half_width_u) * self.bins_u)
        iv = np.floor((self.half_width_v - uv[:, 1]) / (2 * self.half_width_v) * self.bins_v)
        iu = np.clip(iu.astype(int), 0, self.bins_u - 1)
        iv = np.clip(iv.astype(int), 0, self.bins_v - 1)
        return iv * self.bins_u + iu


@dataclass(frozen=True)
class Disk:
    frame: PlaneFrame
    radius: float


@dataclass(frozen=True)
class SourceGrid(_Placed):
    pixels_u: int
    pixels_v: int
    pitch: float
    samples_per_pixel: int = 64
    tilt_x: float = 0.0
    tilt_y: float = 0.0
    target: Disk | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "position", _as_point(self.position))
        _check(self.pixels_u >= 0 and self.pixels_v >= 0, "pixel counts >= 0")
        _check(self.samples_per_pixel >= 0, "samples >= 0")
        _check(self.pitch > 0, "pitch > 0")

    @property
    def n_pixels(self) -> int:
        return self.pixels_u * self.pixels_v

    def pixel_centers(self) -> np.ndarray:
        """World positions of pixel centres, index ``k = j * pixels_u + i``."""
        i = np.arange(self.pixels_u) - (self.pixels_u - 1) / 2
        j = np.arange(self.pixels_v) - (self.pixels_v - 1) / 2
        jj, ii = np.meshgrid(j, i, indexing="ij")
        uv = np.stack([ii.ravel() * self.pitch, jj.ravel() * self.pitch], axis=-1)
        return self.frame.to_world(uv)


def _unit_square_strata(n: int, rng: np.random.Generator) -> np.ndarray:
    m = math.isqrt(n)
    if m * m == n:
        gy, gx = np.divmod(np.arange(n), m)
        return (np.stack([gx, gy], axis=-1) + rng.random((n, 2))) / m
    # Latin hypercube when n is not a perfect square
    cols = [(rng.permutation(n) + rng.random(n)) / n for _ in range(2)]
    return np.stack(cols, axis=-1)


def concentric_disk(sq: np.ndarray) -> np.ndarray:
    """Shirley-Chiu area-preserving map from [0,1)^2 to the unit disk."""
    a = 2.0 * sq[:, 0] - 1.0
    b = 2.0 * sq[:, 1] - 1.0
    use_a = np.abs(a) > np.abs(b)
    r = np.where(use_a, a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(use_a, (math.pi / 4) * (b / a), (math.pi / 2) - (math.pi / 4) * (a / b))
    phi = np.where((a == 0) & (b == 0), 0.0, phi)
    return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)


def sample_source(src: SourceGrid, rng_seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Batched ray generation: (pixel index, origins, directions, weights)."""
    if src.target is None:
        raise ValueError("source grid has no target disk")
    n = src.samples_per_pixel
    centers = src.pixel_centers()
    rng = np.random.default_rng(rng_seed)
    pts = np.concatenate([concentric_disk(_unit_square_strata(n, rng)) for _ in range(len(centers))]) if n else np.zeros((0, 2))
    targets = src.target.frame.to_world(pts * src.target.radius)
    pix = np.repeat(np.arange(len(centers)), n)
    origins = centers[pix] if n else np.zeros((0, 3))
    dirs = normalize(targets - origins) if len(origins) else np.zeros((0, 3))
    weights = np.full(len(pix), 1.0 / n if n else 0.0)
    return pix, origins, dirs, weights


def source_sample_rays(src: SourceGrid, rng_seed: int) -> list[tuple[int, Ray]]:
    pix, origins, dirs, weights = sample_source(src, rng_seed)
    return [(int(k), Ray(o, d, float(w))) for k, o, d, w in zip(pix, origins, dirs, weights)]


# single-ray operations


def lens_refract(ray: Ray, lens: ThinLens, hit) -> Ray:
    hit = np.asarray(hit, dtype=float)
    out, inside = lens.refract_many(hit[None, :], ray.direction[None, :])
    if not inside[0]:
        raise Blocked("outside lens disk")
    return Ray(hit, out[0], ray.weight)


def aperture_pass(hit, ap: CircularAperture) -> bool:
    return bool(ap.passes_many(np.asarray(hit, dtype=float)[None, :])[0])


def plate_transfer(ray: Ray, plate: TransferPlate, hit, mode: PlateMode) -> Ray:
    out, ok = plate.transfer_many(ray.direction[None, :], mode)
    if not ok[0]:
        raise Rejected(f"incidence beyond theta_max={plate.theta_max} deg")
    return Ray(np.asarray(hit, dtype=float), out[0], ray.weight * plate.efficiency(mode))


def screen_hit(ray: Ray, screen: Screen) -> tuple[float, float]:
    t = intersect_many(ray.origin[None, :], ray.direction[None, :], screen.frame)
    if not np.isfinite(t[0]):
        raise Miss("no intersection with screen plane")
    uv, inside = screen.locate_many(ray.origin[None, :] + t[:, None] * ray.direction[None, :])
    if not inside[0]:
        raise Miss("outside screen bounds")
    return float(uv[0, 0]), float(uv[0, 1])
