"""Vector helpers, plane frames and ray-plane intersection.

Points are in millimetres, directions are unit vectors. Everything here
works on plain ``numpy`` arrays; the batched ``*_many`` variants take
``(N, 3)`` arrays and are what the tracer uses internally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EPS_ADVANCE = 1e-9
PARALLEL_TOL = 1e-12


class NoHit(Exception):
    """Ray is parallel to the plane or the plane lies behind the ray."""


def vec3(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise ValueError("cannot normalize a zero vector")
    return v / n


def rotation_from_tilt(tilt_x_deg: float, tilt_y_deg: float) -> np.ndarray:
    """Rotation matrix: first about x by ``tilt_x``, then about y by ``tilt_y``."""
    ax = math.radians(tilt_x_deg)
    ay = math.radians(tilt_y_deg)
    rx = np.array([[1, 0, 0], [0, math.cos(ax), -math.sin(ax)], [0, math.sin(ax), math.cos(ax)]])
    ry = np.array([[math.cos(ay), 0, math.sin(ay)], [0, 1, 0], [-math.sin(ay), 0, math.cos(ay)]])
    return ry @ rx


@dataclass(frozen=True, eq=False)
class PlaneFrame:
    """A plane with an in-plane orthonormal basis.

    ``u``, ``v`` and ``normal`` form a right-handed triad (u x v = n).
    """

    origin: np.ndarray
    normal: np.ndarray
    u: np.ndarray
    v: np.ndarray

    @classmethod
    def from_tilt(cls, position, tilt_x: float = 0.0, tilt_y: float = 0.0) -> "PlaneFrame":
        rot = rotation_from_tilt(tilt_x, tilt_y)
        return cls(
            origin=np.asarray(position, dtype=float).copy(),
            normal=rot @ np.array([0.0, 0.0, 1.0]),
            u=rot @ np.array([1.0, 0.0, 0.0]),
            v=rot @ np.array([0.0, 1.0, 0.0]),
        )

    @classmethod
    def from_normal(cls, origin, normal) -> "PlaneFrame":
        n = normalize(normal)
        helper = np.array([0.0, 1.0, 0.0]) if abs(n[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
        u = normalize(np.cross(helper, n))
        v = np.cross(n, u)
        return cls(origin=np.asarray(origin, dtype=float).copy(), normal=n, u=u, v=v)

    def shifted(self, du: float, dv: float) -> "PlaneFrame":
        return PlaneFrame(self.origin + du * self.u + dv * self.v, self.normal, self.u, self.v)

    def to_local(self, points: np.ndarray) -> np.ndarray:
        """In-plane (u, v) coordinates of points, shape (..., 2)."""
        rel = np.asarray(points, dtype=float) - self.origin
        return np.stack([rel @ self.u, rel @ self.v], axis=-1)

    def to_world(self, uv) -> np.ndarray:
        uv = np.asarray(uv, dtype=float)
        return self.origin + uv[..., 0:1] * self.u + uv[..., 1:2] * self.v

    def __eq__(self, other):
        if not isinstance(other, PlaneFrame):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("origin", "normal", "u", "v")
        )

    __hash__ = None


@dataclass(eq=False)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.direction = normalize(self.direction)
        if not self.weight >= 0:
            raise ValueError(f"ray weight must be >= 0, got {self.weight}")

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class Hit:
    t: float
    point: np.ndarray = field(compare=False)


def intersect_plane(ray: Ray, frame: PlaneFrame) -> Hit:
    """Forward intersection of ``ray`` with the plane of ``frame``.

    Raises ``NoHit`` when the ray is parallel to the plane or when the
    crossing is not at least ``EPS_ADVANCE`` ahead of the origin.
    """
    t = intersect_many(ray.origin[None, :], ray.direction[None, :], frame)[0]
    if not np.isfinite(t):
        raise NoHit
    return Hit(float(t), ray.at(t))


def intersect_many(origins: np.ndarray, dirs: np.ndarray, frame: PlaneFrame, t_min: float = EPS_ADVANCE) -> np.ndarray:
    """Distances to the plane for a batch of rays; ``inf`` where there is no hit."""
    denom = dirs @ frame.normal
    num = (frame.origin - origins) @ frame.normal
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / denom
    bad = (np.abs(denom) <= PARALLEL_TOL) | ~(t > t_min)
    return np.where(bad, np.inf, t)


def transverse_decompose(d, frame: PlaneFrame) -> tuple[np.ndarray, np.ndarray]:
    """Split ``d`` into parts along and across the plane normal."""
    d = np.asarray(d, dtype=float)
    d_n = (d @ frame.normal)[..., None] * frame.normal
    return d_n, d - d_n
