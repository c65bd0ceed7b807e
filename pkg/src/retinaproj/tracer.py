"""Non-sequential nearest-hit tracer with deterministic branching at plates.

Rays are propagated in batches: every step each live ray is advanced to
the nearest element plane ahead of it and handled by that element. A
transfer plate splits every incident ray into its four modes (image, two
ghost families, direct), each carrying the mode's efficiency. Reaching
the eye's pupil plane hands the ray to the sequential eye model, which
ends the path on the retina or blocks it.
"""
from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import eye as eye_mod
from .elements import (
    CircularAperture,
    Disk,
    PlateMode,
    Screen,
    SourceGrid,
    ThinLens,
    TransferPlate,
    sample_source,
)
from .eye import EyeModel
from .geometry import Ray, intersect_many

WEIGHT_CUTOFF = 1e-6


class ZeroRays(ValueError):
    """The source grid emits no rays."""


class RayClass(enum.Enum):
    IMAGE = "image"
    GHOST = "ghost"
    DIRECT = "direct"


class ClassFilter(enum.Enum):
    ALL = "all"
    IMAGE = "image"
    GHOST = "ghost"


@dataclass(frozen=True)
class RenderSettings:
    seed: int = 0
    max_events: int = 16
    coverage_threshold: float = 1e-4
    plateau: float = 0.95

    def __post_init__(self):
        if self.max_events < 1:
            raise ValueError("invariant: max_events >= 1")
        if not self.coverage_threshold >= 0:
            raise ValueError("invariant: coverage_threshold >= 0")
        if not 0 < self.plateau <= 1:
            raise ValueError("invariant: 0 < plateau <= 1")


@dataclass(frozen=True)
class Scene:
    """Projector, ordered element stack and eye.

    The source grid's target disk is derived here: the first lens in the
    stack, or the eye pupil when the stack has no lens.
    """

    source: SourceGrid
    elements: tuple = ()
    eye: EyeModel = None
    settings: RenderSettings = field(default_factory=RenderSettings)

    def __post_init__(self):
        elements = tuple((str(i), e) for i, e in self.elements)
        ids = [i for i, _ in elements]
        if len(set(ids)) != len(ids):
            raise ValueError("invariant: element ids unique")
        if self.eye is None:
            raise ValueError("scene needs an eye")
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "source", replace(self.source, target=self._target()))

    def _target(self) -> Disk:
        for _, el in self.elements:
            if isinstance(el, ThinLens):
                return Disk(el.frame, el.radius)
        return Disk(self.eye.pupil.frame, self.eye.pupil_radius)

    @property
    def plates(self) -> list[TransferPlate]:
        return [e for _, e in self.elements if isinstance(e, TransferPlate)]

    def with_eye(self, **changes) -> "Scene":
        return replace(self, eye=replace(self.eye, **changes))

    def with_source(self, **changes) -> "Scene":
        return replace(self, source=replace(self.source, **changes))

    def with_element(self, element_id: str, **changes) -> "Scene":
        els = tuple((i, replace(e, **changes) if i == element_id else e) for i, e in self.elements)
        if all(i != element_id for i, _ in self.elements):
            raise KeyError(element_id)
        return replace(self, elements=els)


@dataclass(frozen=True)
class TraceEvent:
    element_id: str
    point: np.ndarray = field(compare=False)
    action: str
    direction: np.ndarray | None = field(default=None, compare=False)


@dataclass
class TraceResult:
    ray_class: RayClass
    weight: float
    retina_uv: tuple[float, float] | None
    terminal: TraceEvent
    events: list[TraceEvent]


@dataclass
class RetinaHits:
    uv: np.ndarray
    weight: np.ndarray
    ray_class: np.ndarray  # 0 image, 1 ghost, 2 direct
    pixel: np.ndarray

    def select(self, class_filter: ClassFilter) -> "RetinaHits":
        if class_filter is ClassFilter.ALL:
            return self
        code = 0 if class_filter is ClassFilter.IMAGE else 1
        m = self.ray_class == code
        return RetinaHits(self.uv[m], self.weight[m], self.ray_class[m], self.pixel[m])

    @classmethod
    def concat(cls, parts: list["RetinaHits"]) -> "RetinaHits":
        return cls(
            np.concatenate([p.uv for p in parts]) if parts else np.zeros((0, 2)),
            np.concatenate([p.weight for p in parts]) if parts else np.zeros(0),
            np.concatenate([p.ray_class for p in parts]) if parts else np.zeros(0, dtype=int),
            np.concatenate([p.pixel for p in parts]) if parts else np.zeros(0, dtype=int),
        )


@dataclass
class IrradianceMap:
    data: np.ndarray  # (bins_v, bins_u), row 0 is the top (+v) edge
    screen: Screen

    @property
    def total(self) -> float:
        return float(self.data.sum())

    @classmethod
    def from_hits(cls, hits: RetinaHits, screen: Screen) -> "IrradianceMap":
        idx = screen.bin_index(hits.uv) if len(hits.weight) else np.zeros(0, dtype=int)
        flat = np.bincount(idx, weights=hits.weight, minlength=screen.bins_u * screen.bins_v)
        return cls(flat.reshape(screen.bins_v, screen.bins_u), screen)


@dataclass
class RenderResult:
    irradiance: IrradianceMap
    pixel_weight: np.ndarray
    emitted: float
    hits: RetinaHits


class _Batch:
    __slots__ = ("o", "d", "w", "pix", "img", "ghost", "nev", "rec")

    def __init__(self, o, d, w, pix, img, ghost, nev, rec):
        self.o, self.d, self.w, self.pix = o, d, w, pix
        self.img, self.ghost, self.nev, self.rec = img, ghost, nev, rec

    def take(self, idx) -> "_Batch":
        rec = None
        if self.rec is not None:
            rows = np.flatnonzero(idx) if idx.dtype == bool else idx
            rec = [list(self.rec[i]) for i in rows]
        return _Batch(self.o[idx], self.d[idx], self.w[idx], self.pix[idx], self.img[idx], self.ghost[idx], self.nev[idx], rec)

    def __len__(self):
        return len(self.w)

    @staticmethod
    def concat(parts: list["_Batch"]) -> "_Batch":
        rec = None
        if parts and parts[0].rec is not None:
            rec = [r for p in parts for r in p.rec]
        return _Batch(*(np.concatenate([getattr(p, k) for p in parts]) for k in ("o", "d", "w", "pix", "img", "ghost", "nev")), rec)


def _classes(img: np.ndarray, ghost: np.ndarray) -> np.ndarray:
    return np.where(ghost, 1, np.where(img, 0, 2))


_CODE_CLASS = {0: RayClass.IMAGE, 1: RayClass.GHOST, 2: RayClass.DIRECT}
_EYE_ACTION = {eye_mod.IRIS: "block:iris", eye_mod.LENS_RIM: "block:lens", eye_mod.OFF_RETINA: "miss:retina"}


def _trace(scene: Scene, o, d, w, pix, record: bool = False):
    """Core loop. Returns (RetinaHits, terminals) where ``terminals`` is a
    list of (class, weight, uv, TraceEvent, events) when ``record`` is set."""
    ids = [i for i, _ in scene.elements] + ["eye"]
    els = [e for _, e in scene.elements]
    frames = [e.frame for e in els] + [scene.eye.pupil.frame]
    eye_idx = len(els)
    max_events = scene.settings.max_events
    n = len(w)
    batch = _Batch(o, d, w, pix, np.zeros(n, bool), np.zeros(n, bool), np.zeros(n, int), [[] for _ in range(n)] if record else None)
    hits: list[RetinaHits] = []
    terminals: list = []

    def finish(b: _Batch, mask, element_id, points, action, dirs=None):
        if not record or not mask.any():
            return
        cls = _classes(b.img, b.ghost)
        for i in np.flatnonzero(mask):
            ev = TraceEvent(element_id, points[i].copy(), action, None if dirs is None else dirs[i].copy())
            b.rec[i].append(ev)
            terminals.append((_CODE_CLASS[int(cls[i])], float(b.w[i]), None, ev, b.rec[i]))

    while len(batch):
        T = np.column_stack([intersect_many(batch.o, batch.d, fr) for fr in frames])
        k = np.argmin(T, axis=1)
        tmin = T[np.arange(len(batch)), k]
        finite = np.isfinite(tmin)
        hit = batch.o + np.where(finite, tmin, 0.0)[:, None] * batch.d
        finish(batch, ~finite, "", hit, "escape")
        batch.nev = batch.nev + np.where(k == eye_idx, 3, 1)
        over = finite & (batch.nev > max_events)
        finish(batch, over, "", hit, "absorb:max_events")
        live = finite & ~over

        nxt: list[_Batch] = []
        for e in np.unique(k[live]):
            sel = live & (k == e)
            b = batch.take(sel)
            h = hit[sel]
            eid = ids[e]
            if e == eye_idx:
                uv, status, _ = eye_mod.eye_trace_many(scene.eye, b.o, b.d)
                ok = status == eye_mod.RETINA
                cls = _classes(b.img, b.ghost)
                hits.append(RetinaHits(uv[ok], b.w[ok], cls[ok], b.pix[ok]))
                if record:
                    for i in range(len(b)):
                        if ok[i]:
                            ev = TraceEvent("retina", scene.eye.retina.frame.to_world(uv[i]), "absorb:retina")
                            b.rec[i].append(ev)
                            terminals.append((_CODE_CLASS[int(cls[i])], float(b.w[i]), (float(uv[i, 0]), float(uv[i, 1])), ev, b.rec[i]))
                        else:
                            ev = TraceEvent("eye", h[i].copy(), _EYE_ACTION[int(status[i])])
                            b.rec[i].append(ev)
                            terminals.append((_CODE_CLASS[int(cls[i])], float(b.w[i]), None, ev, b.rec[i]))
                continue
            el = els[e]
            if isinstance(el, ThinLens):
                new_d, inside = el.refract_many(h, b.d)
                finish(b, ~inside, eid, h, "block")
                if record:
                    for i in np.flatnonzero(inside):
                        b.rec[i].append(TraceEvent(eid, h[i].copy(), "refract", new_d[i].copy()))
                b.o, b.d = h, new_d
                nxt.append(b.take(inside))
            elif isinstance(el, CircularAperture):
                ok = el.passes_many(h)
                finish(b, ~ok, eid, h, "block")
                if record:
                    for i in np.flatnonzero(ok):
                        b.rec[i].append(TraceEvent(eid, h[i].copy(), "pass", b.d[i].copy()))
                b.o = h
                nxt.append(b.take(ok))
            elif isinstance(el, TransferPlate):
                for mode in PlateMode:
                    new_d, ok = el.transfer_many(b.d, mode)
                    m = _Batch(h, new_d, b.w * el.efficiency(mode), b.pix, b.img.copy(), b.ghost.copy(), b.nev,
                               [list(r) for r in b.rec] if record else None)
                    if mode is PlateMode.IMAGE:
                        m.img[:] = True
                    elif mode is not PlateMode.DIRECT:
                        m.ghost[:] = True
                    finish(m, ~ok, eid, h, f"reject:{mode.value}")
                    faint = ok & (m.w < WEIGHT_CUTOFF)
                    finish(m, faint, eid, h, f"absorb:weight:{mode.value}")
                    keep = ok & ~faint
                    if record:
                        for i in np.flatnonzero(keep):
                            m.rec[i].append(TraceEvent(eid, h[i].copy(), f"transfer:{mode.value}", new_d[i].copy()))
                    nxt.append(m.take(keep))
            else:  # pragma: no cover - scene construction only admits the kinds above
                raise TypeError(f"unsupported element {type(el).__name__}")
        batch = _Batch.concat(nxt) if nxt else batch.take(np.zeros(len(batch), bool))
    return RetinaHits.concat(hits), terminals


def trace_ray(ray: Ray, scene: Scene, pixel_index: int = 0) -> list[TraceResult]:
    """Trace one ray through the scene, following every plate branch.

    Returns one ``TraceResult`` per terminal branch (retina hit, block,
    rejection, escape or absorption), each with its full event list.
    """
    if not ray.weight > 0:
        raise ValueError("ray weight must be > 0")
    _, terminals = _trace(
        scene,
        ray.origin[None, :].copy(),
        ray.direction[None, :].copy(),
        np.array([ray.weight]),
        np.array([pixel_index]),
        record=True,
    )
    return [TraceResult(c, w, uv, ev, events) for c, w, uv, ev, events in terminals]


def trace_hits(scene: Scene, rng_seed: int | None = None, workers: int = 1, sampled=None) -> tuple[RetinaHits, float, list[RetinaHits]]:
    """Trace every source ray; returns (all hits, emitted weight, per-chunk hits)."""
    seed = scene.settings.seed if rng_seed is None else rng_seed
    src = scene.source
    if src.n_pixels == 0 or src.samples_per_pixel == 0:
        raise ZeroRays("source grid emits no rays")
    pix, o, d, w = sampled if sampled is not None else sample_source(src, seed)
    chunks = np.array_split(np.arange(len(w)), max(1, workers))

    def run(idx):
        return _trace(scene, o[idx], d[idx], w[idx], pix[idx])[0]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return RetinaHits.concat(parts), float(w.sum()), parts


def render_retina(
    scene: Scene,
    rng_seed: int | None = None,
    class_filter: ClassFilter = ClassFilter.ALL,
    workers: int = 1,
) -> RenderResult:
    """Accumulate retina hits of the admitted classes into an irradiance map.

    Each worker fills its own partial map; partials are summed in chunk order.
    """
    all_hits, emitted, parts = trace_hits(scene, rng_seed, workers)
    screen = scene.eye.retina
    data = np.zeros((screen.bins_v, screen.bins_u))
    for part in parts:
        data = data + IrradianceMap.from_hits(part.select(class_filter), screen).data
    hits = all_hits.select(class_filter)
    pixel_weight = np.bincount(hits.pixel, weights=hits.weight, minlength=scene.source.n_pixels)
    return RenderResult(IrradianceMap(data, screen), pixel_weight, emitted, hits)
