"""Ray-tracing simulator for pupil-plane aerial-image retinal projection."""
from importlib import resources

from .elements import (
    Blocked,
    CircularAperture,
    Miss,
    PlateMode,
    Rejected,
    Screen,
    SourceGrid,
    ThinLens,
    TransferPlate,
    aperture_pass,
    lens_refract,
    plate_transfer,
    screen_hit,
    source_sample_rays,
)
from .experiments import (
    DivisionUndefined,
    EmptySpot,
    ScanResult,
    eyebox_extent,
    eyebox_scan,
    field_coverage,
    focus_sweep,
    fov_limit,
    ghost_ratio,
    rms_spot,
)
from .eye import EyeModel, eye_stack, eye_trace
from .geometry import NoHit, PlaneFrame, Ray, intersect_plane, transverse_decompose
from .io import ParseError, load_scene, parse_scene, print_scene, read_csv, write_csv, write_pgm
from .tracer import ClassFilter, IrradianceMap, RayClass, Scene, ZeroRays, render_retina, trace_ray

REFERENCE_SCENES = ("fig3", "fig5", "baseline")


def reference_scene_text(name: str) -> str:
    return resources.files(__package__).joinpath("scenes", f"{name}.scene").read_text()


def reference_scene(name: str) -> Scene:
    return parse_scene(reference_scene_text(name))
