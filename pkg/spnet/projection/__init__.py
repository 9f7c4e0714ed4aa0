"""Sphere projections, ray casting and depth image rendering."""

from .codec import decode, encode, export_png, read_image, write_image
from .projections import (
    PlaneCoord,
    SphereCoord,
    pixel_to_plane,
    plane_bounds,
    plane_to_pixel,
    project,
    spherical_coords,
    unproject,
)
from .raycast import BVHCaster, BruteForceCaster, build_caster, ray_cast
from .render import DepthImage, render, render_views

__all__ = [
    "BVHCaster",
    "BruteForceCaster",
    "DepthImage",
    "PlaneCoord",
    "SphereCoord",
    "build_caster",
    "decode",
    "encode",
    "export_png",
    "pixel_to_plane",
    "plane_bounds",
    "plane_to_pixel",
    "project",
    "ray_cast",
    "read_image",
    "render",
    "render_views",
    "spherical_coords",
    "unproject",
    "write_image",
]
