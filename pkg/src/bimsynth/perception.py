"""Object pose and size estimation from a binary mask plus a depth image.

Masked pixels are lifted to world-frame 3D points through the camera model;
the centroid is the mean of those points and the orientation comes from a
principal-component fit.  Planar mode (the default, for objects resting on a
table) fits the xy footprint and reports a yaw-only rotation; Full3D fits the
raw points.  Segmentation itself happens upstream: masks are inputs here.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCloud, EmptyMask, InvalidDepth
from .geometry import (
    CameraModel,
    RigidPose,
    Rotation,
    Vec3,
    backproject_many,
    planar_axis_angle,
    principal_axes,
)

# Fraction of masked pixels allowed to carry invalid depth (sensor speckle).
MAX_DEPTH_HOLE_FRACTION = 0.10


class PoseMode(enum.Enum):
    PLANAR = "planar"
    FULL3D = "full3d"


class PointPolicy(enum.Enum):
    CENTROID = "centroid"
    LOWEST_CONTACT = "lowest_contact"


@dataclass(frozen=True)
class ObjectMask:
    width: int
    height: int
    bits: np.ndarray  # (height, width) bool, row-major

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        if b.shape != (self.height, self.width):
            raise ValueError(f"mask bits shape {b.shape} != ({self.height}, {self.width})")
        object.__setattr__(self, "bits", b)

    @staticmethod
    def from_array(bits: np.ndarray) -> "ObjectMask":
        b = np.asarray(bits, dtype=bool)
        return ObjectMask(width=b.shape[1], height=b.shape[0], bits=b)

    def pixel_count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class DepthImage:
    width: int
    height: int
    values: np.ndarray  # (height, width) float32/float64 metres

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.height, self.width):
            raise ValueError(f"depth shape {v.shape} != ({self.height}, {self.width})")
        object.__setattr__(self, "values", v)

    @staticmethod
    def from_array(values: np.ndarray) -> "DepthImage":
        v = np.asarray(values, dtype=float)
        return DepthImage(width=v.shape[1], height=v.shape[0], values=v)


@dataclass(frozen=True)
class ObjectEstimate:
    """World-frame pose plus principal-frame bounding-box dimensions."""

    pose: RigidPose
    bbox: tuple[float, float, float]  # (l, w, h) with l >= w
    pixel_count: int
    planar: bool
    degenerate: bool = False
    lowest_point: Vec3 | None = None  # masked 3D point with minimal world z


def _masked_points(
    mask: ObjectMask, depth: DepthImage, cam: CameraModel
) -> tuple[np.ndarray, np.ndarray]:
    """World-frame points of masked pixels, sampled at pixel centers.

    Pixels inside the mask with invalid depth are dropped when they make up
    less than MAX_DEPTH_HOLE_FRACTION of the mask, otherwise InvalidDepth.
    Returns (points, uv) with uv holding the surviving pixel centers.
    """
    if (mask.width, mask.height) != (depth.width, depth.height):
        raise ValueError("mask and depth dimensions differ")
    vs, us = np.nonzero(mask.bits)
    if us.size == 0:
        raise EmptyMask("mask has no set pixels")
    d = depth.values[vs, us]
    bad = ~np.isfinite(d) | (d <= 0.0)
    n_bad = int(bad.sum())
    if n_bad:
        if n_bad > MAX_DEPTH_HOLE_FRACTION * us.size:
            i = int(np.argmax(bad))
            raise InvalidDepth(
                f"{n_bad}/{us.size} masked pixels lack valid depth",
                pixel=(int(us[i]), int(vs[i])),
            )
        keep = ~bad
        us, vs, d = us[keep], vs[keep], d[keep]
        if us.size == 0:
            raise EmptyMask("all masked pixels were depth holes")
    uv = np.column_stack([us + 0.5, vs + 0.5])
    return backproject_many(uv, d, cam), uv


def estimate_centroid(
    mask: ObjectMask,
    depth: DepthImage,
    cam: CameraModel,
    average_in_pixel_space: bool = False,
) -> Vec3:
    """Mean of back-projected masked points.

    With average_in_pixel_space the (u, v, d) triple is averaged first and
    back-projected once; the two differ at depth discontinuities.  The 3D
    mean is the default because it is geometrically meaningful.
    """
    points, uv = _masked_points(mask, depth, cam)
    if average_in_pixel_space:
        d = depth.values[(uv[:, 1] - 0.5).astype(int), (uv[:, 0] - 0.5).astype(int)]
        mu, mv, md = float(uv[:, 0].mean()), float(uv[:, 1].mean()), float(d.mean())
        return backproject_many(np.array([[mu, mv]]), np.array([md]), cam)[0]
    return points.mean(axis=0)


def estimate_pose(
    mask: ObjectMask,
    depth: DepthImage,
    cam: CameraModel,
    reference_axis: Vec3 | None = None,
    mode: PoseMode = PoseMode.PLANAR,
    table_z: float = 0.0,
    allow_degenerate: bool = False,
) -> ObjectEstimate:
    """Estimate a 6D pose and bounding box from mask plus depth.

    Planar mode runs the principal-component fit on the xy footprint and
    returns a yaw-only rotation with height taken from the point extent above
    table_z; Full3D fits the raw 3D points.  Near-isotropic footprints raise
    DegenerateCloud unless allow_degenerate is set, in which case an
    identity-yaw estimate is returned with the degenerate flag raised.
    """
    points, _ = _masked_points(mask, depth, cam)
    centroid = points.mean(axis=0)
    lowest = points[int(np.argmin(points[:, 2]))]
    n = points.shape[0]
    degenerate = False
    try:
        if n < 3:
            raise DegenerateCloud(1.0, f"only {n} masked points")
        if mode is PoseMode.PLANAR:
            yaw = planar_axis_angle(points[:, :2], reference_axis)
            rotation = Rotation.from_yaw(yaw)
        else:
            rotation = principal_axes(points, reference_axis)
    except DegenerateCloud:
        if not allow_degenerate:
            raise
        rotation = Rotation.identity()
        degenerate = True

    axes = rotation.matrix()
    centered = points - centroid
    if mode is PoseMode.PLANAR:
        e1 = _extent(centered, axes[:, 0])
        e2 = _extent(centered, axes[:, 1])
        h = max(float(points[:, 2].max()) - table_z, 0.0)
    else:
        e1 = _extent(centered, axes[:, 0])
        e2 = _extent(centered, axes[:, 1])
        h = _extent(centered, axes[:, 2])
    l, w = (e1, e2) if e1 >= e2 else (e2, e1)
    if e2 > e1 and not degenerate and mode is PoseMode.PLANAR:
        # Keep l >= w by rotating the principal frame a quarter turn.
        rotation = rotation * Rotation.from_yaw(math.pi / 2.0)
    return ObjectEstimate(
        pose=RigidPose(rotation, centroid),
        bbox=(l, w, h),
        pixel_count=n,
        planar=mode is PoseMode.PLANAR,
        degenerate=degenerate,
        lowest_point=lowest,
    )


def _extent(centered: np.ndarray, axis: np.ndarray) -> float:
    proj = centered @ axis
    return float(proj.max() - proj.min())


def representative_point(estimate: ObjectEstimate, policy: PointPolicy) -> Vec3:
    """Reference point for grid bookkeeping: centroid or lowest table contact."""
    if policy is PointPolicy.CENTROID:
        return estimate.pose.translation
    if estimate.lowest_point is None:
        raise ValueError("estimate carries no lowest contact point")
    return estimate.lowest_point
