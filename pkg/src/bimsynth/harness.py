"""Synthetic stand-in for the physical dual-arm workspace.

Models the tabletop world: a 0.615 x 0.675 m workspace rectangle centred on
the table plane z = 0, two opposing arm bases, and a single overhead camera
1 m above the table.  Scenes hold primitive objects (boxes and cylinders)
whose top-down view is rendered analytically into per-object binary masks
and a z-depth image, giving the perception and synthesis stages a
ground-truth oracle in place of the real stereo rig.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .demonstration import Arm
from .errors import OutOfFrustum
from .geometry import CameraModel, RigidPose, Rotation, Vec3, backproject_many, vec3
from .perception import DepthImage, ObjectMask, PoseMode, estimate_pose


class Shape(enum.Enum):
    BOX = "box"
    CYLINDER = "cylinder"


@dataclass(frozen=True)
class SceneObject:
    """Primitive object instance: dims are (l, w, h); cylinders use l = w = diameter."""

    shape: Shape
    dims: tuple[float, float, float]
    pose: RigidPose
    instance_index: int = 0

    def __post_init__(self):
        if any(d <= 0.0 for d in self.dims):
            raise ValueError(f"non-positive dims {self.dims}")
        if self.shape is Shape.CYLINDER and abs(self.dims[0] - self.dims[1]) > 1e-12:
            raise ValueError("cylinder dims must satisfy l == w == diameter")


@dataclass(frozen=True)
class SceneInstance:
    """One sampled world state: objects by id plus provenance indices."""

    objects: dict[str, SceneObject]
    workspace: "WorkspaceSpec"
    grid_cell: dict[str, int] = field(default_factory=dict)
    scene_seed: int = 0
    index: int = 0


class Region(enum.Enum):
    WHOLE = "whole"
    LEFT_HALF = "left_half"  # x < 0, nearest the left arm
    RIGHT_HALF = "right_half"


@dataclass(frozen=True)
class WorkspaceSpec:
    """Workspace rectangle, camera mount, and opposing arm bases.

    The rectangle spans size_x along the arm-to-arm axis and size_y across
    it; arm bases sit arm_setback from the centre on opposite sides, facing
    each other.
    """

    size_x: float = 0.615
    size_y: float = 0.675
    camera_height: float = 1.0
    arm_setback: float = 0.42

    def __post_init__(self):
        if min(self.size_x, self.size_y, self.camera_height, self.arm_setback) <= 0.0:
            raise ValueError("workspace dimensions must be positive")

    def arm_base(self, arm: Arm) -> RigidPose:
        if arm is Arm.LEFT:
            return RigidPose(Rotation.identity(), vec3(-self.arm_setback, 0.0, 0.0))
        return RigidPose(Rotation.from_yaw(math.pi), vec3(self.arm_setback, 0.0, 0.0))

    def overhead_camera(
        self, width: int = 960, height: int = 540, focal: float = 760.0
    ) -> CameraModel:
        # Straight-down view: camera x along world x, optical axis along -z.
        rot = Rotation.from_matrix(np.array([[1.0, 0, 0], [0, -1.0, 0], [0, 0, -1.0]]))
        extrinsic = RigidPose(rot, vec3(0.0, 0.0, self.camera_height))
        return CameraModel(
            fx=focal, fy=focal, cx=width / 2.0, cy=height / 2.0,
            width=width, height=height, extrinsic=extrinsic,
        )

    def rect(self, region: Region) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of a placement region."""
        hx, hy = self.size_x / 2.0, self.size_y / 2.0
        if region is Region.WHOLE:
            return (-hx, hx, -hy, hy)
        if region is Region.LEFT_HALF:
            return (-hx, 0.0, -hy, hy)
        return (0.0, hx, -hy, hy)

    def aabb(self, height: float = 0.6) -> tuple[Vec3, Vec3]:
        hx, hy = self.size_x / 2.0, self.size_y / 2.0
        return (vec3(-hx, -hy, 0.0), vec3(hx, hy, height))


def cell_centers(
    rect: tuple[float, float, float, float], rows: int, cols: int
) -> list[tuple[float, float]]:
    """Row-major grid cell centroids; cols split x, rows split y."""
    xmin, xmax, ymin, ymax = rect
    dx = (xmax - xmin) / cols
    dy = (ymax - ymin) / rows
    return [
        (xmin + (c + 0.5) * dx, ymin + (r + 0.5) * dy)
        for r in range(rows)
        for c in range(cols)
    ]


# ---------------------------------------------------------------------------
# Analytic top-down rendering

_RAY_EPS = 1e-12
_MISS = 1e30

# Ray grids are deterministic per camera; cache them across renders.
_RAY_CACHE: dict[tuple, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _camera_rays(cam: CameraModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """World-frame ray origin, directions through pixel centers, table depth.

    Directions are scaled so the ray parameter equals camera z-depth.
    """
    key = (
        cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height,
        cam.extrinsic.rotation.q.tobytes(), cam.extrinsic.translation.tobytes(),
    )
    hit = _RAY_CACHE.get(key)
    if hit is not None:
        return hit
    us = (np.arange(cam.width) + 0.5 - cam.cx) / cam.fx
    vs = (np.arange(cam.height) + 0.5 - cam.cy) / cam.fy
    uu, vv = np.meshgrid(us, vs)
    dirs_cam = np.stack([uu, vv, np.ones_like(uu)], axis=-1)  # (H, W, 3)
    rot = cam.extrinsic.rotation.matrix()
    dirs = dirs_cam @ rot.T
    origin = cam.extrinsic.translation
    with np.errstate(divide="ignore", invalid="ignore"):
        s_table = np.where(dirs[..., 2] < 0.0, (0.0 - origin[2]) / dirs[..., 2], _MISS)
    _RAY_CACHE[key] = (origin, dirs, s_table)
    if len(_RAY_CACHE) > 8:
        _RAY_CACHE.pop(next(iter(_RAY_CACHE)))
    return origin, dirs, s_table


def _object_roi(cam: CameraModel, obj: SceneObject) -> tuple[int, int, int, int] | None:
    """Conservative pixel bounding box (u0, u1, v0, v1) of an object, or None."""
    from .geometry import inverse as pose_inverse

    p = pose_inverse(cam.extrinsic).apply(obj.pose.translation)
    half_diag = float(np.linalg.norm(np.array(obj.dims) / 2.0))
    z_near = p[2] - half_diag
    if z_near <= 1e-3:
        return None
    u = cam.cx + cam.fx * p[0] / z_near
    v = cam.cy + cam.fy * p[1] / z_near
    r = max(cam.fx, cam.fy) * half_diag / z_near + 3.0
    u0 = max(int(math.floor(u - r)), 0)
    u1 = min(int(math.ceil(u + r)) + 1, cam.width)
    v0 = max(int(math.floor(v - r)), 0)
    v1 = min(int(math.ceil(v + r)) + 1, cam.height)
    if u0 >= u1 or v0 >= v1:
        return None
    return u0, u1, v0, v1


def _intersect_box(
    origin: np.ndarray, dirs: np.ndarray, obj: SceneObject
) -> np.ndarray:
    half = np.array(obj.dims) / 2.0
    rot = obj.pose.rotation.matrix()
    o = (origin - obj.pose.translation) @ rot  # local origin
    d = dirs @ rot  # (H, W, 3) local directions
    near = np.full(dirs.shape[:2], -_MISS)
    far = np.full(dirs.shape[:2], _MISS)
    for ax in range(3):
        da = d[..., ax]
        oa = o[ax]
        parallel = np.abs(da) < _RAY_EPS
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-half[ax] - oa) / da
            t2 = (half[ax] - oa) / da
        lo = np.minimum(t1, t2)
        hi = np.maximum(t1, t2)
        inside = abs(oa) <= half[ax]
        lo = np.where(parallel, np.where(inside, -_MISS, _MISS), lo)
        hi = np.where(parallel, np.where(inside, _MISS, -_MISS), hi)
        near = np.maximum(near, lo)
        far = np.minimum(far, hi)
    hit = (far >= near) & (near > _RAY_EPS)
    return np.where(hit, near, _MISS)


def _intersect_cylinder(
    origin: np.ndarray, dirs: np.ndarray, obj: SceneObject
) -> np.ndarray:
    radius = obj.dims[0] / 2.0
    hh = obj.dims[2] / 2.0
    rot = obj.pose.rotation.matrix()
    o = (origin - obj.pose.translation) @ rot
    d = dirs @ rot
    dx, dy, dz = d[..., 0], d[..., 1], d[..., 2]
    a = dx * dx + dy * dy
    b = 2.0 * (o[0] * dx + o[1] * dy)
    c = o[0] * o[0] + o[1] * o[1] - radius * radius
    disc = b * b - 4.0 * a * c
    s_best = np.full(dirs.shape[:2], _MISS)
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = np.sqrt(np.maximum(disc, 0.0))
        for sign in (-1.0, 1.0):
            s = (-b + sign * sq) / (2.0 * a)
            z = o[2] + s * dz
            ok = (disc >= 0.0) & (a > _RAY_EPS) & (s > _RAY_EPS) & (np.abs(z) <= hh)
            s_best = np.where(ok & (s < s_best), s, s_best)
        for cap_z in (hh, -hh):
            s = (cap_z - o[2]) / dz
            rad2 = (o[0] + s * dx) ** 2 + (o[1] + s * dy) ** 2
            ok = (np.abs(dz) > _RAY_EPS) & (s > _RAY_EPS) & (rad2 <= radius * radius)
            s_best = np.where(ok & (s < s_best), s, s_best)
    return s_best


def _check_frustum(scene: SceneInstance, cam: CameraModel) -> None:
    from .geometry import inverse as pose_inverse

    cam_inv = pose_inverse(cam.extrinsic)
    outside = []
    for oid in sorted(scene.objects):
        obj = scene.objects[oid]
        p = cam_inv.apply(obj.pose.translation)
        if p[2] <= 0.0:
            outside.append(oid)
            continue
        u = cam.cx + cam.fx * p[0] / p[2]
        v = cam.cy + cam.fy * p[1] / p[2]
        r_pix = max(cam.fx, cam.fy) * (max(obj.dims) / 2.0) / p[2]
        if (
            u + r_pix < 0
            or u - r_pix > cam.width
            or v + r_pix < 0
            or v - r_pix > cam.height
        ):
            outside.append(oid)
    if outside:
        raise OutOfFrustum(outside)


def render_observation(
    scene: SceneInstance, cam: CameraModel
) -> dict[str, tuple[ObjectMask, DepthImage]]:
    """Ray-cast the scene into per-object masks plus a shared z-depth image.

    Each pixel belongs to the object whose surface is nearest; pixels that
    miss every object carry the table-plane depth.  Deterministic.
    """
    _check_frustum(scene, cam)
    origin, dirs, s_table = _camera_rays(cam)
    best = s_table.copy()
    winner = np.full(dirs.shape[:2], -1, dtype=int)
    ids = sorted(scene.objects)
    for k, oid in enumerate(ids):
        obj = scene.objects[oid]
        roi = _object_roi(cam, obj)
        if roi is None:
            continue
        u0, u1, v0, v1 = roi
        crop = dirs[v0:v1, u0:u1]
        s = (
            _intersect_box(origin, crop, obj)
            if obj.shape is Shape.BOX
            else _intersect_cylinder(origin, crop, obj)
        )
        take = s < best[v0:v1, u0:u1]
        best[v0:v1, u0:u1] = np.where(take, s, best[v0:v1, u0:u1])
        winner[v0:v1, u0:u1] = np.where(take, k, winner[v0:v1, u0:u1])
    depth = DepthImage.from_array(best)
    out = {}
    for k, oid in enumerate(ids):
        out[oid] = (ObjectMask.from_array(winner == k), depth)
    return out


def _scale_camera(cam: CameraModel, k: int) -> CameraModel:
    return CameraModel(
        fx=cam.fx * k, fy=cam.fy * k, cx=cam.cx * k, cy=cam.cy * k,
        width=cam.width * k, height=cam.height * k, extrinsic=cam.extrinsic,
    )


def surface_mean(scene: SceneInstance, cam: CameraModel, oid: str, oversample: int = 2) -> Vec3:
    """Mean visible-surface point of one object at an oversampled resolution.

    This is the reference an ideal mask-plus-depth camera would report for
    the object's centroid; a pinhole view of an extended body never samples
    its volume centre, so pose errors are measured against this mean.
    """
    fine = _scale_camera(cam, oversample)
    obs = render_observation(scene, fine)
    mask, depth = obs[oid]
    vs, us = np.nonzero(mask.bits)
    uv = np.column_stack([us + 0.5, vs + 0.5])
    pts = backproject_many(uv, depth.values[vs, us], fine)
    return pts.mean(axis=0)


def default_arms(ws: WorkspaceSpec | None = None):
    """Left/right reference arm models mounted on the workspace bases."""
    from .kinematics import ArmModel, reference_arm

    ws = ws or WorkspaceSpec()
    return {
        Arm.LEFT: reference_arm("left", ws.arm_base(Arm.LEFT)),
        Arm.RIGHT: reference_arm("right", ws.arm_base(Arm.RIGHT)),
    }


@dataclass(frozen=True)
class PoseError:
    position: float  # metres, against the visible-surface mean
    yaw: float | None  # radians mod pi; None for rotationally symmetric objects


def roundtrip_pose_error(
    scene: SceneInstance, cam: CameraModel, mode: PoseMode = PoseMode.PLANAR
) -> dict[str, PoseError]:
    """Render, estimate each object's pose, and compare to ground truth.

    Yaw error is measured modulo pi (boxes are two-fold symmetric in top-down
    view) and skipped for cylinders; position error is measured against the
    object's visible-surface mean.
    """
    obs = render_observation(scene, cam)
    out = {}
    for oid in sorted(scene.objects):
        obj = scene.objects[oid]
        mask, depth = obs[oid]
        symmetric = obj.shape is Shape.CYLINDER
        est = estimate_pose(mask, depth, cam, mode=mode, allow_degenerate=symmetric)
        ref = surface_mean(scene, cam, oid)
        pos_err = float(np.linalg.norm(est.pose.translation - ref))
        yaw_err = None
        if not symmetric:
            diff = est.pose.rotation.yaw() - obj.pose.rotation.yaw()
            diff = (diff + math.pi / 2.0) % math.pi - math.pi / 2.0
            yaw_err = abs(diff)
        out[oid] = PoseError(position=pos_err, yaw=yaw_err)
    return out
