"""SE(3) algebra, principal-axis fitting, and pinhole camera projection.

Conventions used everywhere in the package:

* quaternions are stored (w, x, y, z) with unit norm and w >= 0
* positions and translations are metres in a right-handed frame
* camera extrinsics map camera-frame points to world-frame points
* depth values are z-depth along the camera optical axis, not ray range
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCloud, InvalidDepth

Vec3 = np.ndarray

# Eigenvalue ratio below which a cloud has no meaningful principal axis.
DEGENERACY_RATIO = 1.2


def vec3(x: float, y: float, z: float) -> Vec3:
    v = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector components: {v}")
    return v


def _canonical(q: np.ndarray) -> np.ndarray:
    """Normalize and resolve the quaternion double cover deterministically."""
    q = np.asarray(q, dtype=float)
    n = float(np.linalg.norm(q))
    if not math.isfinite(n) or n == 0.0:
        raise ValueError("zero or non-finite quaternion")
    if abs(n - 1.0) > 1e-9:
        q = q / n
    if q[0] < 0.0 or (q[0] == 0.0 and _first_nonzero_negative(q[1:])):
        q = -q
    return q


def _first_nonzero_negative(v: np.ndarray) -> bool:
    for c in v:
        if c != 0.0:
            return c < 0.0
    return False


@dataclass(frozen=True)
class Rotation:
    """Unit quaternion (w, x, y, z), canonicalized to w >= 0."""

    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _canonical(self.q))

    @staticmethod
    def identity() -> "Rotation":
        return Rotation(np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def from_quat(w: float, x: float, y: float, z: float) -> "Rotation":
        return Rotation(np.array([w, x, y, z], dtype=float))

    @staticmethod
    def from_axis_angle(axis: Vec3, angle: float) -> "Rotation":
        axis = np.asarray(axis, dtype=float)
        n = float(np.linalg.norm(axis))
        if n == 0.0:
            raise ValueError("zero rotation axis")
        half = 0.5 * angle
        return Rotation(np.concatenate(([math.cos(half)], math.sin(half) / n * axis)))

    @staticmethod
    def from_yaw(angle: float) -> "Rotation":
        return Rotation.from_axis_angle(np.array([0.0, 0.0, 1.0]), angle)

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Rotation":
        """Shepperd's method; picks the numerically largest pivot."""
        m = np.asarray(m, dtype=float)
        t = np.trace(m)
        if t > 0.0:
            s = math.sqrt(t + 1.0) * 2.0
            q = np.array(
                [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
            )
        elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            q = np.array(
                [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
            )
        elif m[1, 1] >= m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            q = np.array(
                [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
            )
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            q = np.array(
                [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
            )
        return Rotation(q)

    def matrix(self) -> np.ndarray:
        w, x, y, z = self.q
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def apply(self, v: Vec3) -> Vec3:
        return self.matrix() @ np.asarray(v, dtype=float)

    def __mul__(self, other: "Rotation") -> "Rotation":
        w1, x1, y1, z1 = self.q
        w2, x2, y2, z2 = other.q
        return Rotation(
            np.array(
                [
                    w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
                    w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                    w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
                    w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
                ]
            )
        )

    def inverse(self) -> "Rotation":
        w, x, y, z = self.q
        return Rotation(np.array([w, -x, -y, -z]))

    def angle_to(self, other: "Rotation") -> float:
        """Geodesic angle in [0, pi]."""
        rel = self.inverse() * other
        return 2.0 * math.atan2(float(np.linalg.norm(rel.q[1:])), abs(float(rel.q[0])))

    def yaw(self) -> float:
        """Heading of the rotated x-axis projected on the world xy-plane."""
        ax = self.apply(np.array([1.0, 0.0, 0.0]))
        return math.atan2(ax[1], ax[0])

    def slerp(self, other: "Rotation", t: float) -> "Rotation":
        q0, q1 = self.q, other.q
        dot = float(np.dot(q0, q1))
        if dot < 0.0:
            q1, dot = -q1, -dot
        if dot > 1.0 - 1e-12:
            return Rotation(q0 + t * (q1 - q0))
        theta = math.acos(min(1.0, dot))
        s = math.sin(theta)
        return Rotation((math.sin((1 - t) * theta) / s) * q0 + (math.sin(t * theta) / s) * q1)

    def allclose(self, other: "Rotation", atol: float = 1e-9) -> bool:
        return self.angle_to(other) <= atol


@dataclass(frozen=True)
class RigidPose:
    """SE(3) element: rotation followed by translation."""

    rotation: Rotation = field(default_factory=Rotation.identity)
    translation: Vec3 = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float)
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise ValueError(f"bad translation: {self.translation}")
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidPose":
        return RigidPose(Rotation.identity(), np.zeros(3))

    @staticmethod
    def from_parts(rotation: Rotation, x: float, y: float, z: float) -> "RigidPose":
        return RigidPose(rotation, vec3(x, y, z))

    def apply(self, point: Vec3) -> Vec3:
        return self.rotation.apply(point) + self.translation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.matrix()
        m[:3, 3] = self.translation
        return m

    def equal_bytes(self, other: "RigidPose") -> bool:
        return np.array_equal(self.rotation.q, other.rotation.q) and np.array_equal(
            self.translation, other.translation
        )

    def allclose(self, other: "RigidPose", atol: float = 1e-9) -> bool:
        return (
            self.rotation.allclose(other.rotation, atol)
            and float(np.linalg.norm(self.translation - other.translation)) <= atol
        )


def compose(a: RigidPose, b: RigidPose) -> RigidPose:
    """Pose that applies b first, then a."""
    return RigidPose(a.rotation * b.rotation, a.rotation.apply(b.translation) + a.translation)


def inverse(p: RigidPose) -> RigidPose:
    r = p.rotation.inverse()
    return RigidPose(r, -r.apply(p.translation))


def principal_axes(points: np.ndarray, reference: Vec3 | None = None) -> Rotation:
    """Principal axes of a 3D point cloud as a right-handed rotation.

    Columns of the result are eigenvectors of the centered covariance sorted
    by descending eigenvalue.  The first axis is flipped so its dot product
    with ``reference`` (default world +x) is non-negative; the third axis is
    forced by right-handedness.  Raises DegenerateCloud when the top two
    eigenvalues are within a factor of 1.2 of each other.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] < 2:
        raise DegenerateCloud(1.0, "fewer than two points")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / pts.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    ratio = float(evals[0] / max(evals[1], 1e-300))
    if ratio < DEGENERACY_RATIO:
        raise DegenerateCloud(ratio)
    ref = np.array([1.0, 0.0, 0.0]) if reference is None else np.asarray(reference, dtype=float)
    first = evecs[:, 0]
    d = float(np.dot(first, ref))
    if d == 0.0:
        # Reference is perpendicular; fall back to +y then +z for a stable sign.
        for fallback in (np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])):
            d = float(np.dot(first, fallback))
            if d != 0.0:
                break
    if d < 0.0:
        first = -first
    second = evecs[:, 1]
    third = np.cross(first, second)
    return Rotation.from_matrix(np.column_stack([first, second, third]))


def planar_axis_angle(points_xy: np.ndarray, reference: Vec3 | None = None) -> float:
    """Yaw of the major axis of a 2D cloud, via principal_axes on z=0 points."""
    pts = np.asarray(points_xy, dtype=float).reshape(-1, 2)
    lifted = np.column_stack([pts, np.zeros(pts.shape[0])])
    rot = principal_axes(lifted, reference)
    axis = rot.matrix()[:, 0]
    return math.atan2(axis[1], axis[0])


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus a camera-to-world extrinsic pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsic: RigidPose = field(default_factory=RigidPose.identity)

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside image")


def backproject(u: float, v: float, d: float, cam: CameraModel) -> Vec3:
    """Lift pixel (u, v) with z-depth d to a world-frame point."""
    if not math.isfinite(d) or d <= 0.0:
        raise InvalidDepth(f"depth {d!r} at ({u}, {v})", pixel=(int(u), int(v)))
    p_cam = np.array([(u - cam.cx) * d / cam.fx, (v - cam.cy) * d / cam.fy, d])
    return cam.extrinsic.apply(p_cam)


def backproject_many(uv: np.ndarray, d: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Vectorized backproject for an (N, 2) pixel array and (N,) depths."""
    uv = np.asarray(uv, dtype=float)
    d = np.asarray(d, dtype=float)
    bad = ~np.isfinite(d) | (d <= 0.0)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise InvalidDepth(f"depth {d[i]!r}", pixel=(int(uv[i, 0]), int(uv[i, 1])))
    p_cam = np.column_stack(
        [(uv[:, 0] - cam.cx) * d / cam.fx, (uv[:, 1] - cam.cy) * d / cam.fy, d]
    )
    return p_cam @ cam.extrinsic.rotation.matrix().T + cam.extrinsic.translation


def project(point: Vec3, cam: CameraModel) -> tuple[float, float, float]:
    """World point to (u, v, z-depth); inverse of backproject."""
    p_cam = inverse(cam.extrinsic).apply(point)
    z = float(p_cam[2])
    if z <= 0.0:
        raise InvalidDepth(f"point behind camera, z-depth {z!r}")
    return (
        float(cam.cx + cam.fx * p_cam[0] / z),
        float(cam.cy + cam.fy * p_cam[1] / z),
        z,
    )
