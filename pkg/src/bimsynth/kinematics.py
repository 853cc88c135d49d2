""" 6-DoF serial arm kinematics and capsule-based collision checking.

Arms are described by standard DH rows plus a tool offset along the flange
axis.  Link geometry is a chain of capsules spanning consecutive frame
origins; collision queries test those capsules against the table half-space
z < 0, oriented boxes, and a frozen capsule set standing in for the other
arm.  All queries are pure and vectorized over configuration batches so that
swept joint-space path checks stay cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LimitsViolated, Unreachable
from .geometry import RigidPose, Rotation, Vec3, compose, inverse

IK_POS_TOL = 1e-6  # m
IK_ROT_TOL = 1e-6  # rad
IK_MAX_ITERS = 200
IK_BASE_DAMPING = 1e-3
PATH_RESOLUTION = 0.017  # rad, about one degree

# Elbow-up rest posture; canonical IK chains start here so solutions stay on
# the branch that keeps the elbow above the table.
READY_CONFIG = np.array([0.0, 0.6, -1.5, 0.0, 0.9, 0.0])


@dataclass(frozen=True)
class ArmModel:
    """Six revolute joints as standard DH rows (a, alpha, d, theta_offset)."""

    name: str
    dh: np.ndarray  # (6, 4) rows (a, alpha, d, theta_offset)
    limits: np.ndarray  # (6, 2) radians, lo < hi
    base: RigidPose
    tool_offset: float  # metres along the flange z axis
    capsule_radii: np.ndarray  # (7,) base->j1, j1->j2, ..., j6->tool

    def __post_init__(self):
        dh = np.asarray(self.dh, dtype=float)
        lim = np.asarray(self.limits, dtype=float)
        radii = np.asarray(self.capsule_radii, dtype=float)
        if dh.shape != (6, 4):
            raise ValueError("dh must be (6, 4)")
        if lim.shape != (6, 2) or np.any(lim[:, 0] >= lim[:, 1]):
            raise ValueError("limits must be (6, 2) with lo < hi")
        if self.tool_offset < 0.0:
            raise ValueError("tool_offset must be non-negative")
        if radii.shape != (7,) or np.any(radii <= 0.0):
            raise ValueError("capsule_radii must be 7 positive values")
        object.__setattr__(self, "dh", dh)
        object.__setattr__(self, "limits", lim)
        object.__setattr__(self, "capsule_radii", radii)
        object.__setattr__(self, "_base_matrix", self.base.matrix())

    def base_matrix(self) -> np.ndarray:
        return self._base_matrix

    @property
    def reach_radius(self) -> float:
        """Upper bound on tool distance from the base origin."""
        return float(np.abs(self.dh[:, 0]).sum() + np.abs(self.dh[:, 2]).sum()) + self.tool_offset

    def in_limits(self, q: np.ndarray) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.limits[:, 0]) and np.all(q <= self.limits[:, 1]))


JointConfig = np.ndarray  # (6,) radians


def reference_arm(name: str, base: RigidPose) -> ArmModel:
    """Repo fixture approximating an 880 mm-reach collaborative arm.

    The geometry is generic, not vendor-exact: a vertical shoulder riser, two
    long horizontal links, a spherical-ish wrist, and a 160 mm parallel
    gripper folded into the tool offset.
    """
    dh = np.array(
        [
            [0.000, math.pi / 2, 0.122, 0.0],
            [0.408, 0.0, 0.000, 0.0],
            [0.376, 0.0, 0.000, 0.0],
            [0.000, math.pi / 2, 0.103, 0.0],
            [0.000, -math.pi / 2, 0.103, 0.0],
            [0.000, 0.0, 0.094, 0.0],
        ]
    )
    limits = np.array([[-3.05, 3.05]] * 6)
    radii = np.array([0.055, 0.050, 0.045, 0.040, 0.035, 0.030, 0.010])
    return ArmModel(
        name=name, dh=dh, limits=limits, base=base, tool_offset=0.160, capsule_radii=radii
    )


def _dh_matrices(dh: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Batched link transforms: q is (..., 6), result (..., 6, 4, 4)."""
    a = dh[:, 0]
    alpha = dh[:, 1]
    d = dh[:, 2]
    theta = q + dh[:, 3]
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    shape = theta.shape + (4, 4)
    m = np.zeros(shape)
    m[..., 0, 0] = ct
    m[..., 0, 1] = -st * ca
    m[..., 0, 2] = st * sa
    m[..., 0, 3] = a * ct
    m[..., 1, 0] = st
    m[..., 1, 1] = ct * ca
    m[..., 1, 2] = -ct * sa
    m[..., 1, 3] = a * st
    m[..., 2, 1] = sa
    m[..., 2, 2] = ca
    m[..., 2, 3] = d
    m[..., 3, 3] = 1.0
    return m


def fk_frames(arm: ArmModel, q: np.ndarray) -> np.ndarray:
    """World-frame 4x4 transforms along the chain for a batch of configs.

    q is (N, 6); the result is (N, 8, 4, 4): the base frame, the six joint
    frames, and the tool frame.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    n = q.shape[0]
    links = _dh_matrices(arm.dh, q)  # (N, 6, 4, 4)
    frames = np.empty((n, 8, 4, 4))
    frames[:, 0] = arm.base_matrix()
    cur = np.broadcast_to(arm.base_matrix(), (n, 4, 4)).copy()
    for j in range(6):
        cur = cur @ links[:, j]
        frames[:, j + 1] = cur
    tool = cur.copy()
    tool[:, :3, 3] += arm.tool_offset * cur[:, :3, 2]
    frames[:, 7] = tool
    return frames


def _fk_single(arm: ArmModel, q: np.ndarray) -> np.ndarray:
    """(8, 4, 4) frame chain for one configuration; the IK hot path."""
    links = _dh_matrices(arm.dh, np.asarray(q, dtype=float))  # (6, 4, 4)
    frames = np.empty((8, 4, 4))
    cur = arm.base_matrix()
    frames[0] = cur
    for j in range(6):
        cur = cur @ links[j]
        frames[j + 1] = cur
    tool = cur.copy()
    tool[:3, 3] += arm.tool_offset * cur[:3, 2]
    frames[7] = tool
    return frames


def forward_kinematics(arm: ArmModel, q: JointConfig) -> RigidPose:
    """World-frame tool pose for one configuration."""
    m = _fk_single(arm, np.asarray(q, dtype=float))[7]
    return RigidPose(Rotation.from_matrix(m[:3, :3]), m[:3, 3].copy())


def _rotation_vector(m: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix."""
    tr = float(np.trace(m))
    cos_a = max(-1.0, min(1.0, (tr - 1.0) / 2.0))
    angle = math.acos(cos_a)
    if angle < 1e-12:
        return np.zeros(3)
    if angle > math.pi - 1e-6:
        # Near pi the off-diagonal form degrades; recover the axis from the
        # dominant diagonal entry instead.
        axis = np.sqrt(np.maximum(np.diag(m) - cos_a, 0.0) / (1.0 - cos_a))
        axis[1] = math.copysign(axis[1], m[0, 1] + m[1, 0])
        axis[2] = math.copysign(axis[2], m[0, 2] + m[2, 0])
        n = np.linalg.norm(axis)
        return angle * axis / n if n > 0 else np.zeros(3)
    v = np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    return angle / (2.0 * math.sin(angle)) * v


def _pose_error(frames: np.ndarray, target: RigidPose) -> tuple[np.ndarray, np.ndarray]:
    tool = frames[7]
    e_pos = target.translation - tool[:3, 3]
    e_rot = _rotation_vector(target.rotation.matrix() @ tool[:3, :3].T)
    return e_pos, e_rot


def _jacobian(frames: np.ndarray) -> np.ndarray:
    """Geometric Jacobian (6, 6) at the tool point for one config."""
    tool_p = frames[7, :3, 3]
    z = frames[:6, :3, 2]  # (6, 3) joint axes
    r = tool_p - frames[:6, :3, 3]  # (6, 3) origin-to-tool
    jac = np.empty((6, 6))
    jac[0] = z[:, 1] * r[:, 2] - z[:, 2] * r[:, 1]
    jac[1] = z[:, 2] * r[:, 0] - z[:, 0] * r[:, 2]
    jac[2] = z[:, 0] * r[:, 1] - z[:, 1] * r[:, 0]
    jac[3:] = z.T
    return jac


def _solve_from_seed(
    arm: ArmModel, target: RigidPose, seed: np.ndarray, posture: np.ndarray
) -> tuple[np.ndarray | None, float, float]:
    """Damped least squares from one seed; returns (q or None, best residuals).

    A null-space pull toward ``posture`` keeps solutions on compact,
    well-conditioned configurations without disturbing the task error.
    """
    lo, hi = arm.limits[:, 0], arm.limits[:, 1]
    q = np.clip(np.asarray(seed, dtype=float), lo, hi)
    frames = _fk_single(arm, q)
    e_pos, e_rot = _pose_error(frames, target)
    err = math.sqrt(e_pos @ e_pos + 0.25 * (e_rot @ e_rot))
    best_pos, best_rot = math.sqrt(e_pos @ e_pos), math.sqrt(e_rot @ e_rot)
    damping = IK_BASE_DAMPING
    stall = 0
    eye6 = np.eye(6)
    for _ in range(IK_MAX_ITERS):
        if best_pos <= IK_POS_TOL and best_rot <= IK_ROT_TOL:
            return q, best_pos, best_rot
        jac = _jacobian(frames)
        a = jac @ jac.T + (damping**2) * eye6
        # Posture pull fades out near convergence so it cannot stall the
        # final approach to the task tolerance.
        gain = 0.4 * min(1.0, err / 1e-3)
        null = gain * (posture - q) if gain > 0.0 else np.zeros(6)
        rhs = np.stack([np.concatenate([e_pos, e_rot]), jac @ null], axis=1)
        sol = np.linalg.solve(a, rhs)
        dq = jac.T @ sol[:, 0]
        if gain > 0.0:
            null = null - jac.T @ sol[:, 1]
            n = math.sqrt(null @ null)
            if n > 0.15:
                null *= 0.15 / n
            dq = dq + null
        step = math.sqrt(dq @ dq)
        if step > 0.5:
            dq *= 0.5 / step
        q_new = np.clip(q + dq, lo, hi)
        frames_new = _fk_single(arm, q_new)
        e_pos_new, e_rot_new = _pose_error(frames_new, target)
        err_new = math.sqrt(e_pos_new @ e_pos_new + 0.25 * (e_rot_new @ e_rot_new))
        if err_new >= err:
            # Residual did not drop: keep the old point and stiffen damping.
            damping = min(damping * 2.0, 1e2)
            stall += 1
            if stall > 28:
                break
            continue
        q, frames, e_pos, e_rot, err = q_new, frames_new, e_pos_new, e_rot_new, err_new
        best_pos, best_rot = math.sqrt(e_pos @ e_pos), math.sqrt(e_rot @ e_rot)
        damping = max(damping / 1.5, IK_BASE_DAMPING)
        stall = 0
    if best_pos <= IK_POS_TOL and best_rot <= IK_ROT_TOL:
        return q, best_pos, best_rot
    return None, best_pos, best_rot


def _seed_fan(arm: ArmModel, target: RigidPose, seed: np.ndarray) -> list[np.ndarray]:
    """Deterministic fallback seeds: the caller's seed, then aimed ready
    poses with both elbow branches, then single-joint perturbations."""
    local = inverse(arm.base).apply(target.translation)
    aim = math.atan2(local[1], local[0])
    ready = READY_CONFIG.copy()
    ready[0] = aim
    elbow_down = np.array([aim, -0.6, 1.5, 0.0, -0.9, 0.0])
    fan = [np.asarray(seed, dtype=float), ready, elbow_down, np.zeros(6)]
    # Wrist-flip variants reach tool rolls that sit past a wrist joint limit
    # on the primary branch.
    for s4, s6 in ((math.pi, -math.pi), (-math.pi, math.pi)):
        flipped = ready.copy()
        flipped[3] += s4
        flipped[4] = -flipped[4]
        flipped[5] += s6
        fan.append(flipped)
    for j in range(3):
        for sign in (1.0, -1.0):
            p = ready.copy()
            p[j] += sign * 0.7
            fan.append(p)
    return fan


def inverse_kinematics(arm: ArmModel, target: RigidPose, seed: JointConfig) -> JointConfig:
    """Joint configuration reaching the target tool pose, or Unreachable.

    Runs damped least squares from a fixed fan of seeds and accepts the first
    configuration whose forward kinematics lands within 1e-6 m / 1e-6 rad
    inside the joint limits.  Deterministic given the inputs; the raised
    Unreachable carries the best residual seen for diagnostics.
    """
    dist = float(np.linalg.norm(target.translation - arm.base.translation))
    if dist > arm.reach_radius:
        raise Unreachable(dist - arm.reach_radius, math.pi)
    local = inverse(arm.base).apply(target.translation)
    posture = READY_CONFIG.copy()
    posture[0] = math.atan2(local[1], local[0])
    best_pos, best_rot = math.inf, math.inf
    for candidate in _seed_fan(arm, target, seed):
        q, pos_res, rot_res = _solve_from_seed(arm, target, candidate, posture)
        if q is not None:
            return q
        if (pos_res, rot_res) < (best_pos, best_rot):
            best_pos, best_rot = pos_res, rot_res
    raise Unreachable(best_pos, best_rot)


# ---------------------------------------------------------------------------
# Collision geometry


@dataclass(frozen=True)
class Capsule:
    p0: Vec3
    p1: Vec3
    radius: float


@dataclass(frozen=True)
class Obb:
    pose: RigidPose
    half_extents: np.ndarray  # (3,), all positive

    def __post_init__(self):
        h = np.asarray(self.half_extents, dtype=float)
        if h.shape != (3,) or np.any(h <= 0.0):
            raise ValueError("half extents must be 3 positive values")
        object.__setattr__(self, "half_extents", h)


@dataclass(frozen=True)
class AttachedObject:
    """Grasped object riding the tool frame as an enclosing capsule.

    The capsule spans the box's longest axis with radius covering the cross
    section, expressed relative to the tool frame at grasp time.
    """

    object_id: str
    p0_tool: Vec3
    p1_tool: Vec3
    radius: float

    @staticmethod
    def from_obb(object_id: str, obb: Obb, tool_pose: RigidPose) -> "AttachedObject":
        h = obb.half_extents
        major = int(np.argmax(h))
        minor = [i for i in range(3) if i != major]
        radius = float(np.hypot(h[minor[0]], h[minor[1]]))
        axis = np.zeros(3)
        axis[major] = h[major]
        rel = compose(inverse(tool_pose), obb.pose)
        # Rounding scrubs per-scene floating-point noise: a rigidly adapted
        # grasp has the same tool-relative geometry in every scene.
        return AttachedObject(
            object_id=object_id,
            p0_tool=np.round(rel.apply(-axis), 9),
            p1_tool=np.round(rel.apply(axis), 9),
            radius=radius,
        )


@dataclass(frozen=True)
class CollisionScene:
    """Immutable obstacle set: table half-space z < 0, boxes, a frozen
    capsule set for the other arm, and a workspace box kept as metadata."""

    obbs: dict[str, Obb] = field(default_factory=dict)
    frozen_capsules: tuple[Capsule, ...] = ()
    workspace_aabb: tuple[Vec3, Vec3] | None = None

    def with_frozen(self, capsules: tuple[Capsule, ...]) -> "CollisionScene":
        return CollisionScene(self.obbs, capsules, self.workspace_aabb)


def _point_aabb_distance(points: np.ndarray, half: np.ndarray) -> np.ndarray:
    outside = np.maximum(np.abs(points) - half, 0.0)
    return np.sqrt(np.einsum("...i,...i->...", outside, outside))


def segment_obb_distance(p0: np.ndarray, p1: np.ndarray, obb: Obb) -> np.ndarray:
    """Minimum distance from segments (..., 3) to a solid oriented box.

    The point-to-box distance along a segment is convex in the parameter, so
    a fixed-iteration ternary search converges to the global minimum.
    """
    rot = obb.pose.rotation.matrix()
    a = (np.asarray(p0, dtype=float) - obb.pose.translation) @ rot
    b = (np.asarray(p1, dtype=float) - obb.pose.translation) @ rot
    half = obb.half_extents
    d = b - a
    lo = np.zeros(a.shape[:-1])
    hi = np.ones(a.shape[:-1])
    for _ in range(44):
        third = (hi - lo) / 3.0
        m1 = lo + third
        m2 = hi - third
        f1 = _point_aabb_distance(a + m1[..., None] * d, half)
        f2 = _point_aabb_distance(a + m2[..., None] * d, half)
        take_left = f1 <= f2
        hi = np.where(take_left, m2, hi)
        lo = np.where(take_left, lo, m1)
    t = 0.5 * (lo + hi)
    return _point_aabb_distance(a + t[..., None] * d, half)


def segment_segment_distance(
    p0: np.ndarray, p1: np.ndarray, q0: np.ndarray, q1: np.ndarray
) -> np.ndarray:
    """Minimum distance between segment batches; standard clamped closest point."""
    p0, p1 = np.asarray(p0, dtype=float), np.asarray(p1, dtype=float)
    q0, q1 = np.asarray(q0, dtype=float), np.asarray(q1, dtype=float)
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = np.sum(d1 * d1, axis=-1)
    e = np.sum(d2 * d2, axis=-1)
    f = np.sum(d2 * r, axis=-1)
    c = np.sum(d1 * r, axis=-1)
    b = np.sum(d1 * d2, axis=-1)
    denom = a * e - b * b
    eps = 1e-14
    s = np.where(denom > eps, (b * f - c * e) / np.where(denom > eps, denom, 1.0), 0.0)
    s = np.clip(s, 0.0, 1.0)
    t = np.where(e > eps, (b * s + f) / np.where(e > eps, e, 1.0), 0.0)
    t_clamped = np.clip(t, 0.0, 1.0)
    # Re-solve s where t was clamped.
    s = np.where(
        t != t_clamped,
        np.clip(np.where(a > eps, (t_clamped * b - c) / np.where(a > eps, a, 1.0), 0.0), 0.0, 1.0),
        s,
    )
    t = t_clamped
    closest_p = p0 + s[..., None] * d1
    closest_q = q0 + t[..., None] * d2
    return np.linalg.norm(closest_p - closest_q, axis=-1)


def _arm_capsule_points(
    arm: ArmModel, frames: np.ndarray, attached: AttachedObject | None
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Capsule endpoints (N, S, 3) x2, radii (S,), and a table-check mask (S,).

    The base mount capsule is exempt from the table check (it is bolted to
    it), and so is an attached object: resting or placing contact with the
    table is intended, not a collision.
    """
    origins = frames[:, :, :3, 3]  # (N, 8, 3)
    p0 = origins[:, :-1, :]
    p1 = origins[:, 1:, :]
    radii = arm.capsule_radii
    table_mask = np.ones(7, dtype=bool)
    table_mask[0] = False
    if attached is not None:
        tool = frames[:, 7]
        rot = tool[:, :3, :3]
        pos = tool[:, :3, 3]
        a0 = np.einsum("nij,j->ni", rot, attached.p0_tool) + pos
        a1 = np.einsum("nij,j->ni", rot, attached.p1_tool) + pos
        p0 = np.concatenate([p0, a0[:, None, :]], axis=1)
        p1 = np.concatenate([p1, a1[:, None, :]], axis=1)
        radii = np.concatenate([radii, [attached.radius]])
        table_mask = np.concatenate([table_mask, [False]])
    return p0, p1, radii, table_mask


def arm_capsules(
    arm: ArmModel, q: JointConfig, attached: AttachedObject | None = None
) -> tuple[Capsule, ...]:
    """World-frame capsule set of one configuration, for freezing an arm."""
    frames = fk_frames(arm, np.asarray(q, dtype=float)[None, :])
    p0, p1, radii, _ = _arm_capsule_points(arm, frames, attached)
    return tuple(
        Capsule(p0[0, i].copy(), p1[0, i].copy(), float(radii[i])) for i in range(p0.shape[1])
    )


def _batch_in_collision(
    arm: ArmModel,
    q_batch: np.ndarray,
    scene: CollisionScene,
    ignore: str | None,
    attached: AttachedObject | None,
) -> np.ndarray:
    frames = fk_frames(arm, q_batch)
    p0, p1, radii, table_mask = _arm_capsule_points(arm, frames, attached)
    n, s = p0.shape[0], p0.shape[1]
    hit = np.zeros(n, dtype=bool)

    low = np.minimum(p0[..., 2], p1[..., 2]) - radii  # (N, S)
    hit |= np.any(low[:, table_mask] < 0.0, axis=1)

    for oid in sorted(scene.obbs):
        if oid == ignore or (attached is not None and oid == attached.object_id):
            continue
        obb = scene.obbs[oid]
        # Bounding-sphere reject: only capsules that could possibly touch the
        # box go through the exact segment-box search.
        a = p0.reshape(-1, 3)
        b = p1.reshape(-1, 3)
        mid = 0.5 * (a + b)
        half_len = 0.5 * np.sqrt(np.einsum("ij,ij->i", b - a, b - a))
        centre_d = np.sqrt(
            np.einsum("ij,ij->i", mid - obb.pose.translation, mid - obb.pose.translation)
        )
        margin = float(np.linalg.norm(obb.half_extents))
        flat_r = np.broadcast_to(radii, (n, s)).reshape(-1)
        near = centre_d <= half_len + margin + flat_r + 1e-9
        if not np.any(near):
            continue
        d = np.full(a.shape[0], np.inf)
        d[near] = segment_obb_distance(a[near], b[near], obb)
        hit |= np.any(d.reshape(n, s) < radii, axis=1)

    if scene.frozen_capsules:
        c = len(scene.frozen_capsules)
        f0 = np.stack([cap.p0 for cap in scene.frozen_capsules])  # (C, 3)
        f1 = np.stack([cap.p1 for cap in scene.frozen_capsules])
        fr = np.array([cap.radius for cap in scene.frozen_capsules])
        d = segment_segment_distance(
            p0[:, :, None, :], p1[:, :, None, :], f0[None, None], f1[None, None]
        )  # (N, S, C)
        hit |= np.any(d < radii[None, :, None] + fr[None, None, :], axis=(1, 2))
    return hit


def config_in_collision(
    arm: ArmModel,
    q: JointConfig,
    scene: CollisionScene,
    ignore: str | None = None,
    attached: AttachedObject | None = None,
) -> bool:
    """True when any link capsule (or attached object) hits the scene."""
    q = np.asarray(q, dtype=float)
    return bool(_batch_in_collision(arm, q[None, :], scene, ignore, attached)[0])


def path_collision_free(
    arm: ArmModel,
    q_start: JointConfig,
    q_end: JointConfig,
    scene: CollisionScene,
    resolution: float = PATH_RESOLUTION,
    ignore: str | None = None,
    attached: AttachedObject | None = None,
) -> bool:
    """Linear joint-space sweep sampled at steps of at most ``resolution``.

    True only when every sampled configuration, endpoints included, is
    collision free.  Raises LimitsViolated when an endpoint is out of limits.
    """
    q_start = np.asarray(q_start, dtype=float)
    q_end = np.asarray(q_end, dtype=float)
    if not arm.in_limits(q_start) or not arm.in_limits(q_end):
        raise LimitsViolated("path endpoint outside joint limits")
    span = float(np.max(np.abs(q_end - q_start)))
    steps = max(int(math.ceil(span / resolution)), 1)
    ts = np.linspace(0.0, 1.0, steps + 1)
    q_batch = q_start[None, :] + ts[:, None] * (q_end - q_start)[None, :]
    return not bool(np.any(_batch_in_collision(arm, q_batch, scene, ignore, attached)))
