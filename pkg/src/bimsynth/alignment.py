"""Rigid pose alignment and instance-level size adaptation of variable blocks.

The alignment delta maps a seed-scene object onto its novel counterpart:
a rigid transform T = P_novel . P_demo^-1 applied to every pose of the
variable block, plus a scaled bounding-box size offset applied to the block's
primitive endpoint positions in the novel object's principal frame.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .demonstration import AEP, ArmState
from .geometry import RigidPose, Rotation, Vec3, compose, inverse


@dataclass(frozen=True)
class AlignmentDelta:
    transform: RigidPose  # T = P_novel . P_demo^-1, world frame
    size_offset: tuple[float, float, float]  # (dl, dw, dh), metres
    scale: float  # adjustment gain, empirically 0.8..1.0
    object_frame: Rotation  # novel object's principal frame

    def __post_init__(self):
        if not 0.0 < self.scale <= 2.0:
            raise ValueError(f"scale {self.scale} outside (0, 2]")

    def is_identity(self) -> bool:
        """Exact (bitwise) identity; used to short-circuit adaptation so the
        seed scene reproduces the seed keyposes byte for byte."""
        return (
            self.transform.equal_bytes(RigidPose.identity())
            and self.size_offset == (0.0, 0.0, 0.0)
        )


def object_delta(
    p_demo: RigidPose,
    p_novel: RigidPose,
    b_demo: tuple[float, float, float],
    b_novel: tuple[float, float, float],
    scale: float = 0.9,
) -> AlignmentDelta:
    """Delta carrying the demo-to-novel rigid transform and size offsets.

    Bitwise-equal poses yield an exactly-identity transform, which keeps
    synthesis on the seed scene bit-for-bit reproducible.
    """
    if p_novel.equal_bytes(p_demo):
        transform = RigidPose.identity()
    else:
        transform = compose(p_novel, inverse(p_demo))
    offset = tuple(float(n) - float(d) for n, d in zip(b_novel, b_demo))
    return AlignmentDelta(
        transform=transform,
        size_offset=offset,  # type: ignore[arg-type]
        scale=scale,
        object_frame=p_novel.rotation,
    )


def adapt_grasp(delta: AlignmentDelta, p_grasp_demo: RigidPose) -> RigidPose:
    """Novel grasp pose T . P_grasp_demo; preserves the grasp-to-object
    relative pose exactly."""
    if delta.is_identity():
        return p_grasp_demo
    return compose(delta.transform, p_grasp_demo)


def offset_endpoint(state: ArmState, delta: AlignmentDelta, object_frame: Rotation) -> ArmState:
    """Shift a primitive endpoint by the scaled size offset.

    The offset is expressed in the object's principal frame and rotated into
    the world; orientation and gripper state are untouched.
    """
    off = np.asarray(delta.size_offset, dtype=float)
    if not off.any():
        return state
    shift = delta.scale * object_frame.apply(off)
    pose = RigidPose(state.pose.rotation, state.pose.translation + shift)
    return replace(state, pose=pose)


def _adapt_state(state: ArmState, delta: AlignmentDelta) -> ArmState:
    pose = compose(delta.transform, state.pose)
    return replace(state, pose=pose)


def adapt_block(aeps: list[AEP], delta: AlignmentDelta) -> list[AEP]:
    """Adapt a variable block's primitives (stated in the world frame).

    Every state receives the rigid transform and the size offset, so chained
    endpoints stay chained and gripper events keep their positions in the
    sequence.  An exactly-identity delta returns the input untouched.
    """
    if delta.is_identity():
        return list(aeps)
    out = []
    for aep in aeps:
        start = offset_endpoint(_adapt_state(aep.start_state, delta), delta, delta.object_frame)
        end = offset_endpoint(_adapt_state(aep.end_state, delta), delta, delta.object_frame)
        out.append(replace(aep, start_state=start, end_state=end))
    return out
