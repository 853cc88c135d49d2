"""Seed demonstration model and its deconstruction into blocks and motion primitives.

A demonstration is a timestamped stream of bimanual end-effector states with
binary gripper bits.  Deconstruction proceeds in three passes:

1. segment_blocks: cut the stream at sustained pauses and at gripper flips,
   then classify each block as single-arm, dual-arm, or static.
2. refine_to_aeps: split each non-static block into atomic execution
   primitives, the minimal per-arm motion units used for adaptation.
3. categorize_kinds: label blocks invariant (replayed verbatim) or variable
   (re-targeted per scene), binding variable blocks to the object they serve.

End-effector poses are expressed in each arm's base frame; seed object
estimates and arm bases are world frame.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyDemo
from .geometry import RigidPose, Vec3


class Gripper(enum.IntEnum):
    OPEN = 0
    CLOSED = 1


class Arm(enum.Enum):
    LEFT = "left"
    RIGHT = "right"


class BlockCategory(enum.Enum):
    SINGLE_ARM_LEFT = "single_arm_left"
    SINGLE_ARM_RIGHT = "single_arm_right"
    DUAL_ARM = "dual_arm"
    STATIC = "static"


class BlockKind(enum.Enum):
    INVARIANT = "invariant"
    VARIABLE = "variable"


@dataclass(frozen=True)
class ArmState:
    pose: RigidPose
    gripper: Gripper = Gripper.OPEN


@dataclass(frozen=True)
class BimanualSample:
    t: float
    left: ArmState
    right: ArmState

    def arm(self, arm: Arm) -> ArmState:
        return self.left if arm is Arm.LEFT else self.right


@dataclass(frozen=True)
class SeedObject:
    """World-frame pose and principal-frame bounding box of a seed-scene object."""

    pose: RigidPose
    bbox: tuple[float, float, float]  # (l, w, h), metres


@dataclass(frozen=True)
class Demonstration:
    task_id: str
    samples: tuple[BimanualSample, ...]
    seed_objects: dict[str, SeedObject]
    arm_bases: dict[Arm, RigidPose]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if len(self.samples) < 2:
            raise EmptyDemo(f"demonstration needs >= 2 samples, got {len(self.samples)}")
        times = [s.t for s in self.samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("timestamps must be strictly increasing")

    def world_state(self, index: int, arm: Arm) -> RigidPose:
        from .geometry import compose

        return compose(self.arm_bases[arm], self.samples[index].arm(arm).pose)


@dataclass(frozen=True)
class Block:
    """Half-open sample range [start_index, end_index) of one execution phase."""

    start_index: int
    end_index: int
    category: BlockCategory
    kind: BlockKind | None = None
    bound_object: str | None = None
    ambiguous: bool = False  # some arm fell in the (zeta, delta) band


@dataclass(frozen=True)
class AEP:
    """Atomic execution primitive: one salient per-arm state transition."""

    arm: Arm
    start_state: ArmState
    end_state: ArmState
    duration: float
    start_index: int
    end_index: int


@dataclass(frozen=True)
class SegmentationParams:
    delta: float = 0.05  # m, minimal motion saliency
    zeta: float = 0.005  # m, static tolerance
    gamma: float = 0.03  # m, AEP distance threshold
    t_max: float = 5.0  # s, AEP duration bound
    beta: float = 0.1  # m/rad, rotation weight in the motion metric
    pause_span: float = 0.5  # s, minimum quiet span treated as a boundary

    def __post_init__(self):
        if not 0.0 < self.zeta < self.delta:
            raise ValueError("require 0 < zeta < delta")
        if self.gamma <= 0.0 or self.t_max <= 0.0 or self.beta < 0.0 or self.pause_span <= 0.0:
            raise ValueError("gamma, t_max, pause_span must be positive; beta non-negative")


def motion_distance(a: ArmState, b: ArmState, beta: float, gripper_bonus: float = 0.0) -> float:
    """Pose metric ||p_a - p_b|| + beta * geodesic_angle, plus a fixed bonus
    when the gripper state differs (forces detection of gripper events)."""
    d = float(np.linalg.norm(a.pose.translation - b.pose.translation))
    d += beta * a.pose.rotation.angle_to(b.pose.rotation)
    if a.gripper != b.gripper:
        d += gripper_bonus
    return d


def classify_block(
    states: list[BimanualSample], params: SegmentationParams
) -> tuple[BlockCategory, bool]:
    """Category from endpoint displacements, with an ambiguity flag.

    An arm with displacement >= delta moves; <= zeta it is static; in between
    it is treated as static but the block is flagged.  A gripper flip counts
    as salient motion.
    """
    if not states:
        raise ValueError("empty block")
    first, last = states[0], states[-1]
    flags = {}
    ambiguous = False
    for arm in (Arm.LEFT, Arm.RIGHT):
        d = motion_distance(first.arm(arm), last.arm(arm), params.beta, gripper_bonus=params.delta)
        if d >= params.delta:
            flags[arm] = True
        else:
            flags[arm] = False
            if d > params.zeta:
                ambiguous = True
    if flags[Arm.LEFT] and flags[Arm.RIGHT]:
        return BlockCategory.DUAL_ARM, ambiguous
    if flags[Arm.LEFT]:
        return BlockCategory.SINGLE_ARM_LEFT, ambiguous
    if flags[Arm.RIGHT]:
        return BlockCategory.SINGLE_ARM_RIGHT, ambiguous
    return BlockCategory.STATIC, ambiguous


def _per_step_quiet(demo: Demonstration, params: SegmentationParams) -> np.ndarray:
    """quiet[i] is True when neither arm moves more than zeta over step i -> i+1."""
    n = len(demo.samples)
    quiet = np.empty(n - 1, dtype=bool)
    for i in range(n - 1):
        a, b = demo.samples[i], demo.samples[i + 1]
        dl = motion_distance(a.left, b.left, params.beta)
        dr = motion_distance(a.right, b.right, params.beta)
        flip = a.left.gripper != b.left.gripper or a.right.gripper != b.right.gripper
        quiet[i] = dl < params.zeta and dr < params.zeta and not flip
    return quiet


def segment_blocks(demo: Demonstration, params: SegmentationParams) -> list[Block]:
    """Partition the sample range into classified blocks.

    Boundaries are placed at the midpoint of every maximal quiet span lasting
    at least pause_span, and at the arrival sample of every gripper flip.
    """
    n = len(demo.samples)
    quiet = _per_step_quiet(demo, params)
    boundaries: set[int] = set()

    # Pause boundaries: midpoint sample of each long-enough quiet run.
    i = 0
    while i < n - 1:
        if quiet[i]:
            j = i
            while j < n - 1 and quiet[j]:
                j += 1
            # run covers steps [i, j), samples [i, j]
            span = demo.samples[j].t - demo.samples[i].t
            if span >= params.pause_span:
                boundaries.add((i + j + 1) // 2)
            i = j
        else:
            i += 1

    # Gripper flips: boundary at the arrival sample, so the post-flip state
    # begins the next block and stays with the motion it initiates.
    for i in range(n - 1):
        a, b = demo.samples[i], demo.samples[i + 1]
        if a.left.gripper != b.left.gripper or a.right.gripper != b.right.gripper:
            boundaries.add(i + 1)

    cuts = sorted(b for b in boundaries if 0 < b < n)
    edges = [0] + cuts + [n]
    blocks = []
    for start, end in zip(edges, edges[1:]):
        category, ambiguous = classify_block(list(demo.samples[start:end]), params)
        blocks.append(Block(start, end, category, ambiguous=ambiguous))
    return blocks


def _moving_arms(category: BlockCategory) -> tuple[Arm, ...]:
    if category is BlockCategory.SINGLE_ARM_LEFT:
        return (Arm.LEFT,)
    if category is BlockCategory.SINGLE_ARM_RIGHT:
        return (Arm.RIGHT,)
    if category is BlockCategory.DUAL_ARM:
        return (Arm.LEFT, Arm.RIGHT)
    return ()


def refine_to_aeps(block: Block, demo: Demonstration, params: SegmentationParams) -> list[AEP]:
    """Greedy forward scan emitting one primitive per accumulated-gamma span.

    A primitive ends when accumulated motion reaches gamma, elapsed time
    reaches t_max, or the gripper flips; a sub-gamma tail merges into the
    final primitive.  Consecutive primitives chain exactly: each end state is
    the next start state.  Left-arm primitives precede right-arm ones in the
    returned list.
    """
    if block.category is BlockCategory.STATIC:
        raise ValueError("static blocks have no motion primitives")
    out: list[AEP] = []
    samples = demo.samples
    for arm in _moving_arms(block.category):
        aeps: list[AEP] = []
        seg_start = block.start_index
        acc = 0.0
        for i in range(block.start_index, block.end_index - 1):
            a, b = samples[i].arm(arm), samples[i + 1].arm(arm)
            acc += motion_distance(a, b, params.beta)
            elapsed = samples[i + 1].t - samples[seg_start].t
            flip = a.gripper != b.gripper
            if acc >= params.gamma or elapsed >= params.t_max or flip:
                aeps.append(
                    AEP(
                        arm=arm,
                        start_state=samples[seg_start].arm(arm),
                        end_state=samples[i + 1].arm(arm),
                        duration=elapsed,
                        start_index=seg_start,
                        end_index=i + 1,
                    )
                )
                seg_start = i + 1
                acc = 0.0
        last = block.end_index - 1
        if seg_start < last or not aeps:
            if aeps:
                prev = aeps.pop()
                aeps.append(
                    AEP(
                        arm=arm,
                        start_state=prev.start_state,
                        end_state=samples[last].arm(arm),
                        duration=samples[last].t - samples[prev.start_index].t,
                        start_index=prev.start_index,
                        end_index=last,
                    )
                )
            else:
                aeps.append(
                    AEP(
                        arm=arm,
                        start_state=samples[block.start_index].arm(arm),
                        end_state=samples[last].arm(arm),
                        duration=samples[last].t - samples[block.start_index].t,
                        start_index=block.start_index,
                        end_index=last,
                    )
                )
        out.extend(aeps)
    return out


def _point_obb_distance(point: Vec3, obj: SeedObject) -> float:
    """Distance from a world point to the object's oriented bounding box."""
    from .geometry import inverse as pose_inverse

    local = pose_inverse(obj.pose).apply(point)
    half = np.array(obj.bbox) / 2.0
    outside = np.maximum(np.abs(local) - half, 0.0)
    return float(np.linalg.norm(outside))


def _first_close_indices(demo: Demonstration) -> dict[Arm, int]:
    """Arrival sample of each arm's first open-to-closed transition."""
    firsts: dict[Arm, int] = {}
    for arm in (Arm.LEFT, Arm.RIGHT):
        for i in range(len(demo.samples) - 1):
            if (
                demo.samples[i].arm(arm).gripper is Gripper.OPEN
                and demo.samples[i + 1].arm(arm).gripper is Gripper.CLOSED
            ):
                firsts[arm] = i + 1
                break
    return firsts


def categorize_kinds(
    blocks: list[Block],
    demo: Demonstration,
    contact_eps: float = 0.02,
    overrides: dict[int, tuple[BlockKind, str | None]] | None = None,
) -> list[Block]:
    """Label blocks invariant or variable, binding variable blocks to objects.

    A block is variable when it contains an arm's first gripper closure
    within contact_eps of a seed object, or when it ends with an open gripper
    hovering within contact_eps of one (pre-grasp approach).  An explicit
    override map {block index: (kind, bound object)} wins over the heuristic.
    """
    if not demo.seed_objects:
        raise ValueError("demonstration carries no seed objects")
    overrides = overrides or {}
    firsts = _first_close_indices(demo)

    def nearest_object(point: Vec3) -> tuple[str | None, float]:
        best_id, best_d = None, math.inf
        for oid in sorted(demo.seed_objects):
            d = _point_obb_distance(point, demo.seed_objects[oid])
            if d < best_d:
                best_id, best_d = oid, d
        return best_id, best_d

    out = []
    for bi, block in enumerate(blocks):
        if bi in overrides:
            kind, bound = overrides[bi]
            out.append(replace(block, kind=kind, bound_object=bound))
            continue
        kind = BlockKind.INVARIANT
        bound = None
        for arm in _moving_arms(block.category):
            if arm in firsts and block.start_index <= firsts[arm] < block.end_index:
                p = demo.world_state(firsts[arm], arm).translation
                oid, d = nearest_object(p)
                if d <= contact_eps:
                    kind, bound = BlockKind.VARIABLE, oid
                    break
            end_state = demo.samples[block.end_index - 1].arm(arm)
            if end_state.gripper is Gripper.OPEN:
                p = demo.world_state(block.end_index - 1, arm).translation
                oid, d = nearest_object(p)
                if d <= contact_eps:
                    kind, bound = BlockKind.VARIABLE, oid
                    break
        out.append(replace(block, kind=kind, bound_object=bound))
    return out


@dataclass(frozen=True)
class Decomposition:
    """Blocks with kinds plus per-block motion primitives for one demonstration."""

    demo: Demonstration
    blocks: tuple[Block, ...]
    aeps: dict[int, tuple[AEP, ...]] = field(default_factory=dict)


def decompose(
    demo: Demonstration,
    params: SegmentationParams | None = None,
    contact_eps: float = 0.02,
    overrides: dict[int, tuple[BlockKind, str | None]] | None = None,
) -> Decomposition:
    """Full deconstruction pass: segment, categorize, refine."""
    params = params or SegmentationParams()
    blocks = categorize_kinds(segment_blocks(demo, params), demo, contact_eps, overrides)
    aeps = {
        i: tuple(refine_to_aeps(b, demo, params))
        for i, b in enumerate(blocks)
        if b.category is not BlockCategory.STATIC
    }
    return Decomposition(demo=demo, blocks=tuple(blocks), aeps=aeps)
