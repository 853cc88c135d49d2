"""One-to-many trajectory synthesis over enumerated workspace scenes.

For every enumerated scene the pipeline re-targets the seed demonstration's
variable blocks onto the novel object poses (ground truth or perceived),
recombines them with the invariant blocks into a keypose stream, and
validates the stream with inverse kinematics plus swept collision checks.
Passing streams are emitted as synthesized trajectories; failures are
recorded as typed rejections, never retried.

Validation walks the keypose stream interval by interval: each moving arm is
solved to its next keypose and its joint-space sweep is checked against the
table, the scene boxes, and the other arm frozen at the interval start.  An
object about to be grasped is exempt from its grasping arm's checks (the
seed demonstration establishes that contact deliberately), and once a
gripper closes on it the object leaves the obstacle set and rides the tool
frame as an attached capsule.
"""

from __future__ import annotations

import enum
import hashlib
import itertools
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .alignment import AlignmentDelta, adapt_block, object_delta
from .demonstration import (
    AEP,
    Arm,
    ArmState,
    BimanualSample,
    Block,
    BlockCategory,
    BlockKind,
    Decomposition,
    Gripper,
)
from .errors import DegenerateCloud, EmptyMask, InvalidDepth, Unreachable
from .geometry import CameraModel, RigidPose, compose, inverse
from .harness import (
    Region,
    SceneInstance,
    SceneObject,
    Shape,
    WorkspaceSpec,
    cell_centers,
    render_observation,
)
from .kinematics import (
    ArmModel,
    AttachedObject,
    Capsule,
    CollisionScene,
    Obb,
    arm_capsules,
    config_in_collision,
    inverse_kinematics,
    path_collision_free,
)
from .perception import DepthImage, ObjectMask, PoseMode, estimate_pose


class Mode(enum.Enum):
    GROUND_TRUTH = "ground_truth"
    PERCEPTION = "perception"


class Outcome(enum.Enum):
    PASS = "pass"
    REJECT_IK = "reject_ik"
    REJECT_COLLISION = "reject_collision"
    REJECT_PERCEPTION = "reject_perception"


@dataclass(frozen=True)
class InstanceSpec:
    shape: Shape
    dims: tuple[float, float, float]  # (l, w, h); cylinders use l = w = diameter


@dataclass(frozen=True)
class RoleSpec:
    """Placement protocol for one manipulated object role."""

    object_id: str
    region: Region
    grid: tuple[int, int]  # (rows, cols)
    orientations: tuple[float, ...]  # yaw angles, radians
    instances: tuple[InstanceSpec, ...]
    symmetric: bool = False  # rotationally symmetric: identity-yaw fallback allowed

    def __post_init__(self):
        if self.grid[0] < 1 or self.grid[1] < 1:
            raise ValueError("grid counts must be >= 1")
        if not self.orientations:
            raise ValueError("orientation set must be non-empty")
        if not self.instances:
            raise ValueError("instance catalog must be non-empty")


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    roles: tuple[RoleSpec, ...]
    jitter: float = 0.005  # m, uniform per-axis placement tolerance
    scale: float = 0.9  # size-adaptation gain

    def __post_init__(self):
        if self.jitter < 0.0:
            raise ValueError("jitter must be non-negative")
        ids = [r.object_id for r in self.roles]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate role object ids")

    def sorted_roles(self) -> tuple[RoleSpec, ...]:
        return tuple(sorted(self.roles, key=lambda r: r.object_id))

    def scene_count(self) -> int:
        n = 1
        for role in self.roles:
            n *= len(role.instances) * len(role.orientations) * role.grid[0] * role.grid[1]
        return n


def scene_seed(master_seed: int, index: int) -> int:
    """Stable 64-bit per-scene seed derived from the master seed and index."""
    words = np.random.SeedSequence([master_seed, index]).generate_state(2)
    return int(words[0]) << 32 | int(words[1])


def enumerate_scenes(
    spec: TaskSpec, master_seed: int, workspace: WorkspaceSpec | None = None
) -> list[SceneInstance]:
    """Deterministic Cartesian product of (instance x orientation x cell) per
    role, crossed across roles; each scene gets its own jitter draw."""
    ws = workspace or WorkspaceSpec()
    roles = spec.sorted_roles()
    per_role = []
    for role in roles:
        cells = cell_centers(ws.rect(role.region), *role.grid)
        combos = [
            (ii, oi, ci)
            for ii in range(len(role.instances))
            for oi in range(len(role.orientations))
            for ci in range(len(cells))
        ]
        per_role.append((role, cells, combos))

    scenes = []
    for index, picks in enumerate(itertools.product(*(c for _, _, c in per_role))):
        seed = scene_seed(master_seed, index)
        rng = np.random.default_rng(seed)
        objects = {}
        grid_cell = {}
        for (role, cells, _), (ii, oi, ci) in zip(per_role, picks):
            inst = role.instances[ii]
            cx, cy = cells[ci]
            jx, jy = rng.uniform(-spec.jitter, spec.jitter, 2) if spec.jitter > 0 else (0.0, 0.0)
            yaw = role.orientations[oi]
            from .geometry import Rotation, vec3

            pose = RigidPose(Rotation.from_yaw(yaw), vec3(cx + jx, cy + jy, inst.dims[2] / 2.0))
            objects[role.object_id] = SceneObject(
                shape=inst.shape, dims=inst.dims, pose=pose, instance_index=ii
            )
            grid_cell[role.object_id] = ci
        scenes.append(
            SceneInstance(
                objects=objects, workspace=ws, grid_cell=grid_cell, scene_seed=seed, index=index
            )
        )
    return scenes


# ---------------------------------------------------------------------------
# Keypose streams


@dataclass(frozen=True)
class Keypose:
    t: float
    left: ArmState
    right: ArmState
    block_index: int
    sample_index: int = 0  # demonstration sample the event came from

    def arm(self, arm: Arm) -> ArmState:
        return self.left if arm is Arm.LEFT else self.right


def _states_equal(a: ArmState, b: ArmState) -> bool:
    return a.gripper == b.gripper and a.pose.equal_bytes(b.pose)


def build_keyposes(
    decomp: Decomposition, adapted: dict[int, tuple[AEP, ...]] | None = None
) -> list[Keypose]:
    """Recombine (possibly adapted) block primitives into a keypose stream.

    Keyposes are the primitive endpoint states plus gripper events, in
    demonstration time order; the non-moving arm holds its previous state.
    """
    adapted = adapted or {}
    demo = decomp.demo
    cur = {Arm.LEFT: demo.samples[0].left, Arm.RIGHT: demo.samples[0].right}
    out = [
        Keypose(
            t=demo.samples[0].t,
            left=cur[Arm.LEFT],
            right=cur[Arm.RIGHT],
            block_index=0,
            sample_index=0,
        )
    ]
    for bi, block in enumerate(decomp.blocks):
        aeps = adapted.get(bi, decomp.aeps.get(bi))
        if not aeps:
            continue
        events: dict[int, dict[Arm, ArmState]] = {}
        for aep in aeps:
            events.setdefault(aep.start_index, {})[aep.arm] = aep.start_state
            events.setdefault(aep.end_index, {})[aep.arm] = aep.end_state
        for idx in sorted(events):
            changed = False
            for arm, state in events[idx].items():
                if not _states_equal(state, cur[arm]):
                    cur[arm] = state
                    changed = True
            if changed:
                out.append(
                    Keypose(
                        t=demo.samples[idx].t,
                        left=cur[Arm.LEFT],
                        right=cur[Arm.RIGHT],
                        block_index=bi,
                        sample_index=idx,
                    )
                )
    return out


def solve_seed_configs(
    decomp: Decomposition, arms: dict[Arm, ArmModel]
) -> dict[tuple[Arm, int], np.ndarray]:
    """Joint configurations of the seed demonstration at primitive boundaries.

    These serve as canonical IK seeds during validation: every stream keypose
    maps to a demonstration sample index, and seeding from the seed-run
    configuration keeps the solver on one branch across scenes.  Raises
    Unreachable when the seed demonstration itself cannot be solved.
    """
    demo = decomp.demo
    out: dict[tuple[Arm, int], np.ndarray] = {}
    for arm in (Arm.LEFT, Arm.RIGHT):
        indices = {0}
        for aeps in decomp.aeps.values():
            for aep in aeps:
                if aep.arm is arm:
                    indices.add(aep.start_index)
                    indices.add(aep.end_index)
        from .kinematics import READY_CONFIG

        q = READY_CONFIG.copy()
        for idx in sorted(indices):
            target = compose(demo.arm_bases[arm], demo.samples[idx].arm(arm).pose)
            q = inverse_kinematics(arms[arm], target, q)
            out[(arm, idx)] = q
    return out


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class BlockValidation:
    block_index: int
    ik_ok: bool
    path_ok: bool
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    blocks: tuple[BlockValidation, ...]
    overall: Outcome
    failed_block: int | None = None

    @staticmethod
    def passing(n_blocks: int) -> "ValidationReport":
        return ValidationReport(
            blocks=tuple(BlockValidation(i, True, True) for i in range(n_blocks)),
            overall=Outcome.PASS,
        )

    @staticmethod
    def failure(n_blocks: int, block: int, outcome: Outcome, detail: str) -> "ValidationReport":
        entries = []
        for i in range(n_blocks):
            if i == block:
                ik_ok = outcome is not Outcome.REJECT_IK
                path_ok = outcome is not Outcome.REJECT_COLLISION
                entries.append(BlockValidation(i, ik_ok, path_ok, detail))
            else:
                entries.append(BlockValidation(i, True, True))
        return ValidationReport(blocks=tuple(entries), overall=outcome, failed_block=block)


@dataclass
class _ArmTrack:
    model: ArmModel
    q: np.ndarray
    pose_local: RigidPose
    gripper: Gripper
    attached: AttachedObject | None = None


def _obb_of(obj: SceneObject) -> Obb:
    return Obb(pose=obj.pose, half_extents=np.array(obj.dims) / 2.0)


def _nearest_object(
    point: np.ndarray, obbs: dict[str, Obb], available: set[str]
) -> tuple[str | None, float]:
    best, best_d = None, math.inf
    for oid in sorted(available):
        obb = obbs[oid]
        local = inverse(obb.pose).apply(point)
        outside = np.maximum(np.abs(local) - obb.half_extents, 0.0)
        d = float(np.linalg.norm(outside))
        if d < best_d:
            best, best_d = oid, d
    return best, best_d


def _capsule_sig(caps: tuple[Capsule, ...]) -> bytes:
    h = hashlib.blake2b(digest_size=16)
    for c in caps:
        h.update(c.p0.tobytes())
        h.update(c.p1.tobytes())
        h.update(np.float64(c.radius).tobytes())
    return h.digest()


def _obstacle_sig(obbs: dict[str, Obb], retired: set[str]) -> bytes:
    h = hashlib.blake2b(digest_size=16)
    for oid in sorted(obbs):
        if oid in retired:
            continue
        h.update(oid.encode())
        h.update(obbs[oid].pose.rotation.q.tobytes())
        h.update(obbs[oid].pose.translation.tobytes())
        h.update(obbs[oid].half_extents.tobytes())
    return h.digest()


def validate_keyposes(
    keyposes: list[Keypose],
    arm_bases: dict[Arm, RigidPose],
    arms: dict[Arm, ArmModel],
    scene: SceneInstance,
    n_blocks: int,
    contact_eps: float = 0.02,
    resolution: float = 0.017,
    memo: dict | None = None,
    seed_configs: dict[tuple[Arm, int], np.ndarray] | None = None,
) -> tuple[ValidationReport, dict[Arm, list[np.ndarray]]]:
    """Check reachability and collision freedom of a keypose stream.

    Shared by synthesis and dataset re-validation so that emitted
    trajectories reproduce their pass verdict from disk: stored trajectories
    carry the per-keypose joint configurations, and re-seeding the solver
    from its own solution returns that solution bit for bit.  The optional
    memo caches per-interval results keyed on the full check signature,
    which collapses the scene-independent invariant-block work across a run.
    Returns the report plus per-arm configurations at every keypose.
    """
    all_obbs = {oid: _obb_of(obj) for oid, obj in scene.objects.items()}
    workspace_aabb = scene.workspace.aabb()
    retired: set[str] = set()
    tracks: dict[Arm, _ArmTrack] = {}
    seed_configs = seed_configs or {}
    moved_prev = {Arm.LEFT: False, Arm.RIGHT: False}
    snapshots: dict[Arm, tuple] = {}
    snapshot_sigs: dict[Arm, bytes] = {}
    live_scene = CollisionScene(dict(all_obbs), (), workspace_aabb)
    obstacle_sig = _obstacle_sig(all_obbs, retired)

    def refresh_snapshot(arm: Arm) -> None:
        caps = arm_capsules(arms[arm], tracks[arm].q, tracks[arm].attached)
        snapshots[arm] = caps
        snapshot_sigs[arm] = _capsule_sig(caps)

    def retire(oid: str) -> None:
        nonlocal live_scene, obstacle_sig
        retired.add(oid)
        live_scene = CollisionScene(
            {o: b for o, b in all_obbs.items() if o not in retired}, (), workspace_aabb
        )
        obstacle_sig = _obstacle_sig(all_obbs, retired)

    def solve_ik(arm: Arm, target_local: RigidPose, seed: np.ndarray) -> np.ndarray:
        target_world = compose(arm_bases[arm], target_local)
        return inverse_kinematics(arms[arm], target_world, seed)

    configs: dict[Arm, list[np.ndarray]] = {Arm.LEFT: [], Arm.RIGHT: []}
    kp0 = keyposes[0]
    for arm in (Arm.LEFT, Arm.RIGHT):
        state = kp0.arm(arm)
        try:
            q = solve_ik(arm, state.pose, seed_configs.get((arm, kp0.sample_index), np.zeros(6)))
        except Unreachable as exc:
            return (
                ValidationReport.failure(
                    n_blocks, kp0.block_index, Outcome.REJECT_IK, f"{arm.value} start: {exc}"
                ),
                configs,
            )
        tracks[arm] = _ArmTrack(
            model=arms[arm], q=q, pose_local=state.pose, gripper=state.gripper
        )
    for arm in (Arm.LEFT, Arm.RIGHT):
        refresh_snapshot(arm)
    for arm in (Arm.LEFT, Arm.RIGHT):
        other = Arm.RIGHT if arm is Arm.LEFT else Arm.LEFT
        start_scene = CollisionScene(all_obbs, snapshots[other], workspace_aabb)
        if config_in_collision(arms[arm], tracks[arm].q, start_scene):
            return (
                ValidationReport.failure(
                    n_blocks,
                    kp0.block_index,
                    Outcome.REJECT_COLLISION,
                    f"{arm.value} start configuration in collision",
                ),
                configs,
            )
    for arm in (Arm.LEFT, Arm.RIGHT):
        configs[arm].append(tracks[arm].q)

    for kp in keyposes[1:]:
        moved_now = {Arm.LEFT: False, Arm.RIGHT: False}
        for arm in (Arm.LEFT, Arm.RIGHT):
            track = tracks[arm]
            state = kp.arm(arm)
            if state.pose.equal_bytes(track.pose_local):
                continue
            moved_now[arm] = True
            other = Arm.RIGHT if arm is Arm.LEFT else Arm.LEFT
            target_world = compose(arm_bases[arm], state.pose)
            available = set(all_obbs) - retired
            exempt, d = _nearest_object(target_world.translation, all_obbs, available)
            if exempt is not None and d > contact_eps:
                exempt = None
            key = None
            if memo is not None:
                key = (
                    arm.value,
                    kp.sample_index,
                    track.q.tobytes(),
                    state.pose.rotation.q.tobytes(),
                    state.pose.translation.tobytes(),
                    snapshot_sigs[other],
                    obstacle_sig,
                    exempt,
                    None
                    if track.attached is None
                    else (
                        track.attached.object_id,
                        track.attached.p0_tool.tobytes(),
                        track.attached.p1_tool.tobytes(),
                        track.attached.radius,
                    ),
                )
                hit = memo.get(key)
                if hit is not None:
                    ok, q_new, reason = hit
                    if not ok:
                        outcome = (
                            Outcome.REJECT_IK if q_new is None else Outcome.REJECT_COLLISION
                        )
                        return (
                            ValidationReport.failure(n_blocks, kp.block_index, outcome, reason),
                            configs,
                        )
                    track.q = q_new
                    track.pose_local = state.pose
                    continue
            # Warm-chain the solver while an arm keeps moving; enter fresh
            # chains from the canonical seed-run configuration so solutions
            # stay on one branch across scenes.
            seed = (
                track.q
                if moved_prev[arm]
                else seed_configs.get((arm, kp.sample_index), track.q)
            )
            try:
                q_new = solve_ik(arm, state.pose, seed)
            except Unreachable as exc:
                if memo is not None:
                    memo[key] = (False, None, f"{arm.value}: {exc}")
                return (
                    ValidationReport.failure(
                        n_blocks, kp.block_index, Outcome.REJECT_IK, f"{arm.value}: {exc}"
                    ),
                    configs,
                )
            free = path_collision_free(
                arms[arm],
                track.q,
                q_new,
                live_scene.with_frozen(snapshots[other]),
                resolution=resolution,
                ignore=exempt,
                attached=track.attached,
            )
            if memo is not None:
                reason = "" if free else f"{arm.value}: swept path in collision"
                memo[key] = (free, q_new, reason)
            if not free:
                return (
                    ValidationReport.failure(
                        n_blocks,
                        kp.block_index,
                        Outcome.REJECT_COLLISION,
                        f"{arm.value}: swept path in collision",
                    ),
                    configs,
                )
            track.q = q_new
            track.pose_local = state.pose

        # Gripper transitions after motion: closing attaches the nearest
        # object within reach, opening drops the attachment.  Grasped objects
        # never return to the obstacle set: their later pose is unknown.
        stale = set(arm for arm in (Arm.LEFT, Arm.RIGHT) if moved_now[arm])
        for arm in (Arm.LEFT, Arm.RIGHT):
            track = tracks[arm]
            state = kp.arm(arm)
            if state.gripper == track.gripper:
                continue
            if state.gripper is Gripper.CLOSED:
                tool_world = compose(arm_bases[arm], state.pose)
                available = set(all_obbs) - retired
                oid, d = _nearest_object(tool_world.translation, all_obbs, available)
                if oid is not None and d <= contact_eps:
                    track.attached = AttachedObject.from_obb(oid, all_obbs[oid], tool_world)
                    retire(oid)
            else:
                track.attached = None
            track.gripper = state.gripper
            stale.add(arm)
        for arm in stale:
            refresh_snapshot(arm)
        moved_prev = moved_now
        for arm in (Arm.LEFT, Arm.RIGHT):
            configs[arm].append(tracks[arm].q)

    return ValidationReport.passing(n_blocks), configs


# ---------------------------------------------------------------------------
# Per-scene synthesis


@dataclass(frozen=True)
class Provenance:
    seed_task_id: str
    scene_index: int
    scene_seed: int
    master_seed: int
    mode: Mode
    deltas: dict[int, AlignmentDelta] = field(default_factory=dict)


@dataclass(frozen=True)
class SynthesizedTrajectory:
    samples: tuple[BimanualSample, ...]
    block_indices: tuple[int, ...]
    configs: dict[Arm, tuple[np.ndarray, ...]]  # joint configs per keypose
    scene: SceneInstance
    provenance: Provenance
    validation: ValidationReport


@dataclass(frozen=True)
class SynthesisResult:
    scene: SceneInstance
    outcome: Outcome
    report: ValidationReport
    trajectory: SynthesizedTrajectory | None = None


def _aeps_to_world(aeps: tuple[AEP, ...], bases: dict[Arm, RigidPose]) -> list[AEP]:
    out = []
    for aep in aeps:
        base = bases[aep.arm]
        out.append(
            replace(
                aep,
                start_state=replace(aep.start_state, pose=compose(base, aep.start_state.pose)),
                end_state=replace(aep.end_state, pose=compose(base, aep.end_state.pose)),
            )
        )
    return out


def _aeps_to_local(aeps: list[AEP], bases: dict[Arm, RigidPose]) -> tuple[AEP, ...]:
    out = []
    for aep in aeps:
        inv = inverse(bases[aep.arm])
        out.append(
            replace(
                aep,
                start_state=replace(aep.start_state, pose=compose(inv, aep.start_state.pose)),
                end_state=replace(aep.end_state, pose=compose(inv, aep.end_state.pose)),
            )
        )
    return tuple(out)


def synthesize_one(
    decomp: Decomposition,
    scene: SceneInstance,
    arms: dict[Arm, ArmModel],
    mode: Mode = Mode.GROUND_TRUTH,
    observations: dict[str, tuple[ObjectMask, DepthImage]] | None = None,
    cam: CameraModel | None = None,
    seed_objects_override: dict[str, object] | None = None,
    scale: float = 0.9,
    contact_eps: float = 0.02,
    resolution: float = 0.017,
    symmetric_ids: frozenset[str] = frozenset(),
    master_seed: int = 0,
    memo: dict | None = None,
    seed_configs: dict[tuple[Arm, int], np.ndarray] | None = None,
) -> SynthesisResult:
    """Adapt, recombine, and validate the seed demonstration for one scene.

    Ground-truth mode takes object poses straight from the scene; perception
    mode estimates them from rendered mask-plus-depth observations.  The
    returned result carries a trajectory only when validation passes fully.
    """
    demo = decomp.demo
    n_blocks = len(decomp.blocks)
    seed_objects = seed_objects_override or demo.seed_objects
    deltas: dict[int, AlignmentDelta] = {}
    for bi, block in enumerate(decomp.blocks):
        if block.kind is not BlockKind.VARIABLE or block.bound_object is None:
            continue
        oid = block.bound_object
        if oid not in scene.objects:
            raise ValueError(f"scene lacks object {oid!r} bound by block {bi}")
        seed_obj = seed_objects[oid]
        if mode is Mode.GROUND_TRUTH:
            novel_pose = scene.objects[oid].pose
            novel_bbox = scene.objects[oid].dims
        else:
            if observations is None or cam is None:
                raise ValueError("perception mode needs observations and a camera")
            mask, depth = observations[oid]
            try:
                est = estimate_pose(
                    mask,
                    depth,
                    cam,
                    mode=PoseMode.PLANAR,
                    allow_degenerate=oid in symmetric_ids,
                )
            except (DegenerateCloud, EmptyMask, InvalidDepth) as exc:
                return SynthesisResult(
                    scene=scene,
                    outcome=Outcome.REJECT_PERCEPTION,
                    report=ValidationReport.failure(
                        n_blocks, bi, Outcome.REJECT_PERCEPTION, f"{oid}: {exc}"
                    ),
                )
            novel_pose, novel_bbox = est.pose, est.bbox
        deltas[bi] = object_delta(seed_obj.pose, novel_pose, seed_obj.bbox, novel_bbox, scale)

    adapted: dict[int, tuple[AEP, ...]] = {}
    for bi, delta in deltas.items():
        aeps = decomp.aeps.get(bi, ())
        if delta.is_identity():
            adapted[bi] = aeps  # bit-for-bit reproduction of the seed block
        else:
            world = _aeps_to_world(aeps, demo.arm_bases)
            adapted[bi] = _aeps_to_local(adapt_block(world, delta), demo.arm_bases)

    keyposes = build_keyposes(decomp, adapted)
    report, configs = validate_keyposes(
        keyposes,
        demo.arm_bases,
        arms,
        scene,
        n_blocks,
        contact_eps=contact_eps,
        resolution=resolution,
        memo=memo,
        seed_configs=seed_configs,
    )
    if report.overall is not Outcome.PASS:
        return SynthesisResult(scene=scene, outcome=report.overall, report=report)
    provenance = Provenance(
        seed_task_id=demo.task_id,
        scene_index=scene.index,
        scene_seed=scene.scene_seed,
        master_seed=master_seed,
        mode=mode,
        deltas=deltas,
    )
    trajectory = SynthesizedTrajectory(
        samples=tuple(
            BimanualSample(t=kp.t, left=kp.left, right=kp.right) for kp in keyposes
        ),
        block_indices=tuple(kp.block_index for kp in keyposes),
        configs={arm: tuple(configs[arm]) for arm in configs},
        scene=scene,
        provenance=provenance,
        validation=report,
    )
    return SynthesisResult(
        scene=scene, outcome=Outcome.PASS, report=report, trajectory=trajectory
    )


@dataclass
class DatasetStats:
    attempts: int = 0
    passes: int = 0
    rejects: dict[str, int] = field(default_factory=dict)
    pass_rate: float = 0.0
    wall_clock_s: float = 0.0
    coverage: dict[str, dict[int, int]] = field(default_factory=dict)
    digest: str = ""

    def record(self, result: SynthesisResult) -> None:
        self.attempts += 1
        if result.outcome is Outcome.PASS:
            self.passes += 1
            for oid, cell in result.scene.grid_cell.items():
                role_cov = self.coverage.setdefault(oid, {})
                role_cov[cell] = role_cov.get(cell, 0) + 1
        else:
            key = result.outcome.value
            self.rejects[key] = self.rejects.get(key, 0) + 1
        self.pass_rate = self.passes / self.attempts if self.attempts else 0.0


def synthesize_dataset(
    decomp: Decomposition,
    spec: TaskSpec,
    master_seed: int,
    mode: Mode,
    sink,
    arms: dict[Arm, ArmModel] | None = None,
    workspace: WorkspaceSpec | None = None,
    cam: CameraModel | None = None,
    seed_scene: SceneInstance | None = None,
    contact_eps: float = 0.02,
    resolution: float = 0.017,
) -> DatasetStats:
    """Map synthesize_one over the enumerated scenes and write passes to the sink.

    Content is deterministic for a given master seed: per-scene randomness is
    derived from (master_seed, scene index) alone.  The sink receives every
    passing trajectory in scene order plus a final (stats, rejects) summary;
    see formats.DatasetWriter for the on-disk layout.
    """
    from .harness import default_arms

    ws = workspace or WorkspaceSpec()
    arms = arms or default_arms(ws)
    camera = cam or ws.overhead_camera()
    scenes = enumerate_scenes(spec, master_seed, ws)
    symmetric_ids = frozenset(r.object_id for r in spec.roles if r.symmetric)

    seed_objects_override = None
    if mode is Mode.PERCEPTION:
        if seed_scene is None:
            raise ValueError("perception mode needs the seed scene for self-consistent deltas")
        from .demonstration import SeedObject

        obs0 = render_observation(seed_scene, camera)
        seed_objects_override = {}
        for oid, (mask, depth) in obs0.items():
            est = estimate_pose(
                mask, depth, camera, mode=PoseMode.PLANAR, allow_degenerate=oid in symmetric_ids
            )
            seed_objects_override[oid] = SeedObject(pose=est.pose, bbox=est.bbox)

    stats = DatasetStats()
    rejects: list[tuple[int, str, int | None, str]] = []
    memo: dict = {}
    seed_configs = solve_seed_configs(decomp, arms)
    t0 = time.perf_counter()
    for scene in scenes:
        observations = render_observation(scene, camera) if mode is Mode.PERCEPTION else None
        result = synthesize_one(
            decomp,
            scene,
            arms,
            mode=mode,
            observations=observations,
            cam=camera,
            seed_objects_override=seed_objects_override,
            scale=spec.scale,
            contact_eps=contact_eps,
            resolution=resolution,
            symmetric_ids=symmetric_ids,
            master_seed=master_seed,
            memo=memo,
            seed_configs=seed_configs,
        )
        stats.record(result)
        if result.trajectory is not None:
            sink.write_trajectory(result.trajectory)
        else:
            detail = ""
            if result.report.failed_block is not None:
                detail = result.report.blocks[result.report.failed_block].detail
            rejects.append(
                (scene.index, result.outcome.value, result.report.failed_block, detail)
            )
    stats.wall_clock_s = time.perf_counter() - t0
    stats.digest = sink.finalize(spec, master_seed, mode, stats, rejects)
    return stats


class NullSink:
    """Counts trajectories without persisting them; digest covers content."""

    def __init__(self):
        self._hash = hashlib.sha256()
        self.count = 0

    def write_trajectory(self, traj: SynthesizedTrajectory) -> None:
        self.count += 1
        for s in traj.samples:
            for state in (s.left, s.right):
                self._hash.update(state.pose.rotation.q.tobytes())
                self._hash.update(state.pose.translation.tobytes())
                self._hash.update(bytes([state.gripper.value]))

    def finalize(self, spec, master_seed, mode, stats, rejects) -> str:
        for r in rejects:
            self._hash.update(repr(r).encode())
        return self._hash.hexdigest()
