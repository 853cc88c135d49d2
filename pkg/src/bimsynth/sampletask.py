"""Scripted sample tasks: seed demonstrations, seed scenes, and task specs.

Two fixtures ship with the repo.  The reorient task has the right arm grasp
a flat box anywhere in the workspace, lift it, carry it across, and set it
down while the left arm sweeps in for a coordinated finish.  The pouring
task has each arm grasp its own object (a cylinder on the left half, a box
mug on the right half) and meet over the centre.  Both are built from
waypoint scripts sampled at a fixed rate with deliberate pauses at semantic
boundaries, mirroring how a kinesthetic demonstration is recorded.

Run ``python -m bimsynth.sampletask OUTDIR`` to write the demo files, task
specs, camera, and arm descriptions needed to drive the CLI end to end.
"""

from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np

from .demonstration import (
    Arm,
    ArmState,
    BimanualSample,
    Demonstration,
    Gripper,
    SeedObject,
)
from .geometry import RigidPose, Rotation, vec3
from .harness import Region, SceneInstance, SceneObject, Shape, WorkspaceSpec

SAMPLE_RATE = 20.0  # Hz


def grasp_orientation(yaw: float, tilt: float, toward: np.ndarray) -> Rotation:
    """Tool-down orientation, tilted from vertical toward a horizontal direction.

    yaw aligns the tool x axis with the object's long axis; tilt leans the
    tool toward the arm base so the wrist stays inside the reach envelope.
    """
    down = Rotation.from_axis_angle(vec3(1.0, 0.0, 0.0), math.pi)
    base = Rotation.from_yaw(yaw) * down
    t = np.asarray(toward, dtype=float)
    t = t / np.linalg.norm(t)
    axis = np.cross(np.array([0.0, 0.0, -1.0]), t)
    n = np.linalg.norm(axis)
    if n < 1e-12 or tilt == 0.0:
        return base
    return Rotation.from_axis_angle(axis / n, tilt) * base


class _Script:
    """Waypoint interpolator emitting fixed-rate bimanual samples.

    Each segment linearly interpolates the commanded arm poses over its
    duration; gripper changes apply from the segment's first emitted sample,
    so a flip arrives as an instantaneous event.
    """

    def __init__(self, left: ArmState, right: ArmState, rate: float = SAMPLE_RATE):
        self.rate = rate
        self.t = 0.0
        self.cur = {Arm.LEFT: left, Arm.RIGHT: right}
        self.samples = [BimanualSample(t=0.0, left=left, right=right)]

    def _lerp(self, a: RigidPose, b: RigidPose, alpha: float) -> RigidPose:
        if alpha >= 1.0:
            return b
        return RigidPose(
            a.rotation.slerp(b.rotation, alpha),
            a.translation + alpha * (b.translation - a.translation),
        )

    def segment(
        self,
        duration: float,
        left: RigidPose | None = None,
        right: RigidPose | None = None,
        left_grip: Gripper | None = None,
        right_grip: Gripper | None = None,
    ) -> "_Script":
        n = max(int(round(duration * self.rate)), 1)
        start = {arm: self.cur[arm] for arm in Arm}
        targets = {Arm.LEFT: left, Arm.RIGHT: right}
        grips = {Arm.LEFT: left_grip, Arm.RIGHT: right_grip}
        for i in range(1, n + 1):
            alpha = i / n
            states = {}
            for arm in Arm:
                pose = (
                    self._lerp(start[arm].pose, targets[arm], alpha)
                    if targets[arm] is not None
                    else self.cur[arm].pose
                )
                grip = grips[arm] if grips[arm] is not None else start[arm].gripper
                states[arm] = ArmState(pose=pose, gripper=grip)
            self.t += 1.0 / self.rate
            self.cur = states
            self.samples.append(
                BimanualSample(t=self.t, left=states[Arm.LEFT], right=states[Arm.RIGHT])
            )
        return self

    def pause(self, duration: float = 0.7) -> "_Script":
        return self.segment(duration)


def _away_from_base(point: np.ndarray, base: RigidPose) -> np.ndarray:
    d = np.asarray(point)[:2] - base.translation[:2]
    return np.array([d[0], d[1], 0.0])


def _to_base_frame(
    samples: list[BimanualSample], bases: dict[Arm, RigidPose]
) -> tuple[BimanualSample, ...]:
    """Scripts run in world coordinates; demonstrations store arm-base poses."""
    from .geometry import compose, inverse

    inv = {arm: inverse(bases[arm]) for arm in Arm}
    out = []
    for s in samples:
        out.append(
            BimanualSample(
                t=s.t,
                left=ArmState(compose(inv[Arm.LEFT], s.left.pose), s.left.gripper),
                right=ArmState(compose(inv[Arm.RIGHT], s.right.pose), s.right.gripper),
            )
        )
    return tuple(out)


GRASP_TILT = 0.60  # rad, lean away from the base so the wrist stays inside reach


def _park_state(point, base_point) -> ArmState:
    """Rest pose outside the shared workspace airspace, leaning to its base."""
    toward = np.array([base_point[0] - point[0], base_point[1] - point[1], 0.0])
    return ArmState(RigidPose(grasp_orientation(0.0, 0.45, toward), point))


def build_reorient_demo(ws: WorkspaceSpec | None = None) -> tuple[Demonstration, SceneInstance]:
    """Right arm grasps a flat box, lifts, carries, places; left sweeps in."""
    ws = ws or WorkspaceSpec()
    right_base = ws.arm_base(Arm.RIGHT)
    spoon_dims = (0.10, 0.05, 0.04)
    spoon_pose = RigidPose(Rotation.from_yaw(0.0), vec3(0.10, 0.0, spoon_dims[2] / 2.0))
    spoon = SceneObject(Shape.BOX, spoon_dims, spoon_pose)
    seed_scene = SceneInstance(objects={"spoon": spoon}, workspace=ws)

    away = _away_from_base(spoon_pose.translation, right_base)
    g = grasp_orientation(0.0, GRASP_TILT, away)
    # The left arm parks low outside the shared airspace; the right arm idles
    # high on its own side, clear of the table and the left half.
    home_l = _park_state(vec3(-0.40, 0.30, 0.15), vec3(-0.42, 0.0, 0.0))
    home_r = ArmState(RigidPose(grasp_orientation(0.0, 0.3, vec3(-1, 0, 0)), vec3(0.18, 0.05, 0.26)))

    # The travel block ends well above the object so it stays invariant; only
    # the short object-local descend and the grasped lift re-target per scene.
    staging = RigidPose(g, vec3(0.10, 0.0, 0.12))
    grasp = RigidPose(g, vec3(0.10, 0.0, 0.03))
    lift_top = RigidPose(g, vec3(0.10, 0.0, 0.13))
    carry = RigidPose(
        grasp_orientation(math.pi / 2.0, GRASP_TILT, vec3(-1, 0, 0)), vec3(-0.10, -0.14, 0.20)
    )
    place = RigidPose(carry.rotation, vec3(-0.10, -0.14, 0.065))
    sweep_l = RigidPose(home_l.pose.rotation, vec3(-0.12, 0.16, 0.25))

    s = _Script(home_l, home_r)
    s.pause(0.8)
    s.segment(1.0, right=staging)  # travel above the object
    s.pause()
    s.segment(0.6, right=grasp)  # object-local descend to the grasp point
    s.segment(0.3, right_grip=Gripper.CLOSED)  # close on the box
    s.segment(1.0, right=lift_top)  # lift straight up
    s.pause()
    s.segment(1.4, right=carry)  # carry across with a quarter-turn reorient
    s.pause()
    s.segment(1.0, right=place, left=sweep_l)  # coordinated lowering and sweep
    s.segment(0.3, right_grip=Gripper.OPEN)  # release
    s.segment(1.2, right=home_r.pose, left=home_l.pose)  # dual retreat
    s.pause(0.8)

    bases = {Arm.LEFT: ws.arm_base(Arm.LEFT), Arm.RIGHT: right_base}
    demo = Demonstration(
        task_id="reorient_sample",
        samples=_to_base_frame(s.samples, bases),
        seed_objects={"spoon": SeedObject(pose=spoon_pose, bbox=spoon_dims)},
        arm_bases=bases,
    )
    return demo, seed_scene


def build_reorient_spec() -> "TaskSpec":
    from .synthesis import InstanceSpec, RoleSpec, TaskSpec

    yaws = tuple(math.radians(a) for a in (-45, -30, -15, 0, 15, 30, 45))
    instances = tuple(
        InstanceSpec(Shape.BOX, dims)
        for dims in (
            (0.10, 0.05, 0.04),
            (0.12, 0.05, 0.04),
            (0.10, 0.04, 0.03),
            (0.14, 0.06, 0.04),
        )
    )
    role = RoleSpec(
        object_id="spoon",
        region=Region.WHOLE,
        grid=(6, 6),
        orientations=yaws,
        instances=instances,
    )
    return TaskSpec(task_id="reorient_sample", roles=(role,))


def build_pouring_demo(ws: WorkspaceSpec | None = None) -> tuple[Demonstration, SceneInstance]:
    """Left arm grasps a cylinder, right a mug; they meet over the centre."""
    ws = ws or WorkspaceSpec()
    left_base = ws.arm_base(Arm.LEFT)
    right_base = ws.arm_base(Arm.RIGHT)
    bottle_dims = (0.06, 0.06, 0.14)
    bottle_pose = RigidPose(Rotation.identity(), vec3(-0.15, 0.05, bottle_dims[2] / 2.0))
    mug_dims = (0.08, 0.08, 0.09)
    mug_pose = RigidPose(Rotation.identity(), vec3(0.15, -0.05, mug_dims[2] / 2.0))
    seed_scene = SceneInstance(
        objects={
            "bottle": SceneObject(Shape.CYLINDER, bottle_dims, bottle_pose),
            "mug": SceneObject(Shape.BOX, mug_dims, mug_pose),
        },
        workspace=ws,
    )

    gl = grasp_orientation(0.0, GRASP_TILT, _away_from_base(bottle_pose.translation, left_base))
    gr = grasp_orientation(0.0, GRASP_TILT, _away_from_base(mug_pose.translation, right_base))
    # Each arm works only its own half here, so both idle high on their side.
    home_l = ArmState(
        RigidPose(grasp_orientation(0.0, 0.3, vec3(1, 0, 0)), vec3(-0.18, -0.05, 0.26))
    )
    home_r = ArmState(
        RigidPose(grasp_orientation(0.0, 0.3, vec3(-1, 0, 0)), vec3(0.18, 0.05, 0.26))
    )

    b_staging = RigidPose(gl, vec3(-0.15, 0.05, 0.22))
    b_grasp = RigidPose(gl, vec3(-0.15, 0.05, 0.09))
    b_lift = RigidPose(gl, vec3(-0.15, 0.05, 0.26))
    pour = RigidPose(
        Rotation.from_axis_angle(vec3(0, 1, 0), -0.8) * gl, vec3(-0.06, 0.0, 0.30)
    )
    m_staging = RigidPose(gr, vec3(0.15, -0.05, 0.17))
    m_grasp = RigidPose(gr, vec3(0.15, -0.05, 0.05))
    m_lift = RigidPose(gr, vec3(0.15, -0.05, 0.16))
    catch = RigidPose(gr, vec3(0.07, 0.0, 0.15))

    s = _Script(home_l, home_r)
    s.pause(0.8)
    s.segment(1.0, left=b_staging)
    s.pause()
    s.segment(0.6, left=b_grasp)
    s.segment(0.3, left_grip=Gripper.CLOSED)
    s.segment(0.9, left=b_lift)
    s.pause()
    s.segment(1.0, right=m_staging)
    s.pause()
    s.segment(0.6, right=m_grasp)
    s.segment(0.3, right_grip=Gripper.CLOSED)
    s.segment(0.7, right=m_lift)
    s.pause()
    s.segment(1.3, left=pour, right=catch)  # dual-arm pour over the centre
    s.pause(0.9)
    s.segment(1.0, left=b_lift, right=m_lift)  # dual return
    s.segment(0.3, left_grip=Gripper.OPEN, right_grip=Gripper.OPEN)
    s.segment(1.1, left=home_l.pose, right=home_r.pose)
    s.pause(0.8)

    bases = {Arm.LEFT: left_base, Arm.RIGHT: right_base}
    demo = Demonstration(
        task_id="pouring_sample",
        samples=_to_base_frame(s.samples, bases),
        seed_objects={
            "bottle": SeedObject(pose=bottle_pose, bbox=bottle_dims),
            "mug": SeedObject(pose=mug_pose, bbox=mug_dims),
        },
        arm_bases=bases,
    )
    return demo, seed_scene


def build_pouring_spec() -> "TaskSpec":
    from .synthesis import InstanceSpec, RoleSpec, TaskSpec

    bottle = RoleSpec(
        object_id="bottle",
        region=Region.LEFT_HALF,
        grid=(6, 3),
        orientations=(0.0,),
        instances=(
            InstanceSpec(Shape.CYLINDER, (0.06, 0.06, 0.14)),
            InstanceSpec(Shape.CYLINDER, (0.07, 0.07, 0.12)),
        ),
        symmetric=True,
    )
    mug = RoleSpec(
        object_id="mug",
        region=Region.RIGHT_HALF,
        grid=(6, 3),
        orientations=(0.0,),
        instances=(
            InstanceSpec(Shape.BOX, (0.08, 0.08, 0.09)),
            InstanceSpec(Shape.BOX, (0.09, 0.09, 0.10)),
        ),
        symmetric=True,
    )
    return TaskSpec(task_id="pouring_sample", roles=(bottle, mug))


def write_sample_inputs(out_dir: str | Path) -> list[Path]:
    """Write both sample tasks' input files for CLI use."""
    from . import formats
    from .harness import default_arms

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ws = WorkspaceSpec()
    written = []

    for build_demo, build_spec, name in (
        (build_reorient_demo, build_reorient_spec, "reorient"),
        (build_pouring_demo, build_pouring_spec, "pouring"),
    ):
        demo, _ = build_demo(ws)
        demo_path = out / f"{name}_demo.json"
        formats.save_demonstration(demo, demo_path)
        spec_path = out / f"{name}_task.json"
        formats.save_task_spec(build_spec(), spec_path, ws)
        written += [demo_path, spec_path]

    cam_path = out / "camera.json"
    formats.save_camera(ws.overhead_camera(), cam_path)
    written.append(cam_path)
    for arm, model in default_arms(ws).items():
        p = out / f"arm_{arm.value}.json"
        formats.save_arm(model, p)
        written.append(p)
    return written


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    out = args[0] if args else "sample_inputs"
    for path in write_sample_inputs(out):
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
