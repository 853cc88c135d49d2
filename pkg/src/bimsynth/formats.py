"""On-disk formats: demonstrations, observations, arm descriptions, datasets.

Text artifacts are JSON with fixed field names (documented in
docs/FORMATS.md); images are raw binary with a one-line ASCII header.  All
units are SI.  Serialization is deterministic, so dataset content digests
are reproducible across runs with the same seed.
"""

from __future__ import annotations

import hashlib
import json
import math
import shutil
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
from .errors import FormatError, SinkFailure
from .geometry import CameraModel, RigidPose, Rotation, vec3
from .harness import Region, SceneInstance, SceneObject, Shape, WorkspaceSpec
from .kinematics import ArmModel
from .perception import DepthImage, ObjectMask
from .synthesis import (
    InstanceSpec,
    Mode,
    RoleSpec,
    SynthesizedTrajectory,
    TaskSpec,
)

DEMO_FORMAT = "bimsynth-demo/1"
TRAJ_FORMAT = "bimsynth-trajectory/1"
DATASET_FORMAT = "bimsynth-dataset/1"
CAMERA_FORMAT = "bimsynth-camera/1"
ARM_FORMAT = "bimsynth-arm/1"
TASK_FORMAT = "bimsynth-task/1"
MASK_MAGIC = b"BIMMASK"
DEPTH_MAGIC = b"BIMDEPTH"


def _load_json(path: Path, expected_format: str) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(str(exc), path=str(path)) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise FormatError(exc.msg, path=str(path), offset=offset) from exc
    if not isinstance(doc, dict) or doc.get("format") != expected_format:
        raise FormatError(
            f"expected format {expected_format!r}, got {doc.get('format')!r}"
            if isinstance(doc, dict)
            else "top-level value must be an object",
            path=str(path),
        )
    return doc


def _dump_json(doc: dict, path: Path) -> bytes:
    data = (json.dumps(doc, indent=1, sort_keys=True) + "\n").encode("utf-8")
    path.write_bytes(data)
    return data


def _pose_doc(pose: RigidPose) -> dict:
    return {
        "pos": [float(x) for x in pose.translation],
        "quat_wxyz": [float(x) for x in pose.rotation.q],
    }


def _pose_from(doc: dict, where: str, path: Path) -> RigidPose:
    try:
        q = doc["quat_wxyz"]
        p = doc["pos"]
        return RigidPose(Rotation.from_quat(*q), vec3(*p))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad pose in {where}: {exc}", path=str(path)) from exc


def _state_doc(state: ArmState) -> dict:
    doc = _pose_doc(state.pose)
    doc["gripper"] = int(state.gripper.value)
    return doc


def _state_from(doc: dict, where: str, path: Path) -> ArmState:
    pose = _pose_from(doc, where, path)
    try:
        gripper = Gripper(int(doc["gripper"]))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad gripper bit in {where}: {exc}", path=str(path)) from exc
    return ArmState(pose=pose, gripper=gripper)


def _samples_doc(samples) -> list[dict]:
    return [
        {"t": float(s.t), "left": _state_doc(s.left), "right": _state_doc(s.right)}
        for s in samples
    ]


def _samples_from(docs, path: Path) -> tuple[BimanualSample, ...]:
    out = []
    for i, doc in enumerate(docs):
        try:
            t = float(doc["t"])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"bad sample {i}: {exc}", path=str(path)) from exc
        out.append(
            BimanualSample(
                t=t,
                left=_state_from(doc["left"], f"sample {i} left", path),
                right=_state_from(doc["right"], f"sample {i} right", path),
            )
        )
    return tuple(out)


# ---------------------------------------------------------------------------
# Demonstrations


def save_demonstration(demo: Demonstration, path: str | Path) -> None:
    doc = {
        "format": DEMO_FORMAT,
        "task_id": demo.task_id,
        "arm_bases": {arm.value: _pose_doc(demo.arm_bases[arm]) for arm in Arm},
        "samples": _samples_doc(demo.samples),
        "seed_objects": {
            oid: {
                **_pose_doc(obj.pose),
                "bbox_lwh": [float(x) for x in obj.bbox],
            }
            for oid, obj in sorted(demo.seed_objects.items())
        },
    }
    _dump_json(doc, Path(path))


def load_demonstration(path: str | Path) -> Demonstration:
    path = Path(path)
    doc = _load_json(path, DEMO_FORMAT)
    try:
        bases = {
            arm: _pose_from(doc["arm_bases"][arm.value], f"{arm.value} base", path)
            for arm in Arm
        }
        seed_objects = {
            oid: SeedObject(
                pose=_pose_from(entry, f"seed object {oid}", path),
                bbox=tuple(float(x) for x in entry["bbox_lwh"]),
            )
            for oid, entry in doc.get("seed_objects", {}).items()
        }
        return Demonstration(
            task_id=str(doc["task_id"]),
            samples=_samples_from(doc["samples"], path),
            seed_objects=seed_objects,
            arm_bases=bases,
        )
    except KeyError as exc:
        raise FormatError(f"missing field {exc}", path=str(path)) from exc


# ---------------------------------------------------------------------------
# Observations: mask, depth, camera


def save_mask(mask: ObjectMask, path: str | Path) -> None:
    header = f"{MASK_MAGIC.decode()} {mask.width} {mask.height}\n".encode("ascii")
    body = np.where(mask.bits, 255, 0).astype(np.uint8).tobytes()
    Path(path).write_bytes(header + body)


def load_mask(path: str | Path) -> ObjectMask:
    path = Path(path)
    magic, width, height, body = _read_raster(path, MASK_MAGIC, 1)
    bits = np.frombuffer(body, dtype=np.uint8).reshape(height, width) != 0
    return ObjectMask(width=width, height=height, bits=bits)


def save_depth(depth: DepthImage, path: str | Path) -> None:
    header = f"{DEPTH_MAGIC.decode()} {depth.width} {depth.height}\n".encode("ascii")
    body = depth.values.astype("<f4").tobytes()
    Path(path).write_bytes(header + body)


def load_depth(path: str | Path) -> DepthImage:
    path = Path(path)
    magic, width, height, body = _read_raster(path, DEPTH_MAGIC, 4)
    values = np.frombuffer(body, dtype="<f4").reshape(height, width).astype(float)
    return DepthImage(width=width, height=height, values=values)


def _read_raster(path: Path, magic: bytes, item_size: int) -> tuple[bytes, int, int, bytes]:
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FormatError(str(exc), path=str(path)) from exc
    nl = data.find(b"\n")
    if nl < 0:
        raise FormatError("missing header line", path=str(path), offset=0)
    parts = data[:nl].split()
    if len(parts) != 3 or parts[0] != magic:
        raise FormatError(f"bad header {data[:nl]!r}", path=str(path), offset=0)
    try:
        width, height = int(parts[1]), int(parts[2])
    except ValueError as exc:
        raise FormatError("non-integer dimensions", path=str(path), offset=0) from exc
    body = data[nl + 1 :]
    expected = width * height * item_size
    if len(body) != expected:
        raise FormatError(
            f"payload is {len(body)} bytes, expected {expected}",
            path=str(path),
            offset=nl + 1 + min(len(body), expected),
        )
    return parts[0], width, height, body


def save_camera(cam: CameraModel, path: str | Path) -> None:
    doc = {
        "format": CAMERA_FORMAT,
        "fx": cam.fx,
        "fy": cam.fy,
        "cx": cam.cx,
        "cy": cam.cy,
        "width": cam.width,
        "height": cam.height,
        "extrinsic": _pose_doc(cam.extrinsic),
    }
    _dump_json(doc, Path(path))


def load_camera(path: str | Path) -> CameraModel:
    path = Path(path)
    doc = _load_json(path, CAMERA_FORMAT)
    try:
        return CameraModel(
            fx=float(doc["fx"]),
            fy=float(doc["fy"]),
            cx=float(doc["cx"]),
            cy=float(doc["cy"]),
            width=int(doc["width"]),
            height=int(doc["height"]),
            extrinsic=_pose_from(doc["extrinsic"], "extrinsic", path),
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad camera file: {exc}", path=str(path)) from exc


# ---------------------------------------------------------------------------
# Arm descriptions


def save_arm(arm: ArmModel, path: str | Path) -> None:
    doc = {
        "format": ARM_FORMAT,
        "name": arm.name,
        "dh": [[float(x) for x in row] for row in arm.dh],
        "limits": [[float(lo), float(hi)] for lo, hi in arm.limits],
        "capsule_radii": [float(r) for r in arm.capsule_radii],
        "base": _pose_doc(arm.base),
        "tool_offset": float(arm.tool_offset),
    }
    _dump_json(doc, Path(path))


def load_arm(path: str | Path) -> ArmModel:
    path = Path(path)
    doc = _load_json(path, ARM_FORMAT)
    try:
        return ArmModel(
            name=str(doc["name"]),
            dh=np.array(doc["dh"], dtype=float),
            limits=np.array(doc["limits"], dtype=float),
            base=_pose_from(doc["base"], "base", path),
            tool_offset=float(doc["tool_offset"]),
            capsule_radii=np.array(doc["capsule_radii"], dtype=float),
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad arm file: {exc}", path=str(path)) from exc


# ---------------------------------------------------------------------------
# Task specifications


def save_task_spec(
    spec: TaskSpec, path: str | Path, workspace: WorkspaceSpec | None = None
) -> None:
    doc = {
        "format": TASK_FORMAT,
        "task_id": spec.task_id,
        "lambda": spec.scale,
        "jitter": spec.jitter,
        "roles": [
            {
                "object_id": r.object_id,
                "region": r.region.value,
                "grid": list(r.grid),
                "orientations_deg": [math.degrees(a) for a in r.orientations],
                "instances": [
                    {"shape": i.shape.value, "dims_lwh": list(i.dims)} for i in r.instances
                ],
                "symmetric": r.symmetric,
            }
            for r in spec.roles
        ],
    }
    if workspace is not None:
        doc["workspace"] = {
            "size_x": workspace.size_x,
            "size_y": workspace.size_y,
            "camera_height": workspace.camera_height,
            "arm_setback": workspace.arm_setback,
        }
    _dump_json(doc, Path(path))


def load_task_spec(path: str | Path) -> tuple[TaskSpec, WorkspaceSpec]:
    path = Path(path)
    doc = _load_json(path, TASK_FORMAT)
    try:
        roles = tuple(
            RoleSpec(
                object_id=str(r["object_id"]),
                region=Region(r["region"]),
                grid=(int(r["grid"][0]), int(r["grid"][1])),
                orientations=tuple(math.radians(a) for a in r["orientations_deg"]),
                instances=tuple(
                    InstanceSpec(
                        shape=Shape(i["shape"]),
                        dims=tuple(float(x) for x in i["dims_lwh"]),
                    )
                    for i in r["instances"]
                ),
                symmetric=bool(r.get("symmetric", False)),
            )
            for r in doc["roles"]
        )
        spec = TaskSpec(
            task_id=str(doc["task_id"]),
            roles=roles,
            jitter=float(doc.get("jitter", 0.005)),
            scale=float(doc.get("lambda", 0.9)),
        )
        ws_doc = doc.get("workspace")
        ws = (
            WorkspaceSpec(
                size_x=float(ws_doc["size_x"]),
                size_y=float(ws_doc["size_y"]),
                camera_height=float(ws_doc["camera_height"]),
                arm_setback=float(ws_doc["arm_setback"]),
            )
            if ws_doc
            else WorkspaceSpec()
        )
        return spec, ws
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad task spec: {exc}", path=str(path)) from exc


# ---------------------------------------------------------------------------
# Scenes and trajectories


def _scene_doc(scene: SceneInstance) -> dict:
    return {
        "workspace": {
            "size_x": scene.workspace.size_x,
            "size_y": scene.workspace.size_y,
            "camera_height": scene.workspace.camera_height,
            "arm_setback": scene.workspace.arm_setback,
        },
        "objects": {
            oid: {
                "shape": obj.shape.value,
                "dims_lwh": [float(x) for x in obj.dims],
                "instance_index": obj.instance_index,
                **_pose_doc(obj.pose),
            }
            for oid, obj in sorted(scene.objects.items())
        },
        "grid_cell": dict(sorted(scene.grid_cell.items())),
        "scene_seed": scene.scene_seed,
        "index": scene.index,
    }


def _scene_from(doc: dict, path: Path) -> SceneInstance:
    ws_doc = doc["workspace"]
    ws = WorkspaceSpec(
        size_x=float(ws_doc["size_x"]),
        size_y=float(ws_doc["size_y"]),
        camera_height=float(ws_doc["camera_height"]),
        arm_setback=float(ws_doc["arm_setback"]),
    )
    objects = {
        oid: SceneObject(
            shape=Shape(entry["shape"]),
            dims=tuple(float(x) for x in entry["dims_lwh"]),
            pose=_pose_from(entry, f"object {oid}", path),
            instance_index=int(entry.get("instance_index", 0)),
        )
        for oid, entry in doc["objects"].items()
    }
    return SceneInstance(
        objects=objects,
        workspace=ws,
        grid_cell={k: int(v) for k, v in doc.get("grid_cell", {}).items()},
        scene_seed=int(doc.get("scene_seed", 0)),
        index=int(doc.get("index", 0)),
    )


def trajectory_doc(traj: SynthesizedTrajectory, arm_bases: dict[Arm, RigidPose]) -> dict:
    prov = traj.provenance
    return {
        "format": TRAJ_FORMAT,
        "task_id": prov.seed_task_id,
        "arm_bases": {arm.value: _pose_doc(arm_bases[arm]) for arm in Arm},
        "samples": _samples_doc(traj.samples),
        "block_indices": list(traj.block_indices),
        "scene": _scene_doc(traj.scene),
        "provenance": {
            "seed_task_id": prov.seed_task_id,
            "scene_index": prov.scene_index,
            "scene_seed": prov.scene_seed,
            "master_seed": prov.master_seed,
            "mode": prov.mode.value,
            "deltas": {
                str(bi): {
                    "transform": _pose_doc(d.transform),
                    "size_offset": list(d.size_offset),
                    "lambda": d.scale,
                }
                for bi, d in sorted(prov.deltas.items())
            },
        },
        "validation": {"overall": traj.validation.overall.value},
    }


def load_trajectory(path: str | Path) -> dict:
    """Stored trajectory as plain parts: samples, scene, bases, provenance."""
    path = Path(path)
    doc = _load_json(path, TRAJ_FORMAT)
    try:
        return {
            "task_id": str(doc["task_id"]),
            "samples": _samples_from(doc["samples"], path),
            "block_indices": [int(i) for i in doc["block_indices"]],
            "scene": _scene_from(doc["scene"], path),
            "arm_bases": {
                arm: _pose_from(doc["arm_bases"][arm.value], f"{arm.value} base", path)
                for arm in Arm
            },
            "provenance": doc["provenance"],
        }
    except KeyError as exc:
        raise FormatError(f"missing field {exc}", path=str(path)) from exc


# ---------------------------------------------------------------------------
# Dataset runs


class DatasetWriter:
    """One directory per run: manifest.json, trajectories/, rejects.jsonl.

    The manifest digest is a SHA-256 over trajectory file bytes in manifest
    order plus the rejects log, so identical content yields identical
    digests regardless of timing.
    """

    def __init__(self, out_dir: str | Path, arm_bases: dict[Arm, RigidPose]):
        self.root = Path(out_dir)
        self.arm_bases = dict(arm_bases)
        self._names: list[str] = []
        self._hash = hashlib.sha256()
        try:
            (self.root / "trajectories").mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise SinkFailure(f"cannot create dataset directory: {exc}") from exc

    def _fail(self, exc: Exception) -> None:
        shutil.rmtree(self.root, ignore_errors=True)
        raise SinkFailure(f"dataset write failed, partial run removed: {exc}") from exc

    def write_trajectory(self, traj: SynthesizedTrajectory) -> None:
        name = f"trajectories/scene_{traj.provenance.scene_index:06d}.json"
        doc = trajectory_doc(traj, self.arm_bases)
        try:
            data = _dump_json(doc, self.root / name)
        except OSError as exc:
            self._fail(exc)
            return
        self._names.append(name)
        self._hash.update(data)

    def finalize(self, spec: TaskSpec, master_seed: int, mode: Mode, stats, rejects) -> str:
        lines = [
            json.dumps(
                {"scene_index": i, "reason": reason, "block": block, "detail": detail},
                sort_keys=True,
            )
            for i, reason, block, detail in rejects
        ]
        rejects_data = ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")
        self._hash.update(rejects_data)
        digest = self._hash.hexdigest()
        manifest = {
            "format": DATASET_FORMAT,
            "task_id": spec.task_id,
            "master_seed": master_seed,
            "mode": mode.value,
            "spec": json.loads(_task_spec_json(spec)),
            "stats": {
                "attempts": stats.attempts,
                "passes": stats.passes,
                "rejects": dict(sorted(stats.rejects.items())),
                "pass_rate": stats.pass_rate,
                "wall_clock_s": stats.wall_clock_s,
                "coverage": {
                    oid: {str(c): n for c, n in sorted(cells.items())}
                    for oid, cells in sorted(stats.coverage.items())
                },
            },
            "trajectories": self._names,
            "digest": digest,
        }
        try:
            (self.root / "rejects.jsonl").write_bytes(rejects_data)
            _dump_json(manifest, self.root / "manifest.json")
        except OSError as exc:
            self._fail(exc)
        return digest


def _task_spec_json(spec: TaskSpec) -> str:
    return json.dumps(
        {
            "task_id": spec.task_id,
            "lambda": spec.scale,
            "jitter": spec.jitter,
            "roles": [
                {
                    "object_id": r.object_id,
                    "region": r.region.value,
                    "grid": list(r.grid),
                    "orientations_deg": [math.degrees(a) for a in r.orientations],
                    "instances": [
                        {"shape": i.shape.value, "dims_lwh": list(i.dims)} for i in r.instances
                    ],
                    "symmetric": r.symmetric,
                }
                for r in spec.roles
            ],
        },
        sort_keys=True,
    )


def load_manifest(dataset_dir: str | Path) -> dict:
    return _load_json(Path(dataset_dir) / "manifest.json", DATASET_FORMAT)


def recompute_digest(dataset_dir: str | Path, manifest: dict) -> str:
    root = Path(dataset_dir)
    h = hashlib.sha256()
    for name in manifest["trajectories"]:
        h.update((root / name).read_bytes())
    rejects = root / "rejects.jsonl"
    h.update(rejects.read_bytes() if rejects.exists() else b"")
    return h.hexdigest()
