"""Throwaway: classify collision failures in the 1008-scene GT run."""
import math
from collections import Counter

import numpy as np

import bimsynth.kinematics as K
from bimsynth.alignment import adapt_block, object_delta
from bimsynth.demonstration import Arm, BlockKind, Gripper, decompose
from bimsynth.geometry import compose
from bimsynth.harness import default_arms
from bimsynth.sampletask import build_reorient_demo, build_reorient_spec
from bimsynth.synthesis import (
    Mode,
    Outcome,
    _aeps_to_local,
    _aeps_to_world,
    build_keyposes,
    enumerate_scenes,
    solve_seed_configs,
    synthesize_one,
)

demo, seed_scene = build_reorient_demo()
d = decompose(demo)
spec = build_reorient_spec()
scenes = enumerate_scenes(spec, 42)
arms = default_arms(seed_scene.workspace)
seed_cfg = solve_seed_configs(d, arms)

def classify(scene):
    """Redo validation, but on collision, report (kp, capsule idx, obstacle)."""
    deltas = {}
    for bi, block in enumerate(d.blocks):
        if block.kind is not BlockKind.VARIABLE:
            continue
        oid = block.bound_object
        so = scene.objects[oid]
        seed_obj = demo.seed_objects[oid]
        deltas[bi] = object_delta(seed_obj.pose, so.pose, seed_obj.bbox, so.dims, 0.9)
    adapted = {}
    for bi, delta in deltas.items():
        aeps = d.aeps.get(bi, ())
        if delta.is_identity():
            adapted[bi] = aeps
        else:
            adapted[bi] = _aeps_to_local(adapt_block(_aeps_to_world(list(aeps), demo.arm_bases), delta), demo.arm_bases)
    kps = build_keyposes(d, adapted)
    obbs = {oid: K.Obb(o.pose, np.array(o.dims) / 2) for oid, o in scene.objects.items()}
    tracks = {}
    for arm in (Arm.LEFT, Arm.RIGHT):
        st = kps[0].arm(arm)
        q = K.inverse_kinematics(arms[arm], compose(demo.arm_bases[arm], st.pose), seed_cfg.get((arm, 0), np.zeros(6)))
        tracks[arm] = dict(q=q, pose=st.pose, grip=st.gripper, attached=None)
    retired = set()
    events = []
    for prev, kp in zip(kps, kps[1:]):
        snap = {a: K.arm_capsules(arms[a], tracks[a]["q"], tracks[a]["attached"]) for a in (Arm.LEFT, Arm.RIGHT)}
        for arm in (Arm.LEFT, Arm.RIGHT):
            tr = tracks[arm]
            st = kp.arm(arm)
            if st.pose.equal_bytes(tr["pose"]):
                continue
            other = Arm.RIGHT if arm is Arm.LEFT else Arm.LEFT
            tgt = compose(demo.arm_bases[arm], st.pose)
            avail = set(obbs) - retired
            exempt, dd = None, math.inf
            for oid in sorted(avail):
                from bimsynth.geometry import inverse as Pinv
                loc = Pinv(obbs[oid].pose).apply(tgt.translation)
                dist = float(np.linalg.norm(np.maximum(np.abs(loc) - obbs[oid].half_extents, 0)))
                if dist < dd:
                    exempt, dd = oid, dist
            if dd > 0.02:
                exempt = None
            try:
                q_new = K.inverse_kinematics(arms[arm], tgt, seed_cfg.get((arm, kp.sample_index), tr["q"]))
            except K.Unreachable as e:
                events.append(("ik", kp.block_index, kp.sample_index, str(e)[:40]))
                return events
            span = float(np.max(np.abs(q_new - tr["q"])))
            steps = max(int(math.ceil(span / 0.017)), 1)
            ts = np.linspace(0, 1, steps + 1)
            qb = tr["q"][None, :] + ts[:, None] * (q_new - tr["q"])[None, :]
            frames = K.fk_frames(arms[arm], qb)
            p0, p1, radii, tmask = K._arm_capsule_points(arms[arm], frames, tr["attached"])
            low = np.minimum(p0[..., 2], p1[..., 2]) - radii
            if np.any(low[:, tmask] < 0):
                i, j = np.unravel_index(np.argmin(np.where(tmask, low, np.inf)[..., :]), low[:, :].shape)
                events.append(("table", kp.block_index, kp.sample_index, f"{arm.value} seg{j} z={low[i, j]:.3f}"))
                return events
            for oid in sorted(set(obbs) - retired):
                if oid == exempt or (tr["attached"] and oid == tr["attached"].object_id):
                    continue
                dd2 = K.segment_obb_distance(p0.reshape(-1, 3), p1.reshape(-1, 3), obbs[oid]).reshape(low.shape)
                if np.any(dd2 < radii):
                    j = int(np.argmin((dd2 - radii).min(axis=0)))
                    events.append(("obb", kp.block_index, kp.sample_index, f"{arm.value} seg{j} vs {oid}"))
                    return events
            for ci, cap in enumerate(snap[other]):
                q0b = np.broadcast_to(cap.p0, p0.shape)
                q1b = np.broadcast_to(cap.p1, p1.shape)
                dd2 = K.segment_segment_distance(p0, p1, q0b, q1b)
                if np.any(dd2 < radii + cap.radius):
                    j = int(np.argmin((dd2 - radii - cap.radius).min(axis=0)))
                    events.append(("arm", kp.block_index, kp.sample_index, f"{arm.value} seg{j} vs other cap{ci}"))
                    return events
            tr["q"] = q_new
            tr["pose"] = st.pose
        for arm in (Arm.LEFT, Arm.RIGHT):
            tr = tracks[arm]
            st = kp.arm(arm)
            if st.gripper == tr["grip"]:
                continue
            if st.gripper is Gripper.CLOSED:
                tgt = compose(demo.arm_bases[arm], st.pose)
                best, bd = None, math.inf
                for oid in sorted(set(obbs) - retired):
                    from bimsynth.geometry import inverse as Pinv
                    loc = Pinv(obbs[oid].pose).apply(tgt.translation)
                    dist = float(np.linalg.norm(np.maximum(np.abs(loc) - obbs[oid].half_extents, 0)))
                    if dist < bd:
                        best, bd = oid, dist
                if best is not None and bd <= 0.02:
                    tr["attached"] = K.AttachedObject.from_obb(best, obbs[best], tgt)
                    retired.add(best)
            else:
                tr["attached"] = None
            tr["grip"] = st.gripper
    return events

counts = Counter()
examples = {}
memo = {}
n_fail = 0
for sc in scenes[::7]:  # sample every 7th scene
    r = synthesize_one(d, sc, arms, mode=Mode.GROUND_TRUTH, memo=memo, seed_configs=seed_cfg)
    if r.outcome is not Outcome.PASS:
        n_fail += 1
        ev = classify(sc)
        for e in ev:
            key = (e[0], e[1], e[3].split(" ")[0] if e[0] != "ik" else "")
            counts[key] += 1
            examples.setdefault(key, (sc.index, e))
print(f"failures in sample: {n_fail}/{len(scenes[::7])}")
for k, v in counts.most_common(12):
    print(v, k, "eg:", examples[k])
