from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from occlabel.accumulate import AccumulationConfig, assemble_scene, split_dynamic
from occlabel.classes import CLASS_ID
from occlabel.cloudio import FrameRecord, LabeledCloud, SceneManifest, load_manifest, read_cloud, write_cloud
from occlabel.errors import IngestionError
from occlabel.geometry import NATIVE_CAMERA, GridSpec, Pose

CAR, PED, MANMADE = CLASS_ID["car"], CLASS_ID["pedestrian"], CLASS_ID["manmade"]


def test_empty_dynamic_set():
    cloud = LabeledCloud(np.zeros((3, 3)), 0.5, [CAR, PED, MANMADE], 0.0)
    dyn, static = split_dynamic(cloud, AccumulationConfig(dynamic_classes=()))
    assert len(dyn) == 0 and static.label.tolist() == [CAR, PED, MANMADE]


def test_split_by_membership():
    cloud = LabeledCloud(np.arange(12.0).reshape(4, 3), 0.5, [CAR, MANMADE, PED, MANMADE], 0.0)
    dyn, static = split_dynamic(cloud, AccumulationConfig(dynamic_classes={CAR, PED}))
    assert dyn.label.tolist() == [CAR, PED]
    assert dyn.xyz[:, 0].tolist() == [0.0, 6.0]
    assert static.label.tolist() == [MANMADE, MANMADE]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sets(st.integers(0, 16)))
def test_split_is_multiset_partition(seed, dyn_set):
    rng = np.random.default_rng(seed)
    cloud = LabeledCloud(rng.normal(size=(60, 3)), 0.5, rng.integers(0, 17, 60), 0.0)
    dyn, static = split_dynamic(cloud, AccumulationConfig(dynamic_classes=dyn_set))
    rows = lambda c: Counter(zip(map(tuple, c.xyz.tolist()), c.label.tolist()))
    assert rows(dyn) + rows(static) == rows(cloud)
    assert set(dyn.label.tolist()) <= dyn_set
    assert not set(static.label.tolist()) & dyn_set


def test_config_validation():
    with pytest.raises(ValueError):
        AccumulationConfig(window=-1)
    with pytest.raises(ValueError):
        AccumulationConfig(dynamic_classes={17})


def two_frame_scene(tmp_path, missing=False):
    """Ego drives 2 m along x; a static wall point at world (10, 1, 0.5)."""
    lidar_mount = Pose(np.eye(3), (0.0, 0.0, 1.0))
    wall_world = np.array([10.0, 1.0, 0.5])
    frames = []
    for i, x in enumerate((0.0, 2.0)):
        ego = Pose(np.eye(3), (x, 0.0, 0.0))
        local = ego.compose(lidar_mount).inverse().apply(wall_world)
        car = [1.0 + i, -3.0, 0.0]
        if not (missing and i == 1):
            write_cloud(tmp_path / f"{i}.ocpc", LabeledCloud([local, car], 0.5, [MANMADE, CAR], 0.0))
        frames.append(FrameRecord(i, 0.1 * i, ego, f"{i}.ocpc", is_key=i == 0))
    return SceneManifest(lidar_mount, Pose(), Pose(), NATIVE_CAMERA, GridSpec(), frames, root=tmp_path)


def test_window_zero_is_key_frame_only(tmp_path):
    m = two_frame_scene(tmp_path)
    scene = assemble_scene(m, 0, AccumulationConfig(window=0))
    assert len(scene.cloud) == 2 and scene.origins.shape == (1, 3)
    assert_allclose(scene.origins[0], (0, 0, 1.0))


def test_static_point_coincides_across_frames(tmp_path):
    m = two_frame_scene(tmp_path)
    scene = assemble_scene(m, 0, AccumulationConfig(window=1))
    walls = scene.cloud.xyz[scene.cloud.label == MANMADE]
    assert len(walls) == 2
    assert_allclose(walls[0], walls[1], atol=1e-6)
    assert_allclose(walls[0], (10.0, 1.0, 0.5), atol=1e-6)
    # only the key frame's car survives
    assert (scene.cloud.label == CAR).sum() == 1
    assert_allclose(scene.origins, [[0, 0, 1], [2, 0, 1]])


def test_missing_cloud_names_frame(tmp_path):
    m = two_frame_scene(tmp_path, missing=True)
    with pytest.raises(IngestionError, match="frame 1"):
        assemble_scene(m, 0, AccumulationConfig(window=1))


def test_moving_box_only_from_key_frame(scenes):
    _, m = scenes["moving-box"]
    cfg = AccumulationConfig(window=10)
    key = m.key_frames[1]
    scene = assemble_scene(m, key, cfg)
    counts = [(read_cloud(m.resolve(f.lidar_path)).label == CAR).sum() for f in m.frames]
    assert min(counts) > 0
    car_frames = set(scene.frame_index[scene.cloud.label == CAR].tolist())
    assert car_frames == {scene.frame_ids.index(key)}
    assert (scene.cloud.label == CAR).sum() == counts[m.position(key)]


def test_assembled_count_and_order_invariance(scenes):
    _, m = scenes["crossing-pedestrian"]
    cfg = AccumulationConfig(window=2)
    key = m.key_frames[1]
    scene = assemble_scene(m, key, cfg)
    expected = 0
    for fid in scene.frame_ids:
        cloud = read_cloud(m.resolve(m.frame(fid).lidar_path))
        dyn, static = split_dynamic(cloud, cfg)
        expected += len(static) + (len(dyn) if fid == key else 0)
    assert len(scene.cloud) == expected

    parallel = assemble_scene(m, key, cfg, threads=4)
    assert np.array_equal(parallel.cloud.xyz, scene.cloud.xyz)

    # assembly only depends on the window content, not processing order
    a = {tuple(r) for r in np.round(scene.cloud.xyz, 9).tolist()}
    frames = m.frames
    shuffled = [frames[i] for i in np.random.default_rng(0).permutation(len(frames))]
    m2 = load_manifest(m.root / "manifest.json")
    m2.frames = sorted(shuffled, key=lambda f: f.timestamp)
    b = {tuple(r) for r in np.round(assemble_scene(m2, key, cfg).cloud.xyz, 9).tolist()}
    assert a == b


def test_origins_follow_ego_poses(scenes):
    _, m = scenes["static-street"]
    scene = assemble_scene(m, m.key_frames[0], AccumulationConfig(window=10))
    ego = np.array([m.frame(f).ego_pose.translation for f in scene.frame_ids])
    lo = ego.min(axis=0) - np.abs(m.lidar_to_ego.translation)
    hi = ego.max(axis=0) + np.abs(m.lidar_to_ego.translation)
    assert np.all((scene.origins >= lo - 1e-9) & (scene.origins <= hi + 1e-9))
