import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from occlabel.classes import CLASS_NAMES
from occlabel.cloudio import (LabeledCloud, RadarCloud, SceneManifest, FrameRecord, compensate_ego_motion,
                              compensate_radar, decode_cloud, encode_cloud, load_manifest, read_cloud,
                              read_ppm, save_manifest, write_cloud, write_ppm)
from occlabel.errors import FormatError
from occlabel.geometry import NATIVE_CAMERA, GridSpec, Pose, interpolate_pose


def lidar_record(x, y, z, intensity, label, ticks):
    return struct.pack("<4fBBH4x", x, y, z, intensity, label, 0, ticks)


def header(schema, count):
    return b"OCPC" + struct.pack("<IBI", 1, schema, count)


def random_lidar(rng, n):
    return LabeledCloud(
        rng.normal(0, 20, (n, 3)).astype(np.float32),
        rng.random(n).astype(np.float32),
        rng.integers(0, 17, n),
        rng.integers(0, 500, n) * 1e-4,
    )


def random_radar(rng, n):
    return RadarCloud(
        rng.normal(0, 20, (n, 3)).astype(np.float32),
        rng.normal(0, 5, n).astype(np.float32),
        rng.normal(0, 10, n).astype(np.float32),
        rng.random(n).astype(np.float32),
    )


def test_empty_cloud(tmp_path):
    path = tmp_path / "e.ocpc"
    path.write_bytes(header(1, 0))
    cloud = read_cloud(path, "lidar")
    assert len(cloud) == 0
    assert encode_cloud(cloud) == path.read_bytes()


def test_hand_built_two_point_file():
    data = header(1, 2) + lidar_record(1.0, 2.0, 3.0, 0.5, 4, 100) + lidar_record(-1.5, 0.25, 8.0, 1.0, 16, 0)
    assert len(data) == 13 + 2 * 24
    cloud = decode_cloud(data, "lidar")
    assert cloud.xyz.tolist() == [[1.0, 2.0, 3.0], [-1.5, 0.25, 8.0]]
    assert cloud.intensity.tolist() == [0.5, 1.0]
    assert cloud.label.tolist() == [4, 16]
    assert_allclose(cloud.t_offset, [0.01, 0.0])
    assert encode_cloud(cloud) == data


def test_radar_layout():
    data = header(2, 1) + struct.pack("<6f", 10.0, -2.0, 0.5, 3.25, 12.0, 0.75)
    c = decode_cloud(data, "radar")
    assert c.as_array().tolist() == [[10.0, -2.0, 0.5, 3.25, 12.0, 0.75]]
    assert encode_cloud(c) == data


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 300), st.sampled_from(["lidar", "radar"]))
def test_round_trip_byte_identical(seed, n, schema):
    rng = np.random.default_rng(seed)
    cloud = random_lidar(rng, n) if schema == "lidar" else random_radar(rng, n)
    data = encode_cloud(cloud)
    assert encode_cloud(decode_cloud(data, schema)) == data


@pytest.mark.parametrize(
    "data, offset",
    [
        (b"XXXX" + struct.pack("<IBI", 1, 1, 0), 0),
        (header(1, 2) + lidar_record(0, 0, 0, 0, 0, 0), 37),
        (header(1, 1) + lidar_record(0, 0, 0, 0.5, 17, 0), 13 + 16),
        (header(1, 2) + lidar_record(0, 0, 0, 0.5, 1, 0) + lidar_record(0, 0, 0, 2.0, 1, 0), 13 + 24 + 12),
        (header(2, 1) + struct.pack("<6f", 0, 0, 0, 0, 0, 1.5), 13 + 20),
        (b"OCPC" + struct.pack("<IBI", 2, 1, 0), 4),
    ],
)
def test_format_errors_report_offset(data, offset):
    with pytest.raises(FormatError) as info:
        decode_cloud(data)
    assert info.value.offset == offset


def test_schema_mismatch():
    with pytest.raises(FormatError):
        decode_cloud(header(2, 0), "lidar")


def test_file_round_trip(tmp_path):
    cloud = random_lidar(np.random.default_rng(1), 50)
    write_cloud(tmp_path / "a.ocpc", cloud)
    again = read_cloud(tmp_path / "a.ocpc")
    write_cloud(tmp_path / "b.ocpc", again)
    assert (tmp_path / "a.ocpc").read_bytes() == (tmp_path / "b.ocpc").read_bytes()


def test_ppm_round_trip(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (7, 5, 3)).astype(np.uint8)
    write_ppm(tmp_path / "x.ppm", img)
    assert (read_ppm(tmp_path / "x.ppm") == img).all()


def make_manifest(root):
    frames = [FrameRecord(i, 0.1 * i, Pose.from_yaw(0.1 * i, (i, 0, 0)), f"l{i}.ocpc", None, None, i == 1)
              for i in range(3)]
    return SceneManifest(Pose(), Pose(), Pose(), NATIVE_CAMERA, GridSpec(), frames, root=root)


def test_manifest_round_trip(tmp_path):
    m = make_manifest(tmp_path)
    save_manifest(tmp_path / "m.json", m)
    m2 = load_manifest(tmp_path / "m.json")
    assert m2.key_frames == [1]
    assert m2.grid == m.grid and m2.intrinsics == m.intrinsics
    for a, b in zip(m.frames, m2.frames):
        assert_allclose(a.ego_pose.as_matrix(), b.ego_pose.as_matrix(), atol=0)
    assert m2.class_names[17] == "free" and len(m2.class_names) == 18


def test_manifest_validation(tmp_path):
    with pytest.raises(ValueError):
        SceneManifest(Pose(), Pose(), Pose(), NATIVE_CAMERA, GridSpec(), [], class_names=CLASS_NAMES[:17])
    (tmp_path / "bad.json").write_text('{"frames": []}')
    with pytest.raises(FormatError):
        load_manifest(tmp_path / "bad.json")


# ------------------------------------------------------------- ego motion


def test_stationary_ego_leaves_points():
    cloud = random_lidar(np.random.default_rng(2), 40)
    pose = Pose.from_yaw(0.3, (5, 1, 0))
    out = compensate_ego_motion(cloud, pose, pose, 0.0)
    assert_allclose(out.xyz, cloud.xyz, atol=1e-9)


def test_pure_translation_example():
    cloud = LabeledCloud([[3.0, 0.5, 0.2]], 0.5, 1, 0.05)
    out = compensate_ego_motion(cloud, Pose(), Pose(np.eye(3), (1, 0, 0)), 0.0, sweep_period=0.05)
    # captured at end: world = p + (1, 0, 0); start frame is world
    assert_allclose(out.xyz, [[4.0, 0.5, 0.2]], atol=1e-12)


def test_points_at_reference_time_unchanged():
    cloud = LabeledCloud(np.random.default_rng(3).normal(size=(10, 3)), 0.5, 1, 0.02)
    out = compensate_ego_motion(cloud, Pose(), Pose.from_yaw(0.2, (1, 2, 0)), 0.02)
    assert_allclose(out.xyz, cloud.xyz, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.05))
def test_compensation_preserves_world_positions(seed, ref):
    rng = np.random.default_rng(seed)
    p0 = Pose.from_yaw(rng.uniform(-3, 3), rng.normal(0, 10, 3))
    p1 = Pose.from_rotvec(rng.normal(0, 0.1, 3), rng.normal(0, 10, 3)).compose(p0)
    cloud = LabeledCloud(rng.normal(0, 30, (25, 3)), 0.5, 1, rng.integers(0, 501, 25) * 1e-4)
    out = compensate_ego_motion(cloud, p0, p1, ref)
    ref_pose = interpolate_pose(p0, p1, ref / 0.05)
    for i in range(len(cloud)):
        cap = interpolate_pose(p0, p1, cloud.t_offset[i] / 0.05)
        assert_allclose(ref_pose.apply(out.xyz[i]), cap.apply(cloud.xyz[i]), atol=1e-6)


def test_compensation_rejects_out_of_sweep_times():
    with pytest.raises(ValueError):
        compensate_ego_motion(LabeledCloud([[0, 0, 0]], 0, 0, 0.2), Pose(), Pose(), 0.0)


def test_radar_whole_scan_compensation():
    radar = RadarCloud([[10.0, 0, 0]], 1.0, 5.0, 1.0)
    out = compensate_radar(radar, Pose(np.eye(3), (0.5, 0, 0)), Pose())
    assert_allclose(out.xyz, [[10.5, 0, 0]])
    assert out.velocity.tolist() == [1.0]
