import numpy as np
import pytest
from hypothesis import given, strategies as st

from poseidon.geometry import (
    BODY_TO_CAMERA, BoundingBox, CameraIntrinsics, GeometryError, InvalidDepthError, PoseAngles, AngleScaler,
    angle_denormalize, angle_normalize, camera_rotation_to_pose, clamp_box, euler_to_rotmat, head_bbox,
    head_distance, is_gimbal_locked, pose_to_camera_rotation, rotmat_to_euler, shoulder_bbox, shoulder_frame,
    shoulder_pose,
)

K500 = CameraIntrinsics(500.0, 500.0)
finite = dict(allow_nan=False, allow_infinity=False)
coord = st.floats(-2000, 2000, **finite)
point = st.tuples(coord, coord, coord)


def test_head_bbox_examples():
    b = head_bbox((10, 20), K500, 320, 320, 1000)
    assert (b.width, b.height) == (160.0, 160.0)
    assert (b.center_x, b.center_y) == (10.0, 20.0)
    b2 = head_bbox((10, 20), K500, 320, 320, 2000)
    assert (b2.width, b2.height) == (80.0, 80.0)


@pytest.mark.parametrize("d", [0.0, -5.0, np.nan, np.inf, None])
def test_head_bbox_bad_depth(d):
    with pytest.raises(InvalidDepthError):
        head_bbox((0, 0), K500, 320, 320, d)


@given(st.floats(1.0, 1e5, **finite), st.floats(1.0, 2000.0, **finite), st.floats(10.0, 1000.0, **finite))
def test_head_bbox_width_times_distance_constant(d, fx, rx):
    b = head_bbox((0, 0), CameraIntrinsics(fx, fx), rx, rx, d)
    assert b.width * d == pytest.approx(fx * rx, rel=1e-12)


def test_shoulder_bbox_center():
    hb = BoundingBox(100, 200, 160, 160)
    sb = shoulder_bbox(hb, K500, 850, 500, 1000)
    assert (sb.center_x, sb.center_y) == (100.0, 160.0)
    assert sb.width == pytest.approx(425.0) and sb.height == pytest.approx(250.0)
    flat = shoulder_bbox(hb, K500, 850, 250, 1000)
    assert flat.height < sb.height and flat.width == sb.width


def test_box_validation_and_clamp():
    with pytest.raises(GeometryError):
        BoundingBox(0, 0, 0, 5)
    with pytest.raises(GeometryError):
        CameraIntrinsics(0, 1)
    c = clamp_box(BoundingBox(0, 0, 10, 10), 100, 100)
    assert (c.left, c.top, c.width, c.height) == (0, 0, 5, 5)
    assert clamp_box(BoundingBox(-50, -50, 10, 10), 100, 100) is None


def test_head_distance_ignores_holes():
    depth = np.zeros((20, 20))
    depth[8:13, 8:13] = 1000
    depth[10, 10] = 0
    depth[9, 9] = 1200
    assert head_distance(depth, (10, 10)) == pytest.approx((23 * 1000 + 1200) / 24)
    with pytest.raises(InvalidDepthError):
        head_distance(np.zeros((10, 10)), (5, 5))


def test_euler_examples():
    assert rotmat_to_euler(np.eye(3)) == PoseAngles(0.0, 0.0, 0.0)
    p = rotmat_to_euler(euler_to_rotmat(10, 20, 30)).as_array()
    assert np.abs(p - [10, 20, 30]).max() < 1e-9
    m = euler_to_rotmat(0, 0, 30)
    # rotation about the yaw (z) axis only
    assert np.allclose(m[2], [0, 0, 1]) and np.allclose(m[:, 2], [0, 0, 1])
    assert m[1, 0] == pytest.approx(np.sin(np.radians(30)))


@given(st.floats(-89, 89), st.floats(-180, 180), st.floats(-180, 180))
def test_euler_round_trip(p, r, y):
    back = rotmat_to_euler(euler_to_rotmat(p, r, y)).as_array()
    diff = (back - [p, r, y] + 180) % 360 - 180
    assert np.abs(diff).max() < 1e-9


def test_gimbal_lock():
    m = euler_to_rotmat(90, 25, 40)
    assert is_gimbal_locked(m)
    e = rotmat_to_euler(m)
    assert e.roll == 0.0 and e.pitch == pytest.approx(90)
    assert np.allclose(euler_to_rotmat(e), m, atol=1e-9)
    assert not is_gimbal_locked(euler_to_rotmat(80, 0, 0))


def test_rotation_input_checked():
    with pytest.raises(GeometryError):
        rotmat_to_euler(np.ones((3, 3)))
    with pytest.raises(GeometryError):
        rotmat_to_euler(np.eye(2))


@given(st.floats(-80, 80), st.floats(-80, 80), st.floats(-170, 170))
def test_camera_pose_round_trip(p, r, y):
    pose = PoseAngles(p, r, y)
    assert np.abs(camera_rotation_to_pose(pose_to_camera_rotation(pose)).as_array() - pose.as_array()).max() < 1e-9


def test_body_axes_in_camera():
    assert np.allclose(BODY_TO_CAMERA @ [1, 0, 0], [0, 0, -1])
    # positive yaw turns the face (body X, towards the camera) about the vertical axis
    face = pose_to_camera_rotation(PoseAngles(0, 0, 30)) @ [0, 0, -1]
    assert face[1] == pytest.approx(0) and abs(face[0]) > 0.4


def test_shoulder_frame_example():
    f = shoulder_frame((-1, 0, 0), (1, 0, 0), (0, -1, 0))
    assert np.allclose(f.n1, [1, 0, 0]) and np.allclose(f.n3, [0, 0, 1]) and np.allclose(f.n2, [0, -1, 0])


@pytest.mark.parametrize("joints", [
    ((0, 0, 0), (0, 0, 0), (0, -1, 0)),
    ((0, 0, 0), (1, 0, 0), (1, 0, 0)),
    ((0, 0, 0), (1, 0, 0), (2, 0, 0)),
])
def test_shoulder_frame_degenerate(joints):
    with pytest.raises(GeometryError):
        shoulder_frame(*joints)


def _frame_ok(f):
    m = f.matrix()
    return (np.abs(m.T @ m - np.eye(3)).max() < 1e-9) and abs(abs(f.det) - 1) < 1e-9


def _non_degenerate(a, b, c):
    a, b, c = map(np.asarray, (a, b, c))
    return (np.linalg.norm(b - a) > 1 and np.linalg.norm(b - c) > 1
            and np.linalg.norm(np.cross(b - a, b - c)) > 1e-3 * np.linalg.norm(b - a) * np.linalg.norm(b - c))


@given(point, point, point, point, st.floats(0.01, 100))
def test_shoulder_frame_invariants(a, b, c, t, s):
    if not _non_degenerate(a, b, c):
        return
    f = shoulder_frame(a, b, c)
    assert _frame_ok(f)
    a, b, c, t = map(np.asarray, (a, b, c, t))
    g = shoulder_frame(s * a + t, s * b + t, s * c + t)
    assert np.allclose(f.matrix(), g.matrix(), atol=1e-6)


def test_shoulder_pose_neutral_and_turned():
    ls, rs, sb = np.array([170.0, 0, 1000]), np.array([-170.0, 0, 1000]), np.array([0.0, 350, 1000])
    assert np.abs(shoulder_pose(ls, rs, sb).as_array()).max() < 1e-9
    rot = pose_to_camera_rotation(PoseAngles(0, 0, 20))
    c = np.array([0, 0, 1000.0])
    turned = [rot @ (p - c) + c for p in (ls, rs, sb)]
    assert np.allclose(shoulder_pose(*turned).as_array(), [0, 0, 20], atol=1e-9)


def test_angle_normalize():
    assert np.array_equal(angle_normalize([0, 0, 0], (100, 70, 125)), [0, 0, 0])
    assert angle_normalize([50, 0, 0], (100, 70, 125))[0] == 0.5
    sc = AngleScaler((100, 70, 125))
    out = sc.normalize([150, -80, 10])
    assert np.allclose(out, [1, -1, 0.08]) and sc.clamped == 2
    with pytest.raises(ValueError):
        AngleScaler((1, 0, 1))


@given(st.floats(-100, 100), st.floats(-70, 70), st.floats(-125, 125))
def test_angle_normalize_round_trip(p, r, y):
    s = (100, 70, 125)
    assert np.allclose(angle_denormalize(angle_normalize([p, r, y], s), s), [p, r, y], atol=1e-12)
