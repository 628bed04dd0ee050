import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splmotion.rotmath import (
    RotationError,
    aa_to_quat,
    aa_to_rotmat,
    euler_to_rotmat,
    euler_zyx_candidates,
    project_to_so3,
    quat_seq_canonicalize,
    quat_to_rotmat,
    rot_z,
    rotation_angle,
    rotmat_to_aa,
    rotmat_to_euler_zyx,
    rotmat_to_quat,
)


def random_aa(rng, n, lo=0.01, hi=np.pi - 0.01):
    axis = rng.normal(size=(n, 3))
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    return axis * rng.uniform(lo, hi, size=(n, 1))


def quat_path_rotmat(w):
    # independent route: half-angle quaternion, then the quaternion product formula
    theta = np.linalg.norm(w)
    a = w / theta
    q = np.concatenate([[np.cos(theta / 2)], np.sin(theta / 2) * a])
    qw, qx, qy, qz = q
    return np.array(
        [
            [qw * qw + qx * qx - qy * qy - qz * qz, 2 * (qx * qy - qw * qz), 2 * (qx * qz + qw * qy)],
            [2 * (qx * qy + qw * qz), qw * qw - qx * qx + qy * qy - qz * qz, 2 * (qy * qz - qw * qx)],
            [2 * (qx * qz - qw * qy), 2 * (qy * qz + qw * qx), qw * qw - qx * qx - qy * qy + qz * qz],
        ]
    )


class TestAngleAxis:
    def test_zero_is_identity(self):
        np.testing.assert_array_equal(aa_to_rotmat(np.zeros(3)), np.eye(3))

    def test_half_turn_about_z(self):
        np.testing.assert_allclose(aa_to_rotmat([0, 0, np.pi]), np.diag([-1.0, -1.0, 1.0]), atol=1e-15)

    def test_matches_quaternion_path(self):
        rng = np.random.default_rng(0)
        for w in random_aa(rng, 200, 1e-3, np.pi - 1e-3):
            np.testing.assert_allclose(aa_to_rotmat(w), quat_path_rotmat(w), atol=1e-12)

    def test_log_of_identity(self):
        np.testing.assert_array_equal(rotmat_to_aa(np.eye(3)), np.zeros(3))

    def test_log_of_half_turn(self):
        w = rotmat_to_aa(np.diag([-1.0, -1.0, 1.0]))
        assert np.linalg.norm(w) == pytest.approx(np.pi, abs=1e-12)
        np.testing.assert_allclose(np.abs(w / np.pi), [0, 0, 1], atol=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        w = random_aa(rng, 1000)
        np.testing.assert_allclose(rotmat_to_aa(aa_to_rotmat(w)), w, atol=1e-9)

    @pytest.mark.parametrize("eps", [1e-4, 1e-7, 1e-10])
    def test_near_pi_reconstructs(self, eps):
        rng = np.random.default_rng(2)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        r = aa_to_rotmat(axis * (np.pi - eps))
        np.testing.assert_allclose(aa_to_rotmat(rotmat_to_aa(r)), r, atol=1e-9)

    def test_large_angle_folds_into_range(self):
        w = np.array([0.0, 0.0, 1.5 * np.pi])
        back = rotmat_to_aa(aa_to_rotmat(w))
        assert np.linalg.norm(back) == pytest.approx(0.5 * np.pi, abs=1e-12)
        np.testing.assert_allclose(back, [0, 0, -0.5 * np.pi], atol=1e-12)


class TestRotationAngle:
    def test_identity(self):
        assert rotation_angle(np.eye(3)) == 0.0

    def test_quarter_turn(self):
        assert rotation_angle(rot_z(np.pi / 2)) == pytest.approx(np.pi / 2, abs=1e-15)

    def test_matches_log_map(self):
        rng = np.random.default_rng(3)
        r = aa_to_rotmat(random_aa(rng, 500, 0.0, np.pi))
        np.testing.assert_allclose(rotation_angle(r), np.linalg.norm(rotmat_to_aa(r), axis=-1), atol=1e-9)

    def test_matches_arccos_of_trace(self):
        rng = np.random.default_rng(4)
        r = aa_to_rotmat(random_aa(rng, 500))
        expected = np.arccos(np.clip((np.trace(r, axis1=1, axis2=2) - 1) / 2, -1, 1))
        np.testing.assert_allclose(rotation_angle(r), expected, atol=1e-9)

    def test_relative_angle_symmetric_and_zero_on_equal(self):
        rng = np.random.default_rng(5)
        a = aa_to_rotmat(random_aa(rng, 100))
        b = aa_to_rotmat(random_aa(rng, 100))
        ab = rotation_angle(a @ np.swapaxes(b, 1, 2))
        ba = rotation_angle(b @ np.swapaxes(a, 1, 2))
        np.testing.assert_allclose(ab, ba, atol=1e-12)
        assert np.all(rotation_angle(np.einsum("nij,nkj->nik", a, a)) == 0.0)


def symbolic_zyx(r):
    # textbook extraction for |pitch| < pi/2: the branch with cos(pitch) > 0
    ay = -np.arcsin(r[2, 0])
    ax = np.arctan2(r[2, 1], r[2, 2])
    az = np.arctan2(r[1, 0], r[0, 0])
    return np.array([ax, ay, az])


class TestEuler:
    def test_identity(self):
        np.testing.assert_array_equal(rotmat_to_euler_zyx(np.eye(3)), np.zeros(3))
        np.testing.assert_array_equal(euler_to_rotmat(np.zeros(3)), np.eye(3))

    def test_pure_z(self):
        np.testing.assert_allclose(rotmat_to_euler_zyx(rot_z(0.2)), [0, 0, 0.2], atol=1e-15)
        np.testing.assert_allclose(euler_to_rotmat([0, 0, 0.7]), rot_z(0.7), atol=1e-15)

    def test_agrees_with_symbolic_extraction(self):
        rng = np.random.default_rng(6)
        alpha = rng.uniform(-1.0, 1.0, size=(300, 3))
        for a in alpha:
            r = euler_to_rotmat(a)
            np.testing.assert_allclose(symbolic_zyx(r), a, atol=1e-12)
            np.testing.assert_allclose(rotmat_to_euler_zyx(r), a, atol=1e-12)

    def test_round_trip_in_least_rotation_range(self):
        rng = np.random.default_rng(7)
        alpha = np.stack(
            [rng.uniform(-np.pi / 2, np.pi / 2, 2000), rng.uniform(-1.5, 1.5, 2000), rng.uniform(-np.pi / 2, np.pi / 2, 2000)],
            axis=1,
        )
        np.testing.assert_allclose(rotmat_to_euler_zyx(euler_to_rotmat(alpha)), alpha, atol=1e-9)

    def test_least_rotation_branch_selected(self):
        rng = np.random.default_rng(8)
        r = aa_to_rotmat(random_aa(rng, 2000))
        got = rotmat_to_euler_zyx(r)
        s1, s2 = euler_zyx_candidates(r)
        for cand in (s1, s2):
            np.testing.assert_allclose(euler_to_rotmat(cand), r, atol=1e-9)
        best = np.minimum(np.abs(s1).sum(-1), np.abs(s2).sum(-1))
        np.testing.assert_allclose(np.abs(got).sum(-1), best, atol=0)
        np.testing.assert_allclose(euler_to_rotmat(got), r, atol=1e-9)

    @pytest.mark.parametrize("pitch", [np.pi / 2, -np.pi / 2])
    def test_gimbal_lock(self, pitch):
        r = euler_to_rotmat([0.3, pitch, -0.4])
        alpha, lock = rotmat_to_euler_zyx(r, return_gimbal=True)
        assert lock
        assert alpha[0] == 0.0
        np.testing.assert_allclose(euler_to_rotmat(alpha), r, atol=1e-9)

    def test_components_in_half_open_range(self):
        rng = np.random.default_rng(9)
        alpha = rotmat_to_euler_zyx(aa_to_rotmat(random_aa(rng, 2000, 0.0, np.pi)))
        assert np.all(alpha > -np.pi) and np.all(alpha <= np.pi)


class TestQuaternion:
    def test_identity(self):
        np.testing.assert_array_equal(quat_to_rotmat([1.0, 0, 0, 0]), np.eye(3))
        np.testing.assert_allclose(rotmat_to_quat(np.eye(3)), [1, 0, 0, 0])

    def test_quarter_turn_about_z(self):
        q = [np.cos(np.pi / 4), 0, 0, np.sin(np.pi / 4)]
        np.testing.assert_allclose(quat_to_rotmat(q), rot_z(np.pi / 2), atol=1e-15)

    def test_round_trip(self):
        rng = np.random.default_rng(10)
        q = rng.normal(size=(1000, 4))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        q = np.where(q[:, :1] < 0, -q, q)
        np.testing.assert_allclose(rotmat_to_quat(quat_to_rotmat(q)), q, atol=1e-12)

    def test_canonical_hemisphere(self):
        rng = np.random.default_rng(11)
        r = aa_to_rotmat(random_aa(rng, 500, 0.0, np.pi))
        assert np.all(rotmat_to_quat(r)[:, 0] >= 0)

    def test_non_unit_rejected(self):
        with pytest.raises(RotationError):
            quat_to_rotmat([1.0, 0.01, 0, 0])

    def test_aa_to_quat_matches_rotmat(self):
        rng = np.random.default_rng(12)
        w = random_aa(rng, 200)
        np.testing.assert_allclose(quat_to_rotmat(aa_to_quat(w)), aa_to_rotmat(w), atol=1e-12)


class TestQuatSequence:
    def test_constant_sequence_unchanged(self):
        qs = np.tile([0.5, 0.5, 0.5, 0.5], (5, 1))
        np.testing.assert_array_equal(quat_seq_canonicalize(qs), qs)

    def test_single_flip_removed(self):
        qs = np.tile([0.8, 0.6, 0.0, 0.0], (4, 1))
        qs[2] *= -1
        out = quat_seq_canonicalize(qs)
        assert np.all(np.sum(out[1:] * out[:-1], axis=1) >= 0)
        np.testing.assert_array_equal(out, np.tile([0.8, 0.6, 0.0, 0.0], (4, 1)))

    def test_random_sequence(self):
        rng = np.random.default_rng(13)
        qs = rng.normal(size=(100, 6, 4))
        qs /= np.linalg.norm(qs, axis=-1, keepdims=True)
        out = quat_seq_canonicalize(qs)
        assert np.all(np.sum(out[1:] * out[:-1], axis=-1) >= 0)
        np.testing.assert_allclose(quat_to_rotmat(out), quat_to_rotmat(qs), atol=1e-12)


class TestProjection:
    def test_idempotent_on_rotations(self):
        rng = np.random.default_rng(14)
        r = aa_to_rotmat(random_aa(rng, 100))
        p = project_to_so3(r)
        np.testing.assert_allclose(p, r, atol=1e-12)
        np.testing.assert_allclose(project_to_so3(p), p, atol=1e-15)

    def test_perturbation_stays_close(self):
        rng = np.random.default_rng(15)
        r = aa_to_rotmat(random_aa(rng, 200))
        p = project_to_so3(r + 0.01 * rng.normal(size=r.shape))
        assert np.all(rotation_angle(p @ np.swapaxes(r, 1, 2)) < 0.05)

    def test_determinant_fix(self):
        m = np.diag([1.0, 1.0, -1.0])
        p = project_to_so3(m)
        np.testing.assert_array_equal(p, np.eye(3))
        assert np.linalg.det(p) == pytest.approx(1.0)

    def test_rank_deficient_rejected(self):
        m = np.array([[1.0, 2.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        with pytest.raises(RotationError):
            project_to_so3(m)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=9, max_size=9))
    def test_output_is_rotation(self, values):
        m = np.array(values).reshape(3, 3)
        try:
            p = project_to_so3(m)
        except RotationError:
            return
        if np.linalg.cond(m) > 1e6:
            return
        np.testing.assert_allclose(p.T @ p, np.eye(3), atol=1e-9)
        assert np.linalg.det(p) == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(project_to_so3(p), p, atol=1e-9)
