"""Rotation conversions between angle-axis, rotation matrices, quaternions and z-y-x Euler angles.

All functions are vectorised over leading dimensions: an angle-axis array has
shape ``(..., 3)``, a rotation matrix ``(..., 3, 3)``, a quaternion ``(..., 4)``
(scalar first) and Euler angles ``(..., 3)`` ordered ``(ax, ay, az)``.
"""

import numpy as np

GIMBAL_EPS = 1e-7
QUAT_NORM_TOL = 1e-6
_SMALL_ANGLE = 1e-8


class RotationError(ValueError):
    pass


def skew(v):
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def aa_to_rotmat(w):
    """Rodrigues' formula, exp(w) for w = angle * unit_axis."""
    w = np.asarray(w, dtype=np.float64)
    theta = np.linalg.norm(w, axis=-1)
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    # Taylor terms keep the small-angle branch smooth
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    k = skew(w)
    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + a[..., None, None] * k + b[..., None, None] * (k @ k)


def _angle_and_sin_vector(r):
    # vee of the antisymmetric part: 2 sin(theta) * axis
    v = np.stack(
        [r[..., 2, 1] - r[..., 1, 2], r[..., 0, 2] - r[..., 2, 0], r[..., 1, 0] - r[..., 0, 1]],
        axis=-1,
    )
    cos_t = (np.trace(r, axis1=-2, axis2=-1) - 1.0) / 2.0
    sin_t = np.linalg.norm(v, axis=-1) / 2.0
    return np.arctan2(sin_t, np.clip(cos_t, -1.0, 1.0)), v


def rotation_angle(r):
    """Geodesic angle of a rotation, ``||log(R)||`` in [0, pi].

    Evaluated as atan2(sin, cos) rather than a bare arccos of the trace; the
    two agree, but atan2 stays accurate near 0 and pi.
    """
    theta, _ = _angle_and_sin_vector(np.asarray(r, dtype=np.float64))
    return theta


def rotmat_to_aa(r):
    """Matrix log map. Returns angle-axis vectors with norm in [0, pi]."""
    r = np.asarray(r, dtype=np.float64)
    theta, v = _angle_and_sin_vector(r)
    sin_t = np.sin(theta)
    out = np.zeros(r.shape[:-2] + (3,))

    regular = (theta >= _SMALL_ANGLE) & (sin_t > 1e-6)
    small = theta < _SMALL_ANGLE
    near_pi = ~(regular | small)

    if np.any(regular):
        out[regular] = (theta[regular] / (2.0 * sin_t[regular]))[:, None] * v[regular]
    if np.any(small):
        out[small] = 0.5 * v[small]
    if np.any(near_pi):
        out[near_pi] = _near_pi_log(r[near_pi], theta[near_pi], v[near_pi])
    return out


def _near_pi_log(r, theta, v):
    # the symmetric part of (R + I)/2 approaches outer(a, a) as theta -> pi; the
    # antisymmetric part (size sin(theta)/2) is dropped so it cannot tilt the axis
    b = (r + np.swapaxes(r, -1, -2)) / 4.0 + np.eye(3) / 2.0
    out = np.zeros(r.shape[:-2] + (3,))
    for n in range(r.shape[0]):
        d = np.diag(b[n])
        i = int(np.argmax(d))
        axis = b[n, :, i] / np.sqrt(max(d[i], 1e-300))
        axis = axis / np.linalg.norm(axis)
        # resolve the sign from the (tiny) antisymmetric part when it carries information
        if np.dot(axis, v[n]) < 0.0:
            axis = -axis
        out[n] = theta[n] * axis
    return out


def euler_to_rotmat(alpha):
    """Compose Rz(az) @ Ry(ay) @ Rx(ax) from angles ordered (ax, ay, az)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    ax, ay, az = alpha[..., 0], alpha[..., 1], alpha[..., 2]
    cx, sx = np.cos(ax), np.sin(ax)
    cy, sy = np.cos(ay), np.sin(ay)
    cz, sz = np.cos(az), np.sin(az)
    r = np.empty(alpha.shape[:-1] + (3, 3))
    r[..., 0, 0] = cz * cy
    r[..., 0, 1] = cz * sy * sx - sz * cx
    r[..., 0, 2] = cz * sy * cx + sz * sx
    r[..., 1, 0] = sz * cy
    r[..., 1, 1] = sz * sy * sx + cz * cx
    r[..., 1, 2] = sz * sy * cx - cz * sx
    r[..., 2, 0] = -sy
    r[..., 2, 1] = cy * sx
    r[..., 2, 2] = cy * cx
    return r


def _wrap(a):
    # into (-pi, pi]
    out = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    return np.where(out == -np.pi, np.pi, out)


def euler_zyx_candidates(r):
    """Both analytic z-y-x solutions, each of shape (..., 3). Undefined at gimbal lock."""
    r = np.asarray(r, dtype=np.float64)
    ay1 = -np.arcsin(np.clip(r[..., 2, 0], -1.0, 1.0))
    ay2 = _wrap(np.pi - ay1)
    sols = []
    for ay in (ay1, ay2):
        c = np.cos(ay)
        ax = np.arctan2(r[..., 2, 1] / c, r[..., 2, 2] / c)
        az = np.arctan2(r[..., 1, 0] / c, r[..., 0, 0] / c)
        sols.append(np.stack([_wrap(ax), ay, _wrap(az)], axis=-1))
    return sols[0], sols[1]


def rotmat_to_euler_zyx(r, return_gimbal=False):
    """Extract z-y-x Euler angles, choosing the solution with least total rotation.

    Of the two analytic solutions the one minimising ``|ax| + |ay| + |az|`` is
    returned (the first on ties). At gimbal lock (``|R[2,0]| >= 1 - 1e-7``)
    ``ax`` is fixed to zero and ``az`` absorbs the remaining freedom; pass
    ``return_gimbal=True`` to also get the boolean lock mask.
    """
    r = np.asarray(r, dtype=np.float64)
    lock = np.abs(r[..., 2, 0]) >= 1.0 - GIMBAL_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        s1, s2 = euler_zyx_candidates(r)
    pick_second = np.abs(s2).sum(axis=-1) < np.abs(s1).sum(axis=-1)
    out = np.where(pick_second[..., None], s2, s1)
    if np.any(lock):
        ay = np.where(r[..., 2, 0] < 0.0, np.pi / 2.0, -np.pi / 2.0)
        az = np.arctan2(-r[..., 0, 1], r[..., 1, 1])
        locked = np.stack([np.zeros_like(ay), ay, az], axis=-1)
        out = np.where(lock[..., None], locked, out)
    if return_gimbal:
        return out, lock
    return out


def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise RotationError("cannot normalise a zero quaternion")
    return q / n


def _check_unit(q):
    dev = np.abs(np.linalg.norm(q, axis=-1) - 1.0)
    if np.any(dev > QUAT_NORM_TOL):
        raise RotationError(f"quaternion is not unit length (norm deviation {dev.max():.3g})")


def quat_to_rotmat(q):
    q = np.asarray(q, dtype=np.float64)
    _check_unit(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    r = np.empty(q.shape[:-1] + (3, 3))
    r[..., 0, 0] = 1 - 2 * (y * y + z * z)
    r[..., 0, 1] = 2 * (x * y - z * w)
    r[..., 0, 2] = 2 * (x * z + y * w)
    r[..., 1, 0] = 2 * (x * y + z * w)
    r[..., 1, 1] = 1 - 2 * (x * x + z * z)
    r[..., 1, 2] = 2 * (y * z - x * w)
    r[..., 2, 0] = 2 * (x * z - y * w)
    r[..., 2, 1] = 2 * (y * z + x * w)
    r[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def rotmat_to_quat(r):
    """Shepperd's method; result lies in the w >= 0 hemisphere."""
    r = np.asarray(r, dtype=np.float64)
    flat = r.reshape(-1, 3, 3)
    out = np.empty((flat.shape[0], 4))
    tr = np.trace(flat, axis1=-2, axis2=-1)
    diag = np.stack([flat[:, 0, 0], flat[:, 1, 1], flat[:, 2, 2]], axis=-1)
    choice = np.argmax(np.concatenate([tr[:, None], diag], axis=-1), axis=-1)
    for n, (m, c) in enumerate(zip(flat, choice)):
        if c == 0:
            s = 2.0 * np.sqrt(1.0 + tr[n])
            q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        elif c == 1:
            s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
            q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        elif c == 2:
            s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
            q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        else:
            s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
            q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        out[n] = q
    out /= np.linalg.norm(out, axis=-1, keepdims=True)
    out = np.where(out[:, :1] < 0.0, -out, out)
    return out.reshape(r.shape[:-2] + (4,))


def aa_to_quat(w):
    w = np.asarray(w, dtype=np.float64)
    theta = np.linalg.norm(w, axis=-1, keepdims=True)
    half = theta / 2.0
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    k = np.where(small, 0.5 - theta**2 / 48.0, np.sin(half) / safe)
    return np.concatenate([np.cos(half), k * w], axis=-1)


def quat_seq_canonicalize(qs):
    """Flip signs along axis 0 so consecutive quaternions have non-negative dot products."""
    qs = np.array(qs, dtype=np.float64, copy=True)
    for t in range(1, qs.shape[0]):
        dots = np.sum(qs[t] * qs[t - 1], axis=-1)
        qs[t] = np.where((dots < 0.0)[..., None], -qs[t], qs[t])
    return qs


def project_to_so3(m):
    """Gram-Schmidt on the columns, then flip the third column if det < 0.

    This is a deterministic projection onto SO(3); it is not the Frobenius-nearest
    rotation (that would need an SVD).
    """
    m = np.asarray(m, dtype=np.float64)
    c0, c1, c2 = m[..., :, 0], m[..., :, 1], m[..., :, 2]

    def _unit(v):
        n = np.linalg.norm(v, axis=-1, keepdims=True)
        if np.any(n < 1e-8):
            raise RotationError("rank-deficient matrix cannot be projected to SO(3)")
        return v / n

    def _dot(a, b):
        return np.sum(a * b, axis=-1, keepdims=True)

    e0 = _unit(c0)
    e1 = _unit(c1 - _dot(e0, c1) * e0)
    e2 = _unit(c2 - _dot(e0, c2) * e0 - _dot(e1, c2) * e1)
    r = np.stack([e0, e1, e2], axis=-1)
    det = np.linalg.det(r)
    r[..., :, 2] = np.where((det < 0.0)[..., None], -e2, e2)
    return r


def is_rotation(r, tol=1e-9):
    r = np.asarray(r, dtype=np.float64)
    eye = np.eye(3)
    ortho = np.abs(np.swapaxes(r, -1, -2) @ r - eye).max() <= tol
    return bool(ortho and np.abs(np.linalg.det(r) - 1.0).max() <= tol)


# Representation codes shared with the motion file format.
REPRESENTATIONS = {"aa": 3, "quat": 4, "rotmat": 9}
REP_CODES = {"aa": 0, "quat": 1, "rotmat": 2}


def to_rotmat(x, rep):
    """Per-joint blocks (..., M) in representation ``rep`` to (..., 3, 3).

    Quaternions are normalised first and rotation-matrix blocks are projected
    onto SO(3), since network outputs are not exact rotations.
    """
    x = np.asarray(x, dtype=np.float64)
    if rep == "aa":
        return aa_to_rotmat(x)
    if rep == "quat":
        return quat_to_rotmat(quat_normalize(x))
    if rep == "rotmat":
        return project_to_so3(x.reshape(x.shape[:-1] + (3, 3)))
    raise RotationError(f"unknown representation {rep!r}")


def from_rotmat(r, rep):
    r = np.asarray(r, dtype=np.float64)
    if rep == "aa":
        return rotmat_to_aa(r)
    if rep == "quat":
        return rotmat_to_quat(r)
    if rep == "rotmat":
        return r.reshape(r.shape[:-2] + (9,))
    raise RotationError(f"unknown representation {rep!r}")
