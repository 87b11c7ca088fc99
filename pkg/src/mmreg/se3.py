"""Rigid transforms in SE(3) and their twist coordinates.

A rigid transform is a 4x4 homogeneous matrix. A tangent vector is a
6-vector ``(omega, u)``: axis-angle rotation (radians) followed by the
translational twist component (mm). With this layout ``exp(-v)`` is exactly
the inverse of ``exp(v)``.
"""

import numpy as np

from .errors import IllConditionedRotation, InvalidArgument

# below this rotation angle the Rodrigues / V coefficients use Taylor series
SMALL_ANGLE = 1e-5
# log is refused this close to pi, where the rotation axis sign is ambiguous
PI_MARGIN = 1e-6
ORTHO_TOL = 1e-9


def hat(w):
    """Skew-symmetric matrix such that ``hat(w) @ p == cross(w, p)``."""
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def vee(K):
    return np.array([K[2, 1], K[0, 2], K[1, 0]])


def _coefficients(theta, small=None):
    """Return (A, B, C, D) for angle ``theta``.

    A = sin t / t, B = (1 - cos t) / t^2, C = (t - sin t) / t^3 and
    D = (1 - A / (2B)) / t^2, so that R = I + A K + B K^2,
    V = I + B K + C K^2 and V^-1 = I - K/2 + D K^2 with K = hat(omega).
    """
    if small is None:
        small = theta < SMALL_ANGLE
    t2 = theta * theta
    if small:
        A = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
        B = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
        C = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
        D = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    else:
        s = np.sin(theta)
        A = s / theta
        B = 2.0 * np.sin(0.5 * theta) ** 2 / t2
        C = (theta - s) / (t2 * theta)
        D = (1.0 - A / (2.0 * B)) / t2
    return A, B, C, D


def _as_tangent(v):
    v = np.asarray(v, dtype=float)
    if v.shape != (6,):
        raise InvalidArgument(f"tangent vector must have shape (6,), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidArgument("tangent vector has non-finite entries")
    return v


def check_rigid(T, tol=ORTHO_TOL):
    """Validate a 4x4 rigid matrix and return it as a float array."""
    T = np.asarray(T, dtype=float)
    if T.shape != (4, 4):
        raise InvalidArgument(f"rigid transform must be 4x4, got {T.shape}")
    if not np.all(np.isfinite(T)):
        raise InvalidArgument("rigid transform has non-finite entries")
    if not np.array_equal(T[3], [0.0, 0.0, 0.0, 1.0]):
        raise InvalidArgument("bottom row of rigid transform must be (0, 0, 0, 1)")
    R = T[:3, :3]
    if np.max(np.abs(R.T @ R - np.eye(3))) > tol:
        raise InvalidArgument("rotation block is not orthonormal")
    if abs(np.linalg.det(R) - 1.0) > tol:
        raise InvalidArgument("rotation block is not a proper rotation")
    return T


def exp_map(v, small=None):
    """Map a twist ``(omega, u)`` to its 4x4 rigid transform."""
    v = _as_tangent(v)
    w, u = v[:3], v[3:]
    theta = np.linalg.norm(w)
    A, B, C, _ = _coefficients(theta, small)
    K = hat(w)
    K2 = K @ K
    T = np.eye(4)
    T[:3, :3] = np.eye(3) + A * K + B * K2
    T[:3, 3] = (np.eye(3) + B * K + C * K2) @ u
    return T


def _rotation_log(R):
    # sin(theta) * axis from the antisymmetric part, cos(theta) from the trace
    s_axis = 0.5 * vee(R - R.T)
    s = np.linalg.norm(s_axis)
    c = 0.5 * (np.trace(R) - 1.0)
    theta = np.arctan2(s, c)
    if theta > np.pi - PI_MARGIN:
        raise IllConditionedRotation(
            f"rotation angle {theta:.9f} is within {PI_MARGIN:g} of pi; log is not unique")
    if theta < SMALL_ANGLE:
        A = _coefficients(theta, small=True)[0]
        return s_axis / A, theta
    if theta < 3.0:
        return s_axis * (theta / s), theta
    # near pi the antisymmetric part is tiny; take the axis from R + R^T
    S = 0.5 * (R + R.T) - c * np.eye(3)
    S /= (1.0 - c)
    i = int(np.argmax(np.diag(S)))
    axis = S[:, i] / np.sqrt(S[i, i])
    if axis @ s_axis < 0:
        axis = -axis
    return axis * theta, theta


def log_map(T):
    """Inverse of :func:`exp_map`; returns the twist with ``|omega| < pi``."""
    T = check_rigid(T)
    w, theta = _rotation_log(T[:3, :3])
    _, _, _, D = _coefficients(theta)
    K = hat(w)
    Vinv = np.eye(3) - 0.5 * K + D * (K @ K)
    return np.concatenate([w, Vinv @ T[:3, 3]])


def invert(T):
    T = np.asarray(T, dtype=float)
    R, t = T[:3, :3], T[:3, 3]
    out = np.eye(4)
    out[:3, :3] = R.T
    out[:3, 3] = -R.T @ t
    return out


def compose(A, B):
    """Exact group product: apply ``B`` first, then ``A``."""
    return np.asarray(A, dtype=float) @ np.asarray(B, dtype=float)


def apply_point(T, p):
    """Apply ``T`` to one point (3,) or an array of points (..., 3)."""
    T = np.asarray(T, dtype=float)
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise InvalidArgument("point has non-finite entries")
    return p @ T[:3, :3].T + T[:3, 3]
