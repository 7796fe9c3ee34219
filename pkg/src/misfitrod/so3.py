"""Rotation-group helpers: exp/log maps, nearest-rotation projection, geodesics.

All routines are deterministic and operate on plain float64 arrays. The
nearest-rotation projection accepts a batch of matrices (shape ``(..., 3, 3)``)
and is the single place where the sign convention for improper inputs is
fixed: the smallest singular direction is flipped when ``det < 0``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "hat",
    "vee",
    "exp_so3",
    "log_so3",
    "nearest_rotation",
    "random_rotation",
    "geodesic",
    "is_rotation",
]


def hat(w: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector."""
    w = np.asarray(w, dtype=float)
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


def vee(W: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hat` (uses the skew part of ``W``)."""
    W = np.asarray(W, dtype=float)
    A = 0.5 * (W - W.T)
    return np.array([A[2, 1], A[0, 2], A[1, 0]])


def exp_so3(w: np.ndarray) -> np.ndarray:
    """Rodrigues exponential of a rotation vector."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        W = hat(w)
        return np.eye(3) + W + 0.5 * (W @ W)
    k = w / theta
    K = hat(k)
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def log_so3(R: np.ndarray) -> np.ndarray:
    """Rotation vector of a proper rotation.

    Near the angle-pi branch the axis is recovered from the symmetric part
    ``(R + I)/2``; the sign is fixed by making the largest-magnitude axis
    component positive, with ties resolved by index order. This makes the
    branch choice deterministic.
    """
    R = np.asarray(R, dtype=float)
    tr = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(tr))
    if theta < 1e-8:
        return vee(R)
    if theta < np.pi - 1e-6:
        return theta / (2.0 * np.sin(theta)) * np.array(
            [R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]
        )
    # theta ~ pi: R ~ I + 2*K^2, axis from diagonal of (R + I)/2
    B = (R + np.eye(3)) / 2.0
    axis = np.sqrt(np.clip(np.diag(B), 0.0, None))
    k = int(np.argmax(axis))
    if axis[k] > 0:
        for i in range(3):
            if i != k and B[k, i] + B[i, k] < 0:
                axis[i] = -axis[i]
        if axis[k] < 0:
            axis = -axis
    n = np.linalg.norm(axis)
    if n == 0.0:
        axis = np.array([1.0, 0.0, 0.0])
        n = 1.0
    return theta * axis / n


def nearest_rotation(M: np.ndarray) -> np.ndarray:
    """Closest proper rotation(s) to ``M`` in the Frobenius norm.

    Computed from the SVD ``M = U S Vh``; when ``det(U Vh) < 0`` the last
    column of ``U`` is flipped so the result stays in SO(3). Accepts a single
    3x3 matrix or a batch ``(..., 3, 3)``.
    """
    M = np.asarray(M, dtype=float)
    single = M.ndim == 2
    A = M[None, ...] if single else M
    U, _, Vh = np.linalg.svd(A)
    s = np.sign(np.linalg.det(U) * np.linalg.det(Vh))
    s = np.where(s == 0.0, 1.0, s)
    U = U.copy()
    U[..., :, 2] *= s[..., None]
    R = U @ Vh
    return R[0] if single else R


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation from a normalized random quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def geodesic(R0: np.ndarray, R1: np.ndarray, t: float) -> np.ndarray:
    """Point at parameter ``t`` on the geodesic from ``R0`` to ``R1`` in SO(3)."""
    R0 = np.asarray(R0, dtype=float)
    R1 = np.asarray(R1, dtype=float)
    w = log_so3(R0.T @ R1)
    return R0 @ exp_so3(t * w)


def is_rotation(R: np.ndarray, tol: float = 1e-10) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    return (
        np.linalg.norm(R.T @ R - np.eye(3)) <= tol
        and abs(np.linalg.det(R) - 1.0) <= tol
    )
