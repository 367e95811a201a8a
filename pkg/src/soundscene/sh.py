"""Real spherical harmonics and direction math shared by every module.

Conventions (the "ambiX" family):
  * ACN channel ordering, index = l*(l+1) + m.
  * SN3D normalization, no Condon-Shortley phase. Channel 0 is always 1.
  * Right-handed frame: +X front, +Y left, +Z up. Azimuth grows from +X
    toward +Y, elevation from the horizontal plane toward +Z.

For first order the channels come out as [W, Y, Z, X] =
[1, sin(az)cos(el), sin(el), cos(az)cos(el)].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_ORDER = 7

# Horizontal projections below this are treated as a pole; azimuth := 0 there.
_POLE_EPS = 1e-12


class DegenerateDirectionError(ValueError):
    """Raised when a direction is requested for a (near-)zero vector."""


def n_channels(order: int) -> int:
    """Number of ambisonic channels for a given order."""
    return (order + 1) ** 2


def acn_index(l: int, m: int) -> int:
    return l * (l + 1) + m


def check_order(order: int) -> int:
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"ambisonic order must be in [0, {MAX_ORDER}], got {order}")
    return int(order)


def angles_to_vector(azimuth, elevation) -> np.ndarray:
    """Unit vector(s) for azimuth/elevation; output shape (..., 3)."""
    az = np.asarray(azimuth, dtype=np.float64)
    el = np.asarray(elevation, dtype=np.float64)
    ce = np.cos(el)
    return np.stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)], axis=-1)


def vector_to_angles(u) -> tuple[np.ndarray, np.ndarray]:
    """(azimuth, elevation) of direction vector(s), normalizing internally.

    At the poles (horizontal magnitude < 1e-12) azimuth is defined as 0 so
    round trips stay deterministic. Zero vectors are rejected.
    """
    v = np.asarray(u, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1)
    if np.any(norm <= 0.0):
        raise DegenerateDirectionError("degenerate direction: zero vector")
    hyp = np.hypot(v[..., 0], v[..., 1])
    az = np.where(hyp < _POLE_EPS * norm, 0.0, np.arctan2(v[..., 1], v[..., 0]))
    el = np.arctan2(v[..., 2], hyp)
    return az, el


@dataclass(frozen=True)
class Direction:
    """A direction on the unit sphere, stored as azimuth/elevation radians."""

    azimuth: float
    elevation: float

    @classmethod
    def from_vector(cls, u) -> "Direction":
        az, el = vector_to_angles(u)
        return cls(float(az), float(el))

    @property
    def vector(self) -> np.ndarray:
        return angles_to_vector(self.azimuth, self.elevation)


FRONT = Direction(0.0, 0.0)
LEFT = Direction(math.pi / 2, 0.0)
RIGHT = Direction(-math.pi / 2, 0.0)
BACK = Direction(math.pi, 0.0)
UP = Direction(0.0, math.pi / 2)


def _legendre_all(x: np.ndarray, order: int) -> list[list[np.ndarray]]:
    """Associated Legendre values P_l^m(x) without Condon-Shortley phase.

    Returns nested lists indexed [l][m] of arrays shaped like x. Uses the
    standard P_mm / P_{m+1,m} seeding plus the three-term l recurrence; x is
    sin(elevation) so sqrt(1-x^2) = cos(elevation) >= 0 and the recurrence is
    stable for the small orders supported here.
    """
    s = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    p: list[list[np.ndarray]] = [[np.ones_like(x)]]
    for l in range(1, order + 1):
        row = []
        for m in range(0, l + 1):
            if m == l:
                row.append((2 * l - 1) * s * p[l - 1][l - 1])
            elif m == l - 1:
                row.append((2 * l - 1) * x * p[l - 1][l - 1])
            else:
                row.append(
                    ((2 * l - 1) * x * p[l - 1][m] - (l + m - 1) * p[l - 2][m])
                    / (l - m)
                )
        p.append(row)
    return p


def eval_sh(azimuth, elevation, order: int) -> np.ndarray:
    """SN3D/ACN real SH basis at (azimuth, elevation); shape (..., (L+1)^2).

    Total over the whole sphere; channel 0 is identically 1.
    """
    order = check_order(order)
    az = np.asarray(azimuth, dtype=np.float64)
    el = np.asarray(elevation, dtype=np.float64)
    az, el = np.broadcast_arrays(az, el)
    p = _legendre_all(np.sin(el), order)
    out = np.empty(az.shape + (n_channels(order),), dtype=np.float64)
    for l in range(order + 1):
        out[..., acn_index(l, 0)] = p[l][0]
        for m in range(1, l + 1):
            norm = math.sqrt(2.0 * math.factorial(l - m) / math.factorial(l + m))
            out[..., acn_index(l, m)] = norm * p[l][m] * np.cos(m * az)
            out[..., acn_index(l, -m)] = norm * p[l][m] * np.sin(m * az)
    return out


def eval_sh_direction(direction: Direction, order: int) -> np.ndarray:
    return eval_sh(direction.azimuth, direction.elevation, order)


def eval_sh_vectors(u, order: int) -> np.ndarray:
    """SH basis for direction vector(s) of any nonzero length."""
    az, el = vector_to_angles(u)
    return eval_sh(az, el, order)


def rotate_into_listener(rotation: np.ndarray, d) -> Direction:
    """Direction of the world offset ``d`` expressed in the listener frame.

    Applies R^T (world -> listener) and normalizes; raises on zero offsets.
    """
    v = np.asarray(d, dtype=np.float64)
    if np.linalg.norm(v) <= 0.0:
        raise DegenerateDirectionError("degenerate direction: zero vector")
    return Direction.from_vector(np.asarray(rotation, dtype=np.float64).T @ v)


# ---------------------------------------------------------------------------
# rotations


def yaw_matrix(angle: float) -> np.ndarray:
    """Rotation about +Z; positive yaw turns the listener toward +Y (left)."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def pitch_matrix(angle: float) -> np.ndarray:
    """Rotation about +Y; positive pitch tilts the listener's nose up."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def roll_matrix(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def quat_to_matrix(w: float, x: float, y: float, z: float) -> np.ndarray:
    """Rotation matrix of a (w, x, y, z) quaternion, normalized internally."""
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if n == 0.0:
        raise ValueError("zero quaternion")
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(rot: np.ndarray) -> np.ndarray:
    """(w, x, y, z) quaternion of a rotation matrix, w >= 0."""
    r = np.asarray(rot, dtype=np.float64)
    t = np.trace(r)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(r)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(max(1.0 + r[i, i] - r[j, j] - r[k, k], 0.0)) * 2
        q = np.empty(4)
        q[0] = (r[k, j] - r[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (r[j, i] + r[i, j]) / s
        q[1 + k] = (r[k, i] + r[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def slerp(q0: np.ndarray, q1: np.ndarray, t: float) -> np.ndarray:
    """Spherical-linear interpolation between two (w,x,y,z) quaternions."""
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    q0 = q0 / np.linalg.norm(q0)
    q1 = q1 / np.linalg.norm(q1)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1, dot = -q1, -dot
    if dot > 1.0 - 1e-12:
        q = q0 + t * (q1 - q0)
        return q / np.linalg.norm(q)
    theta = math.acos(min(1.0, dot))
    return (math.sin((1 - t) * theta) * q0 + math.sin(t * theta) * q1) / math.sin(theta)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix (QR of a Gaussian matrix, det +1)."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] *= -1
    return q


def is_rotation(rot: np.ndarray, tol: float = 1e-9) -> bool:
    r = np.asarray(rot, dtype=np.float64)
    return (
        r.shape == (3, 3)
        and np.allclose(r @ r.T, np.eye(3), atol=tol)
        and abs(np.linalg.det(r) - 1.0) <= tol
    )
