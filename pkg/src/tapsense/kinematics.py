"""Fingertip forward kinematics for the four-finger tapping hand.

Lengths are in centimetres and angles in degrees at the public surface.
Rotations are right-handed: ``rot_y(a)`` maps +x toward -z for positive ``a``.
With this convention a joint angle equal to the rest offset puts the
fingertip straight along +x of its joint frame (fingers 1-2) or -x
(fingers 3-4, which carry an extra 180 degree turn about z).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class KinematicsError(ValueError):
    pass


def rot_y(deg: float) -> np.ndarray:
    a = np.deg2rad(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(deg: float) -> np.ndarray:
    a = np.deg2rad(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# exact 180 degree turn; rot_z(180) carries ~1e-16 residue in the off-diagonal
_HALF_TURN_Z = np.diag([-1.0, -1.0, 1.0])


@dataclass(frozen=True)
class HandGeometry:
    p1: tuple = (7.845, 3.429, 13.691)
    link_len: float = 7.6
    rest_offset: float = 4.5
    theta_limits: tuple = (-90.0, 180.0)

    def __post_init__(self):
        if self.link_len <= 0:
            raise KinematicsError("link length must be positive")

    def joint_origin(self, finger: int) -> np.ndarray:
        _check_finger(finger)
        x, y, z = self.p1
        sx = 1.0 if finger in (1, 2) else -1.0
        sy = 1.0 if finger in (1, 3) else -1.0
        return np.array([sx * x, sy * y, z])

    @classmethod
    def from_config(cls, path) -> "HandGeometry":
        """Read ``key = value`` lines: x1, y1, z1, link_len, rest_offset (cm, degrees)."""
        values = _read_kv(path)
        known = {"x1", "y1", "z1", "link_len", "rest_offset", "theta_min", "theta_max"}
        unknown = set(values) - known
        if unknown:
            raise KinematicsError(f"{path}: unknown keys {sorted(unknown)}")
        base = cls()
        p1 = tuple(values.get(k, d) for k, d in zip(("x1", "y1", "z1"), base.p1))
        limits = (values.get("theta_min", base.theta_limits[0]), values.get("theta_max", base.theta_limits[1]))
        return cls(p1, values.get("link_len", base.link_len), values.get("rest_offset", base.rest_offset), limits)


def _read_kv(path) -> dict:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise KinematicsError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            out[key] = float(value)
        except ValueError as exc:
            raise KinematicsError(f"{path}:{n}: {value!r} is not a number") from exc
    return out


def _check_finger(finger) -> None:
    if finger not in (1, 2, 3, 4):
        raise KinematicsError(f"finger index must be 1..4, got {finger!r}")


def finger_rotation(g: HandGeometry, finger: int, theta: float) -> np.ndarray:
    _check_finger(finger)
    if finger in (1, 2):
        return rot_y(-theta + g.rest_offset)
    return rot_y(theta - g.rest_offset) @ _HALF_TURN_Z


def fingertip_in_hand(g: HandGeometry, finger: int, theta: float) -> np.ndarray:
    """Fingertip centre in the hand (palm) frame, cm."""
    _check_finger(finger)
    if not np.isfinite(theta):
        raise KinematicsError("joint angle must be finite")
    lo, hi = g.theta_limits
    if not lo <= theta <= hi:
        raise KinematicsError(f"joint angle {theta} outside limits {g.theta_limits}")
    return g.joint_origin(finger) + finger_rotation(g, finger, theta) @ np.array([g.link_len, 0.0, 0.0])


def fingertip_tangent(g: HandGeometry, finger: int, theta: float) -> np.ndarray:
    """Unit direction the fingertip moves in as ``theta`` increases."""
    radial = fingertip_in_hand(g, finger, theta) - g.joint_origin(finger)
    axis = np.array([0.0, -1.0 if finger in (1, 2) else 1.0, 0.0])
    return np.cross(axis, radial) / np.linalg.norm(radial)


@dataclass(frozen=True)
class ArmTransform:
    T: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        T = np.asarray(self.T, dtype=np.float64)
        if T.shape != (4, 4) or not np.all(np.isfinite(T)):
            raise KinematicsError("transform must be a finite 4x4 matrix")
        R = T[:3, :3]
        if np.linalg.norm(R.T @ R - np.eye(3)) >= 1e-9 or abs(np.linalg.det(R) - 1.0) >= 1e-9:
            raise KinematicsError("rotation block is not a proper rotation")
        if not np.allclose(T[3], [0.0, 0.0, 0.0, 1.0]):
            raise KinematicsError("last row must be [0, 0, 0, 1]")
        object.__setattr__(self, "T", T)

    @property
    def rotation(self) -> np.ndarray:
        return self.T[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.T[:3, 3]

    @classmethod
    def from_parts(cls, rotation, translation) -> "ArmTransform":
        T = np.eye(4)
        T[:3, :3] = rotation
        T[:3, 3] = translation
        return cls(T)

    @classmethod
    def from_row_major(cls, numbers) -> "ArmTransform":
        numbers = np.asarray(numbers, dtype=np.float64).ravel()
        if numbers.size != 16:
            raise KinematicsError("transform needs 16 numbers")
        return cls(numbers.reshape(4, 4))

    def row_major(self) -> list:
        return [float(v) for v in self.T.ravel()]


def fingertip_in_arm(T: ArmTransform | np.ndarray, p_hand) -> np.ndarray:
    """Map a hand-frame point into the arm base frame (hand frame == end-effector frame)."""
    if not isinstance(T, ArmTransform):
        T = ArmTransform(T)
    return T.rotation @ np.asarray(p_hand, dtype=np.float64) + T.translation
