"""Planar poses, 3D rigid transforms, and small angle/rotation helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


@dataclass(frozen=True)
class Pose2:
    """Planar robot pose; heading is kept normalized to (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "beta", wrap_angle(self.beta))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def compose(self, other: "Pose2") -> "Pose2":
        """This pose's frame carrying `other`: returns self * other."""
        c, s = math.cos(self.beta), math.sin(self.beta)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.beta + other.beta,
        )

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.beta), math.sin(self.beta)
        return Pose2(-(c * self.x + s * self.y), -(-s * self.x + c * self.y), -self.beta)

    def transform_point(self, x: float, y: float) -> tuple[float, float]:
        c, s = math.cos(self.beta), math.sin(self.beta)
        return self.x + c * x - s * y, self.y + s * x + c * y


def rotvec_to_matrix(r: np.ndarray) -> np.ndarray:
    """Rodrigues' formula: rotation vector (axis * angle) to 3x3 matrix."""
    r = np.asarray(r, dtype=float)
    theta = float(np.linalg.norm(r))
    if theta < 1e-12:
        # Second-order series keeps the map smooth through zero.
        K = skew(r)
        return np.eye(3) + K + 0.5 * (K @ K)
    axis = r / theta
    K = skew(axis)
    return np.eye(3) + math.sin(theta) * K + (1.0 - math.cos(theta)) * (K @ K)


def matrix_to_rotvec(R: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rotvec_to_matrix` for proper rotations."""
    R = np.asarray(R, dtype=float)
    cos_theta = max(-1.0, min(1.0, (np.trace(R) - 1.0) / 2.0))
    theta = math.acos(cos_theta)
    if theta < 1e-9:
        return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / 2.0
    if abs(theta - math.pi) < 1e-6:
        # Near pi the off-diagonal formula degenerates; use the symmetric part.
        A = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(A), 0.0))
        # Fix signs from the largest component.
        k = int(np.argmax(axis))
        if axis[k] > 0:
            for i in range(3):
                if i != k and A[k, i] < 0:
                    axis[i] = -axis[i]
        n = np.linalg.norm(axis)
        if n > 0:
            axis = axis / n
        return axis * theta
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return v * (theta / (2.0 * math.sin(theta)))


def skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


@dataclass
class RigidTransform3:
    """6-DoF rigid transform: p_out = R @ p_in + t.

    Rotation is stored as an orthonormal matrix; construction helpers accept
    a rotation vector so optimizers can work in a singularity-free chart.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float)
        self.translation = np.asarray(self.translation, dtype=float)
        if self.rotation.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-9:
            raise ValueError(f"rotation not orthonormal (err={err:.3e})")

    @classmethod
    def identity(cls) -> "RigidTransform3":
        return cls()

    @classmethod
    def from_rotvec(cls, rotvec, translation) -> "RigidTransform3":
        return cls(rotvec_to_matrix(np.asarray(rotvec, dtype=float)), translation)

    @classmethod
    def from_xyz_yaw(cls, x: float, y: float, z: float, yaw: float) -> "RigidTransform3":
        c, s = math.cos(yaw), math.sin(yaw)
        R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(R, np.array([x, y, z]))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (N, 3) batch."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform3") -> "RigidTransform3":
        """Returns self * other (apply `other` first)."""
        return RigidTransform3(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform3":
        Rt = self.rotation.T
        return RigidTransform3(Rt, -Rt @ self.translation)

    def rotvec(self) -> np.ndarray:
        return matrix_to_rotvec(self.rotation)

    def yaw(self) -> float:
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])

    def planar(self) -> Pose2:
        """2D projection (x, y, yaw) used by the costmaps and planners."""
        return Pose2(float(self.translation[0]), float(self.translation[1]), self.yaw())
