"""Constraint residuals and the penalty objective, in plain readable form.

These scalar definitions are the reference semantics; the optimizer evaluates
the same quantities through the kernel backend, and the tests check the two
against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import Pose2, wrap_angle
from .band import TebBand, TebConfig


def nonholonomic_residual(s_k: Pose2, s_k1: Pose2) -> np.ndarray:
    """Constant-curvature arc condition: (q_k + q_{k+1}) x d, zero when both
    headings make equal angles with the chord."""
    q = np.array([math.cos(s_k.beta) + math.cos(s_k1.beta),
                  math.sin(s_k.beta) + math.sin(s_k1.beta),
                  0.0])
    d = np.array([s_k1.x - s_k.x, s_k1.y - s_k.y, 0.0])
    return np.cross(q, d)


def velocity(s_k: Pose2, s_k1: Pose2, dt: float, kappa: float = 100.0) -> tuple[float, float]:
    """Finite-difference (v, omega) between consecutive poses; the sigmoid of
    the heading/chord inner product supplies the sign of v."""
    if dt <= 0:
        raise ValueError("time interval must be > 0")
    dx = s_k1.x - s_k.x
    dy = s_k1.y - s_k.y
    dist = math.sqrt(dx * dx + dy * dy)
    dot = math.cos(s_k.beta) * dx + math.sin(s_k.beta) * dy
    gamma = kappa * dot / (1.0 + abs(kappa * dot))
    v = dist * gamma / dt
    w = wrap_angle(s_k1.beta - s_k.beta) / dt
    return v, w


def acceleration(v_k: float, v_k1: float, w_k: float, w_k1: float, dt_k: float, dt_k1: float) -> tuple[float, float]:
    a = 2.0 * (v_k1 - v_k) / (dt_k + dt_k1)
    wd = 2.0 * (w_k1 - w_k) / (dt_k + dt_k1)
    return a, wd


@dataclass
class ResidualBundle:
    """All constraint residuals of a band, one row per interval/pose."""

    h: np.ndarray          # (K, 3) equality residuals
    vel: np.ndarray        # (K, 2) [v_max-|v|, w_max-|w|]
    acc: np.ndarray        # (K-1, 2) [a_max-|a|, wd_max-|wd|]
    obs: np.ndarray        # (K, G) clearance rho - rho_min per obstacle
    v: np.ndarray = field(default=None)  # type: ignore[assignment]
    w: np.ndarray = field(default=None)  # type: ignore[assignment]


def constraint_residuals(band: TebBand, cfg: TebConfig, obstacles) -> ResidualBundle:
    n = band.n
    K = n - 1
    h = np.zeros((K, 3))
    vel = np.zeros((K, 2))
    vs = np.zeros(K)
    ws = np.zeros(K)
    for k in range(K):
        a, b = band.pose(k), band.pose(k + 1)
        h[k] = nonholonomic_residual(a, b)
        vs[k], ws[k] = velocity(a, b, float(band.dts[k]), cfg.kappa)
        vel[k] = (cfg.v_max - abs(vs[k]), cfg.omega_max - abs(ws[k]))
    acc = np.zeros((max(K - 1, 0), 2))
    for k in range(K - 1):
        a_k, wd_k = acceleration(vs[k], vs[k + 1], ws[k], ws[k + 1],
                                 float(band.dts[k]), float(band.dts[k + 1]))
        acc[k] = (cfg.a_max - abs(a_k), cfg.omega_dot_max - abs(wd_k))
    obstacles = list(obstacles)
    obs = np.zeros((K, len(obstacles)))
    for k in range(K):
        px, py = band.poses[k, 0], band.poses[k, 1]
        for g, o in enumerate(obstacles):
            rho = o.distance(px, py) - cfg.robot_radius
            obs[k, g] = rho - cfg.rho_min
    return ResidualBundle(h, vel, acc, obs, vs, ws)


def penalty_equality(h_k: np.ndarray, sigma: float) -> float:
    """phi: quadratic penalty of an equality residual."""
    h_k = np.asarray(h_k, dtype=float)
    return sigma * float(h_k @ h_k)


def penalty_inequality(residual, sigma: float) -> float:
    """chi: quadratic penalty of the violated (negative) part only."""
    r = np.minimum(0.0, np.asarray(residual, dtype=float))
    return sigma * float((r * r).sum())


def objective(band: TebBand, cfg: TebConfig, obstacles) -> float:
    """Penalty least-squares objective: sum of squared intervals plus all
    constraint penalties."""
    bundle = constraint_residuals(band, cfg, obstacles)
    total = float((band.dts**2).sum())
    K = band.n - 1
    for k in range(K):
        total += penalty_equality(bundle.h[k], cfg.sigma_h)
        total += penalty_inequality(bundle.vel[k], cfg.sigma_v)
        if bundle.obs.shape[1]:
            total += penalty_inequality(bundle.obs[k], cfg.sigma_o)
    for k in range(K - 1):
        total += penalty_inequality(bundle.acc[k], cfg.sigma_alpha)
    return total
