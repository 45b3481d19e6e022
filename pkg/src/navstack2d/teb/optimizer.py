"""Band optimization: resize, damped least-squares descent, command extraction."""

from __future__ import annotations

import math

import numpy as np

from .. import _kernels
from ..errors import OptimizationFailureError
from ..geometry import wrap_angle
from ..optim import levenberg_marquardt
from .band import TebBand, TebConfig
from .obstacles import encode_obstacles
from .residuals import velocity


def _params_vector(cfg: TebConfig) -> np.ndarray:
    p = np.zeros(_kernels.PARAMS_SIZE)
    p[_kernels.P_VMAX] = cfg.v_max
    p[_kernels.P_WMAX] = cfg.omega_max
    p[_kernels.P_AMAX] = cfg.a_max
    p[_kernels.P_WDMAX] = cfg.omega_dot_max
    p[_kernels.P_RHOMIN] = cfg.rho_min
    p[_kernels.P_RADIUS] = cfg.robot_radius
    p[_kernels.P_KAPPA] = cfg.kappa
    p[_kernels.P_SH] = cfg.sigma_h
    p[_kernels.P_SV] = cfg.sigma_v
    p[_kernels.P_SA] = cfg.sigma_alpha
    p[_kernels.P_SO] = cfg.sigma_o
    return p


def band_objective_fast(band: TebBand, cfg: TebConfig, obstacles) -> float:
    """Objective through the kernel backend (equals residuals.objective)."""
    obs_data, starts = encode_obstacles(obstacles)
    r = _kernels.teb_residuals(band.poses, band.dts, obs_data, starts, _params_vector(cfg))
    return float(r @ r)


def resize_band(band: TebBand, cfg: TebConfig) -> TebBand:
    """Keep intervals near the reference: split long ones, merge short ones.

    The 2x / 0.5x hysteresis around dt_ref prevents insert/remove cycling.
    Endpoint poses are never touched.
    """
    poses = [band.poses[k].copy() for k in range(band.n)]
    dts = [float(d) for d in band.dts]

    # Merge pass: absorb a too-short interval into its successor by dropping
    # the interior pose between them.
    k = 0
    while k < len(dts) - 1:
        if dts[k] < 0.5 * cfg.dt_ref:
            dts[k + 1] += dts[k]
            del dts[k]
            del poses[k + 1]
        else:
            k += 1

    # Split pass: long intervals gain a midpoint pose.
    k = 0
    while k < len(dts):
        if dts[k] > 2.0 * cfg.dt_ref:
            a, b = poses[k], poses[k + 1]
            mid = np.empty(3)
            mid[0] = 0.5 * (a[0] + b[0])
            mid[1] = 0.5 * (a[1] + b[1])
            mid[2] = a[2] + 0.5 * wrap_angle(b[2] - a[2])
            poses.insert(k + 1, mid)
            half = 0.5 * dts[k]
            dts[k] = half
            dts.insert(k + 1, half)
        else:
            k += 1

    return TebBand(np.array(poses), np.array(dts), band.stamp)


def optimize(band: TebBand, cfg: TebConfig, obstacles) -> TebBand:
    """Minimize the band objective over interior poses and all intervals.

    Runs `outer_iterations` rounds of resize + inner damped least-squares
    iterations; intervals are clamped to dt_min after every step. Returns the
    best band seen, so the objective never gets worse than the input's.
    """
    obs_data, starts = encode_obstacles(obstacles)
    base_params = _params_vector(cfg)
    final_params = _weighted(base_params, cfg.weight_adapt_factor ** max(cfg.outer_iterations - 1, 0))

    def cost_of(b: TebBand, p=base_params) -> float:
        r = _kernels.teb_residuals(b.poses, b.dts, obs_data, starts, p)
        return float(r @ r)

    work = band.copy()
    if not math.isfinite(cost_of(work)):
        work.dts = np.maximum(work.dts, cfg.dt_min)
        if not math.isfinite(cost_of(work)):
            raise OptimizationFailureError("band objective is non-finite even after interval repair")

    best = work.copy()
    best_cost = cost_of(best, final_params)

    for round_idx in range(cfg.outer_iterations):
        params = _weighted(base_params, cfg.weight_adapt_factor**round_idx)
        work = resize_band(work, cfg)
        work.dts = np.maximum(work.dts, cfg.dt_min)
        n = work.n
        K = n - 1
        n_interior = n - 2

        def unpack(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            poses = work.poses.copy()
            if n_interior:
                poses[1:-1] = x[: 3 * n_interior].reshape(n_interior, 3)
            return poses, x[3 * n_interior :]

        def residual_fn(x: np.ndarray) -> np.ndarray:
            poses, dts = unpack(x)
            return _kernels.teb_residuals(poses, dts, obs_data, starts, params)

        def jac_fn(x: np.ndarray) -> np.ndarray:
            poses, dts = unpack(x)
            return _kernels.teb_jacobian(poses, dts, obs_data, starts, params, cfg.fd_step)

        def project(x: np.ndarray) -> np.ndarray:
            out = x.copy()
            out[3 * n_interior :] = np.maximum(out[3 * n_interior :], cfg.dt_min)
            return out

        x0 = np.concatenate([work.poses[1:-1].ravel(), work.dts])
        result = levenberg_marquardt(
            residual_fn,
            x0,
            jac_fn=jac_fn,
            max_iter=cfg.inner_iterations,
            step_tol=1e-8,
            cost_tol=1e-10,
            project=project,
        )
        poses, dts = unpack(result.x)
        work = TebBand(poses, dts, band.stamp)
        cost_final = cost_of(work, final_params)
        if cost_final < best_cost:
            best = work.copy()
            best_cost = cost_final

    # The returned band is never worse than the input under the base
    # objective; an already-optimal band passes through unchanged.
    if cost_of(best) > cost_of(band) + 1e-12:
        return band.copy()
    return best


def _weighted(params: np.ndarray, factor: float) -> np.ndarray:
    out = params.copy()
    for idx in (_kernels.P_SH, _kernels.P_SV, _kernels.P_SA, _kernels.P_SO):
        out[idx] *= factor
    return out


def extract_command(
    band: TebBand,
    cfg: TebConfig,
    control_period: float,
    now: float | None = None,
) -> tuple[float, float]:
    """Velocity command from the band's first pose pair, saturated to the
    limits. A band older than two control periods commands a safety stop."""
    if now is not None and now - band.stamp > 2.0 * control_period:
        return 0.0, 0.0
    v, w = velocity(band.pose(0), band.pose(1), float(band.dts[0]), cfg.kappa)
    v = min(max(v, -cfg.v_max), cfg.v_max)
    w = min(max(w, -cfg.omega_max), cfg.omega_max)
    return v, w
