"""Planar box-pushing dynamics, observation model, reward and linearization.

Hyperstate layout (last axis of every array):

    0 p_x   1 p_y   2 p_theta   3 v_x   4 v_y   5 v_w
    6 m     7 mu_v  8 J         9 r_bx  10 r_by

Controls are [F_x, F_y, T]. Every function accepts arrays with arbitrary
leading batch dimensions.
"""

from typing import Optional, Tuple

import numpy as np

from .config import PlantSpec

P_X, P_Y, P_THETA, V_X, V_Y, V_W = range(6)
MASS, MU_V, INERTIA, R_BX, R_BY = range(6, 11)

STATE = slice(0, 6)
PARAMS = slice(6, 11)
POSITION = slice(0, 3)
VELOCITY = slice(3, 6)

STATE_DIM = 6
PARAM_DIM = 5
HYPER_DIM = 11
CONTROL_DIM = 3
OBS_DIM = 9

PARAM_NAMES = ("m", "mu_v", "J", "r_bx", "r_by")


def make_hyperstate(state, params) -> np.ndarray:
    """Concatenate a physical state and a parameter vector."""
    state, params = np.asarray(state, dtype=float), np.asarray(params, dtype=float)
    return np.concatenate([state, params], axis=-1)


def clamp_params(xi: np.ndarray, floor: float) -> np.ndarray:
    """Copy of xi with every parameter raised to at least the floor."""
    out = np.array(xi, dtype=float, copy=True)
    out[..., PARAMS] = np.maximum(out[..., PARAMS], floor)
    return out


def clip_control(u: np.ndarray, spec: PlantSpec) -> np.ndarray:
    """Project a control onto the box [-u_max, u_max]^3."""
    return np.clip(np.asarray(u, dtype=float), -spec.u_max, spec.u_max)


def _torque_coefficients(p_theta, r_bx, r_by):
    cos, sin = np.cos(p_theta), np.sin(p_theta)
    c1 = cos * r_by + sin * r_bx
    c2 = cos * r_bx - sin * r_by
    return c1, c2


def _body_forces(xi: np.ndarray, u: np.ndarray):
    u = np.asarray(u, dtype=float)
    mu = xi[..., MU_V]
    f_bx = u[..., 0] - mu * xi[..., V_X]
    f_by = u[..., 1] - mu * xi[..., V_Y]
    return f_bx, f_by


def accelerations(xi: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Linear and angular accelerations about the center of mass.

    Args:
        xi: Hyperstate(s), parameters at or above the floor
        u: Control(s) [F_x, F_y, T]

    Returns:
        Array [..., 3] of (a_x, a_y, a_alpha)
    """
    xi = np.asarray(xi, dtype=float)
    f_bx, f_by = _body_forces(xi, u)
    c1, c2 = _torque_coefficients(xi[..., P_THETA], xi[..., R_BX], xi[..., R_BY])
    torque = np.asarray(u, dtype=float)[..., 2] + c1 * f_bx + c2 * f_by
    return np.stack(
        [f_bx / xi[..., MASS], f_by / xi[..., MASS], torque / xi[..., INERTIA]], axis=-1
    )


def transition(xi: np.ndarray, u: np.ndarray, spec: PlantSpec) -> np.ndarray:
    """Noise-free Euler step of the hyperstate; parameters held and floored."""
    xi = np.asarray(xi, dtype=float)
    nxt = np.array(xi, copy=True)
    nxt[..., POSITION] = xi[..., POSITION] + xi[..., VELOCITY] * spec.dt
    nxt[..., VELOCITY] = xi[..., VELOCITY] + accelerations(xi, u) * spec.dt
    nxt[..., PARAMS] = np.maximum(xi[..., PARAMS], spec.param_floor)
    return nxt


def step_truth(
    xi: np.ndarray, u: np.ndarray, spec: PlantSpec, rng: np.random.Generator
) -> np.ndarray:
    """Ground-truth step: Euler update, additive noise on all 11 components, floor clamp."""
    nxt = transition(xi, u, spec)
    noise = np.sqrt(spec.process_var) * rng.standard_normal(HYPER_DIM)
    return clamp_params(nxt + noise, spec.param_floor)


def measurement(xi: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Noise-free 9-dim observation of the point where the robot pushes.

    The body-frame offset r_b is rotated into the global frame by p_theta.
    """
    xi = np.asarray(xi, dtype=float)
    theta = xi[..., P_THETA]
    cos, sin = np.cos(theta), np.sin(theta)
    r_x = cos * xi[..., R_BX] - sin * xi[..., R_BY]
    r_y = sin * xi[..., R_BX] + cos * xi[..., R_BY]
    omega = xi[..., V_W]

    acc = accelerations(xi, u)
    f_bx, f_by = _body_forces(xi, u)
    a_alpha = acc[..., 2]

    return np.stack(
        [
            xi[..., P_X] + r_x,
            xi[..., P_Y] + r_y,
            theta,
            xi[..., V_X] - omega * r_y,
            xi[..., V_Y] + omega * r_x,
            omega,
            f_bx / xi[..., MASS] - a_alpha * r_y - omega**2 * r_x,
            f_by / xi[..., MASS] + a_alpha * r_x - omega**2 * r_y,
            a_alpha,
        ],
        axis=-1,
    )


def observe(
    xi: np.ndarray,
    u: np.ndarray,
    spec: PlantSpec,
    rng: Optional[np.random.Generator] = None,
    meas_var: Optional[float] = None,
) -> np.ndarray:
    """Observation with additive N(0, var I9) noise.

    Args:
        xi: Hyperstate
        u: Control applied on the step that produced xi
        spec: Plant constants (meas_var used unless overridden)
        rng: Generator for the noise draw; unused when the variance is zero
        meas_var: Override for the noise variance

    Returns:
        9-vector [p_x, p_y, p_theta, v_x, v_y, v_w, a_x, a_y, a_alpha]
    """
    var = spec.meas_var if meas_var is None else meas_var
    obs = measurement(xi, u)
    if var > 0.0 and rng is not None:
        obs = obs + np.sqrt(var) * rng.standard_normal(obs.shape)
    return obs


def reward(x: np.ndarray, u: np.ndarray, spec: PlantSpec) -> np.ndarray | float:
    """Weighted L1 penalty on position, velocity and control effort."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    value = (
        spec.r_pos * np.sum(np.abs(x[..., POSITION]), axis=-1)
        + spec.r_vel * np.sum(np.abs(x[..., VELOCITY]), axis=-1)
        + spec.r_u * np.sum(np.abs(u), axis=-1)
    )
    return float(value) if np.ndim(value) == 0 else value


def _frozen_step(
    x: np.ndarray, u: np.ndarray, theta: np.ndarray, p_theta: float, dt: float
) -> np.ndarray:
    """Physical-state Euler step with parameters and torque-arm angle frozen."""
    m, mu, inertia, r_bx, r_by = theta
    c1, c2 = _torque_coefficients(p_theta, r_bx, r_by)
    f_bx = u[..., 0] - mu * x[..., V_X]
    f_by = u[..., 1] - mu * x[..., V_Y]
    acc = np.stack(
        [f_bx / m, f_by / m, (u[..., 2] + c1 * f_bx + c2 * f_by) / inertia], axis=-1
    )
    nxt = np.array(x, copy=True)
    nxt[..., POSITION] = x[..., POSITION] + x[..., VELOCITY] * dt
    nxt[..., VELOCITY] = x[..., VELOCITY] + acc * dt
    return nxt


def linearize(
    theta_hat: np.ndarray, p_theta_hat: float, spec: PlantSpec
) -> Tuple[np.ndarray, np.ndarray]:
    """Exact (A, B) of the physical step at frozen parameters and orientation.

    The frozen step is linear in (x, u), so columns come from unit basis inputs.

    Raises:
        ValueError: If any parameter lies below the floor
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    if np.any(theta_hat < spec.param_floor):
        raise ValueError(f"parameters {theta_hat} violate floor {spec.param_floor}")

    a_mat = _frozen_step(
        np.eye(STATE_DIM), np.zeros((STATE_DIM, CONTROL_DIM)), theta_hat, p_theta_hat, spec.dt
    ).T
    b_mat = _frozen_step(
        np.zeros((CONTROL_DIM, STATE_DIM)), np.eye(CONTROL_DIM), theta_hat, p_theta_hat, spec.dt
    ).T
    return a_mat, b_mat
