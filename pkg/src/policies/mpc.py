"""Certainty-equivalent MPC solved as a linear program."""

from dataclasses import dataclass

import numpy as np
from loguru import logger
from scipy.optimize import linprog

from ..config import MpcParams, MpcVariant, PlantSpec
from ..plant import CONTROL_DIM, P_THETA, PARAMS, STATE, STATE_DIM, linearize
from ..ukf import BeliefState
from .base import BasePolicy


@dataclass(frozen=True)
class MpcSolution:
    """Result of one receding-horizon solve."""

    inputs: np.ndarray  # (H, 3)
    objective: float  # summed reward of the plan under the frozen model
    ok: bool
    duality_gap: float = 0.0
    certified: bool = True  # duality gap within lp_tolerance
    epigraph: np.ndarray | None = None  # (H, 6) state epigraph variables
    predicted: np.ndarray | None = None  # (H, 6) predicted states x_1..x_H

    @property
    def first(self) -> np.ndarray:
        return self.inputs[0]


def prediction_matrices(a_mat: np.ndarray, b_mat: np.ndarray, horizon: int):
    """Stacked maps with X = Phi x0 + Gamma U for X = [x_1; ...; x_H].

    Returns:
        Tuple (Phi: 6H×6, Gamma: 6H×3H)
    """
    n, m = b_mat.shape
    powers = [np.eye(n)]
    for _ in range(horizon):
        powers.append(a_mat @ powers[-1])

    phi = np.vstack(powers[1:])
    gamma = np.zeros((n * horizon, m * horizon))
    for k in range(horizon):
        for j in range(k + 1):
            gamma[k * n : (k + 1) * n, j * m : (j + 1) * m] = powers[k - j] @ b_mat
    return phi, gamma


def plan(
    x_hat: np.ndarray,
    theta_hat: np.ndarray,
    params: MpcParams,
    spec: PlantSpec,
    horizon: int | None = None,
) -> MpcSolution:
    """Maximize the summed L1 reward over the horizon under frozen linear dynamics.

    Decision vector z = [U (3H), T_x (6H), T_u (3H)] with T_x ≥ |X|, T_u ≥ |U|.

    Args:
        x_hat: Estimated physical state
        theta_hat: Estimated parameters (at or above the floor)
        params: Horizon, tolerance
        spec: Plant constants
        horizon: Override for params.horizon

    Returns:
        MpcSolution; a zero sequence with ok=False when the LP fails
    """
    H = horizon or params.horizon
    x0 = np.asarray(x_hat, dtype=float)
    a_mat, b_mat = linearize(theta_hat, float(x0[P_THETA]), spec)
    phi, gamma = prediction_matrices(a_mat, b_mat, H)
    free = phi @ x0

    n_u, n_x = CONTROL_DIM * H, STATE_DIM * H
    eye_u, eye_x = np.eye(n_u), np.eye(n_x)
    zeros_xu, zeros_ux = np.zeros((n_x, n_u)), np.zeros((n_u, n_x))

    state_weights = np.tile([spec.r_pos] * 3 + [spec.r_vel] * 3, H)
    cost = np.concatenate([np.zeros(n_u), -state_weights, np.full(n_u, -spec.r_u)])

    a_ub = np.block(
        [
            [gamma, -eye_x, zeros_xu],
            [-gamma, -eye_x, zeros_xu],
            [eye_u, zeros_ux, -eye_u],
            [-eye_u, zeros_ux, -eye_u],
        ]
    )
    b_ub = np.concatenate([-free, free, np.zeros(n_u), np.zeros(n_u)])
    bounds = [(-spec.u_max, spec.u_max)] * n_u + [(0.0, None)] * (n_x + n_u)

    tol = params.lp_tolerance
    try:
        res = linprog(
            cost,
            A_ub=a_ub,
            b_ub=b_ub,
            bounds=bounds,
            method="highs",
            options={"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol},
        )
    except ValueError as e:
        logger.warning(f"MPC LP rejected: {e}")
        return _fallback(H)

    if res.status != 0:
        logger.warning(f"MPC LP did not converge (status {res.status}): {res.message}")
        return _fallback(H)

    z = res.x
    inputs = np.clip(z[:n_u].reshape(H, CONTROL_DIM), -spec.u_max, spec.u_max)
    objective = -float(res.fun)
    gap = _duality_gap(res, b_ub, bounds)
    certified = gap <= tol * max(1.0, abs(objective))
    if not certified:
        logger.warning(f"MPC LP duality gap {gap:.3e} exceeds tolerance {tol:g}")
    return MpcSolution(
        inputs=inputs,
        objective=objective,
        ok=True,
        duality_gap=gap,
        certified=certified,
        epigraph=z[n_u : n_u + n_x].reshape(H, STATE_DIM),
        predicted=(free + gamma @ z[:n_u]).reshape(H, STATE_DIM),
    )


def _fallback(horizon: int) -> MpcSolution:
    return MpcSolution(inputs=np.zeros((horizon, CONTROL_DIM)), objective=float("nan"), ok=False)


def _duality_gap(res, b_ub: np.ndarray, bounds) -> float:
    """|primal - dual| from the HiGHS marginals."""
    lower = np.array([lo for lo, _ in bounds], dtype=float)
    upper = np.array([np.inf if hi is None else hi for _, hi in bounds], dtype=float)
    dual = float(b_ub @ res.ineqlin.marginals)
    dual += float(np.sum(np.where(np.isfinite(lower), lower, 0.0) * res.lower.marginals))
    dual += float(np.sum(np.where(np.isfinite(upper), upper, 0.0) * res.upper.marginals))
    return abs(float(res.fun) - dual)


def oracle_policy(xi_true: np.ndarray, params: MpcParams, spec: PlantSpec) -> np.ndarray:
    """First MPC action planned with the true state and parameters."""
    xi_true = np.asarray(xi_true, dtype=float)
    return plan(xi_true[STATE], xi_true[PARAMS], params, spec).first


def cautious_inflation_hook(spec: PlantSpec, factor: float) -> PlantSpec:
    """Copy of spec whose filter process variance is inflated by factor.

    Raises:
        ValueError: If factor < 1
    """
    if factor < 1.0:
        raise ValueError(f"inflation factor must be >= 1, got {factor}")
    return spec.model_copy(update={"filter_process_var": spec.filter_q * factor})


def belief_point_estimate(belief: BeliefState, spec: PlantSpec):
    """Physical state and floored parameters from the belief mean."""
    return belief.mean[STATE], np.maximum(belief.mean[PARAMS], spec.param_floor)


class MpcPolicy(BasePolicy):
    """Receding-horizon MPC on the belief mean (or on the truth, for the oracle)."""

    def __init__(self, params: MpcParams, spec: PlantSpec):
        """Initialize MPC policy.

        Args:
            params: MPC parameters; variant selects standard/cautious/oracle
            spec: Plant constants
        """
        super().__init__(spec)
        self.params = params
        self.name = f"MPC_{params.variant.value}".upper()

    def act(
        self, belief: BeliefState, xi_true: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        self.stats["decisions"] += 1
        if self.params.variant is MpcVariant.ORACLE:
            x_hat, theta_hat = xi_true[STATE], xi_true[PARAMS]
        else:
            x_hat, theta_hat = belief_point_estimate(belief, self.spec)

        solution = plan(x_hat, theta_hat, self.params, self.spec)
        if not solution.ok:
            self.stats["fallbacks"] += 1
        return solution.first
