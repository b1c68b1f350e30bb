"""Levenberg-Marquardt trainer for the actuation surrogate.

Full-batch damped Gauss-Newton on the normalized training split: solve
(J'J + mu*I) dw = -J'r, accept only steps that reduce the training MSE,
and scale the damping down on accept / up on reject.
"""

from dataclasses import dataclass, field

import numpy as np

from .mlp import MlpParams, forward, output_jacobian, pack_params, unpack_params

MU_MIN = 1e-20


@dataclass(frozen=True)
class StoppingCriteria:
    target_mse: float = 1e-3
    min_grad: float = 1e-4
    max_epochs: int = 200
    val_patience: int = 6


@dataclass(frozen=True)
class LmConfig:
    mu0: float = 1e-3
    beta: float = 10.0
    mu_max: float = 1e10
    solve_retries: int = 12
    stopping: StoppingCriteria = field(default_factory=StoppingCriteria)


@dataclass
class LmState:
    """Trainer state: packed parameters, damping, and progress counters."""

    w: np.ndarray
    layer_sizes: list[int]
    mu: float
    epoch: int = 0
    train_mse: float = float("inf")
    best_val_mse: float = float("inf")

    def params(self) -> MlpParams:
        return unpack_params(self.w, self.layer_sizes)


def mse(residuals: np.ndarray) -> float:
    return float(residuals @ residuals) / residuals.size


def lm_direction(jac: np.ndarray, residuals: np.ndarray, mu: float) -> np.ndarray:
    """Solve the damped normal equations for the parameter step.

    mu = 0 gives the plain Gauss-Newton step; raises
    numpy.linalg.LinAlgError when J'J + mu*I is not positive definite.
    """
    if mu < 0:
        raise ValueError("damping must be nonnegative")
    jtj = jac.T @ jac
    if mu > 0:
        jtj[np.diag_indices_from(jtj)] += mu
    rhs = jac.T @ residuals
    chol = np.linalg.cholesky(jtj)
    return -np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))


def residuals_and_jacobian(params: MlpParams, inputs, targets):
    preds = forward(params, inputs)
    return preds - targets, output_jacobian(params, inputs)


def lm_step(state: LmState, inputs: np.ndarray, targets: np.ndarray, cfg: LmConfig):
    """One full-batch LM iteration; returns (state, accepted).

    On reject the parameters are unchanged and the damping grows. A
    failed Cholesky factorization is retried with increased damping.
    """
    state, accepted, _ = _lm_step_full(state, inputs, targets, cfg)
    return state, accepted


def _lm_step_full(state: LmState, inputs, targets, cfg: LmConfig):
    """lm_step plus the pre-step gradient inf-norm (reuses the Jacobian)."""
    if state.mu <= 0:
        raise ValueError("training damping must stay positive")
    params = state.params()
    res, jac = residuals_and_jacobian(params, inputs, targets)
    err = mse(res)
    rhs = jac.T @ res
    grad_inf = float(np.abs(rhs).max()) * 2.0 / res.size
    mu = state.mu
    step = None
    for _ in range(cfg.solve_retries):
        try:
            step = lm_direction(jac, res, mu)
            break
        except np.linalg.LinAlgError:
            mu *= cfg.beta
    if step is None:
        raise np.linalg.LinAlgError(
            "damped normal equations stayed singular after retries"
        )
    w_cand = state.w + step
    res_cand = forward(unpack_params(w_cand, state.layer_sizes), inputs) - targets
    err_cand = mse(res_cand)
    if err_cand < err:
        state.w = w_cand
        state.mu = max(mu / cfg.beta, MU_MIN)
        state.train_mse = err_cand
        return state, True, grad_inf
    state.mu = mu * cfg.beta
    state.train_mse = err
    return state, False, grad_inf


@dataclass
class TrainReport:
    epochs: int
    stop_reason: str
    converged: bool
    train_mse: float
    val_mse: float
    test_mse: float
    accepted: int
    rejected: int
    history: list[dict]


def train(
    inputs: np.ndarray,
    targets: np.ndarray,
    split: tuple[np.ndarray, np.ndarray, np.ndarray],
    layer_sizes: list[int],
    cfg: LmConfig,
    init: MlpParams,
) -> tuple[MlpParams, TrainReport]:
    """Train on the given (already normalized) data; returns best-val params.

    split holds (train, val, test) index arrays. Stops on the training MSE
    target, a vanished gradient, validation early stopping, the epoch cap,
    or damping overflow; only the cap counts as non-convergence.
    """
    tr, va, te = split
    x_tr, t_tr = inputs[tr], targets[tr]
    state = LmState(
        w=pack_params(init), layer_sizes=list(layer_sizes), mu=cfg.mu0
    )
    best_w = state.w.copy()
    best_val = _split_mse(state, inputs, targets, va)
    state.best_val_mse = best_val
    val_fails = 0
    accepted = rejected = 0
    history: list[dict] = []
    stop_reason = "max_epochs"
    stopping = cfg.stopping

    for epoch in range(1, stopping.max_epochs + 1):
        state.epoch = epoch
        state, ok, grad_inf = _lm_step_full(state, x_tr, t_tr, cfg)
        accepted += ok
        rejected += not ok
        val_mse = _split_mse(state, inputs, targets, va)
        history.append(
            {
                "epoch": epoch,
                "accepted": bool(ok),
                "train_mse": state.train_mse,
                "val_mse": val_mse,
                "mu": state.mu,
            }
        )
        if val_mse < best_val:
            best_val = val_mse
            best_w = state.w.copy()
            val_fails = 0
        elif ok:
            # Rejected steps leave the parameters (and the validation MSE)
            # unchanged; only accepted steps can burn early-stop patience.
            val_fails += 1
        state.best_val_mse = best_val
        if state.train_mse <= stopping.target_mse:
            stop_reason = "target_mse"
            break
        if grad_inf <= stopping.min_grad:
            stop_reason = "min_grad"
            break
        if val_fails >= stopping.val_patience:
            stop_reason = "val_early_stop"
            break
        if state.mu > cfg.mu_max:
            stop_reason = "mu_overflow"
            break

    final = unpack_params(best_w, state.layer_sizes)
    final_state = LmState(w=best_w, layer_sizes=state.layer_sizes, mu=state.mu)
    report = TrainReport(
        epochs=state.epoch,
        stop_reason=stop_reason,
        converged=stop_reason != "max_epochs",
        train_mse=_split_mse(final_state, inputs, targets, tr),
        val_mse=_split_mse(final_state, inputs, targets, va),
        test_mse=_split_mse(final_state, inputs, targets, te),
        accepted=accepted,
        rejected=rejected,
        history=history,
    )
    return final, report


def _split_mse(state: LmState, inputs, targets, idx) -> float:
    if idx.size == 0:
        return float("nan")
    preds = forward(state.params(), inputs[idx])
    return mse(preds - targets[idx])
