"""Multinomial logistic regression on sparse design matrices.

The objective is the mean cross-entropy plus an L2 penalty on the weights
(the bias is not penalized), minimized with L-BFGS and a backtracking
Armijo line search.  Only iterates that decrease the objective are
accepted, so ``loss_history`` is non-increasing.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from .graph_core import CsrMatrix, GraphError, row_normalize

log = logging.getLogger(__name__)


class OptimizerError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitConfig:
    """Solver settings.

    ``l2_penalty`` is expressed per training sample: the objective is
    ``mean CE + l2_penalty / (2 n) * ||W||^2``, so the default of 1.0 is the
    usual unit-strength ridge on the summed loss.
    """

    l2_penalty: float = 1.0
    max_iter: int = 1000
    grad_tol: float = 1e-5
    seed: int = 0
    memory: int = 10
    normalize_rows: bool = False

    def __post_init__(self):
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be non-negative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")


@dataclass(frozen=True, eq=False)
class SoftmaxParams:
    weights: np.ndarray  # C x D
    bias: np.ndarray  # C
    normalize_rows: bool = False
    n_iter: int = 0
    converged: bool = True
    loss_history: tuple = field(default=(), repr=False)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.weights.shape[1]


def _one_hot(targets: np.ndarray, n_classes: int) -> np.ndarray:
    y = np.zeros((len(targets), n_classes))
    y[np.arange(len(targets)), targets] = 1.0
    return y


def softmax_objective(theta: np.ndarray, design, onehot: np.ndarray, reg: float) -> tuple[float, np.ndarray]:
    """Loss and gradient at the flat parameter vector ``theta = [W.ravel(), b]``.

    ``design`` is a scipy CSR matrix (n x D), ``onehot`` is n x C and ``reg``
    the coefficient in ``reg / 2 * ||W||^2``.
    """
    n, c = onehot.shape
    d = design.shape[1]
    w = theta[: c * d].reshape(c, d)
    b = theta[c * d :]
    z = np.asarray(design @ w.T) + b
    lse = logsumexp(z, axis=1)
    loss = float(np.mean(lse - np.sum(z * onehot, axis=1)) + 0.5 * reg * np.dot(theta[: c * d], theta[: c * d]))
    resid = (np.exp(z - lse[:, None]) - onehot) / n
    gw = np.asarray(design.T @ resid).T + reg * w
    gb = resid.sum(axis=0)
    return loss, np.concatenate([gw.ravel(), gb])


def _two_loop(g: np.ndarray, s_list, y_list, rho_list) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if s_list:
        s, y = s_list[-1], y_list[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
        beta = rho * np.dot(y, q)
        q += (a - beta) * s
    return -q


def minimize_lbfgs(fun, x0: np.ndarray, max_iter: int, grad_tol: float, memory: int = 10):
    """Minimize a smooth function given ``fun(x) -> (f, grad)``.

    Returns ``(x, n_iter, converged, history)`` where ``history`` holds the
    objective at every accepted iterate, starting with ``f(x0)``.
    """
    c1 = 1e-4
    x = x0.copy()
    f, g = fun(x)
    if not np.isfinite(f):
        raise OptimizerError("non-finite loss at the initial point; check input scaling")
    history = [f]
    s_list, y_list, rho_list = [], [], []
    for it in range(max_iter):
        if np.max(np.abs(g)) < grad_tol:
            return x, it, True, history
        d = _two_loop(g, s_list, y_list, rho_list)
        slope = np.dot(g, d)
        if not slope < 0:
            s_list.clear(), y_list.clear(), rho_list.clear()
            d = -g
            slope = -np.dot(g, g)
        t = 1.0 if s_list else min(1.0, 1.0 / np.sum(np.abs(g)))
        for _ in range(60):
            x_new = x + t * d
            f_new, g_new = fun(x_new)
            if np.isfinite(f_new) and f_new <= f + c1 * t * slope:
                break
            t *= 0.5
        else:
            # no decrease representable in float64: we are at the optimum to machine precision
            return x, it, bool(np.max(np.abs(g)) < grad_tol), history
        if not np.isfinite(f_new):
            raise OptimizerError("non-finite loss during optimization")
        s, y = x_new - x, g_new - g
        sy = np.dot(s, y)
        if sy > 1e-10 * np.dot(y, y):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > memory:
                s_list.pop(0), y_list.pop(0), rho_list.pop(0)
        x, f, g = x_new, f_new, g_new
        history.append(f)
    return x, max_iter, bool(np.max(np.abs(g)) < grad_tol), history


def _prepare(design: CsrMatrix, normalize_rows: bool):
    if normalize_rows:
        design = row_normalize(design, "l2")
    return design.to_scipy()


def fit_softmax(design: CsrMatrix, targets, cfg: FitConfig = FitConfig(), n_classes: int | None = None) -> SoftmaxParams:
    """Fit weights and biases of a softmax classifier from zero initialization."""
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (design.n_rows,):
        raise GraphError(f"{len(targets)} targets for a design with {design.n_rows} rows")
    if design.n_rows == 0:
        raise OptimizerError("empty training set")
    if targets.min() < 0 or (n_classes is not None and targets.max() >= n_classes):
        raise GraphError("target class out of range")
    c = int(n_classes if n_classes is not None else targets.max() + 1)
    d = design.n_cols
    present = np.unique(targets)
    if len(present) == 1:
        warnings.warn("single-class training set; fitting a constant predictor", RuntimeWarning, stacklevel=2)
        bias = np.zeros(c)
        bias[present[0]] = 1.0
        return SoftmaxParams(np.zeros((c, d)), bias, cfg.normalize_rows, 0, True, ())

    x = _prepare(design, cfg.normalize_rows)
    onehot = _one_hot(targets, c)
    reg = cfg.l2_penalty / design.n_rows
    theta, n_iter, converged, history = minimize_lbfgs(
        lambda th: softmax_objective(th, x, onehot, reg),
        np.zeros(c * d + c),
        cfg.max_iter,
        cfg.grad_tol,
        cfg.memory,
    )
    if not converged:
        log.info("softmax fit stopped at max_iter=%d before reaching grad_tol", cfg.max_iter)
    return SoftmaxParams(
        theta[: c * d].reshape(c, d).copy(),
        theta[c * d :].copy(),
        cfg.normalize_rows,
        n_iter,
        converged,
        tuple(history),
    )


def predict_softmax(params: SoftmaxParams, design: CsrMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Class predictions (ties to the smallest class id) and probability rows."""
    if design.n_cols != params.n_inputs:
        raise GraphError(f"design has {design.n_cols} columns, model expects {params.n_inputs}")
    x = _prepare(design, params.normalize_rows)
    z = np.asarray(x @ params.weights.T) + params.bias
    proba = softmax(z, axis=1)
    return np.argmax(z, axis=1), proba
