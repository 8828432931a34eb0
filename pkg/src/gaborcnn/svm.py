"""One-vs-rest linear SVM with squared hinge loss and L2 penalty.

Each binary subproblem minimises

    F(w, b) = 0.5 * |w|^2 + C * sum_i max(0, 1 - y_i * (w.x_i + b*s))^2

with full-batch generalised-Newton descent directions and an Armijo
backtracking line search, so F never increases between accepted steps.
Iteration stops once a step lowers F by less than ``tol`` (relative) and the
gradient norm is below ``1e-2 * (1 + |w|)``. The bias is the weight of a
constant feature ``s = intercept_scaling`` and is not penalised.
Everything is deterministic: no shuffling, no random starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ARMIJO_C = 1e-4
BACKTRACK = 0.5
MAX_BACKTRACKS = 60
GRAD_TOL = 1e-2
RIDGE = 1e-8


class SingleClassInput(ValueError):
    pass


class NonFiniteFeature(ValueError):
    pass


class DimMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    tol: float = 1e-4
    max_iter: int = 1000
    intercept_scaling: float = 1.0

    def __post_init__(self):
        if not (self.C > 0 and self.tol > 0 and self.max_iter >= 1):
            raise ValueError("need C > 0, tol > 0 and max_iter >= 1")


@dataclass
class SvmModel:
    classes: np.ndarray
    coef: np.ndarray  # (K, D)
    intercept: np.ndarray  # (K,) bias b_c; the score adds b_c * intercept_scaling
    intercept_scaling: float = 1.0
    # per-class diagnostics
    objective_trace: list = field(default_factory=list)
    n_iter: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)

    @classmethod
    def zeros(cls, n_classes, dim, intercept_scaling=1.0):
        return cls(np.arange(n_classes), np.zeros((n_classes, dim)), np.zeros(n_classes), intercept_scaling)


def squared_hinge_objective(theta, Xa, y, C):
    """F and its gradient for one binary problem; ``theta`` is ``[w, b]``."""
    slack = np.maximum(0.0, 1.0 - y * (Xa @ theta))
    w = theta[:-1]
    f = 0.5 * (w @ w) + C * (slack @ slack)
    grad = -2.0 * C * (Xa.T @ (y * slack))
    grad[:-1] += w
    return f, grad


def _newton_direction(theta, Xa, y, g, C):
    # generalised Hessian of the squared hinge: identity on w, 2C X^T X over active rows
    active = y * (Xa @ theta) < 1.0
    Xs = Xa[active]
    H = 2.0 * C * (Xs.T @ Xs)
    H[np.diag_indices_from(H)] += 1.0
    H[-1, -1] += RIDGE - 1.0  # bias is unpenalised
    try:
        return -np.linalg.solve(H, g)
    except np.linalg.LinAlgError:
        return -g


def _fit_binary(Xa, y, cfg: SvmConfig):
    theta = np.zeros(Xa.shape[1])
    f, g = squared_hinge_objective(theta, Xa, y, cfg.C)
    trace = [f]
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        if not g.any():
            converged = True
            break
        d = _newton_direction(theta, Xa, y, g, cfg.C)
        slope = g @ d
        if slope >= 0:
            d, slope = -g, -(g @ g)
        t = 1.0
        for _ in range(MAX_BACKTRACKS):
            cand = theta + t * d
            f_new, g_new = squared_hinge_objective(cand, Xa, y, cfg.C)
            if f_new <= f + ARMIJO_C * t * slope:
                break
            t *= BACKTRACK
        else:
            converged = True  # no representable descent left
            break
        decrease = (f - f_new) / max(abs(f), np.finfo(float).tiny)
        theta, f, g = cand, f_new, g_new
        trace.append(f)
        # one small step does not imply stationarity; require a small gradient too
        if decrease < cfg.tol and np.sqrt(g @ g) < GRAD_TOL * (1.0 + np.linalg.norm(theta[:-1])):
            converged = True
            break
    return theta, trace, it, converged, float(np.sqrt(g @ g))


def svm_fit(X, y, cfg: SvmConfig = SvmConfig()) -> SvmModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise DimMismatch(f"X {X.shape} and y {y.shape} disagree")
    if not np.isfinite(X).all():
        raise NonFiniteFeature("features contain NaN or Inf")
    classes = np.unique(y)
    if len(X) < 2 or len(classes) < 2:
        raise SingleClassInput("need at least two samples and two distinct labels")
    s = cfg.intercept_scaling
    Xa = np.hstack([X, np.full((len(X), 1), s)])
    model = SvmModel(classes, np.zeros((len(classes), X.shape[1])), np.zeros(len(classes)), s)
    for k, c in enumerate(classes):
        yk = np.where(y == c, 1.0, -1.0)
        theta, trace, it, conv, gnorm = _fit_binary(Xa, yk, cfg)
        model.coef[k] = theta[:-1]
        model.intercept[k] = theta[-1]
        model.objective_trace.append(trace)
        model.n_iter.append(it)
        model.converged.append(conv)
        model.grad_norm.append(gnorm)
    return model


def svm_decision(m: SvmModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != m.coef.shape[1]:
        raise DimMismatch(f"expected features of dim {m.coef.shape[1]}, got {X.shape}")
    return X @ m.coef.T + m.intercept * m.intercept_scaling


def svm_predict(m: SvmModel, X) -> np.ndarray:
    # argmax keeps the first maximum, i.e. the lowest class index on ties
    return m.classes[np.argmax(svm_decision(m, X), axis=1)]


def svm_objective(m: SvmModel, X, y, k: int, C: float = 1.0) -> float:
    """Binary objective of class ``k``'s one-vs-rest problem at the fitted point."""
    X = np.asarray(X, dtype=np.float64)
    Xa = np.hstack([X, np.full((len(X), 1), m.intercept_scaling)])
    yk = np.where(np.asarray(y) == m.classes[k], 1.0, -1.0)
    theta = np.append(m.coef[k], m.intercept[k])
    return squared_hinge_objective(theta, Xa, yk, C)[0]
