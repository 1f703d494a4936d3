"""In-house regression learners shared by the fusion and re-ranking stages.

Two hypothesis classes: ordinary least squares with an optional ridge term
(normal equations, intercept column unpenalized) and RBF-kernel ridge
regression ``alpha = (K + reg*I)^-1 y`` with ``K_ij = exp(-gamma*||xi-xj||^2)``.
Feature scaling (per-dimension min-max) and deterministic k-fold
cross-validation are mandatory companions for the learning pipelines built
on top.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import FitError

LINEAR = "linear"
KERNEL_RBF = "kernel_rbf"


@dataclass
class MinMaxScaler:
    mins: np.ndarray
    maxs: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        span = self.maxs - self.mins
        out = np.zeros_like(X, dtype=float)
        nz = span > 0
        out[:, nz] = (X[:, nz] - self.mins[nz]) / span[nz]
        return out


def scale_fit(X) -> MinMaxScaler:
    """Fit per-dimension min/max; constant dimensions will map to 0."""
    X = _as_matrix(X)
    return MinMaxScaler(mins=X.min(axis=0), maxs=X.max(axis=0))


def scale_apply(scaler: MinMaxScaler, X) -> np.ndarray:
    """Map to [0,1] on the fit range, without clamping unseen values."""
    return scaler.apply(_as_matrix(X))


@dataclass
class RegressionModel:
    kind: str
    # linear: weights[0] is the intercept
    weights: Optional[np.ndarray] = None
    # kernel: stored training inputs and dual coefficients
    support: Optional[np.ndarray] = None
    dual_coef: Optional[np.ndarray] = None
    gamma: Optional[float] = None
    scaler: Optional[MinMaxScaler] = None

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if self.scaler is not None:
            X = self.scaler.apply(X)
        if self.kind == LINEAR:
            return self.weights[0] + X @ self.weights[1:]
        K = _rbf_kernel(X, self.support, self.gamma)
        return K @ self.dual_coef

    def predict_one(self, x: Sequence[float]) -> float:
        return float(self.predict(np.asarray(x, dtype=float)[None, :])[0])

    def to_json(self) -> str:
        obj: Dict[str, object] = {"kind": self.kind}
        if self.weights is not None:
            obj["weights"] = self.weights.tolist()
        if self.support is not None:
            obj["support"] = self.support.tolist()
            obj["dual_coef"] = self.dual_coef.tolist()
            obj["gamma"] = self.gamma
        if self.scaler is not None:
            obj["scaler"] = {
                "mins": self.scaler.mins.tolist(),
                "maxs": self.scaler.maxs.tolist(),
            }
        return json.dumps(obj)

    @classmethod
    def from_json(cls, text: str) -> "RegressionModel":
        obj = json.loads(text)
        scaler = None
        if "scaler" in obj:
            scaler = MinMaxScaler(
                mins=np.asarray(obj["scaler"]["mins"], dtype=float),
                maxs=np.asarray(obj["scaler"]["maxs"], dtype=float),
            )
        return cls(
            kind=obj["kind"],
            weights=_opt_array(obj.get("weights")),
            support=_opt_array(obj.get("support")),
            dual_coef=_opt_array(obj.get("dual_coef")),
            gamma=obj.get("gamma"),
            scaler=scaler,
        )


def _opt_array(value) -> Optional[np.ndarray]:
    return None if value is None else np.asarray(value, dtype=float)


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if not np.all(np.isfinite(X)):
        raise FitError("feature matrix contains NaN or infinity")
    return X


def _rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def fit_linear(X, y, ridge: float = 0.0) -> RegressionModel:
    """Least squares with an intercept column and optional ridge penalty.

    The ridge term does not penalize the intercept.  Rank-deficient systems
    fall back to the pseudo-inverse when ``ridge`` is 0.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or len(y) != X.shape[0]:
        raise FitError(f"shape mismatch: X has {X.shape[0]} rows, y has {y.shape}")
    if len(y) < 1:
        raise FitError("need at least one sample")
    if ridge < 0:
        raise FitError("ridge must be non-negative")
    Xi = np.hstack([np.ones((X.shape[0], 1)), X])
    if ridge > 0:
        penalty = ridge * np.eye(Xi.shape[1])
        penalty[0, 0] = 0.0
        weights = np.linalg.solve(Xi.T @ Xi + penalty, Xi.T @ y)
    else:
        weights, *_ = np.linalg.lstsq(Xi, y, rcond=None)
    return RegressionModel(kind=LINEAR, weights=weights)


def fit_kernel_rbf(X, y, gamma: float, reg: float) -> RegressionModel:
    """Kernel ridge regression with the RBF kernel."""
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or len(y) != X.shape[0]:
        raise FitError(f"shape mismatch: X has {X.shape[0]} rows, y has {y.shape}")
    if gamma <= 0:
        raise FitError("gamma must be positive")
    if reg < 0:
        raise FitError("reg must be non-negative")
    K = _rbf_kernel(X, X, gamma)
    try:
        dual = np.linalg.solve(K + reg * np.eye(len(y)), y)
    except np.linalg.LinAlgError as exc:
        raise FitError(f"singular kernel system (reg={reg}): {exc}") from exc
    return RegressionModel(kind=KERNEL_RBF, support=X.copy(), dual_coef=dual, gamma=gamma)


def _fit_for_params(X, y, params: Dict[str, float]) -> RegressionModel:
    if "gamma" in params:
        return fit_kernel_rbf(X, y, gamma=params["gamma"], reg=params.get("reg", 0.0))
    return fit_linear(X, y, ridge=params.get("ridge", 0.0))


def cross_validate(
    X, y, folds: int, grid: Sequence[Dict[str, float]]
) -> Dict[str, float]:
    """Pick the grid point with the lowest mean validation squared error.

    Folds are deterministic (sample index modulo ``folds``); ties go to the
    earlier grid point.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    if folds < 2:
        raise FitError("need at least 2 folds")
    if len(y) < folds:
        raise FitError(f"{len(y)} samples cannot fill {folds} folds")
    if not grid:
        raise FitError("empty hyperparameter grid")
    idx = np.arange(len(y))
    best_params = None
    best_loss = None
    for params in grid:
        losses = []
        for f in range(folds):
            val = idx % folds == f
            model = _fit_for_params(X[~val], y[~val], params)
            err = model.predict(X[val]) - y[val]
            losses.append(float(np.mean(err * err)))
        loss = float(np.mean(losses))
        if best_loss is None or loss < best_loss:
            best_loss = loss
            best_params = params
    return dict(best_params)


def fit_scaled(
    X,
    y,
    kind: str = KERNEL_RBF,
    folds: int = 3,
    grid: Optional[Sequence[Dict[str, float]]] = None,
) -> RegressionModel:
    """The mandatory learning pipeline: min-max scaling, CV, final fit.

    The returned model embeds the scaler, so predictions accept raw features.
    """
    X = _as_matrix(X)
    scaler = scale_fit(X)
    Xs = scaler.apply(X)
    if grid is None:
        grid = default_grid(kind)
    if len(grid) > 1 and len(y) >= folds:
        params = cross_validate(Xs, y, folds, grid)
    else:
        params = dict(grid[0])
    model = _fit_for_params(Xs, y, params)
    model.scaler = scaler
    return model


def default_grid(kind: str) -> List[Dict[str, float]]:
    if kind == LINEAR:
        return [{"ridge": r} for r in (0.0, 1e-3, 1e-2, 1e-1)]
    return [
        {"gamma": g, "reg": r}
        for g in (0.01, 0.1, 1.0, 10.0)
        for r in (1e-3, 1e-2, 1e-1, 1.0)
    ]
