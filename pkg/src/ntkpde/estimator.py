"""scikit-learn style wrappers around the solver and the NTK feature map."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.metrics import r2_score
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .boundary import TransformedProblem
from .operator import CoefficientField, PdeProblem, eval_L_phi, eval_phi, operator_features
from .training import TrainConfig, default_gamma, init_params, train


class _SampledRhs:
    # right-hand side known only at the training points
    def __init__(self, X, y):
        self.X, self.y = X, y

    def __call__(self, Z):
        if Z.shape == self.X.shape and np.array_equal(Z, self.X):
            return self.y
        raise ValueError("right-hand side is only known at the training points")


class LeastSquaresPDERegressor(RegressorMixin, BaseEstimator):
    """Solve ``L u = f`` by gradient descent on the least-squares residual.

    ``fit(X, y)`` takes collocation points ``X`` in ``[0, 1]^d`` and the
    right-hand side values ``y = f(X)``.  ``predict`` returns the network
    ``u`` itself while :meth:`apply_operator` returns ``L u``, which is what
    ``y`` is compared with in :meth:`score`.

    Parameters
    ----------
    coeffs : CoefficientField, optional
        Operator coefficients; the Laplacian when omitted.
    width : int
    gamma : float, optional
    lr : float, optional
        Fixed step size, or ``None`` for backtracking.
    steps : int
    asi : bool
    reg_lambda : float
    augmentation : BoundaryAugmentation, optional
        Enforces boundary conditions exactly (one-dimensional problems).
    random_state : int
    """

    def __init__(self, coeffs=None, width=100, gamma=None, lr=None, steps=1000, asi=True,
                 reg_lambda=0.0, augmentation=None, random_state=0):
        self.coeffs = coeffs
        self.width = width
        self.gamma = gamma
        self.lr = lr
        self.steps = steps
        self.asi = asi
        self.reg_lambda = reg_lambda
        self.augmentation = augmentation
        self.random_state = random_state

    def _coeffs(self, d):
        return self.coeffs if self.coeffs is not None else CoefficientField.constant(d)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        coeffs = self._coeffs(X.shape[1])
        problem = PdeProblem(coeffs, _SampledRhs(X, y), rhs_bound=None)
        config = TrainConfig(
            width=self.width, gamma=self.gamma, lr=self.lr, steps=self.steps, asi=self.asi,
            reg_lambda=self.reg_lambda, seed=self.random_state,
        )
        self.theta_, self.trace_ = train(problem, X, config, aug=self.augmentation)
        self.extras_ = self.trace_.extras
        self.coeffs_ = coeffs
        self.n_features_in_ = X.shape[1]
        return self

    def _check(self, X):
        check_is_fitted(self, "theta_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def predict(self, X):
        X = self._check(X)
        if self.augmentation is None:
            return eval_phi(self.theta_, X)
        return self.augmentation.assemble(self.theta_, X[:, 0], self.extras_)

    def apply_operator(self, X):
        """``L u`` at the rows of ``X``."""
        X = self._check(X)
        aug = self.augmentation
        if aug is None or aug.kind == "identity":
            return eval_L_phi(self.theta_, X, self.coeffs_)
        tp = TransformedProblem(PdeProblem(self.coeffs_, lambda Z: np.zeros(Z.shape[0]), None), aug)
        out = eval_L_phi(self.theta_, X, tp.coeffs) + aug.L_fixed_h2(X, self.coeffs_)
        for s in aug.shifts():
            out = out + s.value(self.theta_, aug._extras(self.extras_)) * s.basis(X, self.coeffs_)
        return out

    def score(self, X, y, sample_weight=None):
        """Coefficient of determination of ``L u`` against ``y``."""
        return r2_score(y, self.apply_operator(X), sample_weight=sample_weight)


class NTKFeatureMap(TransformerMixin, BaseEstimator):
    """Random operator-image features ``T(w_k, x) / sqrt(m)``.

    With features ``F = transform(X)`` the finite-width Gram matrix is
    ``G_a = F F'``.

    Parameters
    ----------
    coeffs : CoefficientField, optional
    width : int
    random_state : int
    """

    def __init__(self, coeffs=None, width=100, random_state=0):
        self.coeffs = coeffs
        self.width = width
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        self.coeffs_ = self.coeffs if self.coeffs is not None else CoefficientField.constant(X.shape[1])
        self.W_ = init_params(self.width, X.shape[1], default_gamma(self.width), self.random_state).W
        return self

    def transform(self, X):
        check_is_fitted(self, "W_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return operator_features(self.W_, X, self.coeffs_) / np.sqrt(self.width)
