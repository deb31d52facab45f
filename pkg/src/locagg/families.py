"""Gaussian and binomial GLM families with canonical links.

The Gaussian loss is ``0.5 * ||y - eta||^2`` so its gradient is
``X^T (X beta - y)``; the binomial loss is the negative Bernoulli
log-likelihood in natural-parameter form.
"""

import enum

import numpy as np

from .errors import NonFiniteError, ValidationError


class Family(enum.IntEnum):
    GAUSSIAN = 0
    BINOMIAL = 1

    @property
    def inverse_link_name(self):
        return "identity" if self is Family.GAUSSIAN else "logistic"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise ValidationError(
                f"unknown family {value!r}; expected 'gaussian' or 'binomial'"
            ) from None


def sigmoid(eta):
    """Logistic function, stable for any finite input (saturates to 0/1)."""
    eta = np.asarray(eta, dtype=float)
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softplus(eta):
    """``log(1 + exp(eta))`` via ``max(eta, 0) + log1p(exp(-|eta|))``."""
    eta = np.asarray(eta, dtype=float)
    return np.maximum(eta, 0.0) + np.log1p(np.exp(-np.abs(eta)))


def inverse_link(family, eta):
    family = Family.parse(family)
    eta = np.asarray(eta, dtype=float)
    if family is Family.GAUSSIAN:
        return eta.copy()
    return sigmoid(eta)


def _check_lengths(y, eta):
    if y.shape != eta.shape:
        raise ValidationError(f"length mismatch: y {y.shape} vs eta {eta.shape}")


def loss(family, y, eta):
    """Negative log-likelihood (up to constants) of ``y`` at linear predictor ``eta``."""
    family = Family.parse(family)
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    _check_lengths(y, eta)
    if not np.all(np.isfinite(eta)):
        raise NonFiniteError("linear predictor contains non-finite values")
    if family is Family.GAUSSIAN:
        resid = y - eta
        return 0.5 * float(resid @ resid)
    return float(np.sum(softplus(eta) - y * eta))


def gradient(family, X, y, beta):
    """Gradient of ``loss(family, y, X @ beta)`` with respect to ``beta``."""
    X = np.asarray(X, dtype=float)
    beta = np.asarray(beta, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[1] != beta.shape[0] or X.shape[0] != y.shape[0]:
        raise ValidationError(
            f"dimension mismatch: X {X.shape}, y {y.shape}, beta {beta.shape}"
        )
    mu = inverse_link(family, X @ beta)
    return X.T @ (mu - y)


def deviance(family, y, eta):
    """Twice the loss, minus the saturated Gaussian constant."""
    return 2.0 * loss(family, y, eta)
