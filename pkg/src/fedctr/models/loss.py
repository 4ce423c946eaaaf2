from __future__ import annotations

import numpy as np

CLAMP = 1e-12


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be 0 or 1")
    return y


def bce_loss(y_hat, y):
    """Cross-entropy -y log(y_hat) - (1-y) log(1-y_hat), with y_hat clamped to [1e-12, 1-1e-12]."""
    y = _check_labels(y)
    p = np.clip(np.asarray(y_hat, dtype=np.float64), CLAMP, 1.0 - CLAMP)
    out = -y * np.log(p) - (1.0 - y) * np.log1p(-p)
    return float(out) if out.ndim == 0 else out


def bce_grad(y_hat, y):
    """d loss / d y_hat = (y_hat - y) / (y_hat (1 - y_hat)) on the clamped prediction."""
    y = _check_labels(y)
    p = np.clip(np.asarray(y_hat, dtype=np.float64), CLAMP, 1.0 - CLAMP)
    out = (p - y) / (p * (1.0 - p))
    return float(out) if out.ndim == 0 else out


def bce_logit_grad(y_hat, y):
    """d loss / d score when y_hat = sigmoid(score): y_hat - y.

    Same value as bce_grad(y_hat, y) * y_hat * (1 - y_hat) away from the clamp,
    but it stays correct when y_hat saturates to exactly 0 or 1.
    """
    y = _check_labels(y)
    return np.asarray(y_hat, dtype=np.float64) - y
