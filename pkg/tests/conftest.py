"""Shared numeric helpers for the test suite."""

import numpy as np


def rel_err(analytic: np.ndarray, reference: np.ndarray) -> float:
    """max over elements of |a - r| / max(1, |r|)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    return float(np.max(np.abs(analytic - reference)
                        / np.maximum(1.0, np.abs(reference))))


def central_diff(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of the scalar function ``f``.

    ``x`` is perturbed in place coordinate by coordinate and restored, so
    ``f`` must read the live array.
    """
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + eps
        fp = f()
        x[idx] = old - eps
        fm = f()
        x[idx] = old
        grad[idx] = (fp - fm) / (2.0 * eps)
    return grad
