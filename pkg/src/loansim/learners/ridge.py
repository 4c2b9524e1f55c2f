from __future__ import annotations

import numpy as np


def fit_ridge(X, y, lam: float = 1.0) -> np.ndarray:
    """Solve (X'X + lam I) w = X'y."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] < 1:
        raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    gram = X.T @ X
    if lam > 0:
        gram[np.diag_indices_from(gram)] += lam
    elif np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise ValueError("rank-deficient; increase λ")
    try:
        return np.linalg.solve(gram, X.T @ y)
    except np.linalg.LinAlgError:
        raise ValueError("rank-deficient; increase λ") from None


def normal_equation_residual(X, y, w, lam: float) -> float:
    """Relative size of the ridge gradient at ``w``; zero at the optimum."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    grad = X.T @ (X @ w - y) + lam * w
    scale = max(np.linalg.norm(X.T @ y), np.linalg.norm(lam * w), 1e-300)
    return float(np.linalg.norm(grad) / scale)
