import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def fd_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of a flat array."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def max_rel_err(g_ad: np.ndarray, g_fd: np.ndarray) -> float:
    return float(np.max(np.abs(g_ad - g_fd) / (np.abs(g_fd) + 1e-8)))
