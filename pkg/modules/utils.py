# modules/utils.py
"""Shared helpers: reproducible random streams and finite-difference gradients."""
import logging

import numpy as np

logger = logging.getLogger(__name__)


def make_rng(seed) -> np.random.Generator:
    """
    PCG64 generator (64-bit, portable across platforms and numpy versions).
    ``seed`` may be an int or a SeedSequence obtained from ``split_seed``.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def split_seed(seed: int, n_streams: int) -> list:
    """Independent child streams of one seed (SeedSequence spawning)."""
    return np.random.SeedSequence(int(seed)).spawn(n_streams)


def derive_seed(base_seed: int, *keys: int) -> int:
    """A 63-bit seed that depends only on (base_seed, keys), never on call order."""
    state = np.random.SeedSequence([int(base_seed), *[int(k) for k in keys]]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def finite_difference(func, x0: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """
    Central-difference gradient of a scalar function of an array of any shape.
    Returns an array shaped like ``x0``.
    """
    x0 = np.array(x0, dtype=float)
    flat = x0.ravel()
    grad = np.zeros_like(flat)
    logger.debug(f"Finite-difference gradient over {flat.size} coordinates (eps={eps})")
    for k in range(flat.size):
        x = flat.copy()
        x[k] = flat[k] + eps
        fplus = func(x.reshape(x0.shape))
        x[k] = flat[k] - eps
        fminus = func(x.reshape(x0.shape))
        grad[k] = (fplus - fminus) / (2 * eps)
    return grad.reshape(x0.shape)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """max |a - b| relative to the larger of the two magnitudes (floored at 1e-12)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)
    return float(np.max(np.abs(a - b)) / scale)
