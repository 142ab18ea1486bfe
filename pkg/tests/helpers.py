"""Shared fixtures-by-hand: synthetic content builders and independent oracles.

Oracles here are deliberately written with different machinery than the
library (reshape tricks, brute-force loops, closed forms) so that agreement
actually means something.
"""

from __future__ import annotations

import numpy as np

from splatshield.imagecore import Image

# --- synthetic content -------------------------------------------------------


def smooth_image(h: int = 64, w: int = 64, phase: float = 0.0) -> Image:
    """Low-frequency cosine ramps; nearly all energy in the approximation band."""
    y = np.linspace(0.0, 1.0, h)[:, None]
    x = np.linspace(0.0, 1.0, w)[None, :]
    r = 0.5 + 0.35 * np.cos(2.1 * x + phase) * np.cos(1.7 * y)
    g = 0.5 + 0.30 * np.sin(1.3 * x + 0.4 + phase) * np.cos(2.3 * y)
    b = 0.45 + 0.25 * np.cos(0.9 * (x + y) + phase)
    return Image(np.stack([r, g, b]))


def random_image(h: int, w: int, seed: int = 0, lo: float = 0.0, hi: float = 1.0) -> Image:
    rng = np.random.default_rng(seed)
    return Image(rng.uniform(lo, hi, size=(3, h, w)))


def textured_image(h: int = 128, w: int = 128, seed: int = 0, n_squares: int = 40) -> Image:
    """Smooth base plus scattered high-contrast squares: corner-rich content."""
    img = smooth_image(h, w).planes.copy()
    rng = np.random.default_rng(seed)
    for _ in range(n_squares):
        sz = int(rng.integers(4, 11))
        r = int(rng.integers(0, h - sz))
        c = int(rng.integers(0, w - sz))
        col = rng.uniform(0.05, 0.95, size=3)
        img[:, r:r + sz, c:c + sz] = col[:, None, None]
    # Keep clear of 0/1 so +-16/255 perturbations never hit the clamp.
    return Image(np.clip(img, 0.07, 0.93))


def checker_pattern(h: int, w: int, amplitude: float) -> np.ndarray:
    """2x2-aligned, zero-block-mean checker: [[+e, -e], [-e, +e]] tiled."""
    yy, xx = np.mgrid[0:h, 0:w]
    sign = np.where((yy % 2) == (xx % 2), 1.0, -1.0)
    return amplitude * sign


# --- independent oracles -----------------------------------------------------


def block_mean_filter(img: Image) -> np.ndarray:
    """Reference for the level-1 detail filter: per-2x2-block means.

    Computed with reshape/mean, padding odd edges by replication, nothing
    shared with the transform code.
    """
    out = []
    for p in img.planes:
        h, w = p.shape
        q = np.pad(p, ((0, h % 2), (0, w % 2)), mode="edge")
        m = q.reshape(q.shape[0] // 2, 2, q.shape[1] // 2, 2).mean(axis=(1, 3))
        out.append(np.repeat(np.repeat(m, 2, axis=0), 2, axis=1)[:h, :w])
    return np.stack(out)


def quat_angle(qa: np.ndarray, qb: np.ndarray) -> float:
    """Relative rotation angle via quaternions: 2*arccos(|qa . qb|)."""
    d = abs(float(np.dot(qa, qb)))
    return 2.0 * np.arccos(min(1.0, d))


def path_cost(matrix: np.ndarray, order) -> float:
    order = list(order)
    return float(sum(matrix[order[i], order[i + 1]] for i in range(len(order) - 1)))


def brute_force_best_path(matrix: np.ndarray) -> float:
    """Exhaustive open-path optimum (fine for n <= 9)."""
    from itertools import permutations

    n = matrix.shape[0]
    best = np.inf
    for perm in permutations(range(n)):
        if perm[0] > perm[-1]:
            continue  # path reversal has equal cost; halve the enumeration
        best = min(best, path_cost(matrix, perm))
    return best
