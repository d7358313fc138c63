"""Masked-region reconstruction by harmonic (Laplace) inpainting.

A least-squares plane is fitted to the known pixels first; the residual is
filled by row-major Gauss-Seidel with SOR (omega = 1.8) on the discrete
Laplace equation with known pixels as Dirichlet data, and the trend is
added back. Detrending carries constant and linear-gradient fields through
exactly for any mask: interior unknowns still satisfy the plain 4-neighbor
Laplace stencil (the trend is discrete-harmonic), while at the image
border the reduced stencil acts on the trend-free residual, so gradients
are not flattened there. Sweeps stop when the largest per-pixel update
drops below tol and the stencil residual is below 4*tol, or at max_iters.
"""

import numpy as np

from ._accel import maybe_njit
from .imagecore import PatchGrid

DEFAULT_TOL = 0.05
DEFAULT_MAX_ITERS = 5000
SOR_OMEGA = 1.8


def visibility_mask(visible, grid: PatchGrid) -> np.ndarray:
    """Expand a visible-patch index list to a per-pixel known mask."""
    n = grid.patch_size
    flags = np.zeros(grid.num_patches, dtype=bool)
    flags[np.asarray(visible, dtype=np.int64)] = True
    per_patch = flags.reshape(grid.rows, grid.cols)
    return np.kron(per_patch, np.ones((n, n), dtype=bool))


@maybe_njit
def _local_target(u, i, j, h, w):
    """Average of in-bounds neighbors (natural Neumann at the border)."""
    acc = 0.0
    cnt = 0
    if i > 0:
        acc += u[i - 1, j]
        cnt += 1
    if i < h - 1:
        acc += u[i + 1, j]
        cnt += 1
    if j > 0:
        acc += u[i, j - 1]
        cnt += 1
    if j < w - 1:
        acc += u[i, j + 1]
        cnt += 1
    if cnt == 0:
        return u[i, j]
    return acc / cnt


@maybe_njit
def _sor_fill(u, known, omega, tol, max_iters):
    h, w = u.shape
    iters = 0
    while iters < max_iters:
        iters += 1
        worst = 0.0
        for i in range(h):
            for j in range(w):
                if known[i, j]:
                    continue
                delta = omega * (_local_target(u, i, j, h, w) - u[i, j])
                u[i, j] += delta
                if delta < 0.0:
                    delta = -delta
                if delta > worst:
                    worst = delta
        if worst < tol:
            residual = 0.0
            for i in range(h):
                for j in range(w):
                    if known[i, j]:
                        continue
                    r = 4.0 * (_local_target(u, i, j, h, w) - u[i, j])
                    if r < 0.0:
                        r = -r
                    if r > residual:
                        residual = r
            if residual <= 4.0 * tol:
                break
    return iters


def _plane_fit(mask: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Least-squares a*x + b*y + c over known pixels, evaluated everywhere."""
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    # centered, scaled coordinates keep the normal equations well conditioned
    sx = (xs - (w - 1) / 2.0) / max(w, 2)
    sy = (ys - (h - 1) / 2.0) / max(h, 2)
    design = np.column_stack([sx, sy, np.ones(xs.size)])
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    gy, gx = np.mgrid[0:h, 0:w].astype(np.float64)
    gx = (gx - (w - 1) / 2.0) / max(w, 2)
    gy = (gy - (h - 1) / 2.0) / max(h, 2)
    return coef[0] * gx + coef[1] * gy + coef[2]


def harmonic_fill(plane: np.ndarray, mask: np.ndarray, tol: float = DEFAULT_TOL,
                  max_iters: int = DEFAULT_MAX_ITERS) -> np.ndarray:
    """Fill unknown pixels harmonically; known pixels come back unchanged."""
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    mask = np.asarray(mask, dtype=bool)
    plane = np.asarray(plane, dtype=np.float64)
    if plane.shape != mask.shape:
        raise ValueError(f"plane {plane.shape} and mask {mask.shape} differ")
    if not mask.any():
        raise ValueError("no known pixels to inpaint from")
    if mask.all():
        return plane.copy()
    known_vals = plane[mask]
    if known_vals.min() == known_vals.max():
        # unique harmonic extension of constant Dirichlet data
        return np.full_like(plane, known_vals[0])
    trend = _plane_fit(mask, known_vals)
    resid = plane - trend
    resid[~mask] = resid[mask].mean()  # flat initial guess speeds convergence
    _sor_fill(resid, mask.astype(np.uint8), SOR_OMEGA, float(tol), int(max_iters))
    out = plane.copy()
    out[~mask] = trend[~mask] + resid[~mask]
    return out


def fill_residual(plane: np.ndarray, mask: np.ndarray) -> float:
    """Largest |4-neighbor Laplacian| over interior unknown pixels."""
    mask = np.asarray(mask, dtype=bool)
    u = np.asarray(plane, dtype=np.float64)
    lap = (u[:-2, 1:-1] + u[2:, 1:-1] + u[1:-1, :-2] + u[1:-1, 2:]
           - 4.0 * u[1:-1, 1:-1])
    unknown = ~mask[1:-1, 1:-1]
    if not unknown.any():
        return 0.0
    return float(np.abs(lap[unknown]).max())


def mean_fill(plane: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Baseline filler: every unknown pixel gets the mean of known pixels."""
    mask = np.asarray(mask, dtype=bool)
    plane = np.asarray(plane, dtype=np.float64)
    if plane.shape != mask.shape:
        raise ValueError(f"plane {plane.shape} and mask {mask.shape} differ")
    if not mask.any():
        raise ValueError("no known pixels to fill from")
    out = plane.copy()
    out[~mask] = plane[mask].mean()
    return out
