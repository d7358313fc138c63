"""Visible-patch selection from texture and structure complexity.

Per patch we compute a texture score (sum of absolute Laplacian responses),
a structure score (foreground pixel count of the binarized semantic map),
and their product as information capacity. The capacity vector is
max-normalized, pushed through a temperature softmax, and the visible set
is drawn as an exactly-k Gumbel-top-k sample (or plain top-k in
deterministic mode). Ablation strategies swap the capacity vector for the
texture scores, the structure scores, or all-ones.
"""

from dataclasses import dataclass

import numpy as np

from .imagecore import PatchGrid, patchify

STRATEGIES = ("random", "texture", "structure", "damask")
MODES = ("deterministic", "stochastic")

DEFAULT_TEMPERATURE = 0.1


@dataclass(frozen=True)
class MaskPlan:
    """The sampled visible set plus everything needed to reproduce it."""

    visible: np.ndarray  # sorted ascending, k distinct patch indices
    rho: float
    k: int
    seed: int
    strategy: str
    mode: str


def laplacian(gray: np.ndarray) -> np.ndarray:
    """4-neighbor Laplacian ([[0,1,0],[1,-4,1],[0,1,0]]) with replicate borders."""
    p = np.pad(gray, 1, mode="edge")
    return (p[:-2, 1:-1] + p[2:, 1:-1]) + (p[1:-1, :-2] + p[1:-1, 2:]) - 4.0 * gray


def texture_scores(tmap: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Per-patch sum of |Laplacian response|."""
    return patchify(np.abs(tmap), grid).sum(axis=(1, 2))


def binarize(sem: np.ndarray, foreground=None) -> np.ndarray:
    """Semantic labels -> {0,1} structure map; default foreground = any nonzero label."""
    if foreground is None:
        return (sem != 0).astype(np.uint8)
    fg = set(foreground)
    if not fg:
        raise ValueError("foreground label set must not be empty")
    return np.isin(sem, sorted(fg)).astype(np.uint8)


def structure_scores(smap: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Per-patch foreground pixel count, in [0, patch_size^2]."""
    return patchify(smap.astype(np.float64), grid).sum(axis=(1, 2))


def strategy_scores(strategy: str, texture: np.ndarray, structure: np.ndarray) -> np.ndarray:
    """Information-capacity vector for one masking strategy."""
    texture = np.asarray(texture, dtype=np.float64)
    structure = np.asarray(structure, dtype=np.float64)
    if texture.shape != structure.shape:
        raise ValueError("texture/structure score length mismatch")
    if strategy == "damask":
        return texture * structure
    if strategy == "texture":
        return texture.copy()
    if strategy == "structure":
        return structure.copy()
    if strategy == "random":
        return np.ones_like(texture)
    raise ValueError(f"unknown strategy {strategy!r}, expected one of {STRATEGIES}")


def categorical(info: np.ndarray, temperature: float = DEFAULT_TEMPERATURE) -> np.ndarray:
    """Softmax of the max-normalized capacity vector.

    Raw capacities are patch sums with magnitudes up to ~1e5, which would
    saturate a bare softmax; dividing by the max keeps the logits in [0, 1]
    and the temperature knob meaningful.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    info = np.asarray(info, dtype=np.float64)
    if info.size < 1:
        raise ValueError("empty score vector")
    if np.any(info < 0):
        raise ValueError("information capacities must be non-negative")
    top = info.max()
    z = info / top if top > 0 else np.zeros_like(info)
    z = z / temperature
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def _top_k_by_index(keys: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest keys, ties broken toward lower index, sorted."""
    order = np.lexsort((np.arange(keys.size), -keys))
    return np.sort(order[:k])


def visible_count(num_patches: int, rho: float) -> int:
    """k = round(L * (1 - rho)), half rounded up."""
    return int(np.floor(num_patches * (1.0 - rho) + 0.5))


def sample_visible(alpha: np.ndarray, rho: float, seed: int, mode: str,
                   strategy: str = "damask") -> MaskPlan:
    """Draw the visible patch set from a categorical distribution.

    Stochastic mode perturbs log-probabilities with Gumbel noise and keeps
    the k largest keys (an exactly-k sample without replacement); the noise
    comes from numpy's PCG64 generator seeded with `seed`. Deterministic
    mode keeps the k largest alpha directly.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    num = alpha.size
    if not 0.0 < rho < 1.0:
        raise ValueError(f"masking ratio must be in (0,1), got {rho}")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")
    k = visible_count(num, rho)
    if k < 1 or k >= num:
        raise ValueError(f"rho {rho} leaves k={k} visible of {num} patches")
    if mode == "stochastic":
        rng = np.random.default_rng(np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF))
        keys = np.log(alpha) + rng.gumbel(0.0, 1.0, num)
    else:
        keys = alpha
    visible = _top_k_by_index(keys, k)
    return MaskPlan(visible=visible, rho=rho, k=k, seed=seed,
                    strategy=strategy, mode=mode)
