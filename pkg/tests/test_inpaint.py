import numpy as np
import pytest

from mcm.damask import categorical, sample_visible
from mcm.imagecore import PatchGrid, rgb_to_gray
from mcm.inpaint import (fill_residual, harmonic_fill, mean_fill,
                         visibility_mask)
from mcm.metrics import ssim
from mcm import synthetic


def patch_mask(grid, visible):
    return visibility_mask(visible, grid)


def random_patch_mask(grid, rho, seed):
    alpha = np.full(grid.num_patches, 1.0 / grid.num_patches)
    plan = sample_visible(alpha, rho, seed, "stochastic")
    return patch_mask(grid, plan.visible)


def test_visibility_mask_patch_constant():
    g = PatchGrid(8, 8, 4)
    m = visibility_mask([2], g)
    assert m.shape == (8, 8)
    assert m[4:, :4].all() and m.sum() == 16


def test_single_unknown_pixel_average():
    plane = np.array([[25.0, 10.0, 25.0],
                      [30.0, 0.0, 40.0],
                      [25.0, 20.0, 25.0]])
    mask = np.ones((3, 3), dtype=bool)
    mask[1, 1] = False
    out = harmonic_fill(plane, mask)
    assert out[1, 1] == 25.0


def test_constant_plane_exact(rng):
    g = PatchGrid(48, 48, 16)
    plane = np.full((48, 48), 77.0)
    mask = random_patch_mask(g, 0.75, 1)
    out = harmonic_fill(plane, mask)
    assert np.array_equal(out, plane)


def test_known_pixels_unchanged(rng):
    g = PatchGrid(64, 64, 16)
    plane = rng.uniform(0, 255, (64, 64))
    mask = random_patch_mask(g, 0.5, 2)
    out = harmonic_fill(plane, mask)
    assert np.array_equal(out[mask], plane[mask])


@pytest.mark.parametrize("a,b", [(1.0, 0.5), (-2.0, 1.5), (2.65, -2.65)])
def test_linear_gradient_exact_fixed_point(a, b):
    h = w = 64
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    plane = a * xx + b * yy + 40.0
    g = PatchGrid(h, w, 16)
    for seed in range(3):
        mask = random_patch_mask(g, 0.75, seed)
        out = harmonic_fill(plane, mask)
        assert np.abs(out - plane).max() < 0.5


def test_linear_gradient_border_patches_masked():
    # explicitly mask all four image corners plus edges
    h = w = 48
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    plane = 2.0 * xx - 1.5 * yy + 100.0
    g = PatchGrid(h, w, 16)
    mask = patch_mask(g, [4])  # only the center patch is known
    out = harmonic_fill(plane, mask, max_iters=20000)
    assert np.abs(out - plane).max() < 0.5


def test_residual_bound_at_convergence(rng):
    g = PatchGrid(64, 64, 16)
    plane = rng.uniform(0, 255, (64, 64))
    mask = random_patch_mask(g, 0.75, 3)
    tol = 0.05
    out = harmonic_fill(plane, mask, tol=tol)
    assert fill_residual(out, mask) <= 4 * tol


def test_max_principle_patch_masks(rng):
    from mcm.inpaint import _plane_fit

    g = PatchGrid(64, 64, 16)
    for seed in range(5):
        plane = rng.uniform(0, 255, (64, 64))
        mask = random_patch_mask(g, 0.75, seed)
        out = harmonic_fill(plane, mask)
        lo, hi = plane[mask].min(), plane[mask].max()
        # the harmonic residual stage obeys the strict maximum principle
        trend = _plane_fit(mask, plane[mask])
        r_out = out - trend
        r_known = (plane - trend)[mask]
        assert r_out.min() >= r_known.min() - 1e-9
        assert r_out.max() <= r_known.max() + 1e-9
        # output bound: known extrema widened by at most the trend spread
        slack = float(np.ptp(trend)) + 1e-9
        assert out.min() >= lo - slack and out.max() <= hi + slack


def test_fill_deterministic(rng):
    g = PatchGrid(48, 48, 16)
    plane = rng.uniform(0, 255, (48, 48))
    mask = random_patch_mask(g, 0.75, 4)
    assert np.array_equal(harmonic_fill(plane, mask), harmonic_fill(plane, mask))


def test_fill_validation():
    plane = np.zeros((4, 4))
    with pytest.raises(ValueError, match="no known"):
        harmonic_fill(plane, np.zeros((4, 4), dtype=bool))
    with pytest.raises(ValueError, match="positive"):
        harmonic_fill(plane, np.ones((4, 4), dtype=bool), tol=0.0)
    with pytest.raises(ValueError, match="differ"):
        harmonic_fill(plane, np.ones((4, 5), dtype=bool))
    assert np.array_equal(harmonic_fill(plane, np.ones((4, 4), dtype=bool)), plane)


def test_mean_fill_values():
    plane = np.array([[0.0, 255.0], [1.0, 2.0]])
    mask = np.array([[True, True], [False, False]])
    out = mean_fill(plane, mask)
    assert out[1, 0] == out[1, 1] == 127.5
    const = mean_fill(np.full((3, 3), 9.0), np.eye(3, dtype=bool))
    assert np.all(const == 9.0)
    with pytest.raises(ValueError, match="no known"):
        mean_fill(plane, np.zeros((2, 2), dtype=bool))


def test_harmonic_beats_mean_fill_on_natural_planes():
    g = PatchGrid(64, 64, 16)
    wins = 0
    total = 50
    for i in range(total):
        rgb, _ = synthetic.scene(np.random.default_rng(1000 + i), size=64)
        plane = rgb_to_gray(rgb)
        mask = random_patch_mask(g, 0.75, i)
        s_h = ssim(plane, harmonic_fill(plane, mask))
        s_m = ssim(plane, mean_fill(plane, mask))
        wins += s_h >= s_m
    assert wins >= 0.9 * total
