"""Seeded synthetic scenes with exact semantic maps.

Scenes combine a smooth color-gradient background, a few high-frequency
"clutter" rectangles that stay label 0, and textured elliptical foreground
objects labeled 1..n. They exercise the full codec: the background rewards
masking, the clutter attracts purely texture-driven sampling, and the
objects carry the semantic structure.

Run `python -m mcm.synthetic --out DIR -n 20 --size 256 --seed 7` to
materialize a corpus of paired .ppm/.pgm files.
"""

import argparse
import os

import numpy as np

from .imagecore import save_pgm, save_ppm


def scene(rng, size: int = 256, n_objects=None, clutter: bool = True):
    """One synthetic RGB scene plus its exact semantic label map."""
    h = w = int(size)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    gx, gy = rng.uniform(-1.0, 1.0, 2)
    base = 110.0 + 55.0 * (gx * (xx / w - 0.5) + gy * (yy / h - 0.5))
    for _ in range(2):  # large soft blobs keep the background non-trivial
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        sigma = rng.uniform(0.25, 0.5) * size
        base += rng.uniform(-22, 22) * np.exp(
            -((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sigma ** 2))

    tint = rng.uniform(0.85, 1.15, 3)
    img = base[:, :, None] * tint[None, None, :]
    sem = np.zeros((h, w), dtype=np.uint8)

    if clutter:
        for _ in range(int(rng.integers(1, 4))):
            cw = int(rng.integers(size // 8, size // 4))
            ch = int(rng.integers(size // 8, size // 4))
            x0 = int(rng.integers(0, w - cw))
            y0 = int(rng.integers(0, h - ch))
            noise = rng.normal(0.0, 20.0, (ch, cw))
            img[y0:y0 + ch, x0:x0 + cw] += noise[:, :, None]

    n_obj = int(rng.integers(1, 4)) if n_objects is None else int(n_objects)
    for label in range(1, n_obj + 1):
        ax = rng.uniform(0.08, 0.18) * size
        ay = rng.uniform(0.08, 0.18) * size
        cx = rng.uniform(0.2, 0.8) * w
        cy = rng.uniform(0.2, 0.8) * h
        d = np.sqrt(((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2)
        inside = d <= 1.0
        alpha = np.clip((1.0 - d) / 0.15, 0.0, 1.0)  # feathered edge
        color = rng.uniform(60, 200, 3)
        fy, fx = rng.uniform(0.3, 1.2, 2)
        phase = rng.uniform(0, 2 * np.pi)
        texture = 14.0 * np.sin(2 * np.pi * (fx * xx + fy * yy) / 16.0 + phase)
        texture += rng.normal(0.0, 5.0, (h, w))
        body = color[None, None, :] + texture[:, :, None]
        img = img * (1 - alpha[:, :, None]) + body * alpha[:, :, None]
        sem[inside] = label

    rgb = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return rgb, sem


def write_corpus(outdir, count: int, size: int = 256, seed: int = 0,
                 prefix: str = "img", clutter: bool = True):
    """Write `count` paired PPM/PGM scenes; returns the image paths."""
    os.makedirs(outdir, exist_ok=True)
    paths = []
    for i in range(count):
        rng = np.random.default_rng(np.uint64(seed) + np.uint64(i) * np.uint64(977))
        rgb, sem = scene(rng, size=size, clutter=clutter)
        img_path = os.path.join(outdir, f"{prefix}_{i:03d}.ppm")
        save_ppm(rgb, img_path)
        save_pgm(sem, os.path.join(outdir, f"{prefix}_{i:03d}.pgm"))
        paths.append(img_path)
    return paths


def main(argv=None):
    ap = argparse.ArgumentParser(description="generate a synthetic test corpus")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("-n", "--count", type=int, default=20)
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--no-clutter", action="store_true")
    args = ap.parse_args(argv)
    paths = write_corpus(args.out, args.count, size=args.size, seed=args.seed,
                         clutter=not args.no_clutter)
    print(f"wrote {len(paths)} image/map pairs to {args.out}")


if __name__ == "__main__":
    main()
