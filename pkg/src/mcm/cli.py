"""Command-line surface: encode, decode, scores, ablate, rd-sweep,
train-basis, bdrate.

Every command is deterministic given its flags; corpus commands accept
--jobs (default from MCM_JOBS) and serialize their CSV rows in a fixed
order regardless of scheduling.
"""

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import codec, damask, latent, metrics
from .errors import CorruptionError, FormatError
from .imagecore import (PatchGrid, load_pgm, load_ppm, patchify, rgb_to_gray,
                        save_ppm)
from .metrics import RDCurve, RDPoint, read_rd_csv, write_rd_csv

SCORES_CSV_HEADER = ["index", "row", "col", "score_t", "score_s", "inf", "alpha"]
ABLATE_CSV_HEADER = ["strategy", "seed", "image", "bpp", "ssim"]


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("MCM_JOBS", "1")))
    except ValueError:
        return 1


def _load_pair(img_path, sem_path):
    img = load_ppm(img_path)
    sem = load_pgm(sem_path) if sem_path else None
    return img, sem


def _require_sem(args):
    if args.strategy in ("structure", "damask") and not args.sem and not args.sem_fallback:
        raise ValueError(
            f"strategy {args.strategy!r} needs --sem; pass --sem-fallback to "
            f"degrade to texture-only scoring without a semantic map")


def _encode_config(args):
    return dict(strategy=args.strategy, rho=args.rho, seed=args.seed,
                mode=args.mode, quality=args.quality,
                temperature=args.temperature, patch_size=args.patch_size)


def cmd_encode(args) -> int:
    _require_sem(args)
    if args.basis_kind == "pca" and args.basis is None:
        raise ValueError("--basis-kind pca needs --basis FILE")
    img, sem = _load_pair(args.input, args.sem)
    pca_basis = latent.load_basis(args.basis) if args.basis_kind == "pca" else None
    data = codec.encode(img, sem, basis_kind=args.basis_kind,
                        pca_basis=pca_basis, **_encode_config(args))
    with open(args.output, "wb") as f:
        f.write(data)
    print(f"{args.output}: {len(data)} bytes, {codec.measured_bpp(data):.6f} bpp")
    return 0


def cmd_decode(args) -> int:
    with open(args.input, "rb") as f:
        data = f.read()
    pca_basis = latent.load_basis(args.basis) if args.basis else None
    img = codec.decode(data, pca_basis=pca_basis)
    save_ppm(img, args.output)
    print(f"{args.output}: {img.shape[1]}x{img.shape[0]}")
    if args.ref:
        ref = load_ppm(args.ref)
        p = metrics.psnr(ref, img)
        print(f"psnr={min(p, metrics.PSNR_CAP_DB):.2f} "
              f"ssim={metrics.ssim(ref, img):.4f} "
              f"l1={metrics.l1(ref, img):.4f}")
    return 0


def cmd_scores(args) -> int:
    img, sem = _load_pair(args.input, args.sem)
    grid = PatchGrid(img.shape[0], img.shape[1], args.patch_size)
    texture = damask.texture_scores(damask.laplacian(rgb_to_gray(img)), grid)
    if sem is not None:
        structure = damask.structure_scores(damask.binarize(sem), grid)
    else:
        structure = np.ones(grid.num_patches)
    info = damask.strategy_scores("damask", texture, structure)
    alpha = damask.categorical(info, args.temperature)
    with open(args.output, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SCORES_CSV_HEADER)
        for idx in range(grid.num_patches):
            row, col = grid.patch_coords(idx)
            w.writerow([idx, row, col, f"{texture[idx]:.6f}",
                        f"{structure[idx]:.6f}", f"{info[idx]:.6f}",
                        f"{alpha[idx]:.10f}"])
    print(f"{args.output}: {grid.num_patches} patches")
    return 0


def _paired_corpus(corpus_dir, sem_dir):
    """(stem, ppm path, pgm path) triples; unpaired images are skipped."""
    sem_dir = sem_dir or corpus_dir
    pairs = []
    for name in sorted(os.listdir(corpus_dir)):
        if not name.endswith(".ppm"):
            continue
        stem = name[:-4]
        sem_path = os.path.join(sem_dir, stem + ".pgm")
        if not os.path.exists(sem_path):
            print(f"warning: no semantic map for {name}, skipped", file=sys.stderr)
            continue
        pairs.append((stem, os.path.join(corpus_dir, name), sem_path))
    if not pairs:
        raise ValueError(f"no paired .ppm/.pgm files under {corpus_dir}")
    return pairs


def _ablate_one(task):
    strategy, seed, stem, img_path, sem_path, rho, quality, patch_size = task
    img, sem = _load_pair(img_path, sem_path)
    data = codec.encode(img, sem, strategy=strategy, rho=rho, seed=seed,
                        mode="stochastic", quality=quality,
                        patch_size=patch_size)
    recon = codec.decode(data)
    return (strategy, seed, stem, codec.measured_bpp(data),
            metrics.ssim(img, recon))


def _run_tasks(tasks, worker, jobs):
    if jobs <= 1:
        return [worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, tasks, chunksize=1))


def cmd_ablate(args) -> int:
    pairs = _paired_corpus(args.corpus, args.sem_dir)
    seeds = _parse_int_list(args.seeds)
    tasks = [(strategy, seed, stem, img, sem, args.rho, args.quality,
              args.patch_size)
             for strategy in damask.STRATEGIES
             for seed in seeds
             for stem, img, sem in pairs]
    results = _run_tasks(tasks, _ablate_one, args.jobs)
    results.sort(key=lambda r: (damask.STRATEGIES.index(r[0]), r[1], r[2]))
    with open(args.output, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(ABLATE_CSV_HEADER)
        for strategy, seed, stem, bpp, ssim_val in results:
            w.writerow([strategy, seed, stem, f"{bpp:.8f}", f"{ssim_val:.8f}"])
    print(f"{'strategy':<12} {'mean_bpp':>10} {'mean_ssim':>10}")
    for strategy in damask.STRATEGIES:
        rows = [r for r in results if r[0] == strategy]
        mean_bpp = sum(r[3] for r in rows) / len(rows)
        mean_ssim = sum(r[4] for r in rows) / len(rows)
        print(f"{strategy:<12} {mean_bpp:>10.6f} {mean_ssim:>10.6f}")
    return 0


def _rd_one(task):
    stem, img_path, sem_path, strategy, rho, quality, seed, patch_size = task
    img, sem = _load_pair(img_path, sem_path)
    data = codec.encode(img, sem, strategy=strategy, rho=rho, seed=seed,
                        mode="stochastic", quality=quality,
                        patch_size=patch_size)
    recon = codec.decode(data)
    return (rho, quality, stem, codec.measured_bpp(data),
            metrics.psnr(img, recon), metrics.ssim(img, recon),
            metrics.l1(img, recon))


def cmd_rd_sweep(args) -> int:
    pairs = _paired_corpus(args.corpus, args.sem_dir)
    rhos = _parse_float_list(args.rho_list)
    qualities = _parse_int_list(args.quality_list)
    if not qualities:
        raise ValueError("empty quality list")
    if not rhos:
        raise ValueError("empty rho list")
    os.makedirs(args.out_dir, exist_ok=True)
    tasks = [(stem, img, sem, args.strategy, rho, quality, args.seed,
              args.patch_size)
             for rho in rhos for quality in qualities
             for stem, img, sem in pairs]
    results = _run_tasks(tasks, _rd_one, args.jobs)
    for rho in rhos:
        points = []
        for quality in qualities:
            rows = [r for r in results if r[0] == rho and r[1] == quality]
            psnrs = [min(r[4], metrics.PSNR_CAP_DB) for r in rows]
            points.append(RDPoint(
                bpp=float(np.mean([r[3] for r in rows])),
                psnr=float(np.mean(psnrs)),
                ssim=float(np.mean([r[5] for r in rows])),
                l1=float(np.mean([r[6] for r in rows]))))
        num, _ = codec.snap_rho(rho)
        label = f"{args.strategy}-rho{num}"
        path = os.path.join(args.out_dir, f"rd_{label}.csv")
        write_rd_csv(RDCurve(label=label, points=points), path)
        print(f"wrote {path}")
    return 0


def cmd_train_basis(args) -> int:
    names = [n for n in sorted(os.listdir(args.corpus)) if n.endswith(".ppm")]
    if not names:
        raise ValueError(f"no .ppm files under {args.corpus}")
    blocks = []
    for name in names:
        img = load_ppm(os.path.join(args.corpus, name), patch_size=args.patch_size)
        grid = PatchGrid(img.shape[0], img.shape[1], args.patch_size)
        blocks.append(patchify(rgb_to_gray(img), grid).reshape(grid.num_patches, -1))
    patches = np.concatenate(blocks, axis=0)
    m = args.components or args.patch_size * args.patch_size
    basis, eigvals = latent.train_pca_basis(patches, m)
    latent.save_basis(basis, args.output)
    total = float(eigvals.sum()) or 1.0
    top = " ".join(f"{v / total:.3f}" for v in eigvals[:8])
    print(f"{args.output}: {basis.num_components} components from "
          f"{patches.shape[0]} patches; explained variance {top} ...")
    if basis.num_components < m:
        print(f"warning: corpus rank {basis.num_components} < requested {m}",
              file=sys.stderr)
    return 0


def cmd_bdrate(args) -> int:
    anchor = read_rd_csv(args.anchor)
    test = read_rd_csv(args.test)
    value = metrics.bd_rate(anchor, test, metric=args.metric)
    print(f"{value:+.2f}%")
    return 0


def _parse_int_list(text):
    return [int(v) for v in str(text).split(",") if v.strip() != ""]


def _parse_float_list(text):
    return [float(v) for v in str(text).split(",") if v.strip() != ""]


def _add_common_encode_flags(p):
    p.add_argument("--strategy", choices=damask.STRATEGIES, default="damask")
    p.add_argument("--rho", type=float, default=0.75,
                   help="masking ratio, snapped to n/255")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=damask.MODES, default="stochastic")
    p.add_argument("--quality", type=int, default=5, help="preset 1..10")
    p.add_argument("--temperature", type=float, default=damask.DEFAULT_TEMPERATURE,
                   help="softmax temperature, snapped to Q8.8")
    p.add_argument("--patch-size", type=int, default=codec.DEFAULT_PATCH_SIZE)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mcm",
                                 description="masked-patch image codec")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="compress a PPM image to .mcm")
    p.add_argument("input", help="input .ppm (P6)")
    p.add_argument("--sem", help="semantic map .pgm (P5)")
    p.add_argument("--sem-fallback", action="store_true",
                   help="allow structure/damask without a semantic map")
    _add_common_encode_flags(p)
    p.add_argument("--basis-kind", choices=latent.BASIS_KINDS, default="dct")
    p.add_argument("--basis", help="trained basis file (required for pca)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decompress a .mcm file to PPM")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--ref", help="original image for psnr/ssim/l1 report")
    p.add_argument("--basis", help="trained basis file for pca bitstreams")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("scores", help="dump per-patch score vectors as CSV")
    p.add_argument("input")
    p.add_argument("--sem")
    p.add_argument("--patch-size", type=int, default=codec.DEFAULT_PATCH_SIZE)
    p.add_argument("--temperature", type=float, default=damask.DEFAULT_TEMPERATURE)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_scores)

    p = sub.add_parser("ablate", help="compare masking strategies on a corpus")
    p.add_argument("--corpus", required=True, help="directory of .ppm files")
    p.add_argument("--sem-dir", help="directory of .pgm maps (default: corpus)")
    p.add_argument("--rho", type=float, default=0.75)
    p.add_argument("--quality", type=int, default=5)
    p.add_argument("--seeds", default="0", help="comma-separated seed list")
    p.add_argument("--patch-size", type=int, default=codec.DEFAULT_PATCH_SIZE)
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.add_argument("-o", "--output", required=True, help="per-image CSV")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("rd-sweep", help="rate-distortion sweep over presets")
    p.add_argument("--corpus", required=True)
    p.add_argument("--sem-dir")
    p.add_argument("--strategy", choices=damask.STRATEGIES, default="damask")
    p.add_argument("--rho-list", default="0.43,0.75")
    p.add_argument("--quality-list", default="1,2,3,4,5,6,7,8,9,10")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--patch-size", type=int, default=codec.DEFAULT_PATCH_SIZE)
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_rd_sweep)

    p = sub.add_parser("train-basis", help="train a PCA patch basis")
    p.add_argument("--corpus", required=True)
    p.add_argument("--patch-size", type=int, default=codec.DEFAULT_PATCH_SIZE)
    p.add_argument("--components", type=int)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_train_basis)

    p = sub.add_parser("bdrate", help="BD-rate between two RD curve CSVs")
    p.add_argument("anchor")
    p.add_argument("test")
    p.add_argument("--metric", choices=("psnr", "ssim"), default="psnr")
    p.set_defaults(func=cmd_bdrate)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CorruptionError as e:
        print(f"error: corruption: {e}", file=sys.stderr)
        return 1
    except (FormatError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
