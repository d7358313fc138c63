"""Distortion metrics and Bjontegaard rate comparison between RD curves."""

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .imagecore import rgb_to_gray

PSNR_CAP_DB = 99.0  # table/report stand-in for the +inf sentinel

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_DYNAMIC_RANGE = 255.0


def psnr(a: np.ndarray, b: np.ndarray, mask=None) -> float:
    """10*log10(255^2 / MSE) over all channels; identical inputs -> inf.

    An optional boolean pixel mask restricts the comparison (used for
    visible-patch-only fidelity checks).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        a = a[mask]
        b = b[mask]
        if a.size == 0:
            raise ValueError("empty pixel mask")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(_DYNAMIC_RANGE ** 2 / mse)


def _gaussian_kernel():
    half = _SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x ** 2) / (2 * _SSIM_SIGMA ** 2))
    return k / k.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation with a 1-D kernel on both axes."""
    taps = kernel.size
    rows = img.shape[0] - taps + 1
    cols = img.shape[1] - taps + 1
    tmp = np.zeros((rows, img.shape[1]))
    for t in range(taps):
        tmp += kernel[t] * img[t : t + rows, :]
    out = np.zeros((rows, cols))
    for t in range(taps):
        out += kernel[t] * tmp[:, t : t + cols]
    return out


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM, 11x11 Gaussian window (sigma 1.5), range 255.

    RGB inputs are compared on their luma planes.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 3:
        a = rgb_to_gray(a)
        b = rgb_to_gray(b)
    if a.shape[0] < _SSIM_WINDOW or a.shape[1] < _SSIM_WINDOW:
        raise ValueError(f"inputs must be at least {_SSIM_WINDOW}x{_SSIM_WINDOW}")
    k = _gaussian_kernel()
    mu_a = _filter_valid(a, k)
    mu_b = _filter_valid(b, k)
    var_a = _filter_valid(a * a, k) - mu_a ** 2
    var_b = _filter_valid(b * b, k) - mu_b ** 2
    cov = _filter_valid(a * b, k) - mu_a * mu_b
    c1 = (_SSIM_K1 * _DYNAMIC_RANGE) ** 2
    c2 = (_SSIM_K2 * _DYNAMIC_RANGE) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def l1(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute per-channel difference in gray levels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


@dataclass(frozen=True)
class RDPoint:
    bpp: float
    psnr: float
    ssim: float
    l1: float

    def __post_init__(self):
        if self.bpp <= 0:
            raise ValueError(f"bpp must be positive, got {self.bpp}")
        if self.ssim > 1.0 + 1e-12:
            raise ValueError(f"ssim cannot exceed 1, got {self.ssim}")


@dataclass
class RDCurve:
    """An RD curve: >= 4 points, strictly increasing bpp."""

    label: str
    points: list = field(default_factory=list)

    def __post_init__(self):
        self.points = sorted(self.points, key=lambda p: p.bpp)
        if len(self.points) < 4:
            raise ValueError(f"curve {self.label!r} needs >= 4 points, "
                             f"got {len(self.points)}")
        bpps = [p.bpp for p in self.points]
        if any(b2 <= b1 for b1, b2 in zip(bpps, bpps[1:])):
            raise ValueError(f"curve {self.label!r} has non-increasing bpp values")

    def distortions(self, metric: str) -> np.ndarray:
        if metric not in ("psnr", "ssim"):
            raise ValueError(f"metric must be 'psnr' or 'ssim', got {metric!r}")
        vals = [min(getattr(p, metric), PSNR_CAP_DB) if metric == "psnr"
                else getattr(p, metric) for p in self.points]
        arr = np.array(vals, dtype=np.float64)
        if np.any(np.diff(arr) < 0):
            warnings.warn(f"curve {self.label!r}: {metric} not monotone in bpp")
        return arr

    def rates(self) -> np.ndarray:
        return np.array([p.bpp for p in self.points], dtype=np.float64)


def bd_rate(anchor: RDCurve, test: RDCurve, metric: str = "psnr") -> float:
    """Average rate difference (percent) of test vs anchor at equal quality.

    Fits cubic polynomials of log10(rate) against the distortion metric and
    integrates both over the overlapping distortion interval. Negative
    means the test curve spends less rate.
    """
    d_a = anchor.distortions(metric)
    d_t = test.distortions(metric)
    lo = max(d_a.min(), d_t.min())
    hi = min(d_a.max(), d_t.max())
    if hi <= lo:
        raise ValueError(f"no overlap in {metric} between the curves")
    p_a = np.polyfit(d_a, np.log10(anchor.rates()), 3)
    p_t = np.polyfit(d_t, np.log10(test.rates()), 3)
    int_a = np.polyval(np.polyint(p_a), hi) - np.polyval(np.polyint(p_a), lo)
    int_t = np.polyval(np.polyint(p_t), hi) - np.polyval(np.polyint(p_t), lo)
    avg_diff = (int_t - int_a) / (hi - lo)
    return float((10.0 ** avg_diff - 1.0) * 100.0)


# ---------------------------------------------------------------------------
# CSV serialization (schema: label,bpp,psnr,ssim,l1)

RD_CSV_HEADER = ["label", "bpp", "psnr", "ssim", "l1"]


def write_rd_csv(curve: RDCurve, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(RD_CSV_HEADER)
        for p in curve.points:
            w.writerow([curve.label, f"{p.bpp:.8f}", _fmt(p.psnr),
                        f"{p.ssim:.8f}", f"{p.l1:.8f}"])


def read_rd_csv(path) -> RDCurve:
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r, None)
        if header != RD_CSV_HEADER:
            raise ValueError(f"{path}: unexpected RD CSV header {header}")
        label = None
        points = []
        for row in r:
            if not row:
                continue
            label = row[0] if label is None else label
            points.append(RDPoint(bpp=float(row[1]), psnr=float(row[2]),
                                  ssim=float(row[3]), l1=float(row[4])))
    return RDCurve(label=label or "", points=points)


def _fmt(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.8f}"
