"""Raster I/O, color conversion, and the shared patch-grid decomposition.

Images are numpy arrays: RGB images are (H, W, 3) uint8, gray planes are
(H, W) float64 in [0, 255], semantic maps are (H, W) uint8 label rasters.
Containers are binary netpbm only (P6 PPM / P5 PGM, maxval 255); `#`
comments are allowed in headers and exactly one whitespace byte separates
the maxval from the payload.
"""

from dataclasses import dataclass

import numpy as np

from .errors import FormatError

# ITU-R BT.601 luma weights, kept as integer/1000 so achromatic pixels
# convert exactly.
_LUMA = (299.0, 587.0, 114.0)


@dataclass(frozen=True)
class PatchGrid:
    """Row-major grid of non-overlapping patch_size x patch_size patches."""

    height: int
    width: int
    patch_size: int

    def __post_init__(self):
        n = self.patch_size
        if n < 2:
            raise ValueError(f"patch size must be >= 2, got {n}")
        if self.height % n != 0:
            raise ValueError(f"height {self.height} not divisible by patch size {n}")
        if self.width % n != 0:
            raise ValueError(f"width {self.width} not divisible by patch size {n}")

    @property
    def rows(self) -> int:
        return self.height // self.patch_size

    @property
    def cols(self) -> int:
        return self.width // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.rows * self.cols

    def patch_coords(self, index: int):
        """Map a patch index to its (row, col) in the grid."""
        return index // self.cols, index % self.cols


def _read_header(data: bytes, magic: bytes, path):
    """Parse a netpbm header, returning (width, height, payload offset)."""
    if data[:2] != magic:
        got = data[:2].decode("latin-1", "replace")
        raise FormatError(f"{path}: expected {magic.decode()} magic, got {got!r}")
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise FormatError(f"{path}: truncated header")
        c = data[pos]
        if c in b" \t\r\n":
            pos += 1
        elif c == ord("#"):
            while pos < len(data) and data[pos] != ord("\n"):
                pos += 1
        elif c in b"0123456789":
            start = pos
            while pos < len(data) and data[pos] in b"0123456789":
                pos += 1
            fields.append(int(data[start:pos]))
        else:
            raise FormatError(f"{path}: unexpected byte {data[pos:pos+1]!r} in header")
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}, expected 255")
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: non-positive dimensions {width}x{height}")
    # exactly one whitespace byte before the payload
    if pos >= len(data) or data[pos] not in b" \t\r\n":
        raise FormatError(f"{path}: missing whitespace before payload")
    return width, height, pos + 1


def _check_divisible(width: int, height: int, patch_size, path):
    if patch_size is None:
        return
    if width % patch_size != 0:
        raise ValueError(f"{path}: width {width} not divisible by patch size {patch_size}")
    if height % patch_size != 0:
        raise ValueError(f"{path}: height {height} not divisible by patch size {patch_size}")


def load_ppm(path, patch_size=None) -> np.ndarray:
    """Load a binary PPM (P6) into an (H, W, 3) uint8 array.

    When patch_size is given, dimensions must be divisible by it; the codec
    refuses rather than pads.
    """
    with open(path, "rb") as f:
        data = f.read()
    width, height, off = _read_header(data, b"P6", path)
    _check_divisible(width, height, patch_size, path)
    need = 3 * width * height
    payload = data[off : off + need]
    if len(payload) < need:
        raise FormatError(f"{path}: payload truncated ({len(payload)} of {need} bytes)")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).copy()


def save_ppm(img: np.ndarray, path) -> None:
    """Write an (H, W, 3) uint8 array as binary PPM (P6)."""
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) array, got shape {img.shape}")
    height, width = img.shape[:2]
    try:
        with open(path, "wb") as f:
            f.write(b"P6\n%d %d\n255\n" % (width, height))
            f.write(img.tobytes())
    except OSError as e:
        raise OSError(f"cannot write PPM {path}: {e}") from e


def load_pgm(path) -> np.ndarray:
    """Load a binary PGM (P5) label raster into an (H, W) uint8 array."""
    with open(path, "rb") as f:
        data = f.read()
    width, height, off = _read_header(data, b"P5", path)
    need = width * height
    payload = data[off : off + need]
    if len(payload) < need:
        raise FormatError(f"{path}: payload truncated ({len(payload)} of {need} bytes)")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def save_pgm(plane: np.ndarray, path) -> None:
    """Write an (H, W) uint8 array as binary PGM (P5)."""
    plane = np.ascontiguousarray(plane, dtype=np.uint8)
    if plane.ndim != 2:
        raise ValueError(f"expected (H, W) array, got shape {plane.shape}")
    height, width = plane.shape
    try:
        with open(path, "wb") as f:
            f.write(b"P5\n%d %d\n255\n" % (width, height))
            f.write(plane.tobytes())
    except OSError as e:
        raise OSError(f"cannot write PGM {path}: {e}") from e


def rgb_to_gray(img: np.ndarray) -> np.ndarray:
    """BT.601 grayscale, kept as float64 with no rounding."""
    r = img[:, :, 0].astype(np.float64)
    g = img[:, :, 1].astype(np.float64)
    b = img[:, :, 2].astype(np.float64)
    return (_LUMA[0] * r + _LUMA[1] * g + _LUMA[2] * b) / 1000.0


def ycbcr_forward(img: np.ndarray):
    """Full-range BT.601 RGB -> (Y, Cb, Cr) float64 planes, 128-offset chroma."""
    r = img[:, :, 0].astype(np.float64)
    g = img[:, :, 1].astype(np.float64)
    b = img[:, :, 2].astype(np.float64)
    y = (_LUMA[0] * r + _LUMA[1] * g + _LUMA[2] * b) / 1000.0
    cb = 128.0 + (b - y) * (0.5 / (1.0 - 0.114))
    cr = 128.0 + (r - y) * (0.5 / (1.0 - 0.299))
    return y, cb, cr


def ycbcr_inverse(y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> np.ndarray:
    """Inverse of ycbcr_forward, rounded and clamped to uint8."""
    if not (y.shape == cb.shape == cr.shape):
        raise ValueError(f"plane size mismatch: {y.shape}, {cb.shape}, {cr.shape}")
    b = y + (cb - 128.0) * ((1.0 - 0.114) / 0.5)
    r = y + (cr - 128.0) * ((1.0 - 0.299) / 0.5)
    g = (1000.0 * y - _LUMA[0] * r - _LUMA[2] * b) / _LUMA[1]
    out = np.stack([r, g, b], axis=-1)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def patchify(plane: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Split a plane into (L, N, N) patches in row-major patch order."""
    n = grid.patch_size
    if plane.shape != (grid.height, grid.width):
        raise ValueError(f"plane shape {plane.shape} does not match grid "
                         f"({grid.height}, {grid.width})")
    tiled = plane.reshape(grid.rows, n, grid.cols, n).swapaxes(1, 2)
    return tiled.reshape(grid.num_patches, n, n)


def unpatchify(patches: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Inverse of patchify."""
    n = grid.patch_size
    patches = np.asarray(patches)
    if patches.shape != (grid.num_patches, n, n):
        raise ValueError(f"expected {grid.num_patches} patches of {n}x{n}, "
                         f"got shape {patches.shape}")
    tiled = patches.reshape(grid.rows, grid.cols, n, n).swapaxes(1, 2)
    return tiled.reshape(grid.height, grid.width)
