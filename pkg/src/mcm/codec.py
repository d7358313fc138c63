"""End-to-end bitstream: mask, transform, quantize, entropy-code, decode.

Layout (big-endian): magic(4) | version(1) | width(2) | height(2) |
patch_size(1) | strategy(1) | mode(1) | rho_num(1) | rho_den(1) |
k_visible(2) | quality(1) | basis_kind(1) | temperature(2, Q8.8) | seed(8) |
len_record(4) | len_latent(4) | record payload | latent payload.

The mask plan always travels explicitly as the position record; the decoder
never re-derives it (it has no semantic map). Header and record bytes count
toward bpp.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import damask, inpaint, latent
from .damask import MODES, STRATEGIES, MaskPlan
from .entropy import decode_position_record, encode_position_record
from .errors import CorruptionError, FormatError
from .imagecore import (PatchGrid, patchify, rgb_to_gray, unpatchify,
                        ycbcr_forward, ycbcr_inverse)

MAGIC = b"MCM1"
VERSION = 1
DEFAULT_PATCH_SIZE = 16
RHO_DENOMINATOR = 255

_HEADER_FMT = ">4sBHHBBBBBHBBHQII"
HEADER_SIZE = struct.calcsize(_HEADER_FMT)


@dataclass(frozen=True)
class Header:
    width: int
    height: int
    patch_size: int
    strategy: str
    mode: str
    rho_num: int
    rho_den: int
    k_visible: int
    quality: int
    basis_kind: str
    temperature_q8: int  # tau in Q8.8 fixed point
    seed: int
    len_record: int
    len_latent: int

    @property
    def rho(self) -> float:
        return self.rho_num / self.rho_den

    @property
    def temperature(self) -> float:
        return self.temperature_q8 / 256.0

    @property
    def grid(self) -> PatchGrid:
        return PatchGrid(self.height, self.width, self.patch_size)

    def pack(self) -> bytes:
        return struct.pack(
            _HEADER_FMT, MAGIC, VERSION, self.width, self.height,
            self.patch_size, STRATEGIES.index(self.strategy),
            MODES.index(self.mode), self.rho_num, self.rho_den,
            self.k_visible, self.quality,
            latent.BASIS_KINDS.index(self.basis_kind), self.temperature_q8,
            self.seed, self.len_record, self.len_latent)

    @classmethod
    def parse(cls, data: bytes) -> "Header":
        if len(data) < HEADER_SIZE:
            raise CorruptionError(f"stream too short for header "
                                  f"({len(data)} < {HEADER_SIZE} bytes)")
        (magic, version, width, height, patch_size, strategy, mode, rho_num,
         rho_den, k_visible, quality, basis_kind, temp_q8, seed, len_record,
         len_latent) = struct.unpack_from(_HEADER_FMT, data)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"unsupported version {version}")
        if strategy >= len(STRATEGIES) or mode >= len(MODES) \
                or basis_kind >= len(latent.BASIS_KINDS):
            raise CorruptionError("unknown enum value in header")
        if rho_den == 0 or not 0 < rho_num < rho_den:
            raise CorruptionError(f"invalid masking ratio {rho_num}/{rho_den}")
        hdr = cls(width=width, height=height, patch_size=patch_size,
                  strategy=STRATEGIES[strategy], mode=MODES[mode],
                  rho_num=rho_num, rho_den=rho_den, k_visible=k_visible,
                  quality=quality, basis_kind=latent.BASIS_KINDS[basis_kind],
                  temperature_q8=temp_q8, seed=seed,
                  len_record=len_record, len_latent=len_latent)
        try:
            grid = hdr.grid
        except ValueError as e:
            raise CorruptionError(str(e)) from e
        expected_k = damask.visible_count(grid.num_patches, hdr.rho)
        if hdr.k_visible != expected_k:
            raise CorruptionError(f"header k_visible {hdr.k_visible} does not "
                                  f"match rho-derived {expected_k}")
        if not 1 <= hdr.k_visible < grid.num_patches:
            raise CorruptionError(f"k_visible {hdr.k_visible} outside "
                                  f"[1, {grid.num_patches})")
        return hdr


def snap_rho(rho: float) -> tuple:
    """Quantize a masking ratio to the nearest n/255 so the header is exact."""
    num = int(round(rho * RHO_DENOMINATOR))
    if not 0 < num < RHO_DENOMINATOR:
        raise ValueError(f"masking ratio {rho} not representable as n/255 in (0,1)")
    return num, RHO_DENOMINATOR


def snap_temperature(tau: float) -> int:
    """Quantize a softmax temperature to Q8.8."""
    q = int(round(tau * 256.0))
    if not 1 <= q <= 0xFFFF:
        raise ValueError(f"temperature {tau} outside the representable (0, 256) range")
    return q


def _channel_bases(basis_kind: str, patch_size: int, pca_basis=None):
    """Luma keeps the full basis; chroma keeps the first half of the vectors."""
    d = patch_size * patch_size
    chroma_m = max(1, d // 2)
    if basis_kind == "dct":
        full = latent.dct_basis(patch_size, d)
        return full, full.truncated(chroma_m)
    if pca_basis is None:
        raise ValueError("pca bitstreams need a trained basis file")
    if pca_basis.patch_size != patch_size:
        raise ValueError(f"basis patch size {pca_basis.patch_size} does not "
                         f"match codec patch size {patch_size}")
    return pca_basis, pca_basis.truncated(min(pca_basis.num_components, chroma_m))


def _coeff_layout(k: int, m_luma: int, m_chroma: int) -> np.ndarray:
    """Coefficient indices for the (patch, channel Y/Cb/Cr, coeff) ordering."""
    one = np.concatenate([np.arange(m_luma), np.arange(m_chroma), np.arange(m_chroma)])
    return np.tile(one, k)


def compute_mask_plan(img, sem, strategy, rho, seed, mode, temperature,
                      patch_size) -> MaskPlan:
    """Scoring + sampling stage shared by encode and the scores command."""
    grid = PatchGrid(img.shape[0], img.shape[1], patch_size)
    texture = damask.texture_scores(damask.laplacian(rgb_to_gray(img)), grid)
    if sem is not None:
        structure = damask.structure_scores(damask.binarize(sem), grid)
    else:
        # documented fallback: damask degrades to the texture strategy
        structure = np.ones(grid.num_patches)
    info = damask.strategy_scores(strategy, texture, structure)
    alpha = damask.categorical(info, temperature)
    return damask.sample_visible(alpha, rho, seed, mode, strategy)


def encode(img: np.ndarray, sem=None, *, strategy: str = "damask",
           rho: float = 0.75, seed: int = 0, mode: str = "stochastic",
           quality: int = 5, basis_kind: str = "dct", pca_basis=None,
           temperature: float = damask.DEFAULT_TEMPERATURE,
           patch_size: int = DEFAULT_PATCH_SIZE) -> bytes:
    """Compress an RGB image into one .mcm byte sequence."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError("image must be an (H, W, 3) uint8 array")
    height, width = img.shape[:2]
    if width > 0xFFFF or height > 0xFFFF:
        raise ValueError(f"dimensions {width}x{height} exceed the 16-bit header fields")
    if sem is not None and sem.shape != (height, width):
        raise ValueError(f"semantic map {sem.shape} does not match image "
                         f"({height}, {width})")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    grid = PatchGrid(height, width, patch_size)
    rho_num, rho_den = snap_rho(rho)
    temp_q8 = snap_temperature(temperature)
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    spec = latent.QuantSpec.from_quality(quality)

    plan = compute_mask_plan(img, sem, strategy, rho_num / rho_den, seed, mode,
                             temp_q8 / 256.0, patch_size)
    bits = np.zeros(grid.num_patches, dtype=bool)
    bits[plan.visible] = True
    record = encode_position_record(bits)

    basis_y, basis_c = _channel_bases(basis_kind, patch_size, pca_basis)
    planes = ycbcr_forward(img)
    k = plan.k
    per_channel = []
    for plane, basis in zip(planes, (basis_y, basis_c, basis_c)):
        patches = patchify(plane, grid)[plan.visible].reshape(k, -1)
        coeffs = latent.forward_transform(patches, basis)
        per_channel.append(latent.quantize(coeffs, spec))
    q_flat = np.concatenate(per_channel, axis=1).reshape(-1)
    layout = _coeff_layout(k, basis_y.num_components, basis_c.num_components)
    payload = latent.encode_coeff_stream(q_flat, layout)

    header = Header(width=width, height=height, patch_size=patch_size,
                    strategy=strategy, mode=mode, rho_num=rho_num,
                    rho_den=rho_den, k_visible=k, quality=quality,
                    basis_kind=basis_kind, temperature_q8=temp_q8,
                    seed=seed,
                    len_record=len(record), len_latent=len(payload))
    return header.pack() + record + payload


def decode(data: bytes, pca_basis=None, tol: float = inpaint.DEFAULT_TOL,
           max_iters: int = inpaint.DEFAULT_MAX_ITERS) -> np.ndarray:
    """Reconstruct an RGB image from a .mcm byte sequence."""
    header = Header.parse(data)
    grid = header.grid
    end_record = HEADER_SIZE + header.len_record
    end_latent = end_record + header.len_latent
    if len(data) < end_latent:
        raise CorruptionError(f"stream truncated: {len(data)} bytes, header "
                              f"declares {end_latent}")
    record_payload = data[HEADER_SIZE:end_record]
    latent_payload = data[end_record:end_latent]

    bits = decode_position_record(record_payload, grid.num_patches)
    if int(bits.sum()) != header.k_visible:
        raise CorruptionError(f"position record popcount {int(bits.sum())} "
                              f"differs from header k_visible {header.k_visible}")
    visible = np.flatnonzero(bits)

    basis_y, basis_c = _channel_bases(header.basis_kind, header.patch_size,
                                      pca_basis)
    spec = latent.QuantSpec.from_quality(header.quality)
    k = header.k_visible
    m_y, m_c = basis_y.num_components, basis_c.num_components
    layout = _coeff_layout(k, m_y, m_c)
    q_flat = latent.decode_coeff_stream(latent_payload, layout)
    q_rows = q_flat.reshape(k, m_y + 2 * m_c)

    mask = inpaint.visibility_mask(visible, grid)
    n = header.patch_size
    planes_out = []
    offsets = [(0, m_y, basis_y), (m_y, m_y + m_c, basis_c),
               (m_y + m_c, m_y + 2 * m_c, basis_c)]
    for lo, hi, basis in offsets:
        coeffs = latent.dequantize(q_rows[:, lo:hi], spec)
        flat = latent.inverse_transform(coeffs, basis)
        patches = np.zeros((grid.num_patches, n, n))
        patches[visible] = flat.reshape(k, n, n)
        plane = unpatchify(patches, grid)
        planes_out.append(inpaint.harmonic_fill(plane, mask, tol, max_iters))
    return ycbcr_inverse(*planes_out)


def measured_bpp(data: bytes) -> float:
    """8 * byte length / pixel count; header and record bits included."""
    header = Header.parse(data)
    return 8.0 * len(data) / (header.width * header.height)
