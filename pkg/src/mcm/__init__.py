"""mcm: a masked-patch image codec for extremely low bitrates.

Encode picks a visible subset of 16x16 patches by texture/structure
scoring, transform-codes only those patches, and ships a Huffman-coded
patch-position record alongside range-coded latents; decode places the
visible patches and fills the rest by harmonic inpainting.
"""

from .codec import decode, encode, measured_bpp
from .errors import CorruptionError, FormatError

__all__ = ["encode", "decode", "measured_bpp", "FormatError", "CorruptionError"]
