"""Bit-level coders: canonical Huffman and an adaptive range coder.

The position record (one visibility bit per patch) travels as either a raw
bitmap or Huffman-coded run lengths, whichever is smaller. Quantized
transform coefficients travel through a 32-bit carry-less range coder
driven by per-context adaptive frequency models; encoder and decoder build
identical initial models and update them identically per symbol, so no
model state is ever transmitted.

Byte order is big-endian throughout; Huffman bits are packed MSB-first.
"""

from dataclasses import dataclass
from heapq import heappush, heappop

import numpy as np

from ._accel import maybe_njit
from .errors import CorruptionError

MAX_CODE_LENGTH = 15

# range coder constants (Subbotin-style carry-less renormalization)
_RC_TOP = 1 << 24
_RC_BOT = 1 << 16
_RC_MASK = (1 << 32) - 1


class BitWriter:
    """MSB-first bit packer."""

    def __init__(self):
        self._bytes = bytearray()
        self._acc = 0
        self._nbits = 0

    def write(self, value: int, nbits: int):
        for shift in range(nbits - 1, -1, -1):
            self._acc = (self._acc << 1) | ((value >> shift) & 1)
            self._nbits += 1
            if self._nbits == 8:
                self._bytes.append(self._acc)
                self._acc = 0
                self._nbits = 0

    @property
    def bit_length(self) -> int:
        return 8 * len(self._bytes) + self._nbits

    def getvalue(self) -> bytes:
        """Zero-pad to a byte boundary and return the buffer."""
        out = bytearray(self._bytes)
        if self._nbits:
            out.append(self._acc << (8 - self._nbits))
        return bytes(out)


class BitReader:
    """MSB-first bit reader with end-of-data detection."""

    def __init__(self, data: bytes, bit_length=None):
        self._data = data
        self._limit = 8 * len(data) if bit_length is None else bit_length
        self._pos = 0

    def read(self, nbits: int) -> int:
        if self._pos + nbits > self._limit:
            raise CorruptionError("bit stream truncated")
        value = 0
        for _ in range(nbits):
            byte = self._data[self._pos >> 3]
            value = (value << 1) | ((byte >> (7 - (self._pos & 7))) & 1)
            self._pos += 1
        return value

    @property
    def bits_left(self) -> int:
        return self._limit - self._pos


# ---------------------------------------------------------------------------
# canonical Huffman


@dataclass(frozen=True)
class HuffmanTable:
    """Prefix code defined entirely by its per-symbol code lengths."""

    lengths: np.ndarray  # one entry per symbol; 0 = symbol absent

    def __post_init__(self):
        lengths = np.asarray(self.lengths, dtype=np.int64)
        object.__setattr__(self, "lengths", lengths)
        if lengths.max(initial=0) > MAX_CODE_LENGTH:
            raise ValueError(f"code length exceeds {MAX_CODE_LENGTH}")
        used = lengths > 0
        if not used.any():
            raise ValueError("table has no coded symbols")
        if np.sum(np.power(2.0, -lengths[used])) > 1.0 + 1e-12:
            raise ValueError("code lengths violate the Kraft inequality")
        object.__setattr__(self, "codes", _canonical_codes(lengths))

    def kraft_sum(self) -> float:
        used = self.lengths > 0
        return float(np.sum(np.power(2.0, -self.lengths[used].astype(np.float64))))


def _canonical_codes(lengths: np.ndarray) -> dict:
    """Assign the unique lexicographic canonical codes for given lengths."""
    order = sorted(np.flatnonzero(lengths > 0), key=lambda s: (lengths[s], s))
    codes = {}
    code = 0
    prev_len = lengths[order[0]]
    for i, sym in enumerate(order):
        if i:
            code = (code + 1) << (lengths[sym] - prev_len)
            prev_len = lengths[sym]
        codes[int(sym)] = code
    return codes


def _limit_lengths(lengths: np.ndarray, freqs: np.ndarray, limit: int) -> np.ndarray:
    """Rebalance a length histogram so no code exceeds `limit` bits."""
    counts = np.bincount(lengths[lengths > 0], minlength=lengths.max() + 1)
    for l in range(len(counts) - 1, limit, -1):
        while counts[l] > 0:
            j = l - 2
            while counts[j] == 0:
                j -= 1
            counts[l] -= 2
            counts[l - 1] += 1
            counts[j + 1] += 2
            counts[j] -= 1
    # hand the shortest codes to the most frequent symbols
    symbols = sorted(np.flatnonzero(lengths > 0), key=lambda s: (-freqs[s], s))
    out = np.zeros_like(lengths)
    idx = 0
    for l in range(1, limit + 1):
        for _ in range(counts[l] if l < len(counts) else 0):
            out[symbols[idx]] = l
            idx += 1
    return out


def huffman_build(freqs) -> HuffmanTable:
    """Optimal prefix-code lengths (capped at 15 bits), canonical codes."""
    freqs = np.asarray(freqs, dtype=np.int64)
    if freqs.ndim != 1 or freqs.size == 0:
        raise ValueError("frequency table must be a non-empty vector")
    if (freqs < 0).any():
        raise ValueError("negative frequency")
    active = np.flatnonzero(freqs > 0)
    if active.size == 0:
        raise ValueError("all-zero frequency table")
    lengths = np.zeros(freqs.size, dtype=np.int64)
    if active.size == 1:
        lengths[active[0]] = 1
        return HuffmanTable(lengths)
    heap = []
    for order, sym in enumerate(active):
        heappush(heap, (int(freqs[sym]), order, [int(sym)]))
    order = active.size
    while len(heap) > 1:
        w1, _, s1 = heappop(heap)
        w2, _, s2 = heappop(heap)
        for sym in s1 + s2:
            lengths[sym] += 1
        heappush(heap, (w1 + w2, order, s1 + s2))
        order += 1
    if lengths.max() > MAX_CODE_LENGTH:
        lengths = _limit_lengths(lengths, freqs, MAX_CODE_LENGTH)
    return HuffmanTable(lengths)


def huffman_encode(symbols, table: HuffmanTable):
    """Encode a symbol sequence; returns (payload bytes, exact bit count)."""
    w = BitWriter()
    lengths = table.lengths
    codes = table.codes
    for s in symbols:
        s = int(s)
        if s < 0 or s >= lengths.size or lengths[s] == 0:
            raise ValueError(f"symbol {s} has no code")
        w.write(codes[s], int(lengths[s]))
    return w.getvalue(), w.bit_length


def _decode_tables(table: HuffmanTable):
    """Canonical decode structures: per-length first code/index + symbol order."""
    lengths = table.lengths
    max_len = int(lengths.max())
    first_code = [0] * (max_len + 1)
    first_sym = [0] * (max_len + 1)
    n_at = [0] * (max_len + 1)
    ordered = sorted(np.flatnonzero(lengths > 0), key=lambda s: (lengths[s], s))
    for i, sym in enumerate(ordered):
        l = int(lengths[sym])
        if n_at[l] == 0:
            first_code[l] = table.codes[int(sym)]
            first_sym[l] = i
        n_at[l] += 1
    return max_len, first_code, first_sym, n_at, ordered


def _read_symbol(reader: BitReader, max_len, first_code, first_sym, n_at, ordered):
    code = 0
    l = 0
    while True:
        code = (code << 1) | reader.read(1)
        l += 1
        if l > max_len:
            raise CorruptionError("invalid Huffman code in stream")
        if n_at[l] and code - first_code[l] < n_at[l]:
            return int(ordered[first_sym[l] + code - first_code[l]])


def huffman_decode(data: bytes, table: HuffmanTable, count: int, bit_length=None):
    """Decode exactly `count` symbols; raises CorruptionError on truncation."""
    reader = BitReader(data, bit_length)
    tables = _decode_tables(table)
    return [_read_symbol(reader, *tables) for _ in range(count)]


# ---------------------------------------------------------------------------
# position record

_RECORD_RAW = 0
_RECORD_RLE = 1
_RUN_ALPHABET = 256


def bitmap_to_runs(bits: np.ndarray) -> list:
    """Alternating run lengths starting with the run of 0s.

    Runs longer than 255 are split into 255-chunks separated by zero-length
    runs of the opposite bit, so every token fits one symbol.
    """
    bits = np.asarray(bits, dtype=bool)
    tokens = []
    expect = False  # current run's bit value
    i = 0
    n = bits.size
    while i < n:
        j = i
        while j < n and bits[j] == expect:
            j += 1
        run = j - i
        while run > 255:
            tokens.append(255)
            tokens.append(0)
            run -= 255
        tokens.append(run)
        expect = not expect
        i = j
    return tokens


def runs_to_bitmap(tokens, length: int) -> np.ndarray:
    bits = np.zeros(length, dtype=bool)
    pos = 0
    value = False
    for run in tokens:
        if pos + run > length:
            raise CorruptionError("run lengths overflow the bitmap")
        if value:
            bits[pos : pos + run] = True
        pos += run
        value = not value
    if pos != length:
        raise CorruptionError("run lengths underflow the bitmap")
    return bits


def encode_position_record(bits: np.ndarray) -> bytes:
    """Pack an L-bit visibility bitmap; picks min(raw, RLE+Huffman).

    Payload layout: [1 byte mode][raw: ceil(L/8) bytes, bit l at byte l/8
    MSB-first] or [RLE: 256 packed 4-bit code lengths, then the Huffman-coded
    run stream zero-padded to a byte].
    """
    bits = np.asarray(bits, dtype=bool)
    raw = bytes([_RECORD_RAW]) + np.packbits(bits).tobytes()
    # the 128-byte length table makes RLE a dead loss for small bitmaps
    if len(raw) <= 1 + 129:
        return raw
    tokens = bitmap_to_runs(bits)
    freqs = np.bincount(tokens, minlength=_RUN_ALPHABET)
    table = huffman_build(freqs)
    nibbles = bytearray()
    for i in range(0, _RUN_ALPHABET, 2):
        nibbles.append((int(table.lengths[i]) << 4) | int(table.lengths[i + 1]))
    stream, _ = huffman_encode(tokens, table)
    rle = bytes([_RECORD_RLE]) + bytes(nibbles) + stream
    return rle if len(rle) < len(raw) else raw


def decode_position_record(payload: bytes, length: int) -> np.ndarray:
    """Exact inverse of encode_position_record for a known bitmap length."""
    if len(payload) < 1:
        raise CorruptionError("empty position record payload")
    mode = payload[0]
    body = payload[1:]
    if mode == _RECORD_RAW:
        need = (length + 7) // 8
        if len(body) < need:
            raise CorruptionError("position record payload shorter than declared")
        unpacked = np.unpackbits(np.frombuffer(body[:need], dtype=np.uint8))
        if unpacked[length:].any():
            raise CorruptionError("nonzero padding bits in position record")
        return unpacked[:length].astype(bool)
    if mode == _RECORD_RLE:
        if len(body) < _RUN_ALPHABET // 2:
            raise CorruptionError("position record payload shorter than declared")
        lengths = np.zeros(_RUN_ALPHABET, dtype=np.int64)
        for i in range(_RUN_ALPHABET // 2):
            lengths[2 * i] = body[i] >> 4
            lengths[2 * i + 1] = body[i] & 0x0F
        table = HuffmanTable(lengths)
        tokens = _decode_runs(body[_RUN_ALPHABET // 2 :], table, length)
        return runs_to_bitmap(tokens, length)
    raise CorruptionError(f"unknown position record mode {mode}")


def _decode_runs(data: bytes, table: HuffmanTable, length: int) -> list:
    """Decode run tokens until they cover the whole bitmap."""
    reader = BitReader(data)
    tables = _decode_tables(table)
    tokens = []
    covered = 0
    while covered < length:
        run = _read_symbol(reader, *tables)
        tokens.append(run)
        covered += run
    if covered != length:
        raise CorruptionError("run lengths overflow the bitmap")
    return tokens


# ---------------------------------------------------------------------------
# adaptive range coder


@dataclass(frozen=True)
class FreqModel:
    """Adaptive frequency model spec for one coding context.

    Counts start at 1 per symbol and grow by `increment` each time a symbol
    is coded; when the context total reaches 2^16 - alphabet_size all counts
    are halved (floor, clamped at 1) to keep 32-bit coder arithmetic safe.
    """

    alphabet_size: int
    increment: int = 32

    def __post_init__(self):
        if self.alphabet_size < 2:
            raise ValueError("alphabet must have at least 2 symbols")
        if self.increment < 1:
            raise ValueError("increment must be positive")
        if self.alphabet_size + self.increment >= _RC_BOT:
            raise ValueError("alphabet too large for 16-bit frequency totals")

    @property
    def rescale_limit(self) -> int:
        return _RC_BOT - self.alphabet_size

    def initial_counts(self) -> np.ndarray:
        return np.ones(self.alphabet_size, dtype=np.int64)


def build_count_bank(models) -> tuple:
    """Stack per-context count arrays into the layout the kernels use."""
    sizes = np.array([m.alphabet_size for m in models], dtype=np.int64)
    incs = np.array([m.increment for m in models], dtype=np.int64)
    counts = np.zeros((len(models), int(sizes.max())), dtype=np.int64)
    for i, m in enumerate(models):
        counts[i, : m.alphabet_size] = 1
    return counts, sizes, incs


@maybe_njit
def _rc_enc_step(low, rng, out, pos, counts, sizes, incs, ctx, sym):
    n = sizes[ctx]
    tot = 0
    for i in range(n):
        tot += counts[ctx, i]
    cum = 0
    for i in range(sym):
        cum += counts[ctx, i]
    freq = counts[ctx, sym]
    r = rng // tot
    low = low + r * cum
    rng = r * freq
    while True:
        if (low ^ (low + rng)) < _RC_TOP:
            pass
        elif rng < _RC_BOT:
            rng = _RC_BOT - (low & (_RC_BOT - 1))
        else:
            break
        out[pos] = (low >> 24) & 0xFF
        pos += 1
        low = (low << 8) & _RC_MASK
        rng = rng << 8
    counts[ctx, sym] += incs[ctx]
    if tot + incs[ctx] >= _RC_BOT - n:
        for i in range(n):
            half = counts[ctx, i] >> 1
            counts[ctx, i] = half if half > 0 else 1
    return low, rng, pos


@maybe_njit
def _rc_enc_flush(low, out, pos):
    for _ in range(4):
        out[pos] = (low >> 24) & 0xFF
        pos += 1
        low = (low << 8) & _RC_MASK
    return pos


@maybe_njit
def _rc_dec_init(data):
    code = 0
    pos = 0
    ok = 1
    for _ in range(4):
        if pos < data.size:
            code = (code << 8) | int(data[pos])
            pos += 1
        else:
            code = code << 8
            ok = 0
    return code, pos, ok


@maybe_njit
def _rc_dec_step(low, rng, code, data, pos, ok, counts, sizes, incs, ctx):
    n = sizes[ctx]
    tot = 0
    for i in range(n):
        tot += counts[ctx, i]
    r = rng // tot
    dv = (code - low) // r
    if dv > tot - 1:
        dv = tot - 1
    cum = 0
    sym = 0
    while cum + counts[ctx, sym] <= dv:
        cum += counts[ctx, sym]
        sym += 1
    freq = counts[ctx, sym]
    low = low + r * cum
    rng = r * freq
    while True:
        if (low ^ (low + rng)) < _RC_TOP:
            pass
        elif rng < _RC_BOT:
            rng = _RC_BOT - (low & (_RC_BOT - 1))
        else:
            break
        if pos < data.size:
            code = ((code << 8) & _RC_MASK) | int(data[pos])
            pos += 1
        else:
            code = (code << 8) & _RC_MASK
            ok = 0
        low = (low << 8) & _RC_MASK
        rng = rng << 8
    counts[ctx, sym] += incs[ctx]
    if tot + incs[ctx] >= _RC_BOT - n:
        for i in range(n):
            half = counts[ctx, i] >> 1
            counts[ctx, i] = half if half > 0 else 1
    return low, rng, code, pos, ok, sym


@maybe_njit
def _rc_encode_tokens(ctx_arr, sym_arr, counts, sizes, incs, out):
    low = np.int64(0)
    rng = np.int64(_RC_MASK)
    pos = 0
    for t in range(ctx_arr.size):
        low, rng, pos = _rc_enc_step(low, rng, out, pos, counts, sizes, incs,
                                     ctx_arr[t], sym_arr[t])
    return _rc_enc_flush(low, out, pos)


@maybe_njit
def _rc_decode_tokens(ctx_arr, data, counts, sizes, incs, out_syms):
    low = np.int64(0)
    rng = np.int64(_RC_MASK)
    code, pos, ok = _rc_dec_init(data)
    for t in range(ctx_arr.size):
        low, rng, code, pos, ok, sym = _rc_dec_step(
            low, rng, code, data, pos, ok, counts, sizes, incs, ctx_arr[t])
        out_syms[t] = sym
    return ok


def range_encode_tokens(ctx_arr: np.ndarray, sym_arr: np.ndarray, models) -> bytes:
    """Encode an interleaved multi-context token stream."""
    ctx_arr = np.ascontiguousarray(ctx_arr, dtype=np.int64)
    sym_arr = np.ascontiguousarray(sym_arr, dtype=np.int64)
    counts, sizes, incs = build_count_bank(models)
    out = np.empty(5 * max(sym_arr.size, 1) + 16, dtype=np.uint8)
    n = _rc_encode_tokens(ctx_arr, sym_arr, counts, sizes, incs, out)
    return out[:n].tobytes()


def range_decode_tokens(ctx_arr: np.ndarray, data: bytes, models) -> np.ndarray:
    """Decode a token stream whose context sequence is known up front."""
    ctx_arr = np.ascontiguousarray(ctx_arr, dtype=np.int64)
    counts, sizes, incs = build_count_bank(models)
    buf = np.frombuffer(data, dtype=np.uint8)
    out = np.empty(ctx_arr.size, dtype=np.int64)
    ok = _rc_decode_tokens(ctx_arr, buf, counts, sizes, incs, out)
    if not ok:
        raise CorruptionError("range-coded stream truncated")
    return out


def range_encode(symbols, model: FreqModel) -> bytes:
    """Single-context convenience wrapper."""
    symbols = np.asarray(symbols, dtype=np.int64)
    if symbols.size and (symbols.min() < 0 or symbols.max() >= model.alphabet_size):
        raise ValueError("symbol outside model alphabet")
    ctx = np.zeros(symbols.size, dtype=np.int64)
    return range_encode_tokens(ctx, symbols, [model])


def range_decode(data: bytes, model: FreqModel, count: int) -> np.ndarray:
    ctx = np.zeros(count, dtype=np.int64)
    return range_decode_tokens(ctx, data, [model])
