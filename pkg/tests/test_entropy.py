import math

import numpy as np
import pytest

from mcm.entropy import (BitReader, BitWriter, FreqModel, HuffmanTable,
                         bitmap_to_runs, decode_position_record,
                         encode_position_record, huffman_build, huffman_decode,
                         huffman_encode, range_decode, range_encode,
                         range_decode_tokens, range_encode_tokens,
                         runs_to_bitmap)
from mcm.errors import CorruptionError


def shannon_bits(freqs):
    f = np.asarray(freqs, dtype=np.float64)
    p = f / f.sum()
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def test_bit_io_round_trip(rng):
    w = BitWriter()
    values = [(int(rng.integers(0, 1 << n)), n) for n in rng.integers(1, 17, 200)]
    for v, n in values:
        w.write(v, int(n))
    r = BitReader(w.getvalue(), w.bit_length)
    for v, n in values:
        assert r.read(int(n)) == v
    with pytest.raises(CorruptionError, match="truncated"):
        r.read(1)


def test_huffman_build_textbook_case():
    table = huffman_build([2, 1, 1])
    assert table.lengths.tolist() == [1, 2, 2]


def test_huffman_build_single_symbol():
    table = huffman_build([0, 5, 0])
    assert table.lengths.tolist() == [0, 1, 0]
    data, nbits = huffman_encode([1] * 7, table)
    assert nbits == 7
    assert huffman_decode(data, table, 7, nbits) == [1] * 7


def test_huffman_kraft_inequality(rng):
    for _ in range(50):
        n = int(rng.integers(2, 80))
        freqs = rng.integers(0, 1000, n)
        freqs[rng.integers(0, n)] += 1  # at least one nonzero
        table = huffman_build(freqs)
        assert table.kraft_sum() <= 1.0 + 1e-12


def test_huffman_build_rejects_bad_input():
    with pytest.raises(ValueError, match="all-zero"):
        huffman_build([0, 0])
    with pytest.raises(ValueError, match="negative"):
        huffman_build([1, -2])


def test_huffman_length_limit_fibonacci():
    # Fibonacci frequencies force maximal depth in an unconstrained tree
    fib = [1, 1]
    for _ in range(30):
        fib.append(fib[-1] + fib[-2])
    table = huffman_build(fib)
    assert table.lengths.max() <= 15
    assert table.kraft_sum() <= 1.0 + 1e-12
    syms = list(range(len(fib))) * 3
    data, nbits = huffman_encode(syms, table)
    assert huffman_decode(data, table, len(syms), nbits) == syms


def test_huffman_round_trip_random_streams(rng):
    for _ in range(60):
        n = int(rng.integers(2, 40))
        freqs = rng.integers(1, 50, n)
        table = huffman_build(freqs)
        syms = rng.integers(0, n, int(rng.integers(1, 300))).tolist()
        data, nbits = huffman_encode(syms, table)
        assert nbits == sum(int(table.lengths[s]) for s in syms)
        assert huffman_decode(data, table, len(syms), nbits) == syms


def test_huffman_canonical_regenerates_from_lengths(rng):
    freqs = rng.integers(1, 100, 30)
    table = huffman_build(freqs)
    clone = HuffmanTable(table.lengths.copy())
    assert clone.codes == table.codes


def test_huffman_encode_unknown_symbol():
    table = huffman_build([1, 1])
    with pytest.raises(ValueError, match="no code"):
        huffman_encode([2], table)


def test_huffman_decode_truncated():
    table = huffman_build([1, 1, 1, 1])
    data, nbits = huffman_encode([0, 1, 2, 3], table)
    with pytest.raises(CorruptionError):
        huffman_decode(data, table, 5, nbits)


def test_huffman_near_entropy(rng):
    freqs = np.array([60, 20, 10, 6, 3, 1])
    table = huffman_build(freqs)
    n = 10_000
    syms = rng.choice(len(freqs), size=n, p=freqs / freqs.sum())
    _, nbits = huffman_encode(syms.tolist(), table)
    h = shannon_bits(freqs)
    assert nbits <= (h + 1.0) * n + 16


# ---------------------------------------------------------------------------
# position record


def test_runs_round_trip_long_runs():
    bits = np.zeros(700, dtype=bool)
    bits[600:] = True
    tokens = bitmap_to_runs(bits)
    assert max(tokens) <= 255
    assert np.array_equal(runs_to_bitmap(tokens, 700), bits)


def test_runs_leading_one():
    bits = np.array([True, False, True])
    assert bitmap_to_runs(bits) == [0, 1, 1, 1]


def test_position_record_all_visible_raw():
    bits = np.ones(256, dtype=bool)
    payload = encode_position_record(bits)
    assert payload[0] == 0  # raw mode
    assert len(payload) == 1 + 32
    assert np.array_equal(decode_position_record(payload, 256), bits)


def test_position_record_exhaustive_small():
    for value in range(1 << 12):
        bits = np.array([(value >> i) & 1 for i in range(12)], dtype=bool)
        payload = encode_position_record(bits)
        assert np.array_equal(decode_position_record(payload, 12), bits)


def test_position_record_random_l256(rng):
    for _ in range(500):
        bits = rng.random(256) < rng.uniform(0.05, 0.95)
        payload = encode_position_record(bits)
        assert np.array_equal(decode_position_record(payload, 256), bits)
        assert len(payload) <= 32 + 2  # never beats raw by the minimality rule


def test_position_record_rle_wins_on_large_clustered():
    # clustered visibility on a big grid: runs compress far below the raw bitmap
    bits = np.zeros(8192, dtype=bool)
    bits[:2048] = True
    payload = encode_position_record(bits)
    assert payload[0] == 1  # RLE mode
    assert len(payload) < 1 + 1024
    assert np.array_equal(decode_position_record(payload, 8192), bits)


def test_position_record_rle_random_large(rng):
    for density in (0.02, 0.5, 0.9):
        bits = rng.random(4096) < density
        payload = encode_position_record(bits)
        assert len(payload) <= 1 + 512 + 1
        assert np.array_equal(decode_position_record(payload, 4096), bits)


def test_position_record_errors():
    bits = np.ones(64, dtype=bool)
    payload = encode_position_record(bits)
    with pytest.raises(CorruptionError, match="shorter"):
        decode_position_record(payload[:4], 64)
    with pytest.raises(CorruptionError, match="mode"):
        decode_position_record(b"\x07" + payload[1:], 64)
    with pytest.raises(CorruptionError):
        decode_position_record(b"", 64)


# ---------------------------------------------------------------------------
# range coder


def test_range_coder_round_trip_five_sources(rng):
    sources = [
        rng.integers(0, 256, 4000),                     # uniform byte
        rng.choice(2, 4000, p=[0.99, 0.01]),            # skewed binary
        rng.geometric(0.3, 4000).clip(max=63) - 1,      # geometric over 64
        np.where(rng.random(4000) < 0.5, 0, 15),        # two spikes in 16
        np.zeros(4000, dtype=np.int64),                 # constant
    ]
    alphabets = [256, 2, 64, 16, 4]
    for syms, n in zip(sources, alphabets):
        model = FreqModel(alphabet_size=n)
        data = range_encode(syms, model)
        out = range_decode(data, FreqModel(alphabet_size=n), len(syms))
        assert np.array_equal(out, np.asarray(syms))


def test_range_coder_adversarial_patterns():
    patterns = [
        np.zeros(2000, dtype=np.int64),
        np.tile([0, 1], 1000),
        np.concatenate([np.zeros(1000, dtype=np.int64), np.ones(1000, dtype=np.int64)]),
    ]
    for syms in patterns:
        model = FreqModel(alphabet_size=2)
        data = range_encode(syms, model)
        assert np.array_equal(range_decode(data, FreqModel(2), len(syms)), syms)


def test_range_coder_uniform_near_shannon(rng):
    n = 100_000
    syms = rng.integers(0, 256, n)
    data = range_encode(syms, FreqModel(alphabet_size=256))
    assert len(data) <= 1.02 * n + 64  # H = 8 bits/symbol


def test_range_coder_skewed_within_5_percent(rng):
    n = 100_000
    p0 = 0.99
    syms = (rng.random(n) >= p0).astype(np.int64)
    h = -(p0 * math.log2(p0) + (1 - p0) * math.log2(1 - p0))
    data = range_encode(syms, FreqModel(alphabet_size=2))
    ideal = h * n / 8
    assert len(data) <= ideal * 1.05 + 64
    assert len(data) >= ideal * 0.9  # sanity: not magically below entropy


def test_range_coder_multicontext_interleaved(rng):
    models = [FreqModel(4), FreqModel(16), FreqModel(2)]
    ctx = rng.integers(0, 3, 5000)
    syms = np.array([rng.integers(0, models[c].alphabet_size) for c in ctx])
    data = range_encode_tokens(ctx, syms, models)
    out = range_decode_tokens(ctx, data, models)
    assert np.array_equal(out, syms)


def test_range_coder_truncated_stream(rng):
    syms = rng.integers(0, 16, 3000)
    data = range_encode(syms, FreqModel(16))
    with pytest.raises(CorruptionError, match="truncated"):
        range_decode(data[: len(data) // 2], FreqModel(16), len(syms))


def test_range_coder_rescale_path():
    # hammer one context hard enough to cross the rescale threshold repeatedly
    syms = np.zeros(300_000, dtype=np.int64)
    syms[::7] = 1
    model = FreqModel(alphabet_size=2, increment=32)
    data = range_encode(syms, model)
    assert np.array_equal(range_decode(data, FreqModel(2, 32), len(syms)), syms)


def test_freq_model_validation():
    with pytest.raises(ValueError):
        FreqModel(alphabet_size=1)
    with pytest.raises(ValueError):
        FreqModel(alphabet_size=4, increment=0)
    m = FreqModel(alphabet_size=16)
    assert m.rescale_limit == (1 << 16) - 16
    assert m.initial_counts().tolist() == [1] * 16
