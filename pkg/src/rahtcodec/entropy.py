"""Residual coding: quantizer, zero-run RLE, binarization, arithmetic coder.

A payload is one scale's quantized coefficients for one channel.  Coding
stack, normatively documented in docs/bitstream.md:

  1. quantize: q = sign(r) * floor(|r| / qs + 0.5)
  2. zero runs: (run, value) entries; zeros after the last value are
     coded as one final run whose span reaches the sequence end, which
     the decoder recognizes because it knows the element count
  3. binarize: runs through a unary -> truncated-Rice -> exp-Golomb
     cascade (U = 3, k = 2, limit 16); values as sign + EG0(|v| - 1)
  4. adaptive binary arithmetic coding with 7 contexts: run prefix
     depths 0-3, sign, first two value-magnitude prefix bins; all other
     bins bypass

This module holds the reference implementation used by the tests; the
byte-identical fused loops behind :func:`encode_payload` and
:func:`decode_payload` live in ``_kernels``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import (  # single source of the format constants
    BYPASS,
    COUNT_RESCALE,
    CTX_RUN,
    CTX_SIGN,
    CTX_VMAG,
    N_CONTEXTS,
    RICE_K,
    RICE_LIMIT,
    RICE_PREFIX_MAX,
    RUN_UNARY_MAX,
)
from .errors import BitstreamError

_TOP = 0xFFFFFFFF
_HALF = 0x80000000
_QUARTER = 0x40000000
_THREEQ = 0xC0000000


# ---------------------------------------------------------------------------
# Quantizer

def quantize(values: np.ndarray, qs) -> np.ndarray:
    """Uniform quantizer, half away from zero.  Returns int64 indices.

    ``qs`` may be a scalar or broadcast per channel.
    """
    if np.any(np.asarray(qs) <= 0):
        raise ValueError("quantization step must be positive")
    v = np.asarray(values, dtype=np.float64)
    return (np.sign(v) * np.floor(np.abs(v) / qs + 0.5)).astype(np.int64)


def dequantize(q: np.ndarray, qs) -> np.ndarray:
    if np.any(np.asarray(qs) <= 0):
        raise ValueError("quantization step must be positive")
    return np.asarray(q, dtype=np.float64) * qs


@dataclass
class QuantConfig:
    """Per-channel quantization steps."""

    steps: tuple

    def __post_init__(self):
        self.steps = tuple(float(s) for s in self.steps)
        if not self.steps or any(s <= 0 for s in self.steps):
            raise ValueError("steps must be positive")


# ---------------------------------------------------------------------------
# Zero-run RLE

@dataclass
class RunLengthStream:
    """(run, value) entries plus trailing zeros; ``length`` is the total
    element count the entries expand to."""

    runs: np.ndarray
    values: np.ndarray
    trailing_zeros: int
    length: int


def rle_encode(values) -> RunLengthStream:
    v = np.asarray(values, dtype=np.int64)
    if v.ndim != 1:
        raise ValueError("expected a 1-D integer sequence")
    nz = np.flatnonzero(v)
    runs = np.diff(nz, prepend=-1) - 1
    trailing = len(v) - (int(nz[-1]) + 1) if len(nz) else len(v)
    return RunLengthStream(runs=runs.astype(np.int64), values=v[nz],
                           trailing_zeros=int(trailing), length=len(v))


def rle_decode(stream: RunLengthStream) -> np.ndarray:
    out = np.zeros(stream.length, dtype=np.int64)
    if len(stream.runs):
        idx = np.cumsum(stream.runs + 1) - 1
        if len(idx) and (idx[-1] + stream.trailing_zeros + 1) != stream.length:
            raise ValueError("run lengths do not sum to the declared length")
        if np.any(stream.values == 0):
            raise ValueError("zero value inside an RLE entry")
        out[idx] = stream.values
    elif stream.trailing_zeros != stream.length:
        raise ValueError("run lengths do not sum to the declared length")
    return out


# ---------------------------------------------------------------------------
# Binarization (reference, bit strings)

def _eg0_bits(u: int) -> str:
    nb = (u + 1).bit_length()
    body = bin(u + 1)[2:]
    return "0" * (nb - 1) + body


def _parse_eg0(bits: str, pos: int):
    z = 0
    while bits[pos + z] == "0":
        z += 1
    pos += z + 1
    val = 1
    for _ in range(z):
        val = (val << 1) | (bits[pos] == "1")
        pos += 1
    return val - 1, pos


def binarize_run(run: int) -> str:
    """Cascade codeword for a zero-run length (prefix-free over all runs)."""
    if run < 0:
        raise ValueError("negative run")
    if run < RUN_UNARY_MAX:
        return "1" * run + "0"
    v = run - RUN_UNARY_MAX
    if v < RICE_LIMIT:
        p = v >> RICE_K
        suffix = format(v & ((1 << RICE_K) - 1), f"0{RICE_K}b")
        return "1" * RUN_UNARY_MAX + "1" * p + "0" + suffix
    return "1" * RUN_UNARY_MAX + "1" * RICE_PREFIX_MAX + _eg0_bits(v - RICE_LIMIT)


def parse_run(bits: str, pos: int = 0):
    """Inverse of :func:`binarize_run`; returns (run, next position)."""
    ones = 0
    while ones < RUN_UNARY_MAX and bits[pos + ones] == "1":
        ones += 1
    pos += ones
    if ones < RUN_UNARY_MAX:
        return ones, pos + 1
    p = 0
    while p < RICE_PREFIX_MAX and bits[pos + p] == "1":
        p += 1
    pos += p
    if p < RICE_PREFIX_MAX:
        pos += 1  # prefix terminator
        suffix = 0
        for _ in range(RICE_K):
            suffix = (suffix << 1) | (bits[pos] == "1")
            pos += 1
        return RUN_UNARY_MAX + ((p << RICE_K) | suffix), pos
    u, pos = _parse_eg0(bits, pos)
    return RUN_UNARY_MAX + RICE_LIMIT + u, pos


def binarize_value(value: int) -> str:
    """Sign bit (1 = negative) then EG0 of |value| - 1.  Zero is invalid."""
    if value == 0:
        raise ValueError("zero is not a codable value")
    sign = "1" if value < 0 else "0"
    return sign + _eg0_bits(abs(value) - 1)


def parse_value(bits: str, pos: int = 0):
    neg = bits[pos] == "1"
    u, pos = _parse_eg0(bits, pos + 1)
    return (-(u + 1) if neg else u + 1), pos


def payload_bins(q) -> tuple:
    """Reference binarization of a whole payload.

    Expands the RLE symbol stream of ``q`` into (bins, contexts) where
    contexts use the module constants and ``BYPASS`` for equiprobable
    bins.  Context assignment: run prefix bin at depth d takes context
    CTX_RUN + min(d, 3) (the cascade's unary bins and the first Rice
    prefix bin); sign takes CTX_SIGN; the first two bins of the value
    EG prefix take CTX_VMAG, CTX_VMAG + 1; everything else is bypass.
    """
    q = np.asarray(q, dtype=np.int64)
    stream = rle_encode(q)
    bins, ctxs = [], []

    def _run_sym(r):
        word = binarize_run(r)
        for i, ch in enumerate(word):
            bins.append(ch == "1")
            ctxs.append(CTX_RUN + min(i, 3) if i <= RUN_UNARY_MAX else BYPASS)

    def _val_sym(v):
        word = binarize_value(v)
        bins.append(word[0] == "1")
        ctxs.append(CTX_SIGN)
        z = 0
        while word[1 + z] == "0":
            z += 1
        for i, ch in enumerate(word[1:]):
            bins.append(ch == "1")
            ctxs.append(CTX_VMAG + i if (i <= z and i < 2) else BYPASS)

    consumed = 0
    for run, val in zip(stream.runs, stream.values):
        _run_sym(int(run))
        _val_sym(int(val))
        consumed += int(run) + 1
    if consumed < stream.length:
        _run_sym(stream.length - consumed)
    return np.array(bins, dtype=np.uint8), np.array(ctxs, dtype=np.int32)


# ---------------------------------------------------------------------------
# Adaptive binary arithmetic coder (reference)

class _BitSink:
    def __init__(self):
        self.bytes = bytearray()
        self.acc = 0
        self.nfill = 0

    def put(self, bit):
        self.acc = (self.acc << 1) | bit
        self.nfill += 1
        if self.nfill == 8:
            self.bytes.append(self.acc)
            self.acc = 0
            self.nfill = 0

    def flush(self):
        while self.nfill:
            self.put(0)


class _BitSource:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def get(self) -> int:
        byte_i, bit_i = self.pos >> 3, self.pos & 7
        self.pos += 1
        if byte_i >= len(self.data):
            return 0
        return (self.data[byte_i] >> (7 - bit_i)) & 1


class ArithmeticEncoder:
    """Binary range coder over 32-bit [low, high] with carry-pending bits.

    Contexts are (count0, count1) pairs starting at (1, 1), incremented
    after each coded bin and halved (floored at 1) when the total reaches
    2**15.  Bypass bins use a fixed (1, 1) split.
    """

    def __init__(self, n_contexts=N_CONTEXTS):
        self.c0 = [1] * n_contexts
        self.c1 = [1] * n_contexts
        self.low = 0
        self.high = _TOP
        self.pending = 0
        self.sink = _BitSink()
        self._coded = False

    def _out(self, bit):
        self.sink.put(bit)
        for _ in range(self.pending):
            self.sink.put(bit ^ 1)
        self.pending = 0

    def _renorm(self):
        while True:
            if self.high < _HALF:
                self._out(0)
            elif self.low >= _HALF:
                self._out(1)
                self.low -= _HALF
                self.high -= _HALF
            elif self.low >= _QUARTER and self.high < _THREEQ:
                self.pending += 1
                self.low -= _QUARTER
                self.high -= _QUARTER
            else:
                return
            self.low <<= 1
            self.high = (self.high << 1) | 1

    def encode(self, bit, ctx):
        if ctx == BYPASS:
            c0 = c1 = 1
        else:
            c0, c1 = self.c0[ctx], self.c1[ctx]
        rng = self.high - self.low + 1
        split = self.low + (rng * c0) // (c0 + c1) - 1
        if bit:
            self.low = split + 1
        else:
            self.high = split
        self._renorm()
        self._coded = True
        if ctx != BYPASS:
            if bit:
                self.c1[ctx] += 1
            else:
                self.c0[ctx] += 1
            if self.c0[ctx] + self.c1[ctx] >= COUNT_RESCALE:
                self.c0[ctx] = max(1, self.c0[ctx] >> 1)
                self.c1[ctx] = max(1, self.c1[ctx] >> 1)

    def finish(self) -> bytes:
        if not self._coded:
            return b""
        self.pending += 1
        self._out(0 if self.low < _QUARTER else 1)
        self.sink.flush()
        return bytes(self.sink.bytes)


class ArithmeticDecoder:
    """Mirror of :class:`ArithmeticEncoder`; reads zeros past the end."""

    def __init__(self, data: bytes, n_contexts=N_CONTEXTS):
        self.c0 = [1] * n_contexts
        self.c1 = [1] * n_contexts
        self.low = 0
        self.high = _TOP
        self.source = _BitSource(data)
        self.value = 0
        for _ in range(32):
            self.value = (self.value << 1) | self.source.get()

    def decode(self, ctx) -> int:
        if ctx == BYPASS:
            c0 = c1 = 1
        else:
            c0, c1 = self.c0[ctx], self.c1[ctx]
        rng = self.high - self.low + 1
        split = self.low + (rng * c0) // (c0 + c1) - 1
        bit = 1 if self.value > split else 0
        if bit:
            self.low = split + 1
        else:
            self.high = split
        while True:
            if self.high < _HALF:
                pass
            elif self.low >= _HALF:
                self.low -= _HALF
                self.high -= _HALF
                self.value -= _HALF
            elif self.low >= _QUARTER and self.high < _THREEQ:
                self.low -= _QUARTER
                self.high -= _QUARTER
                self.value -= _QUARTER
            else:
                break
            self.low <<= 1
            self.high = (self.high << 1) | 1
            self.value = (self.value << 1) | self.source.get()
        if ctx != BYPASS:
            if bit:
                self.c1[ctx] += 1
            else:
                self.c0[ctx] += 1
            if self.c0[ctx] + self.c1[ctx] >= COUNT_RESCALE:
                self.c0[ctx] = max(1, self.c0[ctx] >> 1)
                self.c1[ctx] = max(1, self.c1[ctx] >> 1)
        return bit


def arith_encode(bins, ctxs=None, n_contexts=N_CONTEXTS) -> bytes:
    """Encode a bin sequence; ``ctxs`` defaults to all bypass."""
    bins = np.asarray(bins, dtype=np.uint8)
    if ctxs is None:
        ctxs = np.full(len(bins), BYPASS, dtype=np.int32)
    enc = ArithmeticEncoder(n_contexts)
    for b, c in zip(bins, ctxs):
        enc.encode(int(b), int(c))
    return enc.finish()


def arith_decode(data: bytes, ctxs, n_contexts=N_CONTEXTS) -> np.ndarray:
    """Decode bins for a known context sequence."""
    dec = ArithmeticDecoder(data, n_contexts)
    return np.array([dec.decode(int(c)) for c in ctxs], dtype=np.uint8)


# ---------------------------------------------------------------------------
# Payload coding (fused fast path)

def encode_payload(q) -> bytes:
    """RLE + binarize + arithmetic-code one payload of int64 symbols."""
    q = np.ascontiguousarray(q, dtype=np.int64)
    if q.ndim != 1:
        raise ValueError("payload must be 1-D")
    if len(q) == 0:
        return b""
    out = _kernels.payload_encode(q)
    return out.tobytes()


def decode_payload(data: bytes, n: int) -> np.ndarray:
    """Decode ``n`` int64 symbols from one payload."""
    if n == 0:
        if data:
            raise BitstreamError("unexpected payload bytes for empty payload")
        return np.zeros(0, dtype=np.int64)
    buf = np.frombuffer(data, dtype=np.uint8)
    out, ok = _kernels.payload_decode(buf, n)
    if not ok:
        raise BitstreamError("corrupt payload")
    return out


# ---------------------------------------------------------------------------
# Rate proxy

@dataclass
class RateProxyParams:
    """Laplace bin-mass rate proxy: bits ~= alpha * sum(-log2 q(x))."""

    alpha: float = 0.425
    mu: float = 0.0
    sigma: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


DEFAULT_PROXY = RateProxyParams()


def estimate_bits(q, params: RateProxyParams = DEFAULT_PROXY) -> float:
    """Proxy for a payload's coded size from its quantized symbols.

    Models each symbol as an integer-bin mass of a Laplace density with
    scale ``sigma`` centered on ``mu``; the cross entropy is scaled by
    ``alpha`` to account for run-length coding beating the iid bound.
    Additive over symbols, hence permutation-invariant.
    """
    x = np.asarray(q, dtype=np.float64).ravel()
    if x.size == 0:
        return 0.0
    b = params.sigma
    if b <= 0:
        raise ValueError("sigma must be positive")
    t1 = x - 0.5 - params.mu
    t2 = x + 0.5 - params.mu
    log_half_gap = math.log(0.5) + math.log1p(-math.exp(-1.0 / b))
    straddle = (t1 < 0) & (t2 > 0)
    far = np.where(t1 >= 0, t1, -t2)
    with np.errstate(over="ignore"):
        log_q = np.where(straddle,
                         np.log(np.maximum(1.0 - 0.5 * np.exp(np.minimum(t1, 0) / b)
                                           - 0.5 * np.exp(np.minimum(-t2, 0) / b), 1e-300)),
                         -np.abs(far) / b + log_half_gap)
    return float(params.alpha * -(log_q.sum() / math.log(2)))
