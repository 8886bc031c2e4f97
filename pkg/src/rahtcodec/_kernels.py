"""Fused payload-coding loops.

Plain-Python integer code jitted with numba when available; without it
the same functions run interpreted and produce identical bytes.  The
logic mirrors the reference classes in ``entropy`` bit for bit (the
tests assert byte equality), so any change here must land there too.

Coder state travels in an int64 scratch array:

    st[0] low, st[1] high, st[2] pending bits, st[3] bit accumulator,
    st[4] accumulator fill, st[5] bytes written (encode) or bit cursor
    (decode), st[6] decoder value window
"""

import numpy as np

try:
    from numba import njit as _njit

    def _jit(func):
        return _njit(cache=True, nogil=True)(func)
except ImportError:  # pragma: no cover - numba is a declared dependency
    def _jit(func):
        return func

RUN_UNARY_MAX = 3
RICE_K = 2
RICE_LIMIT = 16
RICE_PREFIX_MAX = RICE_LIMIT >> RICE_K
CTX_RUN = 0
CTX_SIGN = 4
CTX_VMAG = 5
N_CONTEXTS = 7
BYPASS = -1
COUNT_RESCALE = 1 << 15

_TOP = 0xFFFFFFFF
_HALF = 0x80000000
_QUARTER = 0x40000000
_THREEQ = 0xC0000000


@_jit
def _emit(st, out, b):
    st[3] = (st[3] << 1) | b
    st[4] += 1
    if st[4] == 8:
        out[st[5]] = st[3]
        st[5] += 1
        st[3] = 0
        st[4] = 0


@_jit
def _enc_bit(st, out, c0, c1, bit, ctx):
    if ctx >= 0:
        a0 = c0[ctx]
        a1 = c1[ctx]
    else:
        a0 = np.int64(1)
        a1 = np.int64(1)
    rng = st[1] - st[0] + 1
    split = st[0] + (rng * a0) // (a0 + a1) - 1
    if bit != 0:
        st[0] = split + 1
    else:
        st[1] = split
    while True:
        if st[1] < _HALF:
            _emit(st, out, 0)
            while st[2] > 0:
                _emit(st, out, 1)
                st[2] -= 1
        elif st[0] >= _HALF:
            _emit(st, out, 1)
            while st[2] > 0:
                _emit(st, out, 0)
                st[2] -= 1
            st[0] -= _HALF
            st[1] -= _HALF
        elif st[0] >= _QUARTER and st[1] < _THREEQ:
            st[2] += 1
            st[0] -= _QUARTER
            st[1] -= _QUARTER
        else:
            break
        st[0] = st[0] << 1
        st[1] = (st[1] << 1) | 1
    if ctx >= 0:
        if bit != 0:
            c1[ctx] += 1
        else:
            c0[ctx] += 1
        if c0[ctx] + c1[ctx] >= COUNT_RESCALE:
            c0[ctx] = max(1, c0[ctx] >> 1)
            c1[ctx] = max(1, c1[ctx] >> 1)


@_jit
def _enc_eg0(st, out, c0, c1, u, ctxa, ctxb):
    nb = 1
    while (u + 1) >> nb:
        nb += 1
    z = nb - 1
    for i in range(z):
        ctx = ctxa if i == 0 else (ctxb if i == 1 else BYPASS)
        _enc_bit(st, out, c0, c1, 0, ctx)
    ctx = ctxa if z == 0 else (ctxb if z == 1 else BYPASS)
    _enc_bit(st, out, c0, c1, 1, ctx)
    for k in range(z - 1, -1, -1):
        _enc_bit(st, out, c0, c1, ((u + 1) >> k) & 1, BYPASS)


@_jit
def _enc_run(st, out, c0, c1, r):
    if r < RUN_UNARY_MAX:
        for i in range(r):
            _enc_bit(st, out, c0, c1, 1, CTX_RUN + i)
        _enc_bit(st, out, c0, c1, 0, CTX_RUN + r)
        return
    for i in range(RUN_UNARY_MAX):
        _enc_bit(st, out, c0, c1, 1, CTX_RUN + i)
    v = r - RUN_UNARY_MAX
    if v < RICE_LIMIT:
        pre = v >> RICE_K
        for i in range(pre):
            _enc_bit(st, out, c0, c1, 1, CTX_RUN + 3 if i == 0 else BYPASS)
        _enc_bit(st, out, c0, c1, 0, CTX_RUN + 3 if pre == 0 else BYPASS)
        for k in range(RICE_K - 1, -1, -1):
            _enc_bit(st, out, c0, c1, (v >> k) & 1, BYPASS)
        return
    for i in range(RICE_PREFIX_MAX):
        _enc_bit(st, out, c0, c1, 1, CTX_RUN + 3 if i == 0 else BYPASS)
    _enc_eg0(st, out, c0, c1, v - RICE_LIMIT, BYPASS, BYPASS)


@_jit
def _enc_val(st, out, c0, c1, v):
    if v < 0:
        _enc_bit(st, out, c0, c1, 1, CTX_SIGN)
        u = -v - 1
    else:
        _enc_bit(st, out, c0, c1, 0, CTX_SIGN)
        u = v - 1
    _enc_eg0(st, out, c0, c1, u, CTX_VMAG, CTX_VMAG + 1)


@_jit
def _bitlen(u):
    nb = 0
    while u >> nb:
        nb += 1
    return nb


@_jit
def _run_nbins(r):
    if r < RUN_UNARY_MAX:
        return r + 1
    v = r - RUN_UNARY_MAX
    if v < RICE_LIMIT:
        return RUN_UNARY_MAX + (v >> RICE_K) + 1 + RICE_K
    return RUN_UNARY_MAX + RICE_PREFIX_MAX + 2 * _bitlen(v - RICE_LIMIT + 1) - 1


@_jit
def payload_encode(q):
    n = q.shape[0]
    nbins = np.int64(0)
    entries = np.int64(0)
    i = 0
    while i < n:
        run = 0
        while i + run < n and q[i + run] == 0:
            run += 1
        nbins += _run_nbins(run)
        if i + run == n:
            break
        v = q[i + run]
        a = -v if v < 0 else v
        nbins += 2 * _bitlen(a)
        entries += 1
        i += run + 1

    cap = (nbins + 15 * (7 * entries + 8) + 128) // 8 + 16
    out = np.zeros(cap, dtype=np.uint8)
    st = np.zeros(8, dtype=np.int64)
    st[1] = _TOP
    c0 = np.ones(N_CONTEXTS, dtype=np.int64)
    c1 = np.ones(N_CONTEXTS, dtype=np.int64)

    pos = 0
    while pos < n:
        run = 0
        while pos + run < n and q[pos + run] == 0:
            run += 1
        _enc_run(st, out, c0, c1, run)
        if pos + run == n:
            break
        _enc_val(st, out, c0, c1, q[pos + run])
        pos += run + 1

    # finish: one disambiguating bit plus pending, then pad the byte
    st[2] += 1
    if st[0] < _QUARTER:
        _emit(st, out, 0)
        while st[2] > 0:
            _emit(st, out, 1)
            st[2] -= 1
    else:
        _emit(st, out, 1)
        while st[2] > 0:
            _emit(st, out, 0)
            st[2] -= 1
    while st[4] != 0:
        _emit(st, out, 0)
    return out[:st[5]]


@_jit
def _get_bit(st, data):
    i = st[5]
    st[5] += 1
    byte_i = i >> 3
    if byte_i >= data.shape[0]:
        return np.int64(0)
    return np.int64((data[byte_i] >> (7 - (i & 7))) & 1)


@_jit
def _dec_bit(st, data, c0, c1, ctx):
    if ctx >= 0:
        a0 = c0[ctx]
        a1 = c1[ctx]
    else:
        a0 = np.int64(1)
        a1 = np.int64(1)
    rng = st[1] - st[0] + 1
    split = st[0] + (rng * a0) // (a0 + a1) - 1
    if st[6] > split:
        bit = 1
        st[0] = split + 1
    else:
        bit = 0
        st[1] = split
    while True:
        if st[1] < _HALF:
            pass
        elif st[0] >= _HALF:
            st[0] -= _HALF
            st[1] -= _HALF
            st[6] -= _HALF
        elif st[0] >= _QUARTER and st[1] < _THREEQ:
            st[0] -= _QUARTER
            st[1] -= _QUARTER
            st[6] -= _QUARTER
        else:
            break
        st[0] = st[0] << 1
        st[1] = (st[1] << 1) | 1
        st[6] = (st[6] << 1) | _get_bit(st, data)
    if ctx >= 0:
        if bit != 0:
            c1[ctx] += 1
        else:
            c0[ctx] += 1
        if c0[ctx] + c1[ctx] >= COUNT_RESCALE:
            c0[ctx] = max(1, c0[ctx] >> 1)
            c1[ctx] = max(1, c1[ctx] >> 1)
    return bit


@_jit
def _dec_eg0(st, data, c0, c1, ctxa, ctxb):
    """Returns the decoded value, or -1 when the prefix overruns 62 zeros."""
    z = 0
    while True:
        ctx = ctxa if z == 0 else (ctxb if z == 1 else BYPASS)
        if _dec_bit(st, data, c0, c1, ctx) != 0:
            break
        z += 1
        if z > 62:
            return np.int64(-1)
    val = np.int64(1)
    for _ in range(z):
        val = (val << 1) | _dec_bit(st, data, c0, c1, BYPASS)
    return val - 1


@_jit
def _dec_run(st, data, c0, c1):
    ones = 0
    while ones < RUN_UNARY_MAX:
        if _dec_bit(st, data, c0, c1, CTX_RUN + ones) == 0:
            return np.int64(ones)
        ones += 1
    pre = 0
    while pre < RICE_PREFIX_MAX:
        ctx = CTX_RUN + 3 if pre == 0 else BYPASS
        if _dec_bit(st, data, c0, c1, ctx) == 0:
            break
        pre += 1
    if pre < RICE_PREFIX_MAX:
        suffix = np.int64(0)
        for _ in range(RICE_K):
            suffix = (suffix << 1) | _dec_bit(st, data, c0, c1, BYPASS)
        return np.int64(RUN_UNARY_MAX + ((pre << RICE_K) | suffix))
    u = _dec_eg0(st, data, c0, c1, BYPASS, BYPASS)
    if u < 0:
        return np.int64(-1)
    return np.int64(RUN_UNARY_MAX + RICE_LIMIT + u)


@_jit
def _dec_val(st, data, c0, c1):
    """Returns the decoded value; 0 signals corruption (never a legal value)."""
    neg = _dec_bit(st, data, c0, c1, CTX_SIGN)
    u = _dec_eg0(st, data, c0, c1, CTX_VMAG, CTX_VMAG + 1)
    if u < 0:
        return np.int64(0)
    return -(u + 1) if neg != 0 else u + 1


@_jit
def payload_decode(data, n):
    out = np.zeros(n, dtype=np.int64)
    st = np.zeros(8, dtype=np.int64)
    st[1] = _TOP
    c0 = np.ones(N_CONTEXTS, dtype=np.int64)
    c1 = np.ones(N_CONTEXTS, dtype=np.int64)
    for _ in range(32):
        st[6] = (st[6] << 1) | _get_bit(st, data)

    pos = 0
    while pos < n:
        r = _dec_run(st, data, c0, c1)
        if r < 0 or pos + r > n:
            return out, False
        if pos + r == n:
            break
        pos += r
        v = _dec_val(st, data, c0, c1)
        if v == 0:
            return out, False
        out[pos] = v
        pos += 1
    return out, True
