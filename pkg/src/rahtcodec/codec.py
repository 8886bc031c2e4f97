"""End-to-end attribute encode/decode and the bitstream container.

Coding runs top-down: the root sum is quantized directly, then for each
scale from coarsest to finest the children's transform coefficients are
predicted from the reconstruction one scale up (when prediction is on),
the AC residuals are quantized and entropy-coded, and the scale is
immediately reconstructed the way the decoder will see it.  That in-loop
reconstruction feeds the next scale's prediction, so encoder and decoder
stay bit-identical.

Geometry is never stored; the decoder receives the voxel positions out
of band and re-derives every structural quantity (pyramid, slot masks,
payload sizes, chunk partition) from them.

Container layout (little-endian, crc32 over everything before the tail):

    "DRHT" | u8 version | u8 flags | u8 channels | u8 scales
    u64 point count | u64 chunk point budget | f64 step per channel
    u32 chunk count | per chunk: u64 points, u32 byte length
    chunk blobs | u32 crc32

Chunk blob:

    packed 2-bit mode per scale, coarsest first (bit0 prediction,
    bit1 refiner) | u16 root blob length | root blob (one zigzag
    exp-Golomb code per channel) | u32 payload length per (scale,
    channel), coarsest scale first, channel-minor | payload bytes
    in the same order

Clouds above the point budget are split by recursive median cuts along
the widest axis; both sides derive the identical partition from the
positions, so only the budget is stored.
"""

import os
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .entropy import (DEFAULT_PROXY, QuantConfig, _BitSink, _eg0_bits,
                      _parse_eg0, decode_payload, dequantize, encode_payload,
                      estimate_bits, quantize)
from .errors import BitstreamError
from .haar import CoefficientSet, forward_scale, inverse_scale, valid_mask
from .morton import MAX_DEPTH, morton_encode
from .pointcloud import VoxelizedPointCloud, rgb_to_yuv, yuv_to_rgb
from .predict import PredictionConfig, choose_mode, compensate, idw_predict
from .pyramid import build_pyramid

MAGIC = b"DRHT"
VERSION = 1
DEFAULT_BLOCK_BUDGET = 2_000_000
THREADS_ENV = "RAHTCODEC_THREADS"

# Steps this small pass integer-valued residuals through exactly; the
# step is a power of two so every product q * step is a float shift.
LOSSLESS_STEP = 2.0 ** -30

_FLAG_YUV = 1


def resolve_threads(threads=None) -> int:
    if threads is None:
        threads = os.environ.get(THREADS_ENV, "1")
    n = int(threads)
    if n < 1:
        raise ValueError("thread count must be >= 1")
    return n


@dataclass
class EncoderConfig:
    """Knobs for :func:`encode`.

    steps : scalar, per-channel sequence, or QuantConfig
    prediction : cross-scale prediction settings
    block_budget : chunk size limit in points
    threads : payload-coder workers (None reads the environment)
    convert_yuv : code 3-channel attributes in YUV (default: yes iff C == 3)
    """

    steps: object = 8.0
    prediction: PredictionConfig = field(default_factory=PredictionConfig)
    block_budget: int = DEFAULT_BLOCK_BUDGET
    threads: int | None = None
    convert_yuv: bool | None = None

    def resolved_steps(self, n_channels: int) -> tuple:
        s = self.steps
        if isinstance(s, QuantConfig):
            t = s.steps
        elif np.isscalar(s):
            t = (float(s),)
        else:
            t = tuple(float(x) for x in s)
        if len(t) == 1:
            t = t * n_channels
        if len(t) != n_channels:
            raise ValueError(f"{len(t)} steps for {n_channels} channels")
        return QuantConfig(t).steps


@dataclass
class BitstreamHeader:
    version: int
    yuv: bool
    n_channels: int
    scales: int
    n_points: int
    block_budget: int
    steps: tuple
    chunk_points: tuple
    chunk_lengths: tuple
    chunks_at: int


@dataclass
class RateReport:
    """Bit accounting for one encode.

    payload_bits[t] is the arithmetic-coded size of scale t's residuals
    summed over chunks and channels; proxy_bits[t] the matching Laplace
    estimate.  Everything not in a payload (magic, directory, flags,
    root codes, checksum) counts as header, so
    header_bits + payload_bits.sum() == 8 * file_bytes exactly.
    """

    n_points: int
    n_channels: int
    scales: int
    file_bytes: int
    payload_bits: np.ndarray
    proxy_bits: np.ndarray
    modes: list

    @property
    def total_payload_bits(self) -> int:
        return int(self.payload_bits.sum())

    @property
    def total_proxy_bits(self) -> float:
        return float(self.proxy_bits.sum())

    @property
    def header_bits(self) -> int:
        return 8 * self.file_bytes - self.total_payload_bits

    @property
    def bpp(self) -> float:
        return 8.0 * self.file_bytes / self.n_points


def split_chunks(positions: np.ndarray, budget: int) -> list:
    """Index groups of a median split along the widest axis, applied
    recursively until every group fits the budget.  Deterministic given
    the position order."""
    if budget < 1:
        raise ValueError("block budget must be positive")
    out = []

    def rec(sel):
        if len(sel) <= budget:
            out.append(sel)
            return
        p = positions[sel]
        ax = int(np.argmax(p.max(axis=0) - p.min(axis=0)))
        order = np.argsort(p[:, ax], kind="stable")
        half = len(sel) // 2
        rec(sel[order[:half]])
        rec(sel[order[half:]])

    rec(np.arange(len(positions), dtype=np.int64))
    return out


# ---------------------------------------------------------------------------
# Shared per-scale reconstruction (the closed loop)

def _rebuild(child, parent, A_hat_parent, valid, pred_flat, q, steps_arr):
    """Reconstructed sums at the child level from the parent sums, the
    chosen prediction, and the decoded residuals.  This is the one code
    path both encoder and decoder run."""
    flat_hat = pred_flat + dequantize(q, steps_arr)
    n_par, n_ch = A_hat_parent.shape
    shell = CoefficientSet(scale=child.scale, dc=np.zeros((n_par, n_ch)),
                           ac=np.zeros((n_par, 7, n_ch)), valid=valid)
    cset = shell.with_flat_ac(flat_hat)
    dc_hat = A_hat_parent / np.sqrt(parent.w.astype(np.float64))[:, None]
    g_hat = inverse_scale(cset, child, dc=dc_hat)
    return g_hat * np.sqrt(child.w.astype(np.float64))[:, None]


def _prediction_flats(child, parent, depth, parent_avg, idw_t, idw_prev,
                      refiner, want_refined):
    """Flattened AC of the IDW prediction and, optionally, the refined one."""
    sw = np.sqrt(child.w.astype(np.float64))[:, None]
    flat_idw = forward_scale(child, g=idw_t * sw,
                             n_parents=parent.n_nodes).flat_ac()
    flat_ref = None
    if want_refined:
        a_ref = compensate(parent_avg, idw_prev, idw_t, refiner,
                           parent, child, depth)
        flat_ref = forward_scale(child, g=a_ref * sw,
                                 n_parents=parent.n_nodes).flat_ac()
    return flat_idw, flat_ref


def _sqrtw(level) -> np.ndarray:
    return np.sqrt(level.w.astype(np.float64))[:, None]


def _encode_chunk(sub: VoxelizedPointCloud, steps_arr, prediction, trace, ci):
    s = sub.depth
    levels = build_pyramid(sub).levels
    n_ch = sub.n_channels
    root = levels[s]
    q_root = quantize(root.normalized(), steps_arr)
    A_hat = dequantize(q_root, steps_arr) * _sqrtw(root)
    if trace is not None:
        trace.append((ci, s, A_hat.copy()))

    start = prediction.resolved_start(s)
    refiner = prediction.refiner if prediction.enabled else None
    idw_prev = None
    flags = np.zeros(s, dtype=np.uint8)
    payloads = []
    proxy = np.zeros(s)
    for t in range(s - 1, -1, -1):
        child, parent = levels[t], levels[t + 1]
        coeffs = forward_scale(child, n_parents=parent.n_nodes)
        actual = coeffs.flat_ac()
        parent_avg = A_hat / parent.w[:, None]
        idw_t = None
        pred_flat = np.zeros_like(actual)
        if t <= start:
            idw_t = idw_predict(parent_avg, parent, child, s)
            if len(actual):
                flat_idw, flat_ref = _prediction_flats(
                    child, parent, s, parent_avg, idw_t, idw_prev, refiner,
                    want_refined=refiner is not None and idw_prev is not None)
                cands = [pred_flat, flat_idw]
                if flat_ref is not None:
                    cands.append(flat_ref)
                k = choose_mode(cands, actual)
                flags[t] = (0, 1, 3)[k]
                pred_flat = cands[k]
        q = quantize(actual - pred_flat, steps_arr)
        proxy[t] = estimate_bits(q)
        for c in range(n_ch):
            payloads.append((t, c, np.ascontiguousarray(q[:, c])))
        A_hat = _rebuild(child, parent, A_hat, coeffs.valid, pred_flat, q,
                         steps_arr)
        idw_prev = idw_t
        if trace is not None:
            trace.append((ci, t, A_hat.copy()))
    return flags, q_root[0], payloads, proxy, A_hat


def _decode_chunk(sub: VoxelizedPointCloud, steps_arr, flags, root_q,
                  q_by_scale, refiner, trace, ci):
    s = sub.depth
    levels = build_pyramid(sub).levels
    root = levels[s]
    A_hat = dequantize(root_q[None, :], steps_arr) * _sqrtw(root)
    if trace is not None:
        trace.append((ci, s, A_hat.copy()))

    idw_prev = None
    for t in range(s - 1, -1, -1):
        child, parent = levels[t], levels[t + 1]
        mode = int(flags[t])
        if mode not in (0, 1, 3):
            raise BitstreamError(f"invalid prediction mode {mode} at scale {t}")
        valid = valid_mask(child, parent.n_nodes)
        q = q_by_scale[t]
        parent_avg = A_hat / parent.w[:, None]
        # The refiner one scale below consumes this scale's base
        # prediction, so compute it whenever either could need it.
        need_idw = mode != 0 or (t > 0 and int(flags[t - 1]) == 3)
        idw_t = None
        if need_idw:
            idw_t = idw_predict(parent_avg, parent, child, s)
        if mode == 0:
            pred_flat = np.zeros((q.shape[0], A_hat.shape[1]))
        else:
            if mode == 3 and refiner is None:
                raise BitstreamError("stream uses a refiner; weights required")
            if mode == 3 and idw_prev is None:
                raise BitstreamError("refiner mode at the top scale")
            flat_idw, flat_ref = _prediction_flats(
                child, parent, s, parent_avg, idw_t, idw_prev, refiner,
                want_refined=mode == 3)
            pred_flat = flat_ref if mode == 3 else flat_idw
        A_hat = _rebuild(child, parent, A_hat, valid, pred_flat, q, steps_arr)
        idw_prev = idw_t
        if trace is not None:
            trace.append((ci, t, A_hat.copy()))
    return A_hat


# ---------------------------------------------------------------------------
# Container plumbing

def _zigzag(v: int) -> int:
    return (v << 1) ^ (v >> 63) if v < 0 else v << 1


def _unzigzag(u: int) -> int:
    return (u >> 1) ^ -(u & 1)


def _pack_root(q_root) -> bytes:
    sink = _BitSink()
    for v in q_root:
        for ch in _eg0_bits(_zigzag(int(v))):
            sink.put(ch == "1")
    sink.flush()
    return bytes(sink.bytes)


def _unpack_root(blob: bytes, n_ch: int) -> np.ndarray:
    bits = "".join(f"{b:08b}" for b in blob)
    out = np.zeros(n_ch, dtype=np.int64)
    pos = 0
    for c in range(n_ch):
        try:
            u, pos = _parse_eg0(bits, pos)
        except IndexError:
            raise BitstreamError("corrupt root code") from None
        out[c] = _unzigzag(u)
    return out


def _pack_flags(flags) -> bytes:
    out = bytearray((2 * len(flags) + 7) // 8)
    pos = 0
    for t in range(len(flags) - 1, -1, -1):
        out[pos >> 3] |= (int(flags[t]) & 3) << (pos & 7)
        pos += 2
    return bytes(out)


def _unpack_flags(data: bytes, scales: int) -> np.ndarray:
    flags = np.zeros(scales, dtype=np.uint8)
    pos = 0
    for t in range(scales - 1, -1, -1):
        flags[t] = (data[pos >> 3] >> (pos & 7)) & 3
        pos += 2
    return flags


_FIXED_FMT = "<4sBBBBQQ"


def _canonical_rows(positions: np.ndarray, depth: int) -> np.ndarray:
    codes = morton_encode(positions, depth)
    order = np.argsort(codes)
    if np.any(np.diff(codes[order].view(np.int64)) == 0):
        raise ValueError("duplicate voxel positions")
    return order


def _sub_rows(cloud: VoxelizedPointCloud, sel: np.ndarray) -> np.ndarray:
    """Rows of one chunk in Morton order (indices into the full cloud)."""
    return sel[np.argsort(cloud.codes[sel])]


def _subcloud(cloud: VoxelizedPointCloud, rows: np.ndarray,
              attributes: np.ndarray) -> VoxelizedPointCloud:
    return VoxelizedPointCloud(depth=cloud.depth,
                               positions=cloud.positions[rows],
                               attributes=attributes[rows],
                               codes=cloud.codes[rows],
                               channel_peak=cloud.channel_peak)


def _payload_bit_totals(payload_bytes, n_scales, job_index):
    total = np.zeros(n_scales, dtype=np.int64)
    for (ci, t, c), data in zip(job_index, payload_bytes):
        total[t] += 8 * len(data)
    return total


def encode(cloud: VoxelizedPointCloud, config: EncoderConfig | None = None) -> bytes:
    """Encode a canonical cloud's attributes; geometry is not stored."""
    data, _ = encode_with_report(cloud, config)
    return data


def encode_vanilla(cloud: VoxelizedPointCloud, steps=8.0, **kw) -> bytes:
    """Baseline encode with prediction disabled at every scale."""
    cfg = EncoderConfig(steps=steps, prediction=PredictionConfig(enabled=False), **kw)
    return encode(cloud, cfg)


def encode_with_report(cloud: VoxelizedPointCloud,
                       config: EncoderConfig | None = None,
                       scale_trace: list | None = None):
    """Encode and return ``(bitstream, RateReport)``.

    ``scale_trace``, when a list, collects ``(chunk, scale, A_hat)`` for
    every in-loop reconstruction, coarsest first per chunk.
    """
    if config is None:
        config = EncoderConfig()
    if cloud.n_points == 0:
        raise ValueError("empty cloud")
    if not 1 <= cloud.depth <= MAX_DEPTH:
        raise ValueError("cloud depth out of range")
    n_ch = cloud.n_channels
    if n_ch < 1 or n_ch > 255:
        raise ValueError("channel count out of range")
    steps = config.resolved_steps(n_ch)
    steps_arr = np.array(steps)
    s = cloud.depth
    convert = config.convert_yuv if config.convert_yuv is not None else n_ch == 3
    if convert and n_ch != 3:
        raise ValueError("YUV coding needs exactly 3 channels")
    attrs = rgb_to_yuv(cloud.attributes) if convert else cloud.attributes

    chunks = split_chunks(cloud.positions, int(config.block_budget))
    chunk_rows = [_sub_rows(cloud, sel) for sel in chunks]

    flags_all, roots, proxies, modes = [], [], np.zeros(s), []
    jobs, job_index = [], []
    for ci, rows in enumerate(chunk_rows):
        sub = _subcloud(cloud, rows, attrs)
        flags, q_root, payloads, proxy, _ = _encode_chunk(
            sub, steps_arr, config.prediction, scale_trace, ci)
        flags_all.append(flags)
        roots.append(q_root)
        proxies += proxy
        modes.append(flags.copy())
        for t, c, q in payloads:
            jobs.append(q)
            job_index.append((ci, t, c))

    threads = resolve_threads(config.threads)
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            coded = list(pool.map(encode_payload, jobs))
    else:
        coded = [encode_payload(q) for q in jobs]

    # Assemble chunk blobs in canonical order.
    per_chunk = {ci: [] for ci in range(len(chunks))}
    for (ci, t, c), data in zip(job_index, coded):
        per_chunk[ci].append(data)
    blobs = []
    for ci in range(len(chunks)):
        body = bytearray()
        body += _pack_flags(flags_all[ci])
        root_blob = _pack_root(roots[ci])
        body += struct.pack("<H", len(root_blob))
        body += root_blob
        body += struct.pack(f"<{s * n_ch}I",
                            *[len(d) for d in per_chunk[ci]])
        for d in per_chunk[ci]:
            body += d
        blobs.append(bytes(body))

    head = bytearray()
    head += struct.pack(_FIXED_FMT, MAGIC, VERSION,
                        _FLAG_YUV if convert else 0, n_ch, s,
                        cloud.n_points, int(config.block_budget))
    head += struct.pack(f"<{n_ch}d", *steps)
    head += struct.pack("<I", len(blobs))
    for rows, blob in zip(chunk_rows, blobs):
        head += struct.pack("<QI", len(rows), len(blob))
    stream = bytes(head) + b"".join(blobs)
    stream += struct.pack("<I", zlib.crc32(stream) & 0xFFFFFFFF)

    payload_bits = _payload_bit_totals(coded, s, job_index)
    report = RateReport(n_points=cloud.n_points, n_channels=n_ch, scales=s,
                        file_bytes=len(stream), payload_bits=payload_bits,
                        proxy_bits=proxies, modes=modes)
    return stream, report


def parse_header(data: bytes) -> BitstreamHeader:
    if len(data) < struct.calcsize(_FIXED_FMT) + 8 or data[:4] != MAGIC:
        raise BitstreamError("not a DRHT bitstream")
    if struct.unpack("<I", data[-4:])[0] != (zlib.crc32(data[:-4]) & 0xFFFFFFFF):
        raise BitstreamError("bitstream checksum mismatch")
    magic, version, flags, n_ch, s, n_points, budget = struct.unpack_from(
        _FIXED_FMT, data, 0)
    if version != VERSION:
        raise BitstreamError(f"unsupported bitstream version {version}")
    if n_ch < 1 or not 1 <= s <= MAX_DEPTH:
        raise BitstreamError("corrupt header")
    at = struct.calcsize(_FIXED_FMT)
    try:
        steps = struct.unpack_from(f"<{n_ch}d", data, at)
        at += 8 * n_ch
        (n_chunks,) = struct.unpack_from("<I", data, at)
        at += 4
        counts, lengths = [], []
        for _ in range(n_chunks):
            n_k, l_k = struct.unpack_from("<QI", data, at)
            at += 12
            counts.append(n_k)
            lengths.append(l_k)
    except struct.error:
        raise BitstreamError("truncated header") from None
    if any(q <= 0 for q in steps):
        raise BitstreamError("corrupt header")
    if sum(counts) != n_points or at + sum(lengths) + 4 != len(data):
        raise BitstreamError("chunk table does not match stream size")
    return BitstreamHeader(version=version, yuv=bool(flags & _FLAG_YUV),
                           n_channels=n_ch, scales=s, n_points=n_points,
                           block_budget=budget, steps=steps,
                           chunk_points=tuple(counts),
                           chunk_lengths=tuple(lengths), chunks_at=at)


def payload_bit_count(data: bytes) -> int:
    """Total arithmetic-coded payload bits in a stream, from the chunk
    directories alone (no geometry needed)."""
    header = parse_header(data)
    at = header.chunks_at
    flag_len = (2 * header.scales + 7) // 8
    dir_n = header.scales * header.n_channels
    total = 0
    for ln in header.chunk_lengths:
        blob = data[at:at + ln]
        at += ln
        try:
            (root_len,) = struct.unpack_from("<H", blob, flag_len)
            lengths = struct.unpack_from(f"<{dir_n}I", blob,
                                         flag_len + 2 + root_len)
        except struct.error:
            raise BitstreamError("truncated chunk") from None
        total += 8 * sum(lengths)
    return total


def _parse_chunk(blob: bytes, s: int, n_ch: int, n_valid_by_scale):
    flag_len = (2 * s + 7) // 8
    if len(blob) < flag_len + 2:
        raise BitstreamError("truncated chunk")
    flags = _unpack_flags(blob[:flag_len], s)
    at = flag_len
    (root_len,) = struct.unpack_from("<H", blob, at)
    at += 2
    if at + root_len > len(blob):
        raise BitstreamError("truncated chunk")
    root_blob = blob[at:at + root_len]
    at += root_len
    dir_n = s * n_ch
    try:
        lengths = struct.unpack_from(f"<{dir_n}I", blob, at)
    except struct.error:
        raise BitstreamError("truncated chunk") from None
    at += 4 * dir_n
    if at + sum(lengths) != len(blob):
        raise BitstreamError("chunk directory does not match blob size")
    slices = []
    i = 0
    for t in range(s - 1, -1, -1):
        for c in range(n_ch):
            ln = lengths[i]
            i += 1
            slices.append((t, c, blob[at:at + ln], n_valid_by_scale[t]))
            at += ln
    return flags, root_blob, slices


def decode(data: bytes, geometry, refiner=None, threads=None,
           scale_trace: list | None = None) -> VoxelizedPointCloud:
    """Decode a bitstream onto its geometry (positions, arbitrary order).

    Returns a canonical cloud whose attributes are the reconstructed
    per-point values; a stream whose flags engage the refiner needs the
    same weights the encoder used.
    """
    header = parse_header(data)
    if isinstance(geometry, VoxelizedPointCloud):
        positions = geometry.positions
    else:
        positions = np.asarray(geometry, dtype=np.int64)
    if positions.ndim != 2 or positions.shape[1] != 3:
        raise ValueError("geometry must be (N, 3) voxel positions")
    if len(positions) != header.n_points:
        raise BitstreamError(f"geometry has {len(positions)} points, "
                             f"stream expects {header.n_points}")
    s, n_ch = header.scales, header.n_channels
    order = _canonical_rows(positions, s)
    positions = positions[order]
    codes = morton_encode(positions, s)
    zero_attrs = np.zeros((len(positions), n_ch))
    cloud = VoxelizedPointCloud(depth=s, positions=positions,
                                attributes=zero_attrs, codes=codes,
                                channel_peak=np.full(n_ch, 255.0))

    chunks = split_chunks(positions, header.block_budget)
    if len(chunks) != len(header.chunk_points):
        raise BitstreamError("chunk partition does not match stream")
    chunk_rows = [_sub_rows(cloud, sel) for sel in chunks]
    for rows, n_k in zip(chunk_rows, header.chunk_points):
        if len(rows) != n_k:
            raise BitstreamError("chunk partition does not match stream")

    at = header.chunks_at
    parsed = []
    jobs, job_index = [], []
    steps_arr = np.array(header.steps)
    for ci, (rows, ln) in enumerate(zip(chunk_rows, header.chunk_lengths)):
        blob = data[at:at + ln]
        at += ln
        sub_codes = cloud.codes[rows]
        sizes = [len(sub_codes)]
        for _ in range(s):
            sub_codes = np.unique(sub_codes >> np.uint64(3))
            sizes.append(len(sub_codes))
        n_valid = [sizes[t] - sizes[t + 1] for t in range(s)]
        flags, root_blob, slices = _parse_chunk(blob, s, n_ch, n_valid)
        root_q = _unpack_root(root_blob, n_ch)
        parsed.append((flags, root_q))
        for t, c, payload, n in slices:
            jobs.append((payload, n))
            job_index.append((ci, t, c))

    n_threads = resolve_threads(threads)
    if n_threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            decoded = list(pool.map(lambda j: decode_payload(*j), jobs))
    else:
        decoded = [decode_payload(*j) for j in jobs]

    by_chunk_scale = {}
    for (ci, t, c), q in zip(job_index, decoded):
        by_chunk_scale.setdefault((ci, t), {})[c] = q
    recon = np.empty((len(positions), n_ch))
    for ci, rows in enumerate(chunk_rows):
        flags, root_q = parsed[ci]
        sub = _subcloud(cloud, rows, zero_attrs)
        q_by_scale = {}
        for t in range(s):
            cols = by_chunk_scale.get((ci, t), {})
            q_by_scale[t] = np.stack([cols[c] for c in range(n_ch)], axis=1)
        A_hat = _decode_chunk(sub, steps_arr, flags, root_q, q_by_scale,
                              refiner, scale_trace, ci)
        recon[rows] = A_hat

    if header.yuv:
        recon = yuv_to_rgb(recon)
    return VoxelizedPointCloud(depth=s, positions=positions, attributes=recon,
                               codes=codes, channel_peak=np.full(n_ch, 255.0))
