"""Rate and quality metrics: PSNR, bits per point, BD-rate.

The combined luma/chroma PSNR weights the per-channel MSEs 6:1:1 before
converting to decibels; the weights are exposed for callers that want a
different balance.  BD-rate follows the classic Bjoentegaard approach:
fit log2(rate) as a cubic polynomial in quality, integrate the
difference over the overlapping quality interval, convert the mean log
offset back to a percentage.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .pointcloud import VoxelizedPointCloud, rgb_to_yuv

YUV_MSE_WEIGHTS = (6.0, 1.0, 1.0)


def mse_per_channel(original: np.ndarray, reconstructed: np.ndarray) -> np.ndarray:
    a = np.asarray(original, dtype=np.float64)
    b = np.asarray(reconstructed, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("attribute arrays differ in shape")
    return np.mean((a - b) ** 2, axis=0)


def psnr_from_mse(mse, peak: float = 255.0):
    """10*log10(peak^2 / mse), with +inf for an exact reconstruction."""
    mse = np.asarray(mse, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.where(mse == 0.0, np.inf, 10.0 * np.log10(peak * peak / np.maximum(mse, 1e-300)))


def psnr(original: np.ndarray, reconstructed: np.ndarray, peak: float = 255.0) -> np.ndarray:
    return psnr_from_mse(mse_per_channel(original, reconstructed), peak)


def combined_psnr(original: np.ndarray, reconstructed: np.ndarray,
                  peak: float = 255.0, weights=YUV_MSE_WEIGHTS) -> float:
    m = mse_per_channel(original, reconstructed)
    if m.shape[0] != len(weights):
        raise ValueError("channel count does not match weights")
    w = np.asarray(weights, dtype=np.float64)
    return float(psnr_from_mse(np.dot(w, m) / w.sum(), peak))


@dataclass
class RDPoint:
    """One operating point of a rate-distortion sweep."""

    qs: float
    bpp: float
    psnr_y: float
    psnr_u: float
    psnr_v: float
    psnr_yuv: float
    proxy_bits: float
    actual_bits: int


def evaluate_pair(original: VoxelizedPointCloud,
                  reconstructed: VoxelizedPointCloud) -> dict:
    """Per-channel and combined PSNR of a reconstruction, in YUV for
    three-channel clouds.  Raises if the two clouds differ in geometry.
    """
    if original.depth != reconstructed.depth or \
            not np.array_equal(original.codes, reconstructed.codes):
        raise ValueError("clouds differ in geometry")
    peak = original.channel_peak
    if original.n_channels == 3:
        a = rgb_to_yuv(original.attributes)
        b = rgb_to_yuv(reconstructed.attributes)
        per = psnr(a, b, peak)
        return {"psnr_y": float(per[0]), "psnr_u": float(per[1]),
                "psnr_v": float(per[2]),
                "psnr_yuv": combined_psnr(a, b, float(np.max(peak)))}
    per = psnr(original.attributes, reconstructed.attributes, peak)
    one = float(per[0])
    return {"psnr_y": one, "psnr_u": one, "psnr_v": one, "psnr_yuv": one}


# ---------------------------------------------------------------------------
# BD-rate

def _rate_quality(curve):
    rates, quals = [], []
    for p in curve:
        if isinstance(p, RDPoint):
            rates.append(p.bpp)
            quals.append(p.psnr_yuv)
        else:
            r, q = p
            rates.append(float(r))
            quals.append(float(q))
    r = np.asarray(rates)
    q = np.asarray(quals)
    if len(r) < 4:
        raise ValueError("BD-rate needs at least 4 points per curve")
    if not (np.all(r > 0) and np.all(np.isfinite(q))):
        raise ValueError("BD-rate needs positive rates and finite quality")
    order = np.argsort(r)
    r, q = r[order], q[order]
    if np.any(np.diff(q) <= 0):
        raise ValueError("curve quality is not monotone in rate")
    return np.log2(r), q


def bd_rate(curve_a, curve_b) -> float:
    """Average rate change of curve_b relative to curve_a, in percent,
    over the quality range both curves cover.  Negative means curve_b
    spends fewer bits at equal quality."""
    lr_a, q_a = _rate_quality(curve_a)
    lr_b, q_b = _rate_quality(curve_b)
    lo = max(q_a.min(), q_b.min())
    hi = min(q_a.max(), q_b.max())
    if not lo < hi:
        raise ValueError("curves have no overlapping quality range")
    int_a = np.polyint(np.polyfit(q_a, lr_a, 3))
    int_b = np.polyint(np.polyfit(q_b, lr_b, 3))
    avg = (np.polyval(int_b, hi) - np.polyval(int_b, lo)
           - np.polyval(int_a, hi) + np.polyval(int_a, lo)) / (hi - lo)
    return float((2.0 ** avg - 1.0) * 100.0)


# ---------------------------------------------------------------------------
# CSV records

CSV_FIELDS = ("cloud", "codec", "qs", "bpp", "psnr_y", "psnr_u", "psnr_v",
              "psnr_yuv", "proxy_bits", "actual_bits")


def write_csv(path, rows) -> None:
    """Write (cloud_name, codec_name, RDPoint) triples with the fixed header."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for cloud, codec, pt in rows:
            w.writerow([cloud, codec, pt.qs, pt.bpp, pt.psnr_y, pt.psnr_u,
                        pt.psnr_v, pt.psnr_yuv, pt.proxy_bits, pt.actual_bits])


def read_csv(path):
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise ValueError("unexpected CSV header")
        for row in reader:
            pt = RDPoint(qs=float(row["qs"]), bpp=float(row["bpp"]),
                         psnr_y=float(row["psnr_y"]), psnr_u=float(row["psnr_u"]),
                         psnr_v=float(row["psnr_v"]), psnr_yuv=float(row["psnr_yuv"]),
                         proxy_bits=float(row["proxy_bits"]),
                         actual_bits=int(float(row["actual_bits"])))
            out.append((row["cloud"], row["codec"], pt))
    return out
