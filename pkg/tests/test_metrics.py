"""PSNR, weighted quality, BD-rate, and the results CSV."""

import numpy as np
import pytest

from rahtcodec.metrics import (
    CSV_FIELDS,
    RDPoint,
    bd_rate,
    combined_psnr,
    evaluate_pair,
    mse_per_channel,
    psnr,
    psnr_from_mse,
    read_csv,
    write_csv,
)
from rahtcodec.generate import synth_cloud


def test_psnr_known_value():
    # mse 1 at peak 255: 10*log10(255^2) = 48.1308...
    a = np.zeros((100, 1))
    b = np.ones((100, 1))
    assert psnr(a, b)[0] == pytest.approx(20 * np.log10(255.0), abs=1e-9)


def test_psnr_perfect_is_infinite():
    a = np.arange(12.0).reshape(4, 3)
    out = psnr(a, a.copy())
    assert np.all(np.isinf(out))
    assert psnr_from_mse(np.array([0.0, 4.0]))[0] == np.inf


def test_combined_psnr_weighting():
    a = np.zeros((8, 3))
    b = np.zeros((8, 3))
    b[:, 0] = 2.0  # mse 4 in the heavy channel
    expected_mse = (6 * 4.0 + 0 + 0) / 8.0
    got = combined_psnr(a, b, 255.0)
    assert got == pytest.approx(10 * np.log10(255.0 ** 2 / expected_mse))


def test_mse_per_channel():
    a = np.array([[0.0, 0.0], [0.0, 0.0]])
    b = np.array([[1.0, 3.0], [1.0, 3.0]])
    assert mse_per_channel(a, b).tolist() == [1.0, 9.0]


def test_evaluate_pair_keys_and_geometry_check():
    cloud = synth_cloud("sphere", "gradient", 5, 500, 30)
    res = evaluate_pair(cloud, cloud)
    for key in ("psnr_y", "psnr_u", "psnr_v", "psnr_yuv"):
        assert res[key] == np.inf
    other = synth_cloud("sphere", "gradient", 5, 500, 31)
    with pytest.raises(ValueError):
        evaluate_pair(cloud, other)


def test_evaluate_pair_single_channel():
    cloud = synth_cloud("sphere", "gradient", 5, 400, 32)
    gray = cloud.with_attributes(cloud.attributes[:, :1])
    noisy = gray.with_attributes(gray.attributes + 1.0)
    res = evaluate_pair(gray, noisy)
    assert res["psnr_y"] == res["psnr_yuv"]
    assert np.isfinite(res["psnr_y"])


# --- BD-rate ----------------------------------------------------------------

def _curve(rates, quals):
    return list(zip(rates, quals))


def test_bd_rate_identical_curves_is_zero():
    c = _curve([1.0, 2.0, 4.0, 8.0], [30.0, 34.0, 38.0, 42.0])
    assert bd_rate(c, c) == pytest.approx(0.0, abs=1e-9)


def test_bd_rate_halved_rate_is_minus_fifty():
    a = _curve([1.0, 2.0, 4.0, 8.0], [30.0, 34.0, 38.0, 42.0])
    b = _curve([0.5, 1.0, 2.0, 4.0], [30.0, 34.0, 38.0, 42.0])
    assert bd_rate(a, b) == pytest.approx(-50.0, abs=1e-6)


def test_bd_rate_scaled_rate():
    a = _curve([1.0, 2.0, 4.0, 8.0], [30.0, 34.0, 38.0, 42.0])
    b = _curve([1.3, 2.6, 5.2, 10.4], [30.0, 34.0, 38.0, 42.0])
    assert bd_rate(a, b) == pytest.approx(30.0, abs=1e-6)


def test_bd_rate_input_validation():
    good = _curve([1.0, 2.0, 4.0, 8.0], [30.0, 34.0, 38.0, 42.0])
    with pytest.raises(ValueError):
        bd_rate(good[:3], good)  # too few points
    with pytest.raises(ValueError):
        bd_rate(_curve([0.0, 2.0, 4.0, 8.0], [30.0, 34.0, 38.0, 42.0]), good)
    with pytest.raises(ValueError):
        bd_rate(_curve([1.0, 2.0, 4.0, 8.0], [30.0, 29.0, 38.0, 42.0]), good)
    with pytest.raises(ValueError):
        bd_rate(_curve([1.0, 2.0, 4.0, 8.0], [30.0, 34.0, np.inf, 42.0]), good)


def test_bd_rate_needs_quality_overlap():
    a = _curve([1.0, 2.0, 4.0, 8.0], [30.0, 32.0, 34.0, 36.0])
    b = _curve([1.0, 2.0, 4.0, 8.0], [50.0, 52.0, 54.0, 56.0])
    with pytest.raises(ValueError):
        bd_rate(a, b)


# --- CSV ----------------------------------------------------------------------

def test_csv_roundtrip(tmp_path):
    rows = [
        ("cloudA", "vanilla", RDPoint(qs=8.0, bpp=3.25, psnr_y=41.0,
                                      psnr_u=45.5, psnr_v=42.25, psnr_yuv=41.75,
                                      proxy_bits=1234.5, actual_bits=1100.0)),
        ("cloudB", "predictive", RDPoint(qs=224.0, bpp=0.5, psnr_y=np.inf,
                                         psnr_u=np.inf, psnr_v=np.inf,
                                         psnr_yuv=np.inf, proxy_bits=0.0,
                                         actual_bits=0.0)),
    ]
    path = tmp_path / "r.csv"
    write_csv(path, rows)
    header = path.read_text().splitlines()[0]
    assert header == ",".join(CSV_FIELDS)
    back = read_csv(path)
    assert len(back) == 2
    name, codec, pt = back[0]
    assert (name, codec) == ("cloudA", "vanilla")
    assert pt == rows[0][2]
    assert back[1][2].psnr_y == np.inf
