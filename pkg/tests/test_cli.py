"""Command-line surface: subcommands, exit codes, config file, CSV output.

Runs main() in-process; each test works inside a tmp_path sandbox.
"""

import json

import numpy as np
import pytest

from rahtcodec.cli import main
from rahtcodec.codec import encode, parse_header
from rahtcodec.generate import synth_cloud
from rahtcodec.metrics import CSV_FIELDS, read_csv
from rahtcodec.pointcloud import load_ply, write_ply


@pytest.fixture
def ply(tmp_path):
    cloud = synth_cloud("sphere", "gradient", 6, 1500, seed=40)
    path = tmp_path / "in.ply"
    write_ply(path, cloud)
    return path, cloud


def test_encode_decode_eval_pipeline(ply, tmp_path, capsys):
    src, cloud = ply
    stream = tmp_path / "out.bin"
    assert main(["encode", "--input", str(src), "--out", str(stream),
                 "--qs", "8"]) == 0
    printed = capsys.readouterr().out
    assert "bpp" in printed and "psnr_yuv" in printed
    assert stream.exists()

    out = tmp_path / "rec.ply"
    assert main(["decode", "--input", str(stream), "--geometry", str(src),
                 "--out", str(out)]) == 0
    rec = load_ply(out)
    assert rec.n_points == cloud.n_points

    assert main(["eval", "--original", str(src), "--reconstructed",
                 str(out)]) == 0
    evaled = capsys.readouterr().out
    assert "psnr_yuv" in evaled


def test_encode_reports_same_quality_as_eval(ply, tmp_path, capsys):
    src, _ = ply
    stream = tmp_path / "out.bin"
    main(["encode", "--input", str(src), "--out", str(stream), "--qs", "12"])
    enc_out = capsys.readouterr().out
    out = tmp_path / "rec.ply"
    main(["decode", "--input", str(stream), "--geometry", str(src),
          "--out", str(out)])
    capsys.readouterr()
    main(["eval", "--original", str(src), "--reconstructed", str(out)])
    ev_out = capsys.readouterr().out

    def grab(text, key):
        for line in text.splitlines():
            if key in line:
                return line.split()[-1]
        raise AssertionError(f"{key} not found in {text!r}")

    for key in ("psnr_y", "psnr_u", "psnr_v", "psnr_yuv"):
        assert grab(enc_out, key) == grab(ev_out, key)


def test_no_prediction_flag_matches_library(ply, tmp_path):
    src, cloud = ply
    stream = tmp_path / "v.bin"
    assert main(["encode", "--input", str(src), "--out", str(stream),
                 "--qs", "8", "--no-prediction"]) == 0
    from rahtcodec.codec import EncoderConfig, encode as lib_encode
    from rahtcodec.predict import PredictionConfig

    expected = lib_encode(cloud, EncoderConfig(
        steps=8.0, prediction=PredictionConfig(enabled=False)))
    assert stream.read_bytes() == expected


def test_block_size_flag(ply, tmp_path):
    src, _ = ply
    stream = tmp_path / "out.bin"
    assert main(["encode", "--input", str(src), "--out", str(stream),
                 "--qs", "8", "--block-size", "400"]) == 0
    h = parse_header(stream.read_bytes())
    assert h.block_budget == 400
    assert len(h.chunk_points) > 1


def test_eval_bitstream_mode(ply, tmp_path, capsys):
    src, _ = ply
    stream = tmp_path / "out.bin"
    main(["encode", "--input", str(src), "--out", str(stream), "--qs", "16"])
    out = tmp_path / "rec.ply"
    main(["decode", "--input", str(stream), "--geometry", str(src),
          "--out", str(out)])
    csv = tmp_path / "row.csv"
    capsys.readouterr()
    assert main(["eval", "--original", str(src), "--reconstructed", str(out),
                 "--bitstream", str(stream), "--csv", str(csv)]) == 0
    rows = read_csv(csv)
    assert len(rows) == 1
    pt = rows[0][2]
    assert pt.qs == 16.0
    assert pt.actual_bits > 0
    assert pt.bpp > 0


def test_sweep_writes_full_csv(ply, tmp_path, capsys):
    src, _ = ply
    csv = tmp_path / "sweep.csv"
    assert main(["sweep", "--input", str(src), "--csv", str(csv),
                 "--qs", "8", "--qs", "16", "--qs", "32", "--qs", "64"]) == 0
    out = capsys.readouterr().out
    assert "BD-rate" in out
    rows = read_csv(csv)
    # two modes x four rate points
    assert len(rows) == 8
    codecs = {codec for _, codec, _ in rows}
    assert codecs == {"vanilla", "predictive"}
    for _, codec, pt in rows:
        assert pt.bpp > 0 and np.isfinite(pt.psnr_yuv)


def test_gen_command_deterministic(tmp_path):
    a = tmp_path / "a.ply"
    b = tmp_path / "b.ply"
    args = ["gen", "--shape", "box", "--texture", "checker", "--depth", "6",
            "--points", "1200", "--seed", "5"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    cloud = load_ply(a)
    assert cloud.n_points == 1200


def test_missing_input_exits_2(tmp_path):
    assert main(["encode", "--input", str(tmp_path / "nope.ply"),
                 "--out", str(tmp_path / "x.bin"), "--qs", "8"]) == 2


def test_corrupt_stream_exits_1(ply, tmp_path):
    src, cloud = ply
    blob = bytearray(encode(cloud))
    blob[len(blob) // 2] ^= 0xFF
    bad = tmp_path / "bad.bin"
    bad.write_bytes(bytes(blob))
    assert main(["decode", "--input", str(bad), "--geometry", str(src),
                 "--out", str(tmp_path / "rec.ply")]) == 1


def test_config_file_defaults_and_override(ply, tmp_path):
    src, _ = ply
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"qs": [24], "block_size": 500}))
    stream = tmp_path / "a.bin"
    assert main(["encode", "--input", str(src), "--out", str(stream),
                 "--config", str(cfg)]) == 0
    h = parse_header(stream.read_bytes())
    assert h.steps[0] == 24.0
    assert h.block_budget == 500
    # explicit flag beats the config value
    stream2 = tmp_path / "b.bin"
    assert main(["encode", "--input", str(src), "--out", str(stream2),
                 "--config", str(cfg), "--qs", "8"]) == 0
    assert parse_header(stream2.read_bytes()).steps[0] == 8.0


def test_bad_config_exits_2(ply, tmp_path):
    src, _ = ply
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    assert main(["encode", "--input", str(src), "--out",
                 str(tmp_path / "x.bin"), "--config", str(cfg)]) == 2
    assert main(["encode", "--input", str(src), "--out",
                 str(tmp_path / "x.bin"), "--config",
                 str(tmp_path / "missing.json")]) == 2
    cfg.write_text(json.dumps({"quantizer_step": 8}))
    assert main(["encode", "--input", str(src), "--out",
                 str(tmp_path / "x.bin"), "--config", str(cfg)]) == 2


def test_refiner_weights_flag(ply, tmp_path):
    from rahtcodec.predict import PredictionRefiner

    src, _ = ply
    weights = tmp_path / "w.bin"
    PredictionRefiner.zero(3, hidden=8).save(weights)
    stream = tmp_path / "out.bin"
    assert main(["encode", "--input", str(src), "--out", str(stream),
                 "--qs", "8", "--refiner", str(weights)]) == 0
    # zero refiner never wins a tie, so the stream decodes without weights
    assert main(["decode", "--input", str(stream), "--geometry", str(src),
                 "--out", str(tmp_path / "rec.ply")]) == 0
