"""Command-line front end: encode, decode, eval, sweep, gen.

Exit codes: 0 success, 1 codec error (bad stream, bad weights, invalid
parameters), 2 usage or I/O error.  A JSON config file passed with
--config supplies defaults for any long flag of any subcommand (keys use
underscores, e.g. {"qs": [12], "block_size": 500000}); explicit flags
win.  The RAHTCODEC_THREADS environment variable sets the worker count
when --threads is absent.
"""

import argparse
import json
import sys

import numpy as np

from .codec import (DEFAULT_BLOCK_BUDGET, EncoderConfig, LOSSLESS_STEP,
                    decode, encode_with_report, parse_header,
                    payload_bit_count)
from .errors import CodecError
from .generate import SHAPES, TEXTURES, synth_cloud
from .metrics import RDPoint, bd_rate, evaluate_pair, write_csv
from .pointcloud import load_ply, write_ply
from .predict import PredictionConfig, PredictionRefiner

DEFAULT_SWEEP_QS = (8, 10, 12, 16, 24, 32, 48, 64, 128, 224)
MODE_NAMES = ("vanilla", "predictive", "predictive+refiner")


def _load_config(argv):
    if "--config" in argv:
        path = argv[argv.index("--config") + 1]
        with open(path) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ValueError("config file must hold a JSON object")
        return cfg
    return {}


def _prediction_config(args):
    refiner = None
    if getattr(args, "refiner", None):
        refiner = PredictionRefiner.load(args.refiner)
    return PredictionConfig(enabled=not getattr(args, "no_prediction", False),
                            refiner=refiner), refiner


def _encoder_config(args, prediction):
    steps = LOSSLESS_STEP if getattr(args, "lossless", False) else \
        (args.qs if args.qs else [8.0])
    return EncoderConfig(steps=steps, prediction=prediction,
                         block_budget=args.block_size, threads=args.threads)


def _round_trip_u8(cloud):
    """Quantize attributes the way the PLY writer will, so printed PSNR
    matches a later eval of the written files."""
    if cloud.n_channels != 3:
        return cloud
    rounded = np.clip(np.floor(cloud.attributes + 0.5), 0.0, 255.0)
    return cloud.with_attributes(rounded)


def _print_quality(q):
    print("psnr_y {psnr_y:.4f}  psnr_u {psnr_u:.4f}  psnr_v {psnr_v:.4f}  "
          "psnr_yuv {psnr_yuv:.4f}".format(**q))


_MODE_LETTER = {0: "-", 1: "P", 3: "R"}


def cmd_encode(args) -> int:
    cloud = load_ply(args.input)
    prediction, refiner = _prediction_config(args)
    config = _encoder_config(args, prediction)
    data, report = encode_with_report(cloud, config)
    with open(args.out, "wb") as fh:
        fh.write(data)
    print(f"points {report.n_points}  channels {report.n_channels}  "
          f"scales {report.scales}  file {report.file_bytes} B  "
          f"bpp {report.bpp:.4f}")
    print(f"header {report.header_bits} bits  payload "
          f"{report.total_payload_bits} bits  proxy "
          f"{report.total_proxy_bits:.1f} bits")
    print("scale      bits       proxy  modes")
    for t in range(report.scales - 1, -1, -1):
        modes = "".join(_MODE_LETTER[int(m[t])] for m in report.modes)
        print(f"{t:5d}  {int(report.payload_bits[t]):8d}  "
              f"{report.proxy_bits[t]:10.1f}  {modes}")
    recon = decode(data, cloud.positions, refiner=refiner,
                   threads=args.threads)
    _print_quality(evaluate_pair(_round_trip_u8(cloud), _round_trip_u8(recon)))
    return 0


def cmd_decode(args) -> int:
    with open(args.input, "rb") as fh:
        data = fh.read()
    geometry = load_ply(args.geometry)
    refiner = PredictionRefiner.load(args.refiner) if args.refiner else None
    cloud = decode(data, geometry.positions, refiner=refiner,
                   threads=args.threads)
    write_ply(args.out, cloud, ascii_format=args.ascii)
    print(f"decoded {cloud.n_points} points to {args.out}")
    return 0


def cmd_eval(args) -> int:
    original = load_ply(args.original)
    reconstructed = load_ply(args.reconstructed)
    quality = evaluate_pair(original, reconstructed)
    _print_quality(quality)
    qs = bpp = actual_bits = 0.0
    if args.bitstream:
        with open(args.bitstream, "rb") as fh:
            data = fh.read()
        header = parse_header(data)
        qs = header.steps[0]
        bpp = 8.0 * len(data) / header.n_points
        actual_bits = payload_bit_count(data)
        print(f"bpp {bpp:.4f}  payload {actual_bits} bits")
    if args.csv:
        point = RDPoint(qs=qs, bpp=bpp, proxy_bits=0.0,
                        actual_bits=int(actual_bits), **quality)
        write_csv(args.csv, [(args.name, args.codec, point)])
        print(f"wrote {args.csv}")
    return 0


def cmd_sweep(args) -> int:
    cloud = load_ply(args.input)
    qs_list = [float(q) for q in (args.qs or DEFAULT_SWEEP_QS)]
    if any(q <= 0 for q in qs_list) or sorted(qs_list) != qs_list:
        raise ValueError("qs values must be positive and ascending")
    modes = args.modes.split(",") if args.modes else ["vanilla", "predictive"]
    for m in modes:
        if m not in MODE_NAMES:
            raise ValueError(f"unknown mode {m!r}")
    refiner = PredictionRefiner.load(args.refiner) if args.refiner else None
    if "predictive+refiner" in modes and refiner is None:
        raise ValueError("mode predictive+refiner needs --refiner")

    rows = []
    curves = {}
    reference = _round_trip_u8(cloud)
    for mode in modes:
        prediction = PredictionConfig(enabled=mode != "vanilla",
                                      refiner=refiner if mode.endswith("refiner") else None)
        curve = []
        for qs in qs_list:
            config = EncoderConfig(steps=qs, prediction=prediction,
                                   block_budget=args.block_size,
                                   threads=args.threads)
            data, report = encode_with_report(cloud, config)
            recon = decode(data, cloud.positions,
                           refiner=prediction.refiner, threads=args.threads)
            quality = evaluate_pair(reference, _round_trip_u8(recon))
            point = RDPoint(qs=qs, bpp=report.bpp,
                            proxy_bits=report.total_proxy_bits,
                            actual_bits=report.total_payload_bits, **quality)
            curve.append(point)
            rows.append((args.name, mode, point))
            print(f"{mode:20s} qs {qs:7.1f}  bpp {point.bpp:8.4f}  "
                  f"psnr_yuv {point.psnr_yuv:8.4f}")
        curves[mode] = curve
    write_csv(args.csv, rows)
    print(f"wrote {args.csv}")
    for i in range(1, len(modes)):
        a, b = modes[i - 1], modes[i]
        try:
            delta = bd_rate(curves[a], curves[b])
            print(f"BD-rate {b} vs {a}: {delta:+.2f}%")
        except ValueError as exc:
            print(f"BD-rate {b} vs {a}: n/a ({exc})")
    return 0


def cmd_gen(args) -> int:
    cloud = synth_cloud(shape=args.shape, texture=args.texture,
                        depth=args.depth, n_points=args.points,
                        seed=args.seed)
    write_ply(args.out, cloud, ascii_format=args.ascii)
    print(f"wrote {cloud.n_points} points ({args.shape}/{args.texture}, "
          f"depth {args.depth}, seed {args.seed}) to {args.out}")
    return 0


def _build_parser(defaults):
    parser = argparse.ArgumentParser(
        prog="rahtcodec",
        description="Point cloud attribute codec: hierarchical transform "
                    "with cross-scale prediction and run-length coding.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: RAHTCODEC_THREADS or 1)")
        p.add_argument("--config", default=None,
                       help="JSON file with default values for any flag")

    p_enc = sub.add_parser("encode", help="compress attributes of a PLY cloud")
    p_enc.add_argument("--input", required=True, help="input PLY")
    p_enc.add_argument("--out", required=True, help="output bitstream")
    p_enc.add_argument("--qs", type=float, action="append",
                       help="quantization step; repeat for per-channel values "
                            "(default 8)")
    p_enc.add_argument("--lossless", action="store_true",
                       help="pass residuals through exactly (overrides --qs)")
    p_enc.add_argument("--no-prediction", action="store_true",
                       help="disable cross-scale prediction")
    p_enc.add_argument("--refiner", default=None,
                       help="prediction refiner weight file")
    p_enc.add_argument("--block-size", type=int, default=DEFAULT_BLOCK_BUDGET,
                       help="chunk point budget")
    common(p_enc)
    p_enc.set_defaults(func=cmd_encode)

    p_dec = sub.add_parser("decode", help="reconstruct attributes onto geometry")
    p_dec.add_argument("--input", required=True, help="input bitstream")
    p_dec.add_argument("--geometry", required=True,
                       help="PLY with the exact coded voxel positions")
    p_dec.add_argument("--out", required=True, help="output PLY")
    p_dec.add_argument("--refiner", default=None,
                       help="prediction refiner weight file")
    p_dec.add_argument("--ascii", action="store_true", help="write ASCII PLY")
    common(p_dec)
    p_dec.set_defaults(func=cmd_decode)

    p_ev = sub.add_parser("eval", help="PSNR between two PLY clouds")
    p_ev.add_argument("--original", required=True)
    p_ev.add_argument("--reconstructed", required=True)
    p_ev.add_argument("--bitstream", default=None,
                      help="bitstream file, to report rate alongside quality")
    p_ev.add_argument("--csv", default=None, help="write an RD CSV row here")
    p_ev.add_argument("--name", default="cloud", help="cloud name for the CSV")
    p_ev.add_argument("--codec", default="rahtcodec",
                      help="codec name for the CSV")
    common(p_ev)
    p_ev.set_defaults(func=cmd_eval)

    p_sw = sub.add_parser("sweep", help="rate sweep over quantization steps")
    p_sw.add_argument("--input", required=True, help="input PLY")
    p_sw.add_argument("--csv", required=True, help="output CSV")
    p_sw.add_argument("--qs", type=float, action="append",
                      help="sweep step; repeat (default "
                           + ",".join(str(q) for q in DEFAULT_SWEEP_QS) + ")")
    p_sw.add_argument("--modes", default=None,
                      help="comma list of " + ",".join(MODE_NAMES)
                           + " (default vanilla,predictive)")
    p_sw.add_argument("--refiner", default=None,
                      help="weight file for predictive+refiner")
    p_sw.add_argument("--block-size", type=int, default=DEFAULT_BLOCK_BUDGET)
    p_sw.add_argument("--name", default="cloud", help="cloud name for the CSV")
    common(p_sw)
    p_sw.set_defaults(func=cmd_sweep)

    p_gen = sub.add_parser("gen", help="write a seeded synthetic cloud")
    p_gen.add_argument("--shape", choices=SHAPES, default="sphere")
    p_gen.add_argument("--texture", choices=TEXTURES, default="gradient")
    p_gen.add_argument("--depth", type=int, default=8)
    p_gen.add_argument("--points", type=int, default=50000)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True, help="output PLY")
    p_gen.add_argument("--ascii", action="store_true", help="write ASCII PLY")
    common(p_gen)
    p_gen.set_defaults(func=cmd_gen)

    subparsers = (p_enc, p_dec, p_ev, p_sw, p_gen)
    if defaults:
        known = {a.dest for sp in subparsers for a in sp._actions}
        unknown = set(defaults) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        # list-valued flags (--qs) append to their default, so feeding the
        # config value through set_defaults would make explicit flags extend
        # it instead of replacing it; those are filled in after parsing
        scalars = {k: v for k, v in defaults.items() if not isinstance(v, list)}
        for sp in subparsers:
            sp.set_defaults(**scalars)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        defaults = _load_config(argv)
    except (OSError, IndexError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return 2
    try:
        parser = _build_parser(defaults)
    except ValueError as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return 2
    args = parser.parse_args(argv)
    for key, value in defaults.items():
        if isinstance(value, list) and getattr(args, key, 0) is None:
            setattr(args, key, list(value))
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CodecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
