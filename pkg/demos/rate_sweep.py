"""Rate-distortion sweep with and without cross-scale prediction.

Runs the same step ladder through both encoder modes, prints the two
curves, and summarizes the gap as a BD-rate percentage (negative means
the predictive mode spends fewer bits at equal quality).
"""

from rahtcodec import (EncoderConfig, PredictionConfig, RDPoint, bd_rate,
                       decode, encode_with_report, evaluate_pair, synth_cloud)

STEPS = (48.0, 32.0, 24.0, 16.0, 12.0, 8.0, 6.0, 4.0)


def sweep(cloud, prediction):
    points = []
    for qs in STEPS:
        cfg = EncoderConfig(steps=qs, prediction=prediction)
        blob, report = encode_with_report(cloud, cfg)
        rec = decode(blob, cloud)
        m = evaluate_pair(cloud, rec)
        points.append(RDPoint(qs=qs, bpp=report.bpp,
                              psnr_y=m["psnr_y"], psnr_u=m["psnr_u"],
                              psnr_v=m["psnr_v"], psnr_yuv=m["psnr_yuv"],
                              proxy_bits=report.total_proxy_bits,
                              actual_bits=report.total_payload_bits))
    return points


def show(label, points):
    print(f"\n{label}")
    print(f"{'qs':>6} {'bpp':>8} {'psnr_yuv':>9}")
    for p in points:
        print(f"{p.qs:6.1f} {p.bpp:8.4f} {p.psnr_yuv:9.2f}")


def main():
    cloud = synth_cloud("sphere", "gradient", depth=7, n_points=30000, seed=5)
    vanilla = sweep(cloud, PredictionConfig(enabled=False))
    predictive = sweep(cloud, PredictionConfig())
    show("no prediction", vanilla)
    show("with prediction", predictive)
    delta = bd_rate(vanilla, predictive)
    print(f"\nBD-rate of prediction vs none: {delta:+.1f}%")


if __name__ == "__main__":
    main()
