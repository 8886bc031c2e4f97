"""Walk one scale of the hierarchical transform by hand.

Builds a small synthetic cloud, pools it into a pyramid, transforms the
leaf level, and checks the two properties everything else rests on:
the DC path reproduces the pooled sums, and the transform preserves
energy exactly (it is orthonormal on the normalized values).
"""

import numpy as np

from rahtcodec import build_pyramid, forward_scale, inverse_scale, synth_cloud


def main():
    cloud = synth_cloud("sphere", "gradient", depth=5, n_points=2000, seed=3)
    pyr = build_pyramid(cloud)
    print(f"cloud: {cloud.n_points} points, depth {cloud.depth}")
    print("pyramid occupancy per scale:",
          [lvl.n_nodes for lvl in pyr.levels])

    leaf = pyr.levels[0]
    parent = pyr.levels[1]
    coeffs = forward_scale(leaf)

    # DC carries sqrt(parent weight) * parent average, which is exactly
    # the pooled sum divided by sqrt(w).  Compare against the pyramid.
    dc_from_pool = parent.normalized()
    err = np.abs(coeffs.dc - dc_from_pool).max()
    print(f"DC vs pooled sums, max abs difference: {err:.3e}")

    n_ac = coeffs.n_valid
    print(f"valid AC coefficients: {n_ac} "
          f"(= {leaf.n_nodes} children - {parent.n_nodes} parents: "
          f"{leaf.n_nodes - parent.n_nodes})")

    g = leaf.normalized()
    e_in = float((g ** 2).sum())
    e_out = float((coeffs.dc ** 2).sum() + (coeffs.flat_ac() ** 2).sum())
    print(f"energy in  {e_in:.6f}")
    print(f"energy out {e_out:.6f}  (relative gap {abs(e_in - e_out) / e_in:.2e})")

    back = inverse_scale(coeffs, leaf)
    print(f"inverse max abs error: {np.abs(back - g).max():.3e}")

    # Zeroing the AC keeps only the block averages: the coarsest usable
    # approximation of the level.  Useful to see what the detail carries.
    blurred = coeffs.with_flat_ac(np.zeros((n_ac, cloud.n_channels)))
    flat = inverse_scale(blurred, leaf)
    detail_energy = float(((g - flat) ** 2).sum())
    print(f"energy in the discarded detail: {detail_energy:.6f} "
          f"(= AC energy {float((coeffs.flat_ac() ** 2).sum()):.6f})")


if __name__ == "__main__":
    main()
