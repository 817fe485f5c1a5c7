"""Split mode 3 of the s = 1 branch into the index-triple contributions of (u*u*u)_3.

Each contribution is pushed through the mode-3 resolvent and measured against
v_3.  Shares that stay constant as alpha shrinks enter at the same order.
"""
import argparse

import numpy as np

from kgbreather.bifurcation import BifurcationContext, continue_branch
from kgbreather.radial import RadialFn, make_grid, norm_xq
from kgbreather.stationary import shoot_ground_state


def floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--alphas", type=floats, default="5e-4,1e-3,5e-3,1e-2,2e-2", help="comma-separated")
    args = p.parse_args()

    grid = make_grid(100.0, 4096)
    ctx = BifurcationContext.build(grid=grid, s=1, K=8, gs=shoot_ground_state(1.0, 1.0, grid))
    gam = ctx.gamma_grid
    print(f"{'alpha':>8} {'|v3|':>10} {'v1^3':>7} {'6u0v1v2':>8} {'3u0^2v3':>8} {'rest':>7} {'sum':>7}")
    for pt in continue_branch(ctx, args.alphas):
        v = pt.v.values
        u0 = ctx.w0 + v[0]
        parts = {"v1^3": v[1] ** 3, "6u0v1v2": 6 * u0 * v[1] * v[2], "3u0^2v3": 3 * u0**2 * v[3]}
        n3 = norm_xq(RadialFn.from_values(grid, v[3]), 1)
        total = np.zeros(ctx.n)
        shares = []
        for src in parts.values():
            w = ctx.resolve(3, gam * src, pt.lam)
            total += w
            shares.append(norm_xq(RadialFn.from_values(grid, w), 1) / n3)
        rest = norm_xq(RadialFn.from_values(grid, v[3] - total), 1) / n3
        signed = np.dot(total, v[3]) / np.dot(v[3], v[3])
        print(f"{pt.alpha:>8.1e} {n3:>10.3e} " + " ".join(f"{x:>7.3f}" for x in shares)
              + f" {rest:>7.1e} {signed:>7.4f}")


if __name__ == "__main__":
    main()
