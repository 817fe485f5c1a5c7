"""Grid refinement: phase, convolution-identity and kernel defects against n."""
import argparse

from kgbreather.bifurcation import BifurcationContext, kernel_at_origin
from kgbreather.linearized import convolution_defect, potential_fn
from kgbreather.radial import make_grid
from kgbreather.stationary import shoot_ground_state


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--r-max", type=float, default=100.0)
    p.add_argument("--ns", type=int, nargs="+", default=[4096, 6144, 8192])
    p.add_argument("--K", type=int, default=8)
    args = p.parse_args()

    for n in args.ns:
        grid = make_grid(args.r_max, n)
        gs = shoot_ground_state(1.0, 1.0, grid)
        try:
            ctx = BifurcationContext.build(grid=grid, s=1, K=args.K, gs=gs)
        except ValueError as exc:
            print(f"n={n}: {exc}")
            continue
        pot = potential_fn(gs, 1.0)(grid.nodes)
        defects = [convolution_defect(e, e.sigma_k, pot) for e in ctx.plan.entries]
        _, rep = kernel_at_origin(ctx, tol=1.0)
        print(f"n={n:6d} h={grid.spacing:.4f} kernel defect {rep.defect:.2e}")
        print("   convolution defect by k: " + " ".join(f"{d:.1e}" for d in defects))
        print("   sigma_k: " + " ".join(f"{e.sigma_k:.8f}" for e in ctx.plan.entries))


if __name__ == "__main__":
    main()
