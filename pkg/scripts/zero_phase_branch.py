"""Tune omega so that sigma_1 = 0 and continue the branch of the quarter-phase map."""
import argparse

from kgbreather.bifurcation import BifurcationContext, continue_branch, kernel_at_origin
from kgbreather.linearized import omega_for_zero_phase
from kgbreather.radial import make_grid
from kgbreather.stationary import shoot_ground_state


def floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--bracket", type=float, nargs=2, default=[2.05, 2.2])
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--alphas", type=floats, default="1e-3,-1e-3,1e-2,-1e-2", help="comma-separated")
    args = p.parse_args()

    grid = make_grid(100.0, 4096)
    gs = shoot_ground_state(1.0, 1.0, grid)
    omega = omega_for_zero_phase(1, 1.0, 1.0, gs, grid, *args.bracket)
    ctx = BifurcationContext.build(omega=omega, grid=grid, s=1, K=args.K, gs=gs)
    _, rep = kernel_at_origin(ctx)
    print(f"omega = {omega:.10f}  g_case = {ctx.g_case}  kernel defect = {rep.defect:.2e}")
    for pt in continue_branch(ctx, args.alphas):
        print(f"alpha {pt.alpha:>8.1e}  lambda {pt.lam:>13.6e}  iters {pt.newton_iters}  residual {pt.residual:.1e}")


if __name__ == "__main__":
    main()
