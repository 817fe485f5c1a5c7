"""Branch points for one family: lambda(alpha), Newton cost and the tangency constant."""
import argparse
import csv

from kgbreather.bifurcation import BifurcationContext, continue_branch
from kgbreather.modes import ModeSequence, mode_norm
from kgbreather.radial import make_grid
from kgbreather.stationary import shoot_ground_state


def floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--s", type=int, default=1)
    p.add_argument("--K", type=int, default=8)
    p.add_argument("--omega", type=float, default=2.0)
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--r-max", type=float, default=100.0)
    p.add_argument("--alphas", type=floats, default="1e-3,-1e-3,2e-3,-2e-3,5e-3,1e-2,-1e-2,2e-2", help="comma-separated")
    p.add_argument("--csv", help="write the table here")
    args = p.parse_args()

    grid = make_grid(args.r_max, args.n)
    gs = shoot_ground_state(1.0, 1.0, grid)
    ctx = BifurcationContext.build(omega=args.omega, grid=grid, s=args.s, K=args.K, gs=gs)
    q = ModeSequence.single(grid, ctx.K, ctx.s, ctx.plan.entry(ctx.s).q_k)
    rows = []
    for pt in continue_branch(ctx, args.alphas):
        err = mode_norm(pt.v - q * pt.alpha, 1)
        rows.append({"alpha": pt.alpha, "lambda": pt.lam, "newton_iters": pt.newton_iters,
                     "residual": pt.residual, "tangency_C": err / pt.alpha**2})
    print(f"{'alpha':>10} {'lambda':>14} {'iters':>5} {'residual':>10} {'C':>8}")
    for r in rows:
        print(f"{r['alpha']:>10.3g} {r['lambda']:>14.6e} {r['newton_iters']:>5d} "
              f"{r['residual']:>10.2e} {r['tangency_C']:>8.3f}")
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
