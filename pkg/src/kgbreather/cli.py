"""Command line: staged pipeline ground-state -> phases -> kernel -> branch -> verify.

Each stage writes its artifacts into the output directory and can be rerun on
its own from the artifacts of the stages before it.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from .bifurcation import (BifurcationContext, BranchPoint, KernelError, NewtonError,
                          continue_branch, jacobian_block, kernel_at_origin,
                          transversality_check)
from .breather import (assemble_breather, cascade_check, full_modes, mode_excitation_report,
                       pde_residual, phase_report)
from .config import ConfigError, SolverConfig, load_config
from .linearized import PhaseError, compute_mode_phase, plan_phases
from .modes import ModeSequence, tail_decay_report
from .stationary import (ShootingError, check_nondegenerate, ground_state_from_center,
                         shoot_ground_state)

log = logging.getLogger("kgbreather")

STAGES = ("ground-state", "phases", "kernel", "branch", "verify")
PERIODICITY_FLOOR = 0.0
NONSTATIONARY_FLOOR = 1e-12
PHASE_MATCH = 1e-3
TAIL_ORDER = 2.0


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage} failed: {message}")
        self.stage = stage


def _clean(x):
    """JSON-ready copy: numpy scalars to floats, non-finite floats to strings, keys to str."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2) + "\n", encoding="utf-8")


def read_json(path: Path):
    if not path.exists():
        raise FileNotFoundError(f"missing artifact {path.name}; run the earlier stage first")
    return json.loads(path.read_text(encoding="utf-8"))


class Pipeline:
    """Stage runner holding the in-memory results of earlier stages."""

    def __init__(self, cfg: SolverConfig, out: Path | None = None):
        self.cfg = cfg
        self.out = Path(out if out is not None else cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.grid = cfg.grid()
        self.gamma = cfg.gamma()
        self.gs = None
        self.ctx = None
        self.branch = None

    # -- loading from artifacts -------------------------------------------

    def _ground_state(self):
        if self.gs is None:
            summary = read_json(self.out / "ground_state.json")
            same_gamma = self.cfg.gamma_profile is not None or math.isclose(summary["gamma0"], self.cfg.gamma0)
            if not (math.isclose(summary["m"], self.cfg.m) and same_gamma):
                raise ValueError("ground_state.json was computed for different (m, gamma0)")
            self.gs = ground_state_from_center(self.cfg.m, self.gamma, self.grid, summary["center_value"])
        return self.gs

    def _context(self) -> BifurcationContext:
        if self.ctx is None:
            plan = read_json(self.out / "phase_plan.json")
            if plan["s"] != self.cfg.s or plan["K"] != self.cfg.K:
                raise ValueError("phase_plan.json was computed for different (s, K)")
            taus = {e["k"]: e["tau_k"] for e in plan["modes"]}
            taus.update(self.cfg.taus)
            self.ctx = BifurcationContext.build(
                self.cfg.m, self.cfg.omega, self.gamma, self.grid, self.cfg.s, self.cfg.K,
                gs=self._ground_state(), tau_overrides=taus, check_ground_state=False,
                phase_tol=self.cfg.phase_tol)
        return self.ctx

    def _branch(self) -> list[BranchPoint]:
        if self.branch is None:
            ctx = self._context()
            pts = []
            for line in (self.out / "branch.jsonl").read_text(encoding="utf-8").splitlines():
                rec = json.loads(line)
                v = ModeSequence.load(self.out / rec["modes"], grid=ctx.grid)
                pts.append(BranchPoint(rec["alpha"], rec["lambda"], v, rec["newton_iters"], rec["residual"]))
            self.branch = pts
        return self.branch

    # -- stages -------------------------------------------------------------

    def ground_state(self) -> dict:
        cfg = self.cfg
        try:
            gs = shoot_ground_state(cfg.m, self.gamma, self.grid)
        except (ShootingError, ValueError) as exc:
            raise StageError("ground-state", str(exc)) from None
        rep = check_nondegenerate(gs, cfg.m, self.gamma)
        gs.w0.to_csv(self.out / "ground_state.csv")
        summary = gs.summary() | {"nondegeneracy": rep.to_dict()}
        write_json(self.out / "ground_state.json", summary)
        if not rep.is_nondegenerate:
            raise StageError("ground-state", f"kernel_mismatch {rep.kernel_mismatch:.3e} "
                                             "below threshold: ground state degenerate")
        self.gs = gs
        return summary

    def phases(self) -> dict:
        cfg, gs = self.cfg, self._ground_state()
        try:
            phases = [compute_mode_phase(k, cfg.m, cfg.omega, self.gamma, gs, self.grid)
                      for k in range(1, cfg.K + 1)]
            plan = plan_phases(cfg.s, cfg.K, phases, cfg.phase_tol, cfg.taus)
        except (PhaseError, ValueError) as exc:
            raise StageError("phases", str(exc)) from None
        d = plan.to_dict()
        for e, mode in zip(plan.entries, d["modes"]):
            mode |= {"sigma_pruefer": e.sigma_pruefer, "fit_residual": e.fit_residual,
                     "amplitude_raw": e.amplitude_raw, "ode_residual": e.ode_residual}
        write_json(self.out / "phase_plan.json", d)
        self.ctx = BifurcationContext(cfg.m, cfg.omega, self.gamma, gs, plan, self.grid)
        return d

    def kernel(self) -> dict:
        cfg = self.cfg
        try:
            ctx = self._context()
            report = {}
            try:
                _, fine = kernel_at_origin(ctx, tol=cfg.kernel_tol)
            except KernelError as exc:
                report["error"] = str(exc)
                write_json(self.out / "kernel_report.json", report)
                raise StageError("kernel", str(exc).removeprefix("stage kernel: ")) from None
            report["defect"] = fine.defect
            coarse_ctx = ctx.with_grid(cfg.svd_grid())
            q, coarse = kernel_at_origin(coarse_ctx, tol=math.inf, spectrum=True, gap=0.0)
            report |= {"coarse_grid": {"r_max": cfg.svd_r_max, "n": cfg.svd_n},
                       "coarse_defect": coarse.defect, "gap_ratio": coarse.gap_ratio,
                       "smallest_singular_values": coarse.singular_values[:4],
                       "block_minima": coarse.block_minima}
            tr = transversality_check(coarse_ctx, q, jacobian_block(coarse_ctx, ctx.s))
            report["transversality"] = tr.to_dict()
            write_json(self.out / "kernel_report.json", report)
        except ValueError as exc:
            raise StageError("kernel", str(exc)) from None
        if coarse.gap_ratio < 1e3:
            raise StageError("kernel", f"singular-value gap ratio {coarse.gap_ratio:.3e} below 1e3")
        if not tr.transversal:
            raise StageError("kernel", f"transversality residual {tr.lsq_residual:.3e} below 1e-3")
        if not tr.agree:
            raise StageError("kernel", "least-squares and Fourier transversality criteria disagree")
        return report

    def branch_stage(self) -> list[dict]:
        cfg, ctx = self.cfg, self._context()
        try:
            pts = continue_branch(ctx, cfg.alphas, tol=cfg.newton_tol)
        except NewtonError as exc:
            raise StageError("branch", str(exc).removeprefix("stage branch: ")) from None
        records = []
        for i, p in enumerate(pts):
            sub = f"branch/point_{i:02d}"
            p.v.save(self.out / sub)
            records.append(p.to_record() | {"modes": sub})
        with open(self.out / "branch.jsonl", "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(_clean(rec)) + "\n")
        self.branch = pts
        return records

    def verify(self) -> dict:
        cfg, ctx, pts = self.cfg, self._context(), self._branch()
        bp = max(pts, key=lambda p: (abs(p.alpha), p.alpha))
        u = full_modes(bp, ctx.gs)
        U = assemble_breather(bp, ctx.gs, cfg.omega, cfg.t_count)
        resid = pde_residual(U, self.gamma, cfg.m, cfg.omega, u)
        period_gap = float(np.max(np.abs(U.values[0] - U.values[-1])))
        rU = float(np.max(np.abs(U.r_nodes * U.values)))
        moving = float(np.max(np.abs(U.values - U.values[0])))
        assemble_breather(bp, ctx.gs, cfg.omega, cfg.t_count, r_subsample=8).to_csv(self.out / "breather.csv")
        checks = {"pde_residual": resid, "periodicity_gap": period_gap, "max_rU": rU,
                  "time_variation": moving, "alpha": bp.alpha}
        failures = []
        if resid > cfg.residual_tol:
            failures.append(f"pde_residual {resid:.3e} exceeds {cfg.residual_tol:.1e}")
        if period_gap > PERIODICITY_FLOOR:
            failures.append(f"periodicity_gap {period_gap:.3e}")
        if bp.alpha != 0 and moving <= NONSTATIONARY_FLOOR:
            failures.append("time_variation at floor: breather is stationary")
        try:
            exc_rep = mode_excitation_report(pts, ctx)
            checks["excitation"] = exc_rep.to_dict()
            if not exc_rep.passed:
                failures.append(f"excitation ratio {exc_rep.ratio:.3e} below 1e3")
        except ValueError as exc:
            checks["excitation"] = {"skipped": str(exc)}
        try:
            checks["cascade"] = cascade_check(bp, ctx).to_dict()
        except (ValueError, RuntimeError) as exc:
            failures.append(f"cascade: {exc}")
        if ctx.K >= 4:
            tail = tail_decay_report(bp.v, TAIL_ORDER)
            checks["tail_decay"] = tail.to_dict()
            if not tail.passed:
                failures.append("tail_decay at order 2 failed")
        phases = phase_report(bp, ctx)
        checks["phases"] = phases
        worst = max([p["distance"] for p in phases.values()] or [0.0])
        if worst > PHASE_MATCH:
            failures.append(f"far-field phase distance {worst:.3e} exceeds {PHASE_MATCH:.0e}")
        checks["passed"] = not failures
        checks["failures"] = failures
        write_json(self.out / "verification.json", checks)
        if failures:
            raise StageError("verify", "; ".join(failures))
        return checks

    def run(self, stage: str) -> None:
        getattr(self, {"ground-state": "ground_state", "branch": "branch_stage"}.get(stage, stage))()


def run_pipeline(cfg: SolverConfig, out=None, stages=STAGES) -> int:
    """Run stages in order; 0 on success, 1 with the failing stage named on stderr."""
    pipe = Pipeline(cfg, out)
    write_json(pipe.out / "config.json", cfg.to_dict())
    for stage in stages:
        t0 = time.perf_counter()
        try:
            pipe.run(stage)
        except StageError as exc:
            print(str(exc), file=sys.stderr)
            return 1
        except (FileNotFoundError, ValueError) as exc:
            print(f"stage {stage} failed: {exc}", file=sys.stderr)
            return 1
        log.info("stage %s done in %.1f s", stage, time.perf_counter() - t0)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kgbreather", description=__doc__.splitlines()[0])
    p.add_argument("command", nargs="?", default="pipeline", choices=STAGES + ("pipeline",),
                   help="stage to run (default: the whole pipeline)")
    p.add_argument("--config", type=Path, help="key = value configuration file")
    p.add_argument("--out", type=Path, help="output directory (overrides the config)")
    p.add_argument("--stage", choices=STAGES, help="same as the positional command")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="configuration override, may repeat")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, overrides=args.override)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    command = args.stage or args.command
    stages = STAGES if command == "pipeline" else (command,)
    return run_pipeline(cfg, args.out, stages)


if __name__ == "__main__":
    sys.exit(main())
