"""Command-line entry point and experiment drivers.

Commands: ``forward`` (solve both systems and dump fields), ``taylor-vs-mc``
(Taylor estimates against Monte Carlo over a rank sweep), ``spectrum``
(eigenvalue decay across mesh refinements), ``optimize`` (risk-averse design
optimization over a variance-weight sweep).
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import prior as prior_mod, regularization, risk
from .config import RunConfig
from .exceptions import (
    ConfigError,
    ConstraintError,
    ContinuationError,
    MeshResourceError,
    PorosityRangeError,
    SolverError,
)
from .forward import ForwardContext, ForwardWorkspace, porosity_map
from .mesh import refine_uniform, write_vtk
from .optimizer import minimize
from .sensitivities import grad_d_Jquad

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_NOT_CONVERGED = 4

_SOLVER_ERRORS = (
    SolverError,
    PorosityRangeError,
    ConstraintError,
    MeshResourceError,
)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)  # RFC-4180: CRLF line endings, quoted as needed
        writer.writerow(header)
        writer.writerows(rows)


def _setup(cfg):
    mesh = cfg.build_mesh()
    ctx = ForwardContext(mesh, cfg.model_params())
    prior = cfg.build_prior(mesh)
    d = np.full(mesh.num_vertices, cfg.design.initial)
    return mesh, ctx, prior, d


def cmd_forward(cfg, out_dir):
    mesh, ctx, prior, d = _setup(cfg)
    phi = porosity_map(d, prior.mean_field)
    ws = ForwardWorkspace(ctx, phi)
    state = ws.state
    nv = mesh.num_vertices
    u_pairs = np.column_stack([state.u_s[:nv], state.u_s[nv:]])
    fields = {
        "T_s": ({"T_s": state.T_s}, None),
        "T_f": ({"T_f": state.T_f}, None),
        "p": ({"p": state.p}, None),
        "phi_f": ({"phi_f": phi.phi_f}, None),
        "u_s": (None, {"u_s": u_pairs}),
    }
    for name, (scalars, vectors) in fields.items():
        write_vtk(
            mesh,
            out_dir / f"{name}.vtk",
            point_data=scalars or {},
            point_vectors=vectors or {},
        )
    qt, qm = ws.qoi_thermal(), ws.qoi_mechanical()
    print(f"Q_T = {qt:.10e}")
    print(f"Q_M = {qm:.10e}")
    print(f"Q   = {ws.qoi():.10e}")
    return EXIT_OK


def cmd_taylor_vs_mc(cfg, out_dir):
    mesh, ctx, prior, d = _setup(cfg)
    sweep = sorted(set(int(n) for n in cfg.risk.N_sweep))
    rank_max = max(sweep) if sweep else 0
    ev = risk.evaluate_risk(
        d,
        ctx,
        prior,
        rank_max,
        oversampling=cfg.risk.oversampling,
        seed=cfg.risk.seed,
        power_iters=cfg.risk.power_iters,
    )
    print(f"n_samples = {cfg.mc.n_samples}")
    mc = risk.mc_estimate(
        d,
        cfg.mc.n_samples,
        np.random.SeedSequence(cfg.risk.seed).spawn(1)[0],
        ctx,
        prior,
        workers=cfg.mc.workers,
    )
    gcg = float(ev.grad_bar @ prior_mod.apply_covariance(prior, ev.grad_bar))
    rows = []
    for n in sweep:
        lams = ev.eigenvalues[:n]
        e_quad = ev.Q_bar + 0.5 * float(np.sum(lams))
        v_quad = gcg + 0.5 * float(np.sum(lams**2))
        rows.append(
            [
                n,
                f"{e_quad:.12e}",
                f"{v_quad:.12e}",
                f"{mc.mean:.12e}",
                f"{mc.variance:.12e}",
                f"{mc.std_error:.12e}",
                f"{abs(e_quad - mc.mean) / abs(mc.mean):.12e}",
                f"{abs(v_quad - mc.variance) / abs(mc.variance):.12e}",
            ]
        )
    _write_csv(
        out_dir / "taylor_convergence.csv",
        [
            "N", "E_quad", "V_quad", "mc_mean", "mc_var", "mc_stderr",
            "rel_err_mean", "rel_err_var",
        ],
        rows,
    )
    return EXIT_OK


def cmd_spectrum(cfg, out_dir):
    if cfg.mesh.refinements < 1:
        raise ConfigError("spectrum needs mesh.refinements >= 1")
    mesh, ctx, prior, d = _setup(cfg)
    print(f"parameter dimension (base mesh vertices) = {mesh.num_vertices}")
    meshes = [mesh]
    for _ in range(cfg.mesh.refinements):
        meshes.append(refine_uniform(meshes[-1]))
    spectra = []
    for msh in meshes:
        msh_ctx = ForwardContext(msh, cfg.model_params())
        msh_prior = cfg.build_prior(msh)
        d_m = np.full(msh.num_vertices, cfg.design.initial)
        ev = risk.evaluate_risk(
            d_m,
            msh_ctx,
            msh_prior,
            cfg.risk.N,
            oversampling=cfg.risk.oversampling,
            seed=cfg.risk.seed,
            power_iters=cfg.risk.power_iters,
        )
        spectra.append(ev.eigenvalues)
    header = ["n"] + [f"lambda_mesh{i}" for i in range(len(meshes))]
    rows = [
        [n + 1] + [f"{spec[n]:.12e}" for spec in spectra]
        for n in range(cfg.risk.N)
    ]
    _write_csv(out_dir / "spectrum.csv", header, rows)
    return EXIT_OK


def _optimize_one(cfg, ctx, prior, d0, weights, reg_cfg):
    """One bound-constrained optimization of the quadratic risk objective."""

    cache = {}

    def _risk_eval(d):
        key = d.tobytes()
        if cache.get("key") != key:
            cache["key"] = key
            cache["ev"] = risk.evaluate_risk(
                d,
                ctx,
                prior,
                cfg.risk.N,
                weights=weights,
                oversampling=cfg.risk.oversampling,
                seed=cfg.risk.seed,
                power_iters=cfg.risk.power_iters,
                reg_config=reg_cfg,
            )
        return cache["ev"]

    def objective(d):
        return _risk_eval(d).J_total

    def objective_and_gradient(d):
        ev = _risk_eval(d)
        g = grad_d_Jquad(d, ev, weights, reg_config=reg_cfg)
        return ev.J_total, g

    return minimize(
        objective_and_gradient, d0, cfg.optimize_options(), objective=objective
    )


def _write_iteration_log(path, result):
    rows = []
    for i, J in enumerate(result.J_history):
        rows.append(
            [
                i,
                f"{J:.12e}",
                f"{result.grad_norm_history[i]:.12e}"
                if i < len(result.grad_norm_history)
                else "",
                f"{result.step_lengths[i - 1]:.6e}" if i >= 1 else "",
                result.n_active_history[i],
            ]
        )
    _write_csv(
        path, ["iter", "J", "grad_norm", "step_length", "n_active_bounds"], rows
    )


def cmd_optimize(cfg, out_dir):
    mesh, ctx, prior, d0 = _setup(cfg)
    beta_list = list(cfg.risk.beta_V_list)
    print(f"beta_V sweep = {beta_list}")
    summary_path = out_dir / "summary.csv"
    summary_header = ["beta_V", "J", "E_quad", "V_quad", "mc_var_at_optimum"]
    summary_rows = []
    all_converged = True
    for idx, beta_V in enumerate(beta_list):
        weights = risk.RiskWeights(
            beta_V=float(beta_V),
            beta_R=cfg.risk.beta_R,
            beta_M=cfg.risk.beta_M,
        )
        reg_cfg = cfg.reg_config() if cfg.risk.beta_R > 0.0 else None
        if cfg.reg.continuation and cfg.risk.beta_R > 0.0:
            stage_results = []

            def stage_optimize(d_start, stage_cfg):
                res = _optimize_one(cfg, ctx, prior, d_start, weights, stage_cfg)
                stage_results.append(res)
                return (
                    res.d_opt,
                    res.J_history[-1],
                    res.iterations,
                    res.converged,
                )

            try:
                cont = regularization.continuation_run(
                    d0, cfg.reg.K_cont, stage_optimize
                )
                result = stage_results[-1]
                _write_csv(
                    out_dir / f"continuation_{idx}.csv",
                    ["stage", "eps0", "J", "sparsity_metric", "iterations"],
                    [
                        [r.stage, r.eps0, f"{r.J:.12e}", f"{r.sparsity:.6f}",
                         r.iterations]
                        for r in cont.stages
                    ],
                )
            except ContinuationError as exc:
                all_converged = False
                _write_csv(
                    out_dir / f"continuation_{idx}.csv",
                    ["stage", "eps0", "J", "sparsity_metric", "iterations"],
                    [
                        [r.stage, r.eps0, f"{r.J:.12e}", f"{r.sparsity:.6f}",
                         r.iterations]
                        for r in exc.history
                    ],
                )
                print(f"beta_V={beta_V}: {exc}", file=sys.stderr)
                continue
        else:
            result = _optimize_one(cfg, ctx, prior, d0, weights, reg_cfg)
            if not result.converged:
                all_converged = False
        d_opt = result.d_opt
        _write_iteration_log(out_dir / f"iterations_{idx}.csv", result)
        write_vtk(
            mesh, out_dir / f"d_opt_{idx}.vtk", point_data={"d_opt": d_opt}
        )
        ev = risk.evaluate_risk(
            d_opt,
            ctx,
            prior,
            cfg.risk.N,
            weights=weights,
            oversampling=cfg.risk.oversampling,
            seed=cfg.risk.seed,
            power_iters=cfg.risk.power_iters,
            reg_config=reg_cfg,
        )
        mc = risk.mc_estimate(
            d_opt,
            cfg.mc.n_samples,
            np.random.SeedSequence(cfg.risk.seed).spawn(1)[0],
            ctx,
            prior,
            workers=cfg.mc.workers,
        )
        summary_rows.append(
            [
                f"{beta_V:.6e}",
                f"{ev.J_total:.12e}",
                f"{ev.E_quad:.12e}",
                f"{ev.V_quad:.12e}",
                f"{mc.variance:.12e}",
            ]
        )
        # flush partial results after every run
        _write_csv(summary_path, summary_header, summary_rows)
        print(
            f"beta_V={beta_V:g}: J={ev.J_total:.6e} E={ev.E_quad:.6e} "
            f"V={ev.V_quad:.6e} mc_var={mc.variance:.6e} [{result.status}]"
        )
    return EXIT_OK if all_converged else EXIT_NOT_CONVERGED


def build_parser():
    parser = argparse.ArgumentParser(
        prog="porous-duu",
        description="Risk-averse design of porous thermal-break components.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("forward", "taylor-vs-mc", "spectrum", "optimize"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="root seed (overrides config)")
        p.add_argument(
            "--workers", type=int, help="MC worker count (overrides config)"
        )
    return parser


_COMMANDS = {
    "forward": cmd_forward,
    "taylor-vs-mc": cmd_taylor_vs_mc,
    "spectrum": cmd_spectrum,
    "optimize": cmd_optimize,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg.risk.seed = args.seed
        if args.workers is not None:
            cfg.mc.workers = args.workers
        out_dir = Path(args.out or cfg.output.directory)
        out_dir.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, out_dir)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
