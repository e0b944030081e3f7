"""Command-line front end.

Subcommands: ``solve``, ``simulate``, ``sweep``, ``place`` and ``schema``.
Exit codes: 0 success, 1 usage or configuration error, 2 the instance is
not estimable, 3 a simulation failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from typing import Iterable, Sequence

import numpy as np

from .applications import build_problem, optimize_placement, q_value
from .config import SCHEMA, ConfigError, RunConfig, build_function, build_model, load_config, model_family
from .errors import ModelError, NonEstimableError, RankDeficient, SimulationError
from .estimation import (
    InconsistentConstraint,
    check_identifiability,
    solve_bound,
    solve_dual,
    solve_protocol,
    unentangled_weights,
)
from .field_model import field_vector
from .protocol_sim import (
    SweepRow,
    mse_convergence_sweep,
    repeat_runs,
    simulate_ghz_linear,
    simulate_unentangled,
)

__all__ = ["main", "build_parser", "format_value", "write_csv"]

log = logging.getLogger("sensornet")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_SIMULATION = 0, 1, 2, 3


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(header: Sequence[str], rows: Iterable[Sequence], stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])


class _Output:
    """Routes CSV tables to files under ``out_dir`` or, without one, to stdout."""

    def __init__(self, out_dir: str | None, quiet: bool):
        self.out_dir = out_dir
        self.quiet = quiet
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)

    def report(self, text: str) -> None:
        if not self.quiet:
            print(text)

    def table(self, name: str, header, rows) -> None:
        if self.out_dir:
            with open(os.path.join(self.out_dir, name), "w", encoding="utf-8", newline="") as fh:
                write_csv(header, rows, fh)
        else:
            buf = io.StringIO()
            write_csv(header, rows, buf)
            print(f"# {name}")
            sys.stdout.write(buf.getvalue())


def _vec(x) -> str:
    return "(" + ", ".join(f"{v:.10g}" for v in np.asarray(x, dtype=float)) + ")"


def _model_and_theta(cfg: RunConfig):
    model = build_model(cfg.model)
    theta = np.zeros(model.param_dim) if cfg.theta is None else np.asarray(cfg.theta, dtype=float)
    model.check_theta(theta)
    return model, theta


def _problem(cfg: RunConfig):
    model, theta = _model_and_theta(cfg)
    spec = build_function(cfg.function, model.param_dim)
    problem = build_problem(model, spec, theta)
    if not check_identifiability(problem.G, problem.alpha):
        raise InconsistentConstraint(
            "q is not estimable: its gradient is not in the row space of the sensor gradient matrix"
        )
    return model, theta, spec, problem


def cmd_solve(cfg: RunConfig, args, out: _Output) -> int:
    _, _, _, problem = _problem(cfg)
    canonical = cfg.solver.get("canonical", True)
    bound = solve_bound(problem, canonical)
    prot = solve_protocol(problem, canonical)
    dual = solve_dual(problem, canonical)
    w_un, coef_un = unentangled_weights(problem)
    coef_ent = prot.u_prime**2
    out.report(
        "\n".join(
            [
                f"instance: d={problem.d} sensors, k={problem.k} parameters",
                f"  u   (bound)     = {bound.u:.12g}",
                f"  u'  (protocol)  = {prot.u_prime:.12g}",
                f"  u'' (dual)      = {dual.u_dprime:.12g}",
                f"  beta0           = {_vec(bound.beta0)}",
                f"  w0              = {_vec(prot.w0)}",
                f"  v0              = {_vec(dual.v0)}",
                f"  w unentangled   = {_vec(w_un)}",
                f"  MSE coefficient entangled   |w0|_inf^2 = {coef_ent:.12g}",
                f"  MSE coefficient unentangled |w|_2^2    = {coef_un:.12g}",
            ]
        )
    )
    rows = [("u", 0, bound.u), ("u_prime", 0, prot.u_prime), ("u_dprime", 0, dual.u_dprime)]
    for name, vec in (("beta0", bound.beta0), ("w0", prot.w0), ("v0", dual.v0), ("w_unentangled", w_un)):
        rows += [(name, i, float(v)) for i, v in enumerate(vec)]
    rows += [("mse_coefficient_entangled", 0, coef_ent), ("mse_coefficient_unentangled", 0, coef_un)]
    out.table("solve.csv", ("quantity", "index", "value"), rows)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, args, out: _Output) -> int:
    model, theta, _, problem = _problem(cfg)
    if not model.is_linear:
        raise ConfigError("model: simulate needs a model linear in theta; use the sweep command for nonlinear models")
    plan = cfg.shot_plan(args.seed)
    reps = int(cfg.simulation.get("repetitions", 100))
    if reps < 2:
        raise ConfigError("simulation.repetitions: simulate needs at least 2 repetitions")
    f = field_vector(model, theta) - model.offset()
    q_true = float(problem.alpha @ theta)
    which = cfg.simulation.get("protocol", "both")
    protocols = []
    if which in ("ghz", "both"):
        w = solve_protocol(problem).w0
        protocols.append(("ghz", lambda pl, w=w: simulate_ghz_linear(f, w, pl)))
    if which in ("unentangled", "both"):
        w_un, _ = unentangled_weights(problem)
        protocols.append(("unentangled", lambda pl, w=w_un: simulate_unentangled(f, w, pl)))
    run_rows, summary_rows, lines = [], [], [f"q(theta) = {q_true:.12g}, mu = {plan.shots}, t = {plan.t:g}, {reps} runs"]
    for name, run in protocols:
        agg, results = repeat_runs(run, plan, reps, q_true)
        for i, r in enumerate(results):
            run_rows.append((name, i, r.q_hat, r.q_hat - q_true, r.empirical_variance, r.theoretical_variance, r.shots_used))
        ratio = agg.empirical_variance / agg.theoretical_variance if agg.theoretical_variance > 0 else float("nan")
        stderr = float(np.sqrt(agg.empirical_variance / reps))
        summary_rows.append((name, reps, agg.q_hat, q_true, agg.bias_estimate, stderr, agg.empirical_variance, agg.theoretical_variance, ratio))
        lines.append(
            f"  {name:<12} mean={agg.q_hat:.10g}  var={agg.empirical_variance:.6g}  "
            f"theory={agg.theoretical_variance:.6g}  ratio={ratio:.4f}"
        )
    out.report("\n".join(lines))
    out.table(
        "simulate_runs.csv",
        ("protocol", "run", "q_hat", "error", "plugin_variance", "theoretical_variance", "shots_used"),
        run_rows,
    )
    out.table(
        "simulate_summary.csv",
        ("protocol", "runs", "mean_q_hat", "q_true", "bias", "standard_error", "sample_variance", "theoretical_variance", "variance_ratio"),
        summary_rows,
    )
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args, out: _Output) -> int:
    model, theta = _model_and_theta(cfg)
    spec = build_function(cfg.function, model.param_dim)
    sim = cfg.simulation
    if "t_list" not in sim:
        raise ConfigError("simulation.t_list: required for sweep")
    plan = cfg.shot_plan(args.seed)
    rows = mse_convergence_sweep(
        model,
        spec,
        theta,
        sim["t_list"],
        float(sim.get("p", 0.75)),
        plan,
        repetitions=int(sim.get("repetitions", 100)),
        shots_per_round=int(sim.get("shots_per_round", 16)),
        max_rounds=int(sim.get("max_rounds", 30)),
    )
    fields = list(SweepRow.__dataclass_fields__)
    lines = [f"q(theta) = {q_value(spec, model, theta):.12g}, reference 2u'^2 = {rows[0].reference:.10g}"]
    lines += [f"  t={r.t:<10g} M={r.mse:.6g}  M t^2 mu={r.mse_t2_per_shot:.6g}  bias^2={r.bias_sq:.3g}" for r in rows]
    out.report("\n".join(lines))
    out.table("sweep.csv", fields, [[getattr(r, k) for k in fields] for r in rows])
    return EXIT_OK


def cmd_place(cfg: RunConfig, args, out: _Output) -> int:
    if cfg.placement is None:
        raise ConfigError("placement: section is required for place")
    pl = cfg.placement
    family = model_family(cfg.model)
    probe = build_model(cfg.model)
    theta = np.zeros(probe.param_dim) if cfg.theta is None else np.asarray(cfg.theta, dtype=float)
    spec = build_function(cfg.function, probe.param_dim)
    bounds = np.asarray(pl["bounds"], dtype=float)
    if bounds.shape[0] != probe.spatial_dim:
        raise ConfigError(f"placement.bounds: expected {probe.spatial_dim} [lo, hi] pairs, got {bounds.shape[0]}")
    seed = int(pl.get("seed", 0) if args.seed is None else args.seed)
    try:
        result = optimize_placement(
            family, spec, theta, bounds, int(pl["sensors"]),
            budget=int(pl.get("budget", 500)), restarts=int(pl.get("restarts", 4)), seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"placement: {exc}") from exc
    lines = [
        f"best u' = {result.u_prime:.12g} (local optimum, restart {result.best_restart})",
        f"budget exhausted: {'yes' if result.budget_exhausted else 'no'}",
    ]
    lines += [f"  sensor {i}: {_vec(p)}" for i, p in enumerate(result.positions)]
    out.report("\n".join(lines))
    dim = result.positions.shape[1]
    out.table("placement.csv", ["sensor"] + [f"x{j}" for j in range(dim)],
              [[i, *map(float, p)] for i, p in enumerate(result.positions)])
    out.table("placement_history.csv", ("iteration", "best_u_prime"), result.history)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "simulate": cmd_simulate, "sweep": cmd_sweep, "place": cmd_place}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None, metavar="N", help="override the configured seed")
    common.add_argument("--out", default=None, metavar="DIR", help="directory for CSV output (default: stdout)")
    common.add_argument("--quiet", action="store_true", help="suppress the text report")
    parser = _Parser(prog="sensornet", description="Optimal estimation of linear functions with quantum sensor networks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("solve", parents=[common], help="solve the bound, protocol and dual problems")
    sub.add_parser("simulate", parents=[common], help="Monte-Carlo runs of the entangled and unentangled protocols")
    sub.add_parser("sweep", parents=[common], help="MSE convergence of the two-step protocol")
    sub.add_parser("place", parents=[common], help="local search over sensor positions")
    sub.add_parser("schema", help="print the configuration JSON schema")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(json.dumps(SCHEMA, indent=2))
        return EXIT_OK
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
        out = _Output(args.out or cfg.output.get("dir"), args.quiet)
        return COMMANDS[args.command](cfg, args, out)
    except (ConfigError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonEstimableError, RankDeficient) as exc:
        print(f"not estimable: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION


if __name__ == "__main__":
    sys.exit(main())
