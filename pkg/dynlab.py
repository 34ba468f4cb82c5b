#!/usr/bin/env python3
"""
Dynamic multinomial logit toolkit for labor-informality panels.
Simulates panels, builds credit-market-accessibility indices, computes
descriptives, fits dynamic models with correlated random effects and runs
post-estimation. Every run writes a manifest (inputs' hashes, config, version,
outputs' hashes) and a row in the local run ledger, so it can be re-run exactly.
"""

import argparse
import json
import logging
import os
import sqlite3
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import pandas as pd

from dynmlogit import __version__
from dynmlogit.cma import attach_index, build_index, component_table, write_index
from dynmlogit.descriptives import (
    event_study,
    render_transition_table,
    sample_composition,
    summary_stats,
    transition_matrix,
)
from dynmlogit.effects import (
    average_marginal_effect,
    effects_at_grid,
    heterogeneous_effects,
    levels,
    policy_simulation,
    tertiles,
    transition_probabilities,
)
from dynmlogit.errors import (
    ConfigInvalid,
    DataError,
    DynlabError,
    MissingColumn,
    NotConverged,
    SpecError,
)
from dynmlogit.estimator import (
    FitResult,
    fit,
    fit_loan_model,
    heterogeneity_moments,
    relative_risk_ratios,
    render_rrr_table,
)
from dynmlogit.panel import PanelDataset, apply_selection_rules, build_design, load_panel, write_panel
from dynmlogit.simulate import (
    generate_panel,
    heckman_wrs_experiment,
    initial_conditions_experiment,
    recovery_experiment,
    simulation_spec,
    write_truth,
)
from dynmlogit.specs import MODES, DgpConfig, ModelSpec, RunConfig, load_document
from file_utils import build_manifest, read_manifest, sha256_file, write_csv, write_json, write_text

# ================= CONFIG =================
DEFAULT_OUT_DIR = Path("out")
DB_NAME = "dynlab.db"
MANIFEST_NAME = "manifest.json"
MAX_LISTED_ERRORS = 5
DEFAULT_RUNS_LISTED = 20

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NOT_CONVERGED = 3

logger = logging.getLogger("dynlab")


def data_dir() -> Path:
    return Path(os.environ.get("DYNLAB_DATA_DIR", Path(__file__).parent / "data"))


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("DYNLAB_THREADS", "1")))
    except ValueError:
        raise ConfigInvalid("DYNLAB_THREADS must be an integer")


class UsageError(Exception):
    """Bad command line: unknown flag, missing argument, unreadable input path."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ── run ledger ──────────────────────────────────────────────────────────────

def init_db() -> Path:
    """Create / migrate the run ledger (run once per invocation)."""
    from migrations.runner import run_migrations
    directory = data_dir()
    directory.mkdir(parents=True, exist_ok=True)
    db_path = directory / DB_NAME
    conn = sqlite3.connect(db_path)
    try:
        run_migrations(conn)
    finally:
        conn.close()
    return db_path


def record_run(subcommand: str, argv: list[str], out_dir: Optional[Path], exit_code: int,
               manifest_sha: Optional[str], message: str = ""):
    try:
        conn = sqlite3.connect(init_db())
        try:
            conn.execute(
                "INSERT INTO runs (started_at, subcommand, argv, out_dir, exit_code, manifest_sha256, message) "
                "VALUES (?, ?, ?, ?, ?, ?, ?)",
                (
                    datetime.now(timezone.utc).isoformat(),
                    subcommand,
                    json.dumps(argv),
                    str(out_dir) if out_dir else None,
                    exit_code,
                    manifest_sha,
                    message[:500],
                ),
            )
            conn.commit()
        finally:
            conn.close()
    except sqlite3.Error as e:
        logger.warning("Could not record run in ledger: %s", e)


def list_runs(limit: int = DEFAULT_RUNS_LISTED) -> list[tuple]:
    conn = sqlite3.connect(init_db())
    try:
        return conn.execute(
            "SELECT id, started_at, subcommand, exit_code, out_dir, manifest_sha256 FROM runs "
            "ORDER BY id DESC LIMIT ?", (limit,),
        ).fetchall()
    finally:
        conn.close()


# ── per-run context ─────────────────────────────────────────────────────────

@dataclass
class Run:
    args: argparse.Namespace
    config: RunConfig
    out: Path
    inputs: list[Path] = field(default_factory=list)
    outputs: list[Path] = field(default_factory=list)

    @property
    def threads(self) -> int:
        return self.config.fit.threads

    def input(self, path: Optional[str], flag: str) -> Path:
        if not path:
            raise UsageError(f"{self.args.action} needs {flag}")
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"{flag} {p}: no such file")
        self.inputs.append(p)
        return p

    def output(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(p)
        return p


def resolve_config(args) -> RunConfig:
    """JSON document first, then command-line overrides; validated before any work."""
    payload = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"--config {path}: no such file")
        try:
            payload = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigInvalid(f"{path}: {e}") from e
    cfg = load_document(RunConfig, payload)

    model = cfg.model
    if args.mode:
        model = model.with_mode(args.mode)
    if args.nodes:
        model = model.replace(quadrature_nodes=args.nodes)
    model = load_document(ModelSpec, model.model_dump(mode="json"))

    seed = args.seed if args.seed is not None else cfg.seed
    threads = args.threads or cfg.threads or default_threads()
    dgp = cfg.dgp
    if dgp is not None and seed is not None:
        dgp = dgp.replace(seed=seed)
    return cfg.replace(
        model=model,
        seed=seed,
        threads=threads,
        dgp=dgp,
        fit=cfg.fit.replace(threads=threads),
    )


def _print_header(run: Run, **extra):
    for label, value in extra.items():
        print(f"{label + ':':<9}{value}")
    print(f"{'Threads:':<9}{run.threads}")
    print(f"{'Output:':<9}{run.out}\n")


def _select(run: Run, ds: PanelDataset, spec: ModelSpec) -> PanelDataset:
    return apply_selection_rules(
        ds,
        age_range=run.config.selection.age_range,
        required=spec.required_columns(),
        exit_outcome=spec.exit_outcome,
    )


def _print_selection(ds: PanelDataset):
    for step, n in ds.exclusions.items():
        print(f"  Removed at {step}: {n:,}")
    print(f"  Origins kept:                  {int(ds.frame['is_origin'].sum()):,}")


# ── actions ─────────────────────────────────────────────────────────────────

def simulate_action(run: Run):
    """Handle the simulate subcommand."""
    dgp = run.config.dgp or DgpConfig(seed=run.config.seed if run.config.seed is not None else 0)
    _print_header(run, Seed=dgp.seed, Persons=f"{dgp.persons:,}", Waves=dgp.waves)
    ds, truth = generate_panel(dgp, threads=run.threads)
    write_panel(ds, run.output("panel.csv"))
    write_truth(truth, run.output("truth.json"))
    print("Summary:")
    print(f"  Persons:                       {ds.n_persons:,}")
    print(f"  Person-years:                  {ds.n_rows:,}")
    print(f"  ✓ Panel written to {run.out / 'panel.csv'}")


def index_action(run: Run):
    """Handle the index subcommand."""
    panel = run.input(run.args.panel, "--panel")
    method = run.args.method or run.config.index_method
    _print_header(run, Panel=panel, Method=method)
    ds = load_panel(panel)
    if "community_id" not in ds.frame.columns:
        raise MissingColumn(["community_id"])
    table = component_table(ds.frame, distance_unit=run.args.distance_unit)
    index = build_index(table, method)
    write_index(index, run.output("cma_index.csv"))
    write_panel(attach_index(ds, index), run.output("panel_indexed.csv"))
    write_json(run.output("index_report.json"), index.report())
    print("Summary:")
    print(f"  Community-years:               {len(table):,}")
    if index.explained_variance is not None:
        print(f"  First component explains:      {100 * index.explained_variance:.1f}%")
    print(f"  ✓ Index written to {run.out / 'cma_index.csv'}")


def describe_action(run: Run):
    """Handle the describe subcommand."""
    panel = run.input(run.args.panel, "--panel")
    spec = run.config.model
    _print_header(run, Panel=panel, Scheme=spec.scheme)
    ds = _select(run, load_panel(panel), spec)

    matrices = transition_matrix(ds, scheme=spec.scheme)
    warnings_ = []
    try:
        matrices.update(transition_matrix(ds, split="borrower", scheme=spec.scheme))
    except MissingColumn as e:
        warnings_.append(f"no borrower split: {e}")
    rows = []
    for label, m in matrices.items():
        long = m.probabilities.stack().rename("probability").reset_index()
        long["count"] = m.counts.stack().to_numpy()
        long.insert(0, "split", label)
        rows.append(long)
    write_csv(pd.concat(rows, ignore_index=True), run.output("transitions.csv"))
    write_text(run.output("transitions.txt"), render_transition_table(matrices))
    write_csv(summary_stats(ds), run.output("summary_stats.csv"), index=True)
    write_csv(sample_composition(ds), run.output("composition.csv"), index=True)

    print("Summary:")
    _print_selection(ds)
    print(f"  Transition splits:             {', '.join(matrices)}")
    for w in warnings_[:MAX_LISTED_ERRORS]:
        print(f"  ⚠ {w}")


def event_study_action(run: Run):
    """Handle the event-study subcommand."""
    panel = run.input(run.args.panel, "--panel")
    window = run.args.window or run.config.event_window
    _print_header(run, Panel=panel, Window=window)
    results = event_study(load_panel(panel), window=window)
    print("Summary:")
    for name, res in results.items():
        write_csv(res.table, run.output(f"event_{name}.csv"))
        print(f"  {name + ':':<31}{res.metadata['n_rows']:,} rows, base level {res.base_level:.4f}")


def _fit_outputs(run: Run, result: FitResult, prefix: str):
    write_json(run.output(f"{prefix}.json"), result.to_json())
    write_csv(result.table(), run.output(f"{prefix}_coefficients.csv"), index=True)
    write_csv(relative_risk_ratios(result), run.output(f"{prefix}_rrr.csv"))
    write_text(run.output(f"{prefix}_rrr.txt"), render_rrr_table(result))
    if result.layout.dim > 0:
        write_csv(heterogeneity_moments(result), run.output(f"{prefix}_heterogeneity.csv"))


def _print_fit(result: FitResult, design):
    print("Summary:")
    print(f"  Persons:                       {design.n_persons:,}")
    print(f"  Transition records:            {design.n_records:,}")
    print(f"  Parameters:                    {result.layout.size:,}")
    print(f"  Log-likelihood:                {result.loglik:.4f}")
    mark = "✓" if result.converged else "⚠"
    print(f"  {mark} Max |gradient|:              {result.grad_norm:.2e} ({result.iterations} iterations)")
    if result.diagnostics.get("pseudo_inverse"):
        print("  ⚠ Hessian was singular; covariance uses a pseudo-inverse")
    if result.diagnostics.get("quadrature_stable") is False:
        print(f"  ⚠ Quadrature check moved the log-likelihood by {result.diagnostics['quadrature_delta']:.2e}")


def fit_action(run: Run):
    """Handle the fit subcommand."""
    panel = run.input(run.args.panel, "--panel")
    spec = run.config.model
    _print_header(run, Panel=panel, Mode=f"{spec.name} ({spec.heterogeneity}, {spec.initial_conditions})",
                  Nodes=spec.quadrature_nodes)
    ds = _select(run, load_panel(panel), spec)
    design = build_design(ds, spec)
    result = fit_loan_model(spec, design, run.config.fit) if spec.model == "loan" else fit(spec, design, run.config.fit)
    _fit_outputs(run, result, "fit")
    _print_fit(result, design)


LOAN_SPEC = ModelSpec(
    name="loan",
    model="loan",
    initial_conditions="exogenous",
    interactions=False,
    categorical=("parent_educ", "district"),
    time_means=(),
    initial=(),
)


def loan_action(run: Run):
    """Handle the loan subcommand."""
    panel = run.input(run.args.panel, "--panel")
    spec = run.config.model if run.config.model.model == "loan" else LOAN_SPEC
    if run.args.mode and spec is LOAN_SPEC:
        spec = spec.with_mode(run.args.mode)
    if run.args.loan_outcome:
        spec = load_document(ModelSpec, {**spec.model_dump(mode="json"), "loan_outcome": run.args.loan_outcome})
        if spec.loan_outcome == "type" and spec.heterogeneity == "random_effects":
            spec = spec.replace(heterogeneity="shared")
    _print_header(run, Panel=panel, Outcome=spec.loan_outcome, Heads=spec.head_rule)
    ds = _select(run, load_panel(panel), spec)
    design = build_design(ds, spec)
    result = fit_loan_model(spec, design, run.config.fit)
    _fit_outputs(run, result, "loan_fit")
    _print_fit(result, design)


def _fitted(run: Run):
    fit_path = run.input(run.args.fit, "--fit")
    panel = run.input(run.args.panel, "--panel")
    result = FitResult.from_json(fit_path.read_text())
    ds = _select(run, load_panel(panel), result.spec)
    design = build_design(ds, result.spec)
    expected = result.design_manifest.get("content_sha256")
    if expected and expected != design.manifest["content_sha256"]:
        raise DataError("the panel does not reproduce the design the model was fitted on")
    return result, design


def effects_action(run: Run):
    """Handle the effects subcommand."""
    result, design = _fitted(run)
    eff = run.config.effects
    conditional = not eff.integrate
    _print_header(run, Fit=run.args.fit, Target=eff.target)
    ame = average_marginal_effect(result, design, eff.target, conditional=conditional)
    write_csv(ame.table, run.output("ame.csv"))
    write_csv(effects_at_grid(result, design, eff.target, eff.grid, conditional=conditional), run.output("grid.csv"))
    write_csv(transition_probabilities(result, design, conditional=conditional), run.output("transitions_model.csv"), index=True)
    groups = []
    for column in eff.partitions:
        if column not in design.frame.columns:
            raise MissingColumn([column])
        numeric = pd.api.types.is_numeric_dtype(design.frame[column]) and design.frame[column].nunique() > 3
        partition = tertiles(design, column) if numeric else levels(design, column)
        groups.append(heterogeneous_effects(result, design, partition, eff.target, conditional=conditional))
    if groups:
        write_csv(pd.concat(groups, ignore_index=True), run.output("heterogeneous.csv"))

    print("Summary:")
    for _, row in ame.table.loc[ame.table["origin"] == "all"].iterrows():
        print(f"  AME on P({row['destination']}):{'':<19}{row['effect']:+.4f} ({row['se']:.4f})")
    print(f"  Subgroup tables:               {len(groups):,}")


def policy_action(run: Run):
    """Handle the policy subcommand."""
    if not run.config.policies:
        raise ConfigInvalid("policy needs a config with at least one entry under 'policies'")
    result, design = _fitted(run)
    _print_header(run, Fit=run.args.fit, Policies=len(run.config.policies))
    tables = [policy_simulation(result, design, scenario) for scenario in run.config.policies]
    write_csv(pd.concat(tables, ignore_index=True), run.output("policies.csv"))
    print("Summary:")
    base = result.layout.outcomes[result.layout.base]
    for scenario, table in zip(run.config.policies, tables):
        print(f"  {scenario.name + ':':<31}{100 * table.attrs['share_change']:+.2f} ppt on {base} (n={table.attrs['n']:,})")


EXPERIMENTS = ("recovery", "initial-conditions", "heckman-wrs")


def montecarlo_action(run: Run):
    """Handle the montecarlo subcommand."""
    dgp = run.config.dgp or DgpConfig(seed=run.config.seed if run.config.seed is not None else 0)
    reps = run.args.reps or run.config.replications
    _print_header(run, Experiment=run.args.experiment, Seed=dgp.seed, Reps=reps)
    opts = run.config.fit.replace(check_quadrature=False)
    progress = run.args.verbose
    print("Summary:")
    if run.args.experiment == "recovery":
        if run.args.config:
            spec = run.config.model
        else:
            overrides = {"quadrature_nodes": run.args.nodes} if run.args.nodes else {}
            spec = simulation_spec(run.args.mode or "wrs", **overrides)
        table = recovery_experiment(dgp, spec, reps=reps, options=opts, progress=progress)
        write_csv(table, run.output("montecarlo_recovery.csv"))
        print(f"  Replications fitted:           {table.attrs['replications']:,} of {reps:,}")
        print(f"  Lowest coverage:               {table['coverage'].min():.2f}")
        low = table.loc[table["coverage"] < 0.9, "parameter"].tolist()
        for name in low[:MAX_LISTED_ERRORS]:
            print(f"  ⚠ coverage below 0.90: {name}")
    elif run.args.experiment == "initial-conditions":
        table = initial_conditions_experiment(dgp, reps=reps, options=opts, progress=progress)
        write_csv(table, run.output("montecarlo_initial_conditions.csv"))
        print(f"  WRS less biased:               {table['wrs_better'].mean():.0%} of {len(table):,}")
    else:
        table = heckman_wrs_experiment(dgp, reps=reps, options=opts, progress=progress)
        write_csv(table, run.output("montecarlo_heckman_wrs.csv"))
        print(f"  Agreement within 2 SE:         {table['agree'].mean():.0%} of {len(table):,}")


def runs_action(run: Run):
    """Handle the runs subcommand."""
    rows = list_runs(run.args.limit)
    if not rows:
        print("No runs recorded.")
        return
    print(f"{'ID':>5}  {'Started (UTC)':<26}{'Command':<14}{'Exit':>4}  Output")
    for rid, started, sub, code, out, _ in rows:
        print(f"{rid:>5}  {started[:25]:<26}{sub:<14}{code:>4}  {out or ''}")


def _with_out(argv: list[str], out: Optional[str]) -> list[str]:
    if out is None:
        return list(argv)
    argv = list(argv)
    if "--out" in argv:
        argv[argv.index("--out") + 1] = out
    else:
        argv += ["--out", out]
    return argv


ACTIONS = {
    "simulate": simulate_action,
    "index": index_action,
    "describe": describe_action,
    "event-study": event_study_action,
    "fit": fit_action,
    "effects": effects_action,
    "policy": policy_action,
    "loan": loan_action,
    "montecarlo": montecarlo_action,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (flags override its fields)")
    common.add_argument("--out", default=str(DEFAULT_OUT_DIR), help=f"Output directory (default: {DEFAULT_OUT_DIR})")
    common.add_argument("--seed", type=int, help="Random seed (overrides the config)")
    common.add_argument("--mode", choices=sorted(MODES), help="Heterogeneity / initial-conditions treatment")
    common.add_argument("--nodes", type=int, help="Gauss-Hermite nodes per random-effect dimension")
    common.add_argument("--threads", type=int, help="Worker cap (default: $DYNLAB_THREADS or 1)")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging and progress bars")

    parser = _Parser(
        prog="dynlab.py",
        description="Dynamic multinomial logit toolkit for labor-informality panels",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  Simulate a panel:
    %(prog)s simulate --config configs/dgp_default.json --out out/sim

  Fit the WRS model and compute marginal effects:
    %(prog)s fit --panel out/sim/panel.csv --mode wrs --out out/fit
    %(prog)s effects --fit out/fit/fit.json --panel out/sim/panel.csv --out out/effects

  Policy scenarios:
    %(prog)s policy --config configs/policy_components.json --fit out/fit/fit.json --panel out/sim/panel.csv

  Re-run from a manifest:
    %(prog)s rerun --manifest out/fit/manifest.json
""",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="action", help="Action to perform", parser_class=_Parser)

    subparsers.add_parser("simulate", parents=[common], help="Draw a synthetic panel and its ground truth")

    p = subparsers.add_parser("index", parents=[common], help="Build the CMA index from community components")
    p.add_argument("--panel", required=True, help="Panel CSV")
    p.add_argument("--method", choices=["zscore", "pca"], help="Index construction (overrides the config)")
    p.add_argument("--distance-unit", choices=["km", "m"], default="km", help="Unit of the distance columns")

    p = subparsers.add_parser("describe", parents=[common], help="Transition matrices and summary statistics")
    p.add_argument("--panel", required=True, help="Panel CSV")

    p = subparsers.add_parser("event-study", parents=[common], help="Switching probabilities around the first loan")
    p.add_argument("--panel", required=True, help="Panel CSV")
    p.add_argument("--window", type=int, help="Relative years on each side of the event")

    p = subparsers.add_parser("fit", parents=[common], help="Estimate the dynamic multinomial logit")
    p.add_argument("--panel", required=True, help="Panel CSV")

    for name, text in (("effects", "Marginal effects of a fitted model"), ("policy", "Policy scenarios on a fitted model")):
        p = subparsers.add_parser(name, parents=[common], help=text)
        p.add_argument("--fit", required=True, help="fit.json written by the fit subcommand")
        p.add_argument("--panel", required=True, help="Panel CSV the model was fitted on")

    p = subparsers.add_parser("loan", parents=[common], help="Household loan equation")
    p.add_argument("--panel", required=True, help="Panel CSV")
    p.add_argument("--loan-outcome", choices=["any", "type"], help="Binary loan take-up or loan type")

    p = subparsers.add_parser("montecarlo", parents=[common], help="Monte-Carlo experiments on simulated panels")
    p.add_argument("--experiment", choices=EXPERIMENTS, default="recovery")
    p.add_argument("--reps", type=int, help="Replications (overrides the config)")

    p = subparsers.add_parser("runs", help="List recorded runs")
    p.add_argument("--limit", type=int, default=DEFAULT_RUNS_LISTED)

    p = subparsers.add_parser("rerun", help="Re-execute the command recorded in a manifest")
    p.add_argument("--manifest", required=True, help="manifest.json of an earlier run")
    p.add_argument("--out", help="Write to another directory instead of the recorded one")
    return parser


def _exit_code(error: BaseException) -> int:
    if isinstance(error, NotConverged):
        return EXIT_NOT_CONVERGED
    if isinstance(error, (UsageError, SpecError)):
        return EXIT_USAGE
    return EXIT_DATA


def rerun(manifest_path: str, out: Optional[str] = None) -> int:
    try:
        manifest = read_manifest(Path(manifest_path))
    except (OSError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    argv = _with_out(manifest["argv"], out)
    code = run(argv)
    if code != EXIT_OK:
        return code
    out_dir = Path(argv[argv.index("--out") + 1]) if "--out" in argv else DEFAULT_OUT_DIR
    differing = []
    for name, digest in manifest.get("outputs", {}).items():
        path = out_dir / name
        if not path.is_file() or sha256_file(path)[0] != digest:
            differing.append(name)
    if differing:
        print(f"\n⚠ {len(differing):,} output(s) differ from the manifest:")
        for name in differing[:MAX_LISTED_ERRORS]:
            print(f"  {name}")
    else:
        print("\n✓ All outputs match the manifest.")
    return code


def run(argv: list[str]) -> int:
    """Parse, execute, write the manifest and ledger row; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    if args.action is None:
        parser.print_help()
        return EXIT_USAGE
    if args.action == "runs":
        runs_action(Run(args=args, config=RunConfig(), out=Path(".")))
        return EXIT_OK
    if args.action == "rerun":
        return rerun(args.manifest, args.out)

    out = Path(args.out)
    try:
        config = resolve_config(args)
        out.mkdir(parents=True, exist_ok=True)
        current = Run(args=args, config=config, out=out)
        ACTIONS[args.action](current)
    except (UsageError, DynlabError) as e:
        code = _exit_code(e)
        print(f"Error: {e}", file=sys.stderr)
        record_run(args.action, argv, out, code, None, str(e))
        return code
    except OSError as e:
        print(f"Error: {e}", file=sys.stderr)
        record_run(args.action, argv, out, EXIT_USAGE, None, str(e))
        return EXIT_USAGE

    manifest = build_manifest(
        subcommand=args.action,
        argv=argv,
        config=config.model_dump(mode="json"),
        inputs=current.inputs,
        outputs=current.outputs,
        out_dir=out,
        version=__version__,
    )
    manifest_path = write_json(out / MANIFEST_NAME, manifest)
    record_run(args.action, argv, out, EXIT_OK, sha256_file(manifest_path)[0])
    return EXIT_OK


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
