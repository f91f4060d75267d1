"""Batch orchestration: config ingestion, run dispatch, persistence, reports.

Subcommands: tables, verify, linear-decay, smoothing, nonlinear, picard,
render.  Each takes --config <path> and --out <dir>, plus --seed for an
override.  Exit codes: 0 pass, 1 check failure, 2 config error, 3 runtime
error.  Runs are deterministic for a fixed config and seed (the wall-clock
field in report.json is the only varying entry); all "random" batteries
derive from the single seeded generator.

Thread count is controlled by the environment variable LANDAU_THREADS
(default: all logical cores); LANDAU_NUMBA=0 selects the pure-numpy kernels.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import checks
from .batteries import field_battery
from .coefficients import radial_table
from .grid import (Field, NormSpec, H1STAR, L2M, VelocityGrid,
                   WeightResolutionError, build_grid, check_weight_resolution,
                   norm, project_pi0, save_field)
from .kernels import (WeightSpec, as_gamma, decay_theta, theta_for_pair,
                      theta_for_weight)
from .nonlinear import (NonlinearRun, StabilityConstants, evolve_nonlinear,
                        picard_run)
from .operators import LandauContext, OperatorHandle, SplitParams, landau_context
from .semigroup import (TripleNormSpec, evolve_linear, fit_decay,
                        norm_series, smoothing_probe)

RUN_KINDS = ("tables", "verify-lemmas", "linear-decay", "smoothing",
             "nonlinear", "picard")

EXIT_PASS = 0
EXIT_CHECK_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = errors if isinstance(errors, list) else [errors]
        super().__init__("; ".join(self.errors))


_TOP_KEYS = {"run_kind", "gamma", "grid", "weights", "split", "seeds",
             "output_dir", "tolerances"}
_GRID_KEYS = {"L", "N", "dt", "T"}
_WEIGHT_KEYS = {"kind", "k", "kappa", "s"}
_SPLIT_KEYS = {"M", "R"}


def _parse_weight(data, errors, where):
    if not isinstance(data, dict):
        errors.append(f"{where} must be an object")
        return None
    unknown = set(data) - _WEIGHT_KEYS
    if unknown:
        errors.append(f"{where}: unknown keys {sorted(unknown)}")
        return None
    kind = data.get("kind")
    try:
        if kind == "poly":
            return WeightSpec.polynomial(float(data.get("k", 0.0)))
        if kind == "exp":
            return WeightSpec.exponential(float(data.get("kappa", 0.0)),
                                          float(data.get("s", 0.0)))
    except ValueError as exc:
        errors.append(f"{where}: {exc}")
        return None
    errors.append(f"{where}.kind must be 'poly' or 'exp'")
    return None


class ExperimentConfig:
    """Validated experiment description.  Unknown keys are errors."""

    def __init__(self, data: dict):
        errors = []
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        unknown = set(data) - _TOP_KEYS
        if unknown:
            errors.append(f"unknown top-level keys {sorted(unknown)}")

        self.run_kind = data.get("run_kind")
        if self.run_kind not in RUN_KINDS:
            errors.append(f"run_kind must be one of {RUN_KINDS}")

        try:
            self.gamma = as_gamma(float(data.get("gamma", -3.0)))
        except (TypeError, ValueError) as exc:
            errors.append(f"gamma: {exc}")
            self.gamma = -3.0

        grid = data.get("grid", {})
        if not isinstance(grid, dict):
            errors.append("grid must be an object")
            grid = {}
        unknown = set(grid) - _GRID_KEYS
        if unknown:
            errors.append(f"grid: unknown keys {sorted(unknown)}")
        self.L = float(grid.get("L", 8.0))
        self.N = int(grid.get("N", 24))
        self.dt = float(grid.get("dt", 0.05))
        self.T = float(grid.get("T", 20.0))
        if self.L <= 0:
            errors.append("grid.L must be positive")
        if self.N % 2 != 0:
            errors.append("grid.N must be even")
        if self.N < 8:
            errors.append("grid.N must be at least 8")
        if self.dt <= 0:
            errors.append("grid.dt must be positive")
        if self.T < 0:
            errors.append("grid.T must be nonnegative")

        weights = data.get("weights", [{"kind": "poly", "k": 4.0}])
        self.weights = []
        if not isinstance(weights, list) or not weights:
            errors.append("weights must be a non-empty list")
        else:
            for i, wd in enumerate(weights):
                w = _parse_weight(wd, errors, f"weights[{i}]")
                if w is not None:
                    self.weights.append(w)

        split = data.get("split", "search")
        self.split = None
        self.split_search = False
        if split == "search":
            self.split_search = True
        elif isinstance(split, dict):
            unknown = set(split) - _SPLIT_KEYS
            if unknown:
                errors.append(f"split: unknown keys {sorted(unknown)}")
            else:
                try:
                    self.split = SplitParams(M=float(split.get("M", 0.0)),
                                             R=float(split.get("R", 1.0)))
                except ValueError as exc:
                    errors.append(f"split: {exc}")
        else:
            errors.append("split must be an object {M, R} or the string 'search'")

        self.seed = int(data.get("seeds", 0))
        self.output_dir = data.get("output_dir")
        tol = data.get("tolerances", {})
        if not isinstance(tol, dict):
            errors.append("tolerances must be an object")
            tol = {}
        self.tolerances = dict(tol)
        if errors:
            raise ConfigError(errors)
        self._echo = data

    def tol(self, key, default):
        return type(default)(self.tolerances.get(key, default))

    def echo(self):
        return self._echo


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError([f"cannot read config: {exc}"])
    return ExperimentConfig(data)


# ---------------------------------------------------------------------------
# report plumbing
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"not serializable: {type(o)}")


class RunReport:
    def __init__(self, config: ExperimentConfig):
        self.config_echo = config.echo()
        self.checks = []
        self.constants = {}
        self.files = []
        self.wall_clock = None
        self._t0 = time.time()

    def add_check(self, name, measured, bound, passed, **extra):
        row = {"name": name, "measured": float(measured),
               "bound": float(bound), "pass": bool(passed)}
        row.update(extra)
        self.checks.append(row)

    def add_file(self, path):
        self.files.append(str(path))

    @property
    def all_pass(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def finish(self, out_dir: Path) -> Path:
        self.wall_clock = time.time() - self._t0
        rel_files = []
        for f in self.files:
            p = Path(f)
            try:
                rel_files.append(str(p.relative_to(out_dir)))
            except ValueError:
                rel_files.append(p.name)
        payload = {"config": self.config_echo,
                   "checks": self.checks,
                   "constants": self.constants,
                   "files": sorted(rel_files),
                   "all_pass": self.all_pass,
                   "wall_clock_seconds": self.wall_clock}
        path = out_dir / "report.json"
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True, default=_json_default)
            fh.write("\n")
        return path


def report_render(report: dict) -> str:
    """Deterministic human-readable table for a report.json payload."""
    lines = []
    header = f"{'check':34s} | {'measured':>13s} | {'bound':>13s} | pass"
    lines.append(header)
    lines.append("-" * len(header))
    failed = 0
    for row in report.get("checks", []):
        ok = bool(row.get("pass"))
        failed += 0 if ok else 1
        lines.append(f"{row['name'][:34]:34s} | {row['measured']:13.6g} | "
                     f"{row['bound']:13.6g} | {'yes' if ok else 'NO'}")
    consts = report.get("constants", {})
    if consts:
        lines.append("")
        lines.append("fitted constants:")
        for k in sorted(consts):
            lines.append(f"  {k} = {consts[k]:.6g}" if isinstance(consts[k], float)
                         else f"  {k} = {consts[k]}")
    n = len(report.get("checks", []))
    lines.append("")
    lines.append(f"{failed}/{n} checks failed" if failed else f"all {n} checks passed")
    return "\n".join(lines) + "\n"


def write_plot_script(out_dir: Path, name: str, csv_name: str, title: str,
                      ycol: int = 2, logy: bool = True) -> Path:
    path = out_dir / f"plot_{name}.gp"
    with open(path, "w") as fh:
        fh.write(f'set title "{title}"\n')
        fh.write('set datafile separator ","\n')
        fh.write("set key autotitle columnhead\n")
        if logy:
            fh.write("set logscale y\n")
        fh.write(f'plot "{csv_name}" using 1:{ycol} with lines\n')
    return path


def write_series_csv(path: Path, header: list[str], columns) -> None:
    rows = zip(*columns)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


# ---------------------------------------------------------------------------
# run kinds
# ---------------------------------------------------------------------------

def _check_weights_resolved(cfg: ExperimentConfig, grid: VelocityGrid) -> None:
    # refuse weights whose discrete norm is boundary-dominated on this box
    for w in cfg.weights:
        try:
            check_weight_resolution(grid, w)
        except WeightResolutionError as exc:
            raise ConfigError([f"weight/grid combination rejected: {exc}"])


def _resolve_split(cfg: ExperimentConfig, ctx: LandauContext,
                   report: RunReport) -> SplitParams:
    if not cfg.split_search:
        return cfg.split
    result = checks.search_split_params(
        ctx, cfg.weights, n_fields=cfg.tol("search_battery", 40),
        seed=cfg.seed + 17)
    report.constants["split_M"] = result.params.M
    report.constants["split_R"] = result.params.R
    report.constants["split_c"] = result.c_fit
    return result.params


def run_tables(cfg: ExperimentConfig, out_dir: Path, report: RunReport) -> None:
    table = radial_table(cfg.gamma, r_max=cfg.tol("table_rmax", 64.0 * cfg.L),
                         n_nodes=512)
    path = out_dir / "coefficients.csv"
    table.dump_csv(path)
    report.add_file(path)
    report.add_check("table-rows", 512, 512, True)
    # spot validation: trace identity on the tabulated radii
    trace = checks.check_trace_identity(cfg.gamma,
                                        radii=np.linspace(0.0, 40.0, 9))
    report.add_check(trace["name"], trace["measured"], trace["bound"], trace["pass"])
    report.add_file(write_plot_script(out_dir, "coefficients",
                                      "coefficients.csv",
                                      "mollified coefficient eigenvalues"))


def run_verify(cfg: ExperimentConfig, out_dir: Path, report: RunReport) -> None:
    grid = build_grid(cfg.L, cfg.N)
    _check_weights_resolved(cfg, grid)
    ctx = landau_context(grid, cfg.gamma)
    battery = cfg.tol("battery", 20)

    row = checks.check_trace_identity(cfg.gamma,
                                      radii=np.linspace(0.0, 50.0, 17))
    report.add_check(row["name"], row["measured"], row["bound"], row["pass"])
    row = checks.check_ell_asymptotics(cfg.gamma)
    report.add_check(row["name"], row["measured"], row["bound"], row["pass"])
    row = checks.check_j_asymptotics(cfg.gamma)
    report.add_check(row["name"], row["measured"], row["bound"], row["pass"])
    zrows = checks.check_zeta_limits(radius=cfg.tol("zeta_radius", 200.0))
    for row in zrows["cases"]:
        report.add_check(row["name"], row["measured"], row["bound"], row["pass"])

    p = _resolve_split(cfg, ctx, report)
    batt = field_battery(grid, battery, cfg.seed)
    c = min(checks.b_dissipativity_constant(ctx, w, batt, p)
            for w in cfg.weights)
    report.constants["B_dissipativity_c"] = c
    report.add_check("B-dissipativity", c, 0.0, c > 0.0)

    row = checks.check_a_boundedness(ctx, n_fields=battery, seed=cfg.seed + 1,
                                     p=p)
    report.add_check(row["name"], row["measured"], row["measured"] * 1.001,
                     row["pass"])
    report.constants["A_bound_constant"] = row["measured"]

    main_w = cfg.weights[0]
    cq = checks.q_estimate_constant(ctx, main_w,
                                    n_triples=cfg.tol("q_triples", 40),
                                    seed=cfg.seed + 2)
    report.constants["C_Q"] = cq
    report.add_check("Q-estimate", cq, cq * 1.001, math.isfinite(cq))


def run_linear_decay(cfg: ExperimentConfig, out_dir: Path,
                     report: RunReport) -> None:
    if len(cfg.weights) < 2:
        raise ConfigError(["linear-decay needs two nested weights (m1, m0)"])
    m1, m0 = cfg.weights[0], cfg.weights[1]
    law = theta_for_pair(m1, m0, cfg.gamma)
    sweep = cfg.tolerances.get("L_sweep")
    l_values = [float(x) for x in sweep] if isinstance(sweep, list) else [cfg.L]
    rates = []
    for L in l_values:
        grid = build_grid(float(L), cfg.N)
        _check_weights_resolved(cfg, grid)
        ctx = landau_context(grid, cfg.gamma)
        p = _resolve_split(cfg, ctx, report)
        rng = np.random.default_rng(cfg.seed)
        from .batteries import smooth_field
        f0 = smooth_field(grid, rng)
        op = OperatorHandle(ctx, "B", split=p)
        store = max(1, int(round(cfg.T / cfg.dt)) // 200)
        traj = evolve_linear(op, f0, cfg.T, cfg.dt, store_every=store)
        out_norms = norm_series(traj, NormSpec(L2M, m0, cfg.gamma))
        in_value = norm(f0, NormSpec(L2M, m1, cfg.gamma))
        fit = fit_decay(traj.times, out_norms, law, norm_in_value=in_value)
        rates.append(fit.rate)
        h1 = norm_series(traj, NormSpec(H1STAR, m0, cfg.gamma))
        l2 = norm_series(traj, NormSpec(L2M, WeightSpec.polynomial(0.0),
                                        cfg.gamma))
        env = fit.calibration * decay_theta(law.with_calibration(1.0),
                                            traj.times) * in_value
        csv = out_dir / f"decay_L{L:g}.csv"
        write_series_csv(csv, ["t", "norm_L2", "norm_L2m", "norm_H1star",
                               "envelope_value", "flag"],
                         [traj.times, l2, out_norms, h1, env,
                          fit.flags.astype(int)])
        report.add_file(csv)
        report.add_file(write_plot_script(out_dir, f"decay_L{L:g}",
                                          csv.name, f"S_B decay, box {L:g}", 3))
        report.add_check(f"envelope-L{L:g}", float(np.mean(fit.flags)), 1.0,
                         bool(np.all(fit.flags)))
    report.constants["fitted_rates"] = rates
    if len(rates) > 1:
        slower = all(rates[i + 1] <= rates[i] + 1e-12 for i in range(len(rates) - 1))
        report.add_check("rate-slows-with-L", rates[-1], rates[0], slower)


def run_smoothing(cfg: ExperimentConfig, out_dir: Path, report: RunReport) -> None:
    if len(cfg.weights) < 2:
        raise ConfigError(["smoothing needs two nested polynomial weights (m, m1)"])
    m, m1 = cfg.weights[0], cfg.weights[1]
    grid = build_grid(cfg.L, cfg.N)
    ctx = landau_context(grid, cfg.gamma)
    p = _resolve_split(cfg, ctx, report)
    rng = np.random.default_rng(cfg.seed)
    from .batteries import smooth_field
    f0 = smooth_field(grid, rng)
    t_list = np.geomspace(cfg.tol("t_min", 0.01), cfg.tol("t_max", 1.0), 9)
    ratios = smoothing_probe(ctx, f0, m, m1, t_list, p, dt=cfg.dt)
    law = theta_for_pair(m, m1, cfg.gamma)
    theta = decay_theta(law, t_list)
    weighted = ratios * np.minimum(np.sqrt(t_list), 1.0) / theta
    # bounded at the small-t end: growth toward t = 0 slower than t^-1/4,
    # comfortably below the t^-1/2 rate an unregularized dual pairing shows
    trend = weighted[0] / max(weighted[1], 1e-300)
    allowed = (t_list[1] / t_list[0]) ** 0.25
    bound = float(np.max(weighted)) * (1.0 + 1e-12)
    ok = bool(trend <= allowed)
    csv = out_dir / "smoothing.csv"
    write_series_csv(csv, ["t", "ratio", "weighted_ratio"],
                     [t_list, ratios, weighted])
    report.add_file(csv)
    report.add_file(write_plot_script(out_dir, "smoothing", csv.name,
                                      "regularization ratio", 2))
    report.add_check("smoothing-bounded", float(np.max(weighted)), bound, ok)


def _nonlinear_common(cfg: ExperimentConfig, report: RunReport):
    grid = build_grid(cfg.L, cfg.N)
    _check_weights_resolved(cfg, grid)
    ctx = landau_context(grid, cfg.gamma)
    weight = cfg.weights[0]
    consts = StabilityConstants(K=cfg.tol("K", 0.0) or 0.0,
                                C=cfg.tol("C", 0.0) or 1.0)
    if consts.K <= 0.0:
        consts = checks.fit_stability_constants(
            ctx, weight, n_probe=cfg.tol("probe_battery", 10),
            seed=cfg.seed + 3)
    report.constants["K"] = consts.K
    report.constants["C"] = consts.C
    report.constants["eps_threshold"] = consts.eps_threshold
    return grid, ctx, weight, consts


def _initial_perturbation(grid, ctx, eps0: float, weight, seed: int):
    spec = TripleNormSpec(weight, ctx.gamma)
    from .semigroup import TripleNormEngine
    vals = (grid.vx ** 2 - grid.vy ** 2) * grid.mu
    f = project_pi0(Field(grid, vals))[1]
    engine = TripleNormEngine(ctx, spec)
    t2, _ = engine.value(f)
    return f * (eps0 / math.sqrt(t2))


def run_nonlinear(cfg: ExperimentConfig, out_dir: Path, report: RunReport) -> None:
    grid, ctx, weight, consts = _nonlinear_common(cfg, report)
    eps0 = cfg.tol("eps0", 1.0e-3)
    f0 = _initial_perturbation(grid, ctx, eps0, weight, cfg.seed)
    run = NonlinearRun(f0=f0, weight=weight, gamma=ctx.gamma)
    threshold = cfg.tol("eps_threshold", 0.0) or max(consts.eps_threshold,
                                                     2.0 * eps0)
    evolve_nonlinear(ctx, run, cfg.T, cfg.dt, constants=consts,
                     eps_threshold=threshold)
    s = run.series
    tgrid = s["t"]
    law = theta_for_weight(weight, ctx.gamma)
    env = (run.verdicts["decay_calibration"]
           * decay_theta(law.with_calibration(1.0), tgrid) * s["L2m"][0])
    flags = s["L2"] <= env * (1.0 + 1e-9)
    triple_interp = np.interp(tgrid, s["record_t"], s["triple2"])
    csv = out_dir / "nonlinear_series.csv"
    write_series_csv(csv, ["t", "L2", "L2m", "Ynorm2", "triple2", "mass",
                           "p1", "p2", "p3", "energy", "entropy",
                           "envelope", "pass"],
                     [tgrid, s["L2"], s["L2m"], s["Ynorm2"], triple_interp,
                      s["mass"], s["p1"], s["p2"], s["p3"], s["energy"],
                      s["entropy"], env, flags.astype(int)])
    report.add_file(csv)
    report.add_file(write_plot_script(out_dir, "nonlinear", csv.name,
                                      "perturbation decay", 2))
    final = Field(grid, grid.mu + run.final_values, check=False)
    ck = out_dir / "final_state.lndu"
    save_field(final, ck)
    report.add_file(ck)

    v = run.verdicts
    report.add_check("conservation-drift", v["max_drift"],
                     1.0e-6 * (1.0 + cfg.T), v["conservation_ok"])
    report.add_check("entropy-nonincreasing", v["entropy_max_increase"],
                     1.0e-8, v["entropy_ok"])
    report.add_check("trapped-energy", v.get("trapped_bound", 0.0),
                     2.0 * run.eps0 ** 2, v.get("trapped_ok", False))
    report.add_check("decay-envelope", float(np.mean(flags)), 1.0,
                     bool(np.all(flags)))
    report.constants["eps0"] = run.eps0


def run_picard(cfg: ExperimentConfig, out_dir: Path, report: RunReport) -> None:
    grid, ctx, weight, consts = _nonlinear_common(cfg, report)
    eps0 = cfg.tol("eps0", 1.0e-3)
    f0 = _initial_perturbation(grid, ctx, eps0, weight, cfg.seed)
    n_iters = int(cfg.tol("picard_iters", 5))
    rep = picard_run(ctx, f0, n_iters, cfg.T, cfg.dt, weight, constants=consts)
    csv = out_dir / "picard.csv"
    write_series_csv(csv, ["n", "B_n", "ratio"],
                     [np.arange(len(rep.b_values)), rep.b_values,
                      [math.nan] + rep.ratios])
    report.add_file(csv)
    ok_ratio = all(r <= cfg.tol("ratio_bound", 0.5) for r in rep.ratios[:4])
    report.add_check("picard-contraction",
                     max(rep.ratios[:4]) if rep.ratios else 0.0,
                     cfg.tol("ratio_bound", 0.5), ok_ratio)
    if rep.sup_l2_vs_direct is not None:
        bound = cfg.tol("match_bound", 1.0e-5) * eps0
        report.add_check("picard-matches-direct", rep.sup_l2_vs_direct, bound,
                         rep.sup_l2_vs_direct <= bound)
    report.add_check("picard-diverged", float(rep.diverged), 0.0,
                     not rep.diverged)
    report.constants["picard_B"] = rep.b_values


_RUNNERS = {"tables": run_tables, "verify-lemmas": run_verify,
            "linear-decay": run_linear_decay, "smoothing": run_smoothing,
            "nonlinear": run_nonlinear, "picard": run_picard}


def run(config: ExperimentConfig, out_dir) -> tuple[RunReport, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = RunReport(config)
    _RUNNERS[config.run_kind](config, out_dir, report)
    path = report.finish(out_dir)
    return report, path


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="landaulab",
        description="Velocity-space experiments for the soft-potential "
                    "Landau equation")
    sub = parser.add_subparsers(dest="command", required=True)
    names = {"tables": "tables", "verify": "verify-lemmas",
             "linear-decay": "linear-decay", "smoothing": "smoothing",
             "nonlinear": "nonlinear", "picard": "picard"}
    for cmd in list(names) + ["render"]:
        p = sub.add_parser(cmd)
        if cmd == "render":
            p.add_argument("--report", required=True)
        else:
            p.add_argument("--config", required=True)
            p.add_argument("--out", required=True)
            p.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)

    if args.command == "render":
        try:
            with open(args.report) as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"cannot read report: {exc}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
        sys.stdout.write(report_render(payload))
        return EXIT_PASS

    try:
        cfg = load_config(args.config)
        if cfg.run_kind != names[args.command]:
            raise ConfigError([f"config run_kind {cfg.run_kind!r} does not "
                               f"match subcommand {args.command!r}"])
        if args.seed is not None:
            cfg.seed = args.seed
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    try:
        report, path = run(cfg, args.out)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except Exception as exc:  # noqa: BLE001 - report and signal runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR
    print(f"report written to {path}")
    return EXIT_PASS if report.all_pass else EXIT_CHECK_FAILURE


if __name__ == "__main__":
    raise SystemExit(main())
