"""Close-to-equilibrium nonlinear evolution of the perturbation f = F - mu.

IMEX stepping: the linearized operator implicitly (Crank-Nicolson), the
quadratic collision term explicitly with coefficients frozen at the current
iterate; every step is re-projected onto the complement of the collision
invariants.  Entropy and conservation are monitored, not enforced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import (Field, NormSpec, H1STAR, L2M, moments, norm, project_pi0,
                   projector)
from .kernels import DecayLaw, WeightSpec, theta_for_weight
from .operators import LandauContext, OperatorHandle, SplitParams
from .semigroup import (CN, LinearStepper, TripleNormEngine, TripleNormSpec,
                        _implicit_solve, fit_decay)

ENTROPY_FLOOR = 1.0e-300


class BlowupError(RuntimeError):
    """Norm grew by more than the guard factor within a single step."""


def entropy_report(F: Field) -> tuple[float, int]:
    """(h^3 sum F log F, number of nodes clipped at the positivity floor)."""
    vals = F.values
    clipped = int(np.sum(vals <= 0.0))
    safe = np.maximum(vals, ENTROPY_FLOOR)
    ent = F.grid.cell_volume * float(np.sum(safe * np.log(safe)))
    return ent, clipped


def entropy(F: Field) -> float:
    return entropy_report(F)[0]


class NonlinearStepper:
    """One IMEX step: implicit CN in L, explicit frozen-coefficient Q(f,f)."""

    def __init__(self, ctx: LandauContext, dt: float,
                 params: SplitParams | None = None,
                 rtol: float = 1.0e-10, guard: float = 10.0):
        self.ctx = ctx
        self.dt = float(dt)
        self.params = params if params is not None else SplitParams()
        self.guard = guard
        self.linear = LinearStepper(OperatorHandle(ctx, "L"), dt, CN, rtol=rtol)
        self.projector = projector(ctx.grid)

    def step_values(self, values: np.ndarray) -> np.ndarray:
        if not np.any(values):
            return values.copy()
        q = self.ctx.apply_Q(values, values)
        rhs = values + 0.5 * self.dt * self.ctx.apply_L(values) + self.dt * q
        out = _implicit_solve(self.linear.op, 0.5 * self.dt, rhs,
                              self.linear.diag, self.linear.rtol,
                              self.linear.maxiter)
        out = self.projector.split(out)[1]
        n_old = float(np.sqrt(np.sum(values ** 2)))
        n_new = float(np.sqrt(np.sum(out ** 2)))
        if n_old > 0.0 and n_new > self.guard * n_old:
            raise BlowupError(
                f"step norm grew {n_new / n_old:.2f}x (>{self.guard}); "
                f"reduce dt or eps0")
        return out


def step_nonlinear(ctx: LandauContext, f: Field, dt: float,
                   params: SplitParams | None = None) -> Field:
    """Single IMEX step of d_t f = L f + Q(f, f), re-projected."""
    stepper = NonlinearStepper(ctx, dt, params)
    return Field(ctx.grid, stepper.step_values(f.values), check=True)


@dataclass
class StabilityConstants:
    K: float
    C: float

    @property
    def eps_threshold(self) -> float:
        # (2 - sqrt(2)) K / C from the uniqueness argument, halved for margin
        return 0.5 * (2.0 - math.sqrt(2.0)) * self.K / self.C


@dataclass
class NonlinearRun:
    """Configuration and recorded series of one close-to-equilibrium run."""

    f0: Field
    weight: WeightSpec
    gamma: float
    eps0: float = 0.0
    triple_spec: TripleNormSpec | None = None
    series: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    final_values: np.ndarray | None = None

    def __post_init__(self):
        if not self.weight.is_stability_weight:
            raise ValueError("the stability weight must satisfy the strict "
                             "growth condition (polynomial k > 2 + 3/2)")


def evolve_nonlinear(ctx: LandauContext, run: NonlinearRun, T: float, dt: float,
                     record_every: int | None = None,
                     constants: StabilityConstants | None = None,
                     eps_threshold: float | None = None,
                     decay_law: DecayLaw | None = None) -> NonlinearRun:
    """March the perturbation to time T, recording norms, conservation,
    entropy, and the triple norm on the coarser record grid.

    Verdicts afterwards: the trapped-energy bound sup |||f|||^2 + K int ||f||_Y^2
    <= 2 eps0^2, and the decay flags ||f(t)||_{L2} <= C Theta_m(t) ||f0||_{L2(m)}.
    """
    g = ctx.grid
    spec = run.triple_spec or TripleNormSpec(run.weight, ctx.gamma)
    engine = TripleNormEngine(ctx, spec)
    f = project_pi0(run.f0)[1]
    triple0_sq, _ = engine.value(f)
    run.eps0 = math.sqrt(triple0_sq)
    if eps_threshold is not None and run.eps0 > eps_threshold:
        raise ValueError(f"initial size {run.eps0:.3e} exceeds the "
                         f"stability threshold {eps_threshold:.3e}")

    n_steps = int(round(T / dt))
    if record_every is None:
        record_every = max(1, n_steps // 20)
    stepper = NonlinearStepper(ctx, dt)
    x_norm = NormSpec(L2M, run.weight, ctx.gamma)
    y_norm = NormSpec(H1STAR, run.weight, ctx.gamma)
    l2_norm = NormSpec(L2M, WeightSpec.polynomial(0.0), ctx.gamma)

    mu_f = g.mu_field()
    m0 = moments(Field(g, mu_f.values + f.values, check=False))

    cols = {k: [] for k in ("t", "L2", "L2m", "Ynorm2", "mass", "p1", "p2",
                            "p3", "energy", "entropy", "clipped")}
    rec = {"t": [], "triple2": [], "tail": []}

    def record_cheap(t, values):
        fld = Field(g, values, check=False)
        F = Field(g, mu_f.values + values, check=False)
        mass, mom, en = moments(F)
        ent, clipped = entropy_report(F)
        cols["t"].append(t)
        cols["L2"].append(norm(fld, l2_norm))
        cols["L2m"].append(norm(fld, x_norm))
        cols["Ynorm2"].append(norm(fld, y_norm) ** 2)
        cols["mass"].append(mass - m0[0])
        cols["p1"].append(mom[0] - m0[1][0])
        cols["p2"].append(mom[1] - m0[1][1])
        cols["p3"].append(mom[2] - m0[1][2])
        cols["energy"].append(en - m0[2])
        cols["entropy"].append(ent)
        cols["clipped"].append(clipped)

    values = f.values.copy()
    record_cheap(0.0, values)
    rec["t"].append(0.0)
    rec["triple2"].append(triple0_sq)
    for k in range(1, n_steps + 1):
        values = stepper.step_values(values)
        t = k * dt
        record_cheap(t, values)
        if k % record_every == 0 or k == n_steps:
            tr, tail = engine.value(Field(g, values, check=False))
            rec["t"].append(t)
            rec["triple2"].append(tr)
            rec["tail"].append(tail)

    run.series = {k: np.asarray(v) for k, v in cols.items()}
    run.series["record_t"] = np.asarray(rec["t"])
    run.series["triple2"] = np.asarray(rec["triple2"])
    run.final_values = values

    # verdicts
    y2 = run.series["Ynorm2"]
    tgrid = run.series["t"]
    y_integral = float(np.trapezoid(y2, tgrid))
    sup_triple = float(np.max(run.series["triple2"]))
    verdicts = {"eps0": run.eps0, "sup_triple2": sup_triple,
                "Y_integral": y_integral}
    if constants is not None:
        verdicts["trapped_bound"] = sup_triple + constants.K * y_integral
        verdicts["trapped_ok"] = (verdicts["trapped_bound"]
                                  <= 2.0 * run.eps0 ** 2 * (1.0 + 1e-9))
    ent = run.series["entropy"]
    verdicts["entropy_max_increase"] = float(np.max(np.diff(ent), initial=0.0))
    verdicts["entropy_ok"] = verdicts["entropy_max_increase"] <= 1.0e-8
    drift = np.max(np.abs(np.stack([run.series[k] for k in
                                    ("mass", "p1", "p2", "p3", "energy")])), axis=0)
    verdicts["conservation_ok"] = bool(np.all(drift <= 1.0e-6 * (1.0 + tgrid)))
    verdicts["max_drift"] = float(np.max(drift))

    law = decay_law or theta_for_weight(run.weight, ctx.gamma)
    if np.any(run.series["L2"] > 0.0):
        fitres = fit_decay(tgrid, run.series["L2"], law,
                           norm_in_value=run.series["L2m"][0])
        verdicts["decay_ok"] = bool(np.all(fitres.flags))
        verdicts["decay_calibration"] = fitres.calibration
    else:
        verdicts["decay_ok"] = True
        verdicts["decay_calibration"] = 0.0
    run.verdicts = verdicts
    return run


def stability_monitor(run: NonlinearRun, consts: StabilityConstants,
                      transient: float = 0.5):
    """Per-record check of d/dt |||f|||^2 <= (C |||f||| - K) ||f||_Y^2."""
    t = run.series["record_t"]
    tr = run.series["triple2"]
    tg = run.series["t"]
    y2 = run.series["Ynorm2"]
    verdicts = []
    for i in range(len(t) - 1):
        dt = t[i + 1] - t[i]
        lhs = (tr[i + 1] - tr[i]) / dt
        mid = 0.5 * (t[i + 1] + t[i])
        y_mid = float(np.interp(mid, tg, y2))
        tri_mid = 0.5 * (math.sqrt(tr[i + 1]) + math.sqrt(tr[i]))
        rhs = (consts.C * tri_mid - consts.K) * y_mid
        verdicts.append({"t": mid, "lhs": lhs, "rhs": rhs,
                         "pass": bool(lhs <= rhs + 1e-12 + 0.05 * abs(rhs))})
    active = [v for v in verdicts if v["t"] >= transient]
    rate = (sum(v["pass"] for v in active) / len(active)) if active else 1.0
    return verdicts, rate


@dataclass
class PicardReport:
    b_values: list
    ratios: list
    iterate_trajectories: list
    sup_l2_vs_direct: float | None = None
    diverged: bool = False


def picard_run(ctx: LandauContext, f0: Field, n_iters: int, T: float, dt: float,
               weight: WeightSpec, constants: StabilityConstants | None = None,
               record_every: int | None = None,
               compare_direct: bool = True) -> PicardReport:
    """Iterated linear problems d_t f^n = L f^n + Q(f^{n-1}, f^n).

    Convention f^{-1} = 0, so the first iterate solves the pure linear
    equation.  B^n measures successive differences in the triple norm plus the
    K-weighted Y-dissipation integral; geometric decrease is the contraction
    signature, and the last iterate is compared against the direct nonlinear
    solution on the same time grid.
    """
    g = ctx.grid
    spec = TripleNormSpec(weight, ctx.gamma)
    engine = TripleNormEngine(ctx, spec)
    K = constants.K if constants is not None else 1.0
    y_norm = NormSpec(H1STAR, weight, ctx.gamma)
    n_steps = int(round(T / dt))
    if record_every is None:
        record_every = max(1, n_steps // 8)
    f_init = project_pi0(f0)[1]

    lin = LinearStepper(OperatorHandle(ctx, "L"), dt, CN)
    proj = projector(ctx.grid)

    def evolve_iterate(prev_traj):
        traj = [f_init.values.copy()]
        values = f_init.values.copy()
        for k in range(n_steps):
            if prev_traj is None:
                q = 0.0
            else:
                q = ctx.apply_Q(prev_traj[k], values)
            rhs = values + 0.5 * dt * ctx.apply_L(values) + dt * q
            values = _implicit_solve(lin.op, 0.5 * dt, rhs, lin.diag,
                                     lin.rtol, lin.maxiter)
            values = proj.split(values)[1]
            traj.append(values.copy())
        return traj

    trajectories = [evolve_iterate(None)]
    for n in range(1, n_iters + 1):
        trajectories.append(evolve_iterate(trajectories[-1]))

    b_values = []
    for n in range(len(trajectories) - 1):
        diffs = [trajectories[n + 1][k] - trajectories[n][k]
                 for k in range(n_steps + 1)]
        sup_triple = 0.0
        for k in range(0, n_steps + 1, record_every):
            clean = proj.split(diffs[k])[1]  # roundoff-scale moment residue
            tr, _ = engine.value(Field(g, clean, check=False))
            sup_triple = max(sup_triple, tr)
        y2 = np.array([norm(Field(g, d, check=False), y_norm) ** 2
                       for d in diffs])
        tgrid = dt * np.arange(n_steps + 1)
        b_values.append(sup_triple + K * float(np.trapezoid(y2, tgrid)))

    ratios = [b_values[i + 1] / b_values[i] if b_values[i] > 0 else 0.0
              for i in range(len(b_values) - 1)]
    diverged = False
    over = [r > 1.0 for r in ratios]
    for i in range(len(over) - 2):
        if over[i] and over[i + 1] and over[i + 2]:
            diverged = True

    sup_vs_direct = None
    if compare_direct:
        stepper = NonlinearStepper(ctx, dt)
        values = f_init.values.copy()
        worst = 0.0
        last = trajectories[-1]
        for k in range(n_steps + 1):
            diff = Field(g, last[k] - values, check=False)
            worst = max(worst, diff.l2())
            if k < n_steps:
                values = stepper.step_values(values)
        sup_vs_direct = worst
    return PicardReport(b_values=b_values, ratios=ratios,
                        iterate_trajectories=trajectories,
                        sup_l2_vs_direct=sup_vs_direct, diverged=diverged)
