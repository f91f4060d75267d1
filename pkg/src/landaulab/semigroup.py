"""Linear semigroup experiments: time evolution, decay-rate fitting, the
Duhamel factorization residual, the equivalent triple norm, and the
dissipativity / smoothing probes.

Evolution is Crank-Nicolson (default) or implicit Euler with matrix-free
Jacobi-preconditioned BiCGStab solves.  Implicit Euler is selected
automatically for stiff cutoff runs (dt * M large), where Crank-Nicolson's
ringing would corrupt decay measurements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, bicgstab

from .grid import Field, NormSpec, H1STAR, L2M, norm, project_pi0
from .kernels import (DecayLaw, WeightSpec, ALGEBRAIC, as_gamma,
                      decay_theta)
from .operators import LandauContext, OperatorHandle, SplitParams

CN = "CrankNicolson"
IE = "ImplicitEuler"

STIFF_CN_LIMIT = 2.0  # switch to implicit Euler when dt*M exceeds this


class SolverError(RuntimeError):
    """Linear solver failed to reach its residual target."""


@dataclass
class Trajectory:
    """Uniformly spaced snapshots of a linear evolution (dt = snapshot spacing)."""

    times: np.ndarray
    snapshots: list
    scheme: str
    dt: float

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        spacing = np.diff(self.times)
        if spacing.size and not np.allclose(spacing, self.dt, rtol=1e-9, atol=1e-12):
            raise ValueError("trajectory times must be uniformly spaced by dt")


def operator_diagonal(op: OperatorHandle) -> np.ndarray:
    """Cheap diagonal estimate (local second-derivative and zeroth-order
    parts) used for Jacobi preconditioning of the implicit solves."""
    ctx = op.ctx
    g = ctx.grid
    d2diag = np.diag(g.d2)
    diag = np.zeros(g.shape)
    for a in range(3):
        shape = [1, 1, 1]
        shape[a] = g.N
        diag = diag + ctx.bar_a6[a] * d2diag.reshape(shape)
    if op.kind in ("L", "B", "B0", "B_m", "B_m_adjoint"):
        diag = diag - ctx.bar_c
    if op.kind in ("A", "B", "B_m", "B_m_adjoint"):
        sign = 1.0 if op.kind == "A" else -1.0
        diag = diag + sign * op.split.M * ctx.chi_field(op.split)
    if op.kind == "A":
        diag = np.zeros(g.shape)  # A is bounded; no useful local diagonal
    return diag


def _implicit_solve(op: OperatorHandle, coef: float, rhs: np.ndarray,
                    diag: np.ndarray, rtol: float, maxiter: int) -> np.ndarray:
    """Solve (I - coef*Op) x = rhs matrix-free."""
    g = op.grid
    n = g.size
    shape = g.shape

    if not np.any(rhs):
        return np.zeros(shape)

    def mv(x):
        xs = x.reshape(shape)
        return (xs - coef * op.apply(xs)).ravel()

    pre = 1.0 / (1.0 - coef * diag.ravel())
    lin = LinearOperator((n, n), matvec=mv)
    pc = LinearOperator((n, n), matvec=lambda x: pre * x)
    x, info = bicgstab(lin, rhs.ravel(), rtol=rtol, atol=0.0,
                       maxiter=maxiter, M=pc)
    if info != 0:
        res = np.linalg.norm(mv(x) - rhs.ravel()) / max(np.linalg.norm(rhs), 1e-300)
        if res > 100.0 * rtol:
            # BiCGStab breakdown on degenerate right-hand sides; GMRES retry
            from scipy.sparse.linalg import gmres
            x, info = gmres(lin, rhs.ravel(), rtol=rtol, atol=0.0,
                            maxiter=maxiter, restart=40, M=pc)
            res = np.linalg.norm(mv(x) - rhs.ravel()) / max(np.linalg.norm(rhs),
                                                            1e-300)
            if info != 0 and res > 100.0 * rtol:
                raise SolverError(
                    f"implicit solve failed (info={info}, residual={res:.2e})")
    return x.reshape(shape)


class LinearStepper:
    """Reusable Crank-Nicolson / implicit-Euler stepper for one operator."""

    def __init__(self, op: OperatorHandle, dt: float, scheme: str = CN,
                 rtol: float = 1.0e-10, maxiter: int = 400):
        if scheme not in (CN, IE):
            raise ValueError(f"unknown scheme {scheme!r}")
        self.op = op
        self.dt = float(dt)
        self.scheme = scheme
        self.rtol = rtol
        self.maxiter = maxiter
        self.diag = operator_diagonal(op)

    def step(self, values: np.ndarray) -> np.ndarray:
        if self.scheme == CN:
            rhs = values + 0.5 * self.dt * self.op.apply(values)
            return _implicit_solve(self.op, 0.5 * self.dt, rhs, self.diag,
                                   self.rtol, self.maxiter)
        return _implicit_solve(self.op, self.dt, values, self.diag,
                               self.rtol, self.maxiter)


def auto_scheme(op: OperatorHandle, dt: float) -> str:
    if op.kind in ("B", "B_m", "B_m_adjoint") and dt * op.split.M > STIFF_CN_LIMIT:
        return IE
    return CN


def evolve_linear(op: OperatorHandle, f0: Field, T: float, dt: float,
                  scheme: str | None = None, store_every: int = 1,
                  rtol: float = 1.0e-10) -> Trajectory:
    """Evolve d_t f = Op f from f0 to time T with uniform step dt.

    Snapshots are kept every `store_every` steps; the Trajectory's dt is the
    snapshot spacing.  T = 0 returns the single-snapshot trajectory.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if scheme is None:
        scheme = auto_scheme(op, dt)
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer multiple of dt")
    stepper = LinearStepper(op, dt, scheme, rtol=rtol)
    values = f0.values.copy()
    times = [0.0]
    snaps = [Field(op.grid, values.copy(), check=False)]
    for k in range(1, n_steps + 1):
        values = stepper.step(values)
        if k % store_every == 0 or k == n_steps:
            times.append(k * dt)
            snaps.append(Field(op.grid, values.copy(), check=False))
    if n_steps == 0:
        return Trajectory(np.array([0.0]), snaps, scheme, dt)
    # drop a possibly non-uniform final snapshot if store_every doesn't divide
    if (n_steps % store_every) != 0:
        times = times[:-1]
        snaps = snaps[:-1]
    return Trajectory(np.asarray(times), snaps, scheme, dt * store_every)


def norm_series(traj: Trajectory, spec: NormSpec) -> np.ndarray:
    return np.array([norm(f, spec) for f in traj.snapshots])


# ---------------------------------------------------------------------------
# dense oracle
# ---------------------------------------------------------------------------

class DensePropagator:
    """Matrix-exponential semigroup on a dense assembled operator."""

    def __init__(self, matrix: np.ndarray, grid):
        self.matrix = matrix
        self.grid = grid
        self._cache: dict = {}

    def exp(self, t: float) -> np.ndarray:
        key = round(t, 14)
        if key not in self._cache:
            self._cache[key] = scipy.linalg.expm(t * self.matrix)
        return self._cache[key]

    def apply(self, t: float, values: np.ndarray) -> np.ndarray:
        if t == 0.0:
            return values.copy()
        return (self.exp(t) @ values.ravel()).reshape(self.grid.shape)


# ---------------------------------------------------------------------------
# decay fitting
# ---------------------------------------------------------------------------

@dataclass
class DecayFit:
    rate: float              # algebraic exponent or stretched lambda
    calibration: float       # envelope constant fixed on the early window
    flags: np.ndarray        # per-snapshot envelope satisfaction
    log_residual: float      # rms residual of the fit in log space
    law: DecayLaw

    @property
    def fit_ok(self) -> bool:
        return self.log_residual < 0.05


def fit_decay(times, values, law: DecayLaw, norm_in_value: float = 1.0,
              window: tuple[float, float] | None = None,
              calibration_window: tuple[float, float] = (0.0, 1.0)) -> DecayFit:
    """Least-squares fit of a decay law template to a norm series.

    The rate comes from the fit window (default [2, 0.8 T]); the envelope
    constant is calibrated on the early window and each snapshot is flagged
    against C * Theta(t) * norm_in_value.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if not np.any(values > 0.0):
        raise ValueError("cannot fit a decay law to an all-zero series")
    tmax = times[-1]
    if window is None:
        window = (min(2.0, 0.25 * tmax), 0.8 * tmax) if tmax > 0 else (0.0, 0.0)
    sel = (times >= window[0]) & (times <= window[1]) & (values > 0.0)
    if sel.sum() < 2:
        sel = values > 0.0
    logy = np.log(values[sel])
    if law.shape == ALGEBRAIC:
        x = np.log(np.sqrt(1.0 + times[sel] ** 2))
        slope, intercept = np.polyfit(x, logy, 1)
        rate = -slope
        fitted = law.with_rate(max(rate, 1e-12))
    else:
        x = times[sel] ** law.power
        slope, intercept = np.polyfit(x, logy, 1)
        rate = -slope
        fitted = law.with_rate(max(rate, 1e-12))
    resid = float(np.sqrt(np.mean((np.polyval([slope, intercept], x) - logy) ** 2)))

    csel = (times >= calibration_window[0]) & (times <= calibration_window[1])
    if not np.any(csel):
        csel = times == times[0]
    base = decay_theta(law.with_calibration(1.0), times[csel]) * norm_in_value
    cal = float(np.max(values[csel] / np.maximum(base, 1e-300)))
    envelope = cal * decay_theta(law.with_calibration(1.0), times) * norm_in_value
    flags = values <= envelope * (1.0 + 1e-9)
    return DecayFit(rate=rate, calibration=cal, flags=flags,
                    log_residual=resid, law=law.with_calibration(cal))


# ---------------------------------------------------------------------------
# Duhamel factorization residual
# ---------------------------------------------------------------------------

def duhamel_residual(ctx: LandauContext, p: SplitParams, f0: Field, t: float,
                     quad_dt: float, dense: dict | None = None) -> float:
    """L2 norm of S_L(t) Pi f0 - S_B(t) Pi f0 - int_0^t S_B(t-s) A S_L(s) Pi f0 ds.

    Exact matrix-exponential semigroups on the dense assembly (N <= 20); the
    time integral is a trapezoid at step quad_dt, so the residual is pure
    quadrature error and vanishes with quad_dt.
    """
    from .operators import assemble_dense  # local import avoids cycle at import time

    if t < 0.0:
        raise ValueError("t must be nonnegative")
    g = ctx.grid
    pi0, pif = project_pi0(f0)
    x0 = pif.values.ravel()
    if t == 0.0:
        return 0.0
    n = int(round(t / quad_dt))
    if abs(n * quad_dt - t) > 1e-9:
        raise ValueError("t must be an integer multiple of quad_dt")
    if dense is None:
        dense = {}
    if "L" not in dense:
        dense["L"] = assemble_dense(OperatorHandle(ctx, "L"))
    if ("A", p) not in dense:
        dense[("A", p)] = assemble_dense(OperatorHandle(ctx, "A", split=p))
    if ("B", p) not in dense:
        dense[("B", p)] = assemble_dense(OperatorHandle(ctx, "B", split=p))
    mat_l = dense["L"]
    mat_a = dense[("A", p)]
    mat_b = dense[("B", p)]
    e_l = scipy.linalg.expm(quad_dt * mat_l)
    e_b = scipy.linalg.expm(quad_dt * mat_b)

    # trapezoid over s_k = k quad_dt of S_B(t - s_k) A S_L(s_k) x0; Horner-style
    # accumulation so that every step costs a single e_b matvec
    w = x0.copy()
    ys = []
    for k in range(n + 1):
        ys.append(mat_a @ w)
        if k < n:
            w = e_l @ w
    # w now holds S_L(t) x0; y_k needs the weight S_B(t - s_k) = e_b^(n-k)
    acc = 0.5 * ys[0]
    for k in range(1, n + 1):
        acc = e_b @ acc
        acc += (0.5 if k == n else 1.0) * ys[k]
    integral = quad_dt * acc

    xb = x0.copy()
    for _ in range(n):
        xb = e_b @ xb
    resid = w - xb - integral
    return float(np.linalg.norm(resid) * math.sqrt(g.cell_volume))


# ---------------------------------------------------------------------------
# equivalent triple norm
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TripleNormSpec:
    base_weight: WeightSpec
    gamma: float
    eta: float = 0.1
    horizon: float = 20.0


DEFAULT_SEGMENTS = ((1.0, 0.125), (4.0, 0.5), (15.0, 1.0))


def _segments_for(horizon: float, segments=None):
    if segments is None:
        segments = DEFAULT_SEGMENTS
    total = sum(s[0] for s in segments)
    if abs(total - horizon) > 1e-9:
        # stretch the last segment to match the horizon
        segments = list(segments)
        t_last, dt_last = segments[-1]
        t_last += horizon - total
        if t_last <= 0:
            raise ValueError("horizon too short for the segment schedule")
        n = max(1, int(round(t_last / dt_last)))
        segments[-1] = (n * dt_last, dt_last)
    return segments


class TripleNormEngine:
    """Evaluates the equivalent norm eta ||f||_X^2 + int_0^Th ||S_L(tau) f||^2 dtau.

    One linear evolution per call; the time integral uses trapezoid on a
    segmented schedule (fine first, coarse late), and the tail beyond the
    horizon is bounded by a calibrated envelope integral.
    """

    def __init__(self, ctx: LandauContext, spec: TripleNormSpec,
                 segments=None, rtol: float = 1.0e-7):
        self.ctx = ctx
        self.spec = spec
        self.segments = _segments_for(spec.horizon, segments)
        self.op = OperatorHandle(ctx, "L")
        self.rtol = rtol
        self.x_norm = NormSpec(L2M, spec.base_weight, spec.gamma)
        self.x0_norm = NormSpec(L2M, WeightSpec.polynomial(0.0), spec.gamma)
        # envelope for ||S_L(tau)||_{L2(m) -> L2}: the pair-law class allows any
        # exponent below (k - k0)/|gamma|; this representative keeps Theta^2
        # integrable, which is what the equivalence needs
        g = abs(as_gamma(spec.gamma))
        if spec.base_weight.kind == "poly":
            self._theta = DecayLaw.algebraic(0.8 * spec.base_weight.k / g)
        else:
            self._theta = DecayLaw.stretched(1.0, spec.base_weight.s / g)

    def _evolve_series(self, f: Field, extra_time: float = 0.0):
        """March S_L over the schedule, returning (times, L2-norm series,
        snapshots at requested marks)."""
        values = f.values.copy()
        times = [0.0]
        norms = [math.sqrt(self.ctx.grid.cell_volume * float(np.sum(values ** 2)))]
        t = 0.0
        segments = list(self.segments)
        if extra_time > 0.0:
            t_last, dt_last = segments[-1]
            n_extra = int(math.ceil(extra_time / dt_last - 1e-12))
            segments[-1] = (t_last + n_extra * dt_last, dt_last)
        for (t_seg, dt_seg) in segments:
            stepper = LinearStepper(self.op, dt_seg, CN, rtol=self.rtol)
            n = int(round(t_seg / dt_seg))
            for _ in range(n):
                values = stepper.step(values)
                t += dt_seg
                times.append(t)
                norms.append(math.sqrt(self.ctx.grid.cell_volume
                                       * float(np.sum(values ** 2))))
        return np.asarray(times), np.asarray(norms)

    def tail_bound(self, times, norms, x_norm_value: float) -> float:
        """C^2 int_Th^inf Theta^2 from the envelope calibrated on the series.

        Calibration uses the decaying portion of the series only: on a
        truncated box the late-time series eventually rides on a slowly
        growing discretization-artifact floor that must not set the envelope.
        """
        horizon = self.spec.horizon
        if x_norm_value <= 0.0:
            return 0.0
        k_min = int(np.argmin(norms))
        lo = min(max(1, k_min // 2), k_min)
        sel = np.zeros(len(times), dtype=bool)
        sel[lo:k_min + 1] = True
        sel &= norms > 0.0
        if sel.sum() < 2:
            sel = norms > 0.0
        base = decay_theta(self._theta.with_calibration(1.0), times[sel])
        cal = float(np.max(norms[sel] / np.maximum(base * x_norm_value, 1e-300)))
        law = self._theta.with_calibration(cal)
        from scipy.integrate import quad
        val, _ = quad(lambda s: float(decay_theta(law, s)) ** 2, horizon,
                      10.0 * horizon, limit=200)
        # algebraic remainder beyond the quadrature window, closed form
        if law.shape == ALGEBRAIC and 2.0 * law.exponent > 1.0:
            t1 = 10.0 * horizon
            val += law.calibration ** 2 * t1 ** (1.0 - 2.0 * law.exponent) / (
                2.0 * law.exponent - 1.0)
        return val * x_norm_value ** 2

    def value(self, f: Field) -> tuple[float, float]:
        """(triple norm squared, tail bound).  Rejects non-projected input."""
        pi0, pif = project_pi0(f)
        fn = f.l2()
        if fn > 0 and pi0.l2() > 1.0e-8 * fn:
            raise ValueError("triple norm is defined on the projected subspace; "
                             "apply the kernel projection first")
        times, norms = self._evolve_series(f)
        integral = float(np.trapezoid(norms ** 2, times))
        xval = norm(f, self.x_norm)
        tail = self.tail_bound(times, norms, xval)
        return self.spec.eta * xval ** 2 + integral, tail


def triple_norm(ctx: LandauContext, f: Field, spec: TripleNormSpec,
                segments=None) -> tuple[float, float]:
    return TripleNormEngine(ctx, spec, segments=segments).value(f)


def dissipativity_probe(ctx: LandauContext, f: Field, spec: TripleNormSpec,
                        dt_probe: float = 0.02, segments=None,
                        rtol: float = 1.0e-7):
    """Centered difference of t -> |||S_L(t) f|||^2 against -||f||_Y^2.

    A single trajectory serves both evaluations: the fine two-step prefix
    yields f2 = S_L(2 dt) f, and the integral windows of the two triple norms
    are shifted slices of the same norm series.  Returns (lhs, rhs) with
    lhs the time derivative at t = dt_probe and rhs = -||S_L(dt) f||_Y^2.
    """
    engine = TripleNormEngine(ctx, spec, segments=segments, rtol=rtol)
    pi0, f0 = project_pi0(f)
    stepper = LinearStepper(engine.op, dt_probe, CN, rtol=rtol)
    f1 = stepper.step(f0.values)
    f2 = stepper.step(f1)
    f1 = Field(ctx.grid, f1, check=False)
    f2 = Field(ctx.grid, f2, check=False)

    times, norms = engine._evolve_series(f0, extra_time=2.0 * dt_probe)
    horizon = spec.horizon

    def window_integral(t_lo, t_hi):
        grid_t = np.concatenate(([t_lo], times[(times > t_lo) & (times < t_hi)], [t_hi]))
        vals = np.interp(grid_t, times, norms ** 2)
        return float(np.trapezoid(vals, grid_t))

    x0 = norm(f0, engine.x_norm)
    x2 = norm(f2, engine.x_norm)
    tail0 = engine.tail_bound(times, norms, x0)
    triple0 = spec.eta * x0 ** 2 + window_integral(0.0, horizon) + tail0
    triple2 = (spec.eta * x2 ** 2
               + window_integral(2.0 * dt_probe, horizon + 2.0 * dt_probe)
               + tail0)
    lhs = (triple2 - triple0) / (2.0 * dt_probe)
    y = norm(f1, NormSpec(H1STAR, spec.base_weight, spec.gamma))
    return lhs, -(y ** 2)


# ---------------------------------------------------------------------------
# smoothing probe
# ---------------------------------------------------------------------------

def smoothing_probe(ctx: LandauContext, f0: Field, m: WeightSpec,
                    m1: WeightSpec, t_list, p: SplitParams,
                    propagator=None, dt: float | None = None):
    """||S_B(t) f0||_{L2(m1 <v>^{gamma/2})} / ||f0||_{H^-1_*(m)} per time.

    `propagator` may be a DensePropagator (the N<=20 oracle); otherwise the
    matrix-free stepper marches to each requested time.
    """
    if m.kind != "poly" or m1.kind != "poly":
        raise ValueError("smoothing probe weights must be polynomial")
    if not (1.5 < m1.k < m.k):
        raise ValueError("need <v>^{3/2} < m1 < m in the weight order")
    g = as_gamma(ctx.gamma)
    out_weight = WeightSpec.polynomial(m1.k + g / 2.0)
    if out_weight.k < 0:
        raise ValueError("output weight <v>^{k1 + gamma/2} must be nonnegative")
    dual = norm(f0, NormSpec("Hminus1star", m, ctx.gamma))
    out_spec = NormSpec(L2M, out_weight, ctx.gamma)
    ratios = []
    t_list = sorted(t_list)
    if propagator is not None:
        for t in t_list:
            ft = Field(ctx.grid, propagator.apply(t, f0.values), check=False)
            ratios.append(norm(ft, out_spec) / dual)
        return np.asarray(ratios)
    if dt is None:
        dt = min(t_list) / 4.0
    op = OperatorHandle(ctx, "B", split=p)
    stepper = LinearStepper(op, dt, auto_scheme(op, dt))
    values = f0.values.copy()
    t = 0.0
    for target in t_list:
        n = int(round((target - t) / dt))
        for _ in range(n):
            values = stepper.step(values)
        t += n * dt
        ratios.append(norm(Field(ctx.grid, values, check=False), out_spec) / dual)
    return np.asarray(ratios)