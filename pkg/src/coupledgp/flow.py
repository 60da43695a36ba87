"""Constraint minimization by normalized gradient flow.

Each step treats -Lap + c implicitly (diagonal in the grid's transform
space) and everything else explicitly, then re-projects onto the joint
unit-mass constraint (clamp negatives, rescale both components by one
factor).  The explicit part carries the current Rayleigh multiplier, which
makes exact critical points exact fixed points of the discrete step; the
stabilization shift c is the nodewise max of the explicit coefficients, so
the pre-transform update never flips signs.  Steps are accepted only if
the energy does not increase (backtracking halves dt otherwise).

Convergence is certified by the Euler-Lagrange residual with the Rayleigh
multiplier, not by energy stagnation.  After convergence the run is
audited: the mass outside |x| > L/2 must be below 1e-10 and the blow-up
scale eps must span at least ``refine_trigger`` grid points, otherwise
NeedsRefinement reports a better grid.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import grid as gridmod
from .energy import EnergyBreakdown, GridMismatch, ZeroField, energy
from .grid import FieldPair, integrate, kinetic, laplacian, mass_outside

BOUNDARY_MASS_LIMIT = 1e-10
MONOTONE_SLACK = 1e-12


class NoConvergence(Exception):
    """Flow exhausted max_iters without meeting the residual tolerance."""


class DivergenceSuspected(Exception):
    """Energy ran away downward with growing kinetic energy (no minimizer)."""


class FlatField(Exception):
    """Peak extraction failed: no unique quadratic maximum."""


class NeedsRefinement(Exception):
    """Converged state is under-resolved or leaks mass; carries a suggestion."""

    def __init__(self, message, result=None, suggestion=None):
        super().__init__(message)
        self.result = result
        self.suggestion = suggestion or {}


@dataclass(frozen=True)
class SolverOptions:
    dt: float = 0.1
    tol: float = 1e-5
    max_iters: int = 60000
    refine_trigger: int = 8
    seed: int = 0
    check_every: int = 50

    def __post_init__(self):
        if self.dt <= 0 or self.tol <= 0:
            raise ValueError("dt and tol must be positive")
        if self.refine_trigger < 4:
            raise ValueError("refine_trigger must be at least 4")


@dataclass(frozen=True)
class InitRecipe:
    """Isotropic Gaussian pair split (sqrt(gamma), sqrt(1-gamma)).

    ``width`` defaults to L/4; ``noise`` adds seeded multiplicative noise
    (uniqueness probes); ``bias`` shifts the center (symmetry probes).
    """

    center: tuple = (0.0, 0.0)
    width: float | None = None
    noise: float = 0.0
    split: float | None = None  # override gamma


@dataclass
class MinimizeResult:
    fields: FieldPair
    e_value: float
    mu: float
    residual: float
    iters: int
    eps: float
    peaks: tuple            # (z1, z2) sub-grid maximum locations
    mass_ratio: float
    profile_err: float
    breakdown: EnergyBreakdown
    mu_consistency: float
    boundary_mass: float
    gn_slack_rel: float
    balanced_sq: float

    def summary(self):
        z1, z2 = self.peaks
        return {
            "e": self.e_value, "mu": self.mu, "residual": self.residual,
            "iters": self.iters, "eps": self.eps,
            "mu_eps2": self.mu * self.eps**2,
            "z1": list(z1), "z2": list(z2),
            "mass_ratio": self.mass_ratio, "profile_err": self.profile_err,
            "peak_gap_over_eps": float(np.hypot(z1[0] - z2[0], z1[1] - z2[1]) / self.eps),
            "mu_consistency": self.mu_consistency,
            "boundary_mass": self.boundary_mass,
            "gn_slack_rel": self.gn_slack_rel,
            "balanced_sq": self.balanced_sq,
            "breakdown": self.breakdown.to_dict(),
        }


def project(fields):
    """Clamp negatives, then jointly rescale to unit mass."""
    u1 = np.maximum(fields.u1, 0.0)
    u2 = np.maximum(fields.u2, 0.0)
    m = integrate(fields.grid, u1**2 + u2**2)
    if m <= 0.0:
        raise ZeroField("cannot project an identically zero pair")
    s = 1.0 / math.sqrt(m)
    return FieldPair(fields.grid, u1 * s, u2 * s)


def _diagnostics(g, u1, u2, V1, V2, params):
    """One pass of the integrals the flow needs per state."""
    kin = kinetic(g, u1) + kinetic(g, u2)
    pot = integrate(g, V1 * u1**2 + V2 * u2**2)
    q1 = integrate(g, u1**4)
    q2 = integrate(g, u2**4)
    ov = integrate(g, u1**2 * u2**2)
    e = kin + pot - 0.5 * params.a1 * q1 - 0.5 * params.a2 * q2 - params.beta * ov
    mu = kin + pot - params.a1 * q1 - params.a2 * q2 - 2.0 * params.beta * ov
    return kin, pot, q1, q2, ov, e, mu


def _step_arrays(g, u1, u2, V1, V2, params, dt, mu):
    """Semi-implicit update: (I + dt(-Lap + c)) v = u + dt (c - g) u.

    g collects the explicit coefficients V - a u^2 - beta v^2 - mu; the
    shift c = max|g| keeps every explicit factor nonnegative.  The c-shift
    is folded into the diagonal transform solve.
    """
    g1 = V1 - params.a1 * u1**2 - params.beta * u2**2 - mu
    g2 = V2 - params.a2 * u2**2 - params.beta * u1**2 - mu
    c = max(np.abs(g1).max(), np.abs(g2).max())
    den = 1.0 + dt * c
    v1 = gridmod.implicit_solve(g, (u1 + dt * (c - g1) * u1) / den, dt / den)
    v2 = gridmod.implicit_solve(g, (u2 + dt * (c - g2) * u2) / den, dt / den)
    return v1, v2, c


def flow_step(fields, params, V1, V2, dt):
    """One semi-implicit flow step followed by projection."""
    g = fields.grid
    g.check(V1, V2)
    u1, u2 = fields.u1, fields.u2
    _, _, _, _, _, _, mu = _diagnostics(g, u1, u2, V1, V2, params)
    v1, v2, _ = _step_arrays(g, u1, u2, V1, V2, params, dt, mu)
    if not (np.isfinite(v1).all() and np.isfinite(v2).all()):
        raise FloatingPointError("flow step produced non-finite values; reduce dt")
    return project(FieldPair(g, v1, v2))


def default_init(grid, gamma, recipe, seed=0):
    """Gaussian pair per the initialization recipe, projected."""
    width = recipe.width if recipe.width is not None else grid.L / 4.0
    split = recipe.split if recipe.split is not None else gamma
    cx, cy = recipe.center
    g0 = np.exp(-((grid.X - cx) ** 2 + (grid.Y - cy) ** 2) / (2.0 * width**2))
    if recipe.noise > 0.0:
        rng = np.random.default_rng(seed)
        g0 = g0 * (1.0 + recipe.noise * rng.uniform(-1.0, 1.0, g0.shape))
    return project(FieldPair(grid, math.sqrt(split) * g0, math.sqrt(1.0 - split) * g0))


def _residual_norm(g, u1, u2, V1, V2, params, mu):
    r1 = (-laplacian(g, u1) + V1 * u1 - mu * u1 - params.a1 * u1**3
          - params.beta * u2**2 * u1)
    r2 = (-laplacian(g, u2) + V2 * u2 - mu * u2 - params.a2 * u2**3
          - params.beta * u1**2 * u2)
    return math.sqrt(integrate(g, r1**2) + integrate(g, r2**2))


def _fit_peak(g, u):
    """Argmax refined by a least-squares quadratic over the 3x3 neighborhood."""
    n = g.n
    flat = int(np.argmax(u))  # first occurrence = lexicographic smallest node
    i, j = divmod(flat, n)
    if u[i, j] <= 0.0:
        raise FlatField("component has no positive maximum")
    i = min(max(i, 1), n - 2)
    j = min(max(j, 1), n - 2)
    patch = u[i - 1:i + 2, j - 1:j + 2]
    dx, dy = np.meshgrid([-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0], indexing="ij")
    A = np.stack([np.ones(9), dx.ravel(), dy.ravel(), dx.ravel() ** 2,
                  (dx * dy).ravel(), dy.ravel() ** 2], axis=1)
    coef, *_ = np.linalg.lstsq(A, patch.ravel(), rcond=None)
    _, b, c, d, e2, f = coef
    H = np.array([[2 * d, e2], [e2, 2 * f]])
    det = H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0]
    if det <= 0 or H[0, 0] >= 0:
        raise FlatField("quadratic fit has no unique interior maximum")
    off = np.linalg.solve(H, [-b, -c])
    off = np.clip(off, -1.0, 1.0)
    return (g.X[i, j] + off[0] * g.h, g.Y[i, j] + off[1] * g.h)


def observables(fields, params, profile=None, tconst=None):
    """Blow-up scale, refined peaks, quartic mass ratio and profile error.

    profile_err is the joint L2 distance between the pair and the predicted
    concentration shape (sqrt(gamma), sqrt(1-gamma)) w(|x-z|/eps)/(eps ||w||)
    when a ground profile is supplied, else nan.
    """
    from .townes import sample_profile

    g = fields.grid
    u1, u2 = fields.u1, fields.u2
    kin = kinetic(g, u1) + kinetic(g, u2)
    eps = kin ** -0.5
    z1 = _fit_peak(g, u1)
    z2 = _fit_peak(g, u2)
    q1 = integrate(g, u1**4)
    q2 = integrate(g, u2**4)
    mass_ratio = q1 / q2 if q2 > 0 else math.inf
    profile_err = math.nan
    if profile is not None and tconst is not None:
        gam = params.gamma
        t1 = math.sqrt(gam / tconst.a_star) / eps * sample_profile(profile, g, z1, eps)
        t2 = math.sqrt((1.0 - gam) / tconst.a_star) / eps * sample_profile(profile, g, z2, eps)
        profile_err = math.sqrt(integrate(g, (u1 - t1) ** 2) + integrate(g, (u2 - t2) ** 2))
    gap = math.hypot(z1[0] - z2[0], z1[1] - z2[1])
    return eps, (z1, z2), mass_ratio, profile_err, gap / eps


def minimize(params, V1, V2, grid, init, opts, profile=None, tconst=None,
             allow_supercritical=False):
    """Run the flow to the residual tolerance and audit the result.

    ``init`` is a FieldPair or an InitRecipe.  Raises NoConvergence,
    DivergenceSuspected or NeedsRefinement (the latter carries the
    converged result and a grid suggestion).
    """
    grid.check(V1, V2)
    if not allow_supercritical and not params.in_existence_regime():
        raise ValueError("parameters outside the existence regime "
                         "(pass allow_supercritical=True for divergence probes)")
    if isinstance(init, InitRecipe):
        fields = default_init(grid, params.gamma, init, seed=opts.seed)
    else:
        if init.grid.key() != grid.key():
            raise GridMismatch("init fields live on a different grid")
        fields = project(FieldPair(grid, init.u1, init.u2))
    u1, u2 = fields.u1, fields.u2
    kin, pot, q1, q2, ov, e, mu = _diagnostics(grid, u1, u2, V1, V2, params)
    dt = opts.dt
    res = math.inf
    e_trace = [e]
    kin_trace = [kin]
    iters = opts.max_iters
    for it in range(opts.max_iters):
        v1, v2, _ = _step_arrays(grid, u1, u2, V1, V2, params, dt, mu)
        np.maximum(v1, 0.0, out=v1)
        np.maximum(v2, 0.0, out=v2)
        m = integrate(grid, v1**2 + v2**2)
        if not math.isfinite(m) or m <= 0.0:
            raise FloatingPointError("flow produced a non-finite or zero state")
        s = 1.0 / math.sqrt(m)
        v1 *= s
        v2 *= s
        nkin, npot, nq1, nq2, nov, ne, nmu = _diagnostics(grid, v1, v2, V1, V2, params)
        if ne <= e + MONOTONE_SLACK:
            u1, u2 = v1, v2
            kin, pot, q1, q2, ov, e, mu = nkin, npot, nq1, nq2, nov, ne, nmu
            dt = min(dt * 1.02, opts.dt)
        else:
            dt *= 0.5
            if dt < 1e-6 * opts.dt:
                raise NoConvergence(f"step size collapsed at iteration {it}")
        if it % opts.check_every == 0:
            res = _residual_norm(grid, u1, u2, V1, V2, params, mu)
            e_trace.append(e)
            kin_trace.append(kin)
            if res <= opts.tol:
                iters = it + 1
                break
            if e < -1.0 and kin > 2.0 * kin_trace[0]:
                raise DivergenceSuspected(
                    f"energy {e:.3f} running away with growing kinetic term")
    else:
        res = _residual_norm(grid, u1, u2, V1, V2, params, mu)
        if res > opts.tol:
            half = len(e_trace) // 2
            drop = e_trace[half] - e_trace[-1]
            kin_grow = kin_trace[-1] > 1.2 * kin_trace[half]
            if drop > abs(e_trace[half]) * 0.01 and kin_grow:
                raise DivergenceSuspected(
                    "energy still decreasing linearly with growing kinetic term")
            raise NoConvergence(
                f"residual {res:.3e} > tol {opts.tol:.1e} after {opts.max_iters} iterations")

    fields = FieldPair(grid, u1, u2)
    bk = energy(fields, params, V1, V2)
    mu_e = bk.total - 0.5 * params.a1 * q1 - 0.5 * params.a2 * q2 - params.beta * ov
    eps, peaks, mass_ratio, profile_err, _ = observables(
        fields, params, profile=profile, tconst=tconst)
    quart = integrate(grid, (u1**2 + u2**2) ** 2)
    a_star = params.a_star
    slack_rel = ((2.0 / a_star) * kin - quart) / quart  # mass is 1
    balanced = integrate(grid, (math.sqrt(a_star - params.a1) * u1**2
                                - math.sqrt(a_star - params.a2) * u2**2) ** 2) \
        if max(params.a1, params.a2) <= a_star else math.nan
    bmass = mass_outside(grid, u1, u2, grid.L / 2.0)
    result = MinimizeResult(
        fields=fields, e_value=bk.total, mu=mu_e, residual=res, iters=iters,
        eps=eps, peaks=peaks, mass_ratio=mass_ratio, profile_err=profile_err,
        breakdown=bk, mu_consistency=abs(mu_e - mu), boundary_mass=bmass,
        gn_slack_rel=slack_rel, balanced_sq=balanced)
    _audit(result, grid, opts)
    return result


def _audit(result, grid, opts):
    if result.boundary_mass >= BOUNDARY_MASS_LIMIT:
        raise NeedsRefinement(
            f"boundary mass {result.boundary_mass:.2e} above {BOUNDARY_MASS_LIMIT}",
            result=result,
            suggestion={"n": grid.n * 2, "L": grid.L * 2.0})
    if result.eps < opts.refine_trigger * grid.h:
        raise NeedsRefinement(
            f"eps {result.eps:.3f} spans under {opts.refine_trigger} grid points",
            result=result,
            suggestion=shrink_suggestion(grid, result))


def shrink_suggestion(grid, result):
    """Halve the box if the concentrated state stays comfortably inside it."""
    z1, z2 = result.peaks
    reach = max(np.hypot(*z1), np.hypot(*z2)) + 12.5 * result.eps
    if reach <= grid.L / 4.0:  # audit disc of the halved box
        return {"n": grid.n, "L": grid.L / 2.0}
    return {"n": grid.n * 2, "L": grid.L}


def regrid(fields, new_grid):
    """Resample a pair onto a new grid and re-project."""
    u1 = gridmod.resample(fields.grid, fields.u1, new_grid)
    u2 = gridmod.resample(fields.grid, fields.u2, new_grid)
    return project(FieldPair(new_grid, u1, u2))


@dataclass
class ContinuationRow:
    beta: float
    result: MinimizeResult | None
    grid: object
    status: str
    error: str = ""


def continuation(params_base, beta_schedule, v1_spec, v2_spec, grid, opts, *,
                 profile=None, tconst=None, init=None, model=None,
                 refine_safety=12.5, max_regrid=3):
    """Warm-started sweep over an increasing beta schedule.

    Re-grids proactively when the predicted blow-up scale (from ``model``)
    undershoots the resolution trigger, and reactively on NeedsRefinement.
    Failed rows are recorded with their error and the sweep continues from
    the last good state.
    """
    from .potentials import eval_potential

    betas = list(beta_schedule)
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValueError("beta schedule must be strictly increasing")
    rows = []
    warm = init
    cur_grid = grid
    for beta in betas:
        params = replace(params_base, beta=beta)
        if model is not None and warm is not None and not isinstance(warm, InitRecipe):
            cur_grid, warm = _plan_grid(cur_grid, warm, model, beta, opts, refine_safety)
        V1 = eval_potential(v1_spec, cur_grid)
        V2 = eval_potential(v2_spec, cur_grid)
        start = warm if warm is not None else InitRecipe()
        attempt = 0
        while True:
            try:
                result = minimize(params, V1, V2, cur_grid, start, opts,
                                  profile=profile, tconst=tconst)
                rows.append(ContinuationRow(beta, result, cur_grid, "ok"))
                warm = result.fields
                break
            except NeedsRefinement as nr:
                attempt += 1
                if attempt > max_regrid:
                    rows.append(ContinuationRow(beta, nr.result, cur_grid,
                                                "needs_refinement", str(nr)))
                    if nr.result is not None:
                        warm = nr.result.fields
                    break
                new_grid = gridmod.Grid2D(nr.suggestion["n"], nr.suggestion["L"],
                                          cur_grid.mode)
                base = nr.result.fields if nr.result is not None else (
                    start if not isinstance(start, InitRecipe) else None)
                start = regrid(base, new_grid) if base is not None else InitRecipe()
                cur_grid = new_grid
                V1 = eval_potential(v1_spec, cur_grid)
                V2 = eval_potential(v2_spec, cur_grid)
            except (NoConvergence, DivergenceSuspected) as exc:
                rows.append(ContinuationRow(beta, None, cur_grid,
                                            type(exc).__name__, str(exc)))
                break
    return rows


def _plan_grid(cur_grid, warm, model, beta, opts, safety):
    """Shrink the box ahead of a continuation leg when prediction allows it."""
    eps_pred = model.eps_bar(beta)
    if eps_pred >= opts.refine_trigger * cur_grid.h:
        return cur_grid, warm
    half = gridmod.Grid2D(cur_grid.n, cur_grid.L / 2.0, cur_grid.mode)
    reach = max(abs(c) for z in model.z0 for c in z) if model.z0 else 0.0
    if reach + safety * eps_pred < half.L / 2.0:
        return half, regrid(warm, half)
    finer = gridmod.Grid2D(cur_grid.n * 2, cur_grid.L, cur_grid.mode)
    return finer, regrid(warm, finer)
