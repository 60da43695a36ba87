"""Experiment drivers: continuation scans, probes, fits and their checks.

Each ``run_*`` returns an ExperimentOutput bundling the data tables, the
asymptotic model, the log-log fits and a list of named pass/fail checks.
The report module turns outputs into CSV traces, a JSON summary and
figures; the CLI's exit status is the conjunction of the checks.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import flow as flowmod
from . import townes as townesmod
from .asymptotics import classify
from .config import ExperimentConfig
from .energy import Params, trial_energy
from .flow import ContinuationRow, InitRecipe, SolverOptions, continuation, minimize, regrid
from .grid import Grid2D, integrate
from .potentials import common_zeros, eval_potential

TRACE_COLUMNS = ("config", "beta", "e", "eps", "mu", "mu_eps2", "mass_ratio",
                 "profile_err", "peak_gap_over_eps", "z1x", "z1y", "z2x", "z2y",
                 "status")


@dataclass(frozen=True)
class FitResult:
    exponent: float
    prefactor: float
    r_squared: float
    window: tuple

    def to_dict(self):
        return {"exponent": self.exponent, "prefactor": self.prefactor,
                "r_squared": self.r_squared, "window": list(self.window)}


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    detail: str = ""

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed),
                "value": self.value, "detail": self.detail}


@dataclass
class ExperimentOutput:
    kind: str
    config: ExperimentConfig
    tables: dict = field(default_factory=dict)   # name -> (columns, rows)
    fits: dict = field(default_factory=dict)
    model: object = None
    checks: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)   # figure payloads, field arrays

    @property
    def passed(self):
        return all(c.passed for c in self.checks)


def fit_loglog(x, y, window):
    """Straight-line fit of log y against log x over the given indices."""
    window = tuple(window)
    if len(window) < 4:
        raise ValueError("fit window needs at least 4 points")
    lx = np.log(np.asarray([x[i] for i in window], dtype=float))
    ly = np.log(np.asarray([y[i] for i in window], dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(exponent=float(slope), prefactor=float(math.exp(intercept)),
                     r_squared=r2, window=window)


_TOWNES_CACHE = {}


def townes_context(cfg):
    """Ground profile and its integrals for a config (cached per resolution)."""
    key = (cfg.townes_r_max, cfg.townes_h_r, cfg.townes_tol)
    hit = _TOWNES_CACHE.get(key)
    if hit is None:
        profile = townesmod.find_ground_state(tol=cfg.townes_tol,
                                              r_max=cfg.townes_r_max,
                                              h_r=cfg.townes_h_r)
        tconst = townesmod.constants(profile, moment_exponents=(1, 2, 3, 4))
        hit = (profile, tconst)
        _TOWNES_CACHE[key] = hit
    return hit


@dataclass
class Lab:
    """Everything a run needs: profile, constants, model, grid, potentials."""

    config: ExperimentConfig
    profile: object
    tconst: object
    model: object
    grid: Grid2D
    params_base: Params
    opts: SolverOptions

    @staticmethod
    def prepare(cfg):
        profile, tconst = townes_context(cfg)
        a_star = tconst.a_star
        grid = Grid2D(cfg.n, cfg.L, cfg.mode)
        model = None
        if common_zeros(cfg.v1, cfg.v2):
            model = classify(cfg.v1, cfg.v2, profile, tconst,
                             cfg.a1_frac * a_star, cfg.a2_frac * a_star, grid.h)
        params = Params(a1=cfg.a1_frac * a_star, a2=cfg.a2_frac * a_star,
                        beta=0.0, a_star=a_star)
        opts = SolverOptions(dt=cfg.dt, tol=cfg.tol, max_iters=cfg.max_iters,
                             refine_trigger=cfg.refine_trigger, seed=cfg.seed)
        return Lab(cfg, profile, tconst, model, grid, params, opts)

    @property
    def beta_star(self):
        return self.params_base.beta_star

    def betas(self):
        return [f * self.beta_star for f in self.config.beta_schedule]

    def init_recipe(self, center=None, noise=0.0):
        cfg = self.config
        if center is None:
            center = cfg.init_center
        if center is None:
            zeros = common_zeros(cfg.v1, cfg.v2)
            center = tuple(np.mean(np.asarray(zeros), axis=0)) if zeros else (0.0, 0.0)
        return InitRecipe(center=tuple(center), width=cfg.init_width, noise=noise)


def run_continuation(lab, init=None, coarse_first=True):
    """Warm-started sweep over the config's schedule; returns rows.

    The first leg optionally runs on a half-resolution grid and lifts the
    result, which costs a quarter per iteration and leaves only a short
    polish at full resolution.
    """
    cfg = lab.config
    betas = lab.betas()
    start = init if init is not None else lab.init_recipe()
    if coarse_first and isinstance(start, InitRecipe) and cfg.n >= 128:
        coarse = Grid2D(cfg.n // 2, cfg.L, cfg.mode)
        V1c = eval_potential(cfg.v1, coarse)
        V2c = eval_potential(cfg.v2, coarse)
        params0 = replace(lab.params_base, beta=betas[0])
        copts = replace(lab.opts, tol=max(lab.opts.tol, 1e-4), refine_trigger=4)
        try:
            first = minimize(params0, V1c, V2c, coarse, start, copts,
                             profile=lab.profile, tconst=lab.tconst)
            start = regrid(first.fields, lab.grid)
        except flowmod.NeedsRefinement as nr:
            if nr.result is not None:
                start = regrid(nr.result.fields, lab.grid)
        except (flowmod.NoConvergence, flowmod.DivergenceSuspected):
            pass
    return continuation(lab.params_base, betas, cfg.v1, cfg.v2, lab.grid,
                        lab.opts, profile=lab.profile, tconst=lab.tconst,
                        init=start, model=lab.model)


def trace_table(cfg, rows):
    """Continuation trace in the canonical column layout."""
    h = cfg.config_hash()
    out = []
    for row in rows:
        if row.result is None:
            out.append([h, row.beta] + [math.nan] * 11 + [row.status])
            continue
        r = row.result
        (z1, z2) = r.peaks
        gap = math.hypot(z1[0] - z2[0], z1[1] - z2[1])
        out.append([h, row.beta, r.e_value, r.eps, r.mu, r.mu * r.eps**2,
                    r.mass_ratio, r.profile_err, gap / r.eps,
                    z1[0], z1[1], z2[0], z2[1], row.status])
    return TRACE_COLUMNS, out


def _ok_rows(rows):
    return [(i, r) for i, r in enumerate(rows) if r.result is not None]


def _tail_window(rows, count):
    ok = [i for i, r in enumerate(rows) if r.result is not None]
    return tuple(ok[-count:])


def run_threshold_scan(cfg, rows=None, lab=None):
    """Continuation plus the energy power-law fit against beta* - beta."""
    lab = lab or Lab.prepare(cfg)
    if lab.model is None:
        raise ValueError("threshold scan needs a common zero of the traps")
    if rows is None:
        rows = run_continuation(lab)
    bstar = lab.beta_star
    gaps = [bstar - r.beta for r in rows]
    es = [r.result.e_value if r.result else math.nan for r in rows]
    window = _tail_window(rows, cfg.fit_window)
    fit = fit_loglog(gaps, es, window)
    model = lab.model
    p0 = model.p0
    target_exp = p0 / (p0 + 2.0)
    pred_coeff = model.predicted_energy(bstar - 1.0)  # coefficient at unit gap
    ok = _ok_rows(rows)
    e_ok = [r.result.e_value for _, r in ok]
    checks = [
        Check("energy_exponent", abs(fit.exponent - target_exp) <= 0.05,
              fit.exponent, f"target {target_exp:.3f} +- 0.05"),
        Check("energy_prefactor", abs(fit.prefactor / pred_coeff - 1.0) <= 0.15,
              fit.prefactor, f"predicted {pred_coeff:.4f} +- 15%"),
        Check("energy_decreasing", all(b < a for a, b in zip(e_ok, e_ok[1:])),
              e_ok[-1] if e_ok else math.nan, "strictly decreasing over schedule"),
        Check("energy_collapse", bool(e_ok and e_ok[-1] < 0.2 * e_ok[0]),
              e_ok[-1] / e_ok[0] if e_ok else math.nan, "finest below 20% of coarsest"),
    ]
    out = ExperimentOutput("threshold_scan", cfg, model=model)
    out.tables["trace"] = trace_table(cfg, rows)
    out.fits["energy"] = fit
    out.checks = checks
    out.extras["rows"] = rows
    out.extras["predicted_energy"] = [model.predicted_energy(r.beta) for r in rows]
    return out


def run_blowup_scan(cfg, rows=None, lab=None):
    """Continuation plus the blow-up scale fit and the concentration report."""
    lab = lab or Lab.prepare(cfg)
    if lab.model is None:
        raise ValueError("blow-up scan needs a common zero of the traps")
    if rows is None:
        rows = run_continuation(lab)
    model = lab.model
    bstar = lab.beta_star
    gaps = [bstar - r.beta for r in rows]
    eps = [r.result.eps if r.result else math.nan for r in rows]
    window = _tail_window(rows, cfg.fit_window)
    fit = fit_loglog(gaps, eps, window)
    target_exp = 1.0 / (model.p0 + 2.0)
    last = next(r for r in reversed(rows) if r.result is not None)
    eps_bar_last = model.eps_bar(last.beta)
    ratio = last.result.eps / eps_bar_last
    mu_eps2 = last.result.mu * last.result.eps**2
    zpred = model.predicted_peak(last.beta)
    z1, z2 = last.result.peaks
    drift = max(math.hypot(z1[0] - zpred[0], z1[1] - zpred[1]),
                math.hypot(z2[0] - zpred[0], z2[1] - zpred[1]))
    checks = [
        Check("eps_exponent", abs(fit.exponent - target_exp) <= 0.03,
              fit.exponent, f"target {target_exp:.4f} +- 0.03"),
        Check("eps_ratio", abs(ratio - 1.0) <= 0.10, ratio,
              "eps/eps_bar within 10% at finest beta"),
        Check("mu_eps2", abs(mu_eps2 - (-1.0)) <= 0.10, mu_eps2,
              "mu*eps^2 within 10% of -1 at finest beta"),
        Check("concentration", drift <= 2.0 * eps_bar_last, drift,
              f"peaks within 2 eps_bar of predicted site {zpred}"),
    ]
    out = ExperimentOutput("blowup_scan", cfg, model=model)
    out.tables["trace"] = trace_table(cfg, rows)
    out.fits["eps"] = fit
    out.checks = checks
    out.extras["rows"] = rows
    out.extras["eps_bar"] = [model.eps_bar(r.beta) for r in rows]
    return out


def _aligned_distance(pa, pb):
    """Joint L2 distance after integer-shift peak alignment."""
    g = pa.grid
    ia = np.unravel_index(int(np.argmax(pa.u1 + pa.u2)), pa.u1.shape)
    ib = np.unravel_index(int(np.argmax(pb.u1 + pb.u2)), pb.u1.shape)
    shift = (ib[0] - ia[0], ib[1] - ia[1])
    u1 = np.roll(pa.u1, shift, axis=(0, 1))
    u2 = np.roll(pa.u2, shift, axis=(0, 1))
    return math.sqrt(integrate(g, (u1 - pb.u1) ** 2) + integrate(g, (u2 - pb.u2) ** 2))


def run_symmetry_breaking(cfg, lab=None):
    """Two continuations biased to opposite wells of a symmetric trap."""
    lab = lab or Lab.prepare(cfg)
    model = lab.model
    if model is None or len(model.wells) < 2:
        raise ValueError("symmetry experiment needs two common wells")
    wells = [w.center for w in model.wells]
    if not any(abs(a[0] + b[0]) < 1e-12 and abs(a[1] - b[1]) < 1e-12
               for a in wells for b in wells if a is not b):
        raise ValueError("wells must be mirror images across x = 0")
    outs = []
    for well in wells[:2]:
        init = lab.init_recipe(center=well)
        rows = run_continuation(lab, init=init)
        outs.append(rows)
    lastL = next(r for r in reversed(outs[0]) if r.result is not None)
    lastR = next(r for r in reversed(outs[1]) if r.result is not None)
    eps_bar_last = model.eps_bar(lastL.beta)

    def peak_err(row, well):
        z1, z2 = row.result.peaks
        return max(math.hypot(z1[0] - well[0], z1[1] - well[1]),
                   math.hypot(z2[0] - well[0], z2[1] - well[1]))

    drift = max(peak_err(lastL, wells[0]), peak_err(lastR, wells[1]))
    e_rel = abs(lastL.result.e_value - lastR.result.e_value) / abs(lastL.result.e_value)
    fL = lastL.result.fields
    fR = lastR.result.fields
    mirL1 = fL.u1[::-1, :]
    mirL2 = fL.u2[::-1, :]
    g = fL.grid
    mirror_l2 = math.sqrt(integrate(g, (mirL1 - fR.u1) ** 2)
                          + integrate(g, (mirL2 - fR.u2) ** 2))
    checks = [
        Check("distinct_wells", drift <= 2.0 * eps_bar_last, drift,
              "each biased run concentrates at its own well"),
        Check("energy_agreement", e_rel <= 1e-8, e_rel,
              "mirror minimizers agree in energy to 1e-8"),
        Check("mirror_fields", mirror_l2 <= 1e-4, mirror_l2,
              "x-reflection of one minimizer matches the other in L2"),
    ]
    out = ExperimentOutput("symmetry", cfg, model=model)
    out.tables["trace_left"] = trace_table(cfg, outs[0])
    out.tables["trace_right"] = trace_table(cfg, outs[1])
    out.checks = checks
    out.extras["fields"] = (fL, fR)
    out.extras["wells"] = wells[:2]
    return out


def run_uniqueness_probe(cfg, n_starts=None, lab=None):
    """Seeded multi-start minimization at the finest scheduled beta."""
    lab = lab or Lab.prepare(cfg)
    model = lab.model
    if model is None or len(model.z0) != 1:
        raise ValueError("uniqueness probe needs a single flattest common zero")
    n_starts = n_starts or cfg.n_starts
    beta = lab.betas()[-1]
    params = replace(lab.params_base, beta=beta)
    V1 = eval_potential(cfg.v1, lab.grid)
    V2 = eval_potential(cfg.v2, lab.grid)
    results = []
    for k in range(n_starts):
        recipe = InitRecipe(center=model.z0[0], width=cfg.init_width,
                            noise=cfg.noise if cfg.noise else 0.3)
        opts = replace(lab.opts, seed=cfg.seed + 1000 * k)
        results.append(minimize(params, V1, V2, lab.grid, recipe, opts,
                                profile=lab.profile, tconst=lab.tconst))
    dists = np.zeros((n_starts, n_starts))
    for i in range(n_starts):
        for j in range(i + 1, n_starts):
            dists[i, j] = dists[j, i] = _aligned_distance(results[i].fields,
                                                          results[j].fields)
    es = [r.e_value for r in results]
    spread = (max(es) - min(es)) / abs(min(es))
    eigs = np.linalg.eigvalsh(model.hessian_h)
    same_well = all(math.hypot(r.peaks[0][0] - model.z0[0][0],
                               r.peaks[0][1] - model.z0[0][1])
                    <= 2.0 * model.eps_bar(beta) for r in results)
    checks = [
        Check("pairwise_distance", float(dists.max()) < 1e-4, float(dists.max()),
              "max pairwise aligned L2 distance below 1e-4"),
        Check("energy_spread", spread < 1e-9, spread,
              "relative energy spread below 1e-9"),
        Check("hessian_positive", bool((eigs > 0).all()), float(eigs.min()),
              "well-energy Hessian eigenvalues positive at y0"),
        Check("same_peak_well", same_well, float(n_starts),
              "all starts concentrate at the flattest zero"),
    ]
    cols = ("config", "start", "e", "eps", "mu", "residual", "iters")
    h = cfg.config_hash()
    rows = [[h, k, r.e_value, r.eps, r.mu, r.residual, r.iters]
            for k, r in enumerate(results)]
    out = ExperimentOutput("uniqueness", cfg, model=model)
    out.tables["starts"] = (cols, rows)
    out.checks = checks
    out.extras["distances"] = dists
    out.extras["results"] = results
    return out


def run_nonexistence_probe(cfg, cases=None, lab=None):
    """Trial-state energies over a geometric tau grid, per parameter case.

    Cases are (label, a1_frac, a2_frac, beta_frac) tuples; the default set
    probes above the threshold, below it, and above the single-component
    critical mass.  Above threshold the energies must eventually decrease
    (no minimizer); below it they must have an interior minimum.
    """
    lab = lab or Lab.prepare(cfg)
    if lab.model is None:
        raise ValueError("nonexistence probe needs a common zero")
    a_star = lab.tconst.a_star
    x0 = lab.model.wells[lab.model.j0].center
    if cases is None:
        cases = [("beta_above", cfg.a1_frac, cfg.a2_frac, 1.05),
                 ("beta_below", cfg.a1_frac, cfg.a2_frac, 0.5),
                 ("a1_above", 1.1, cfg.a2_frac, 0.5)]
    lo, hi, count = cfg.tau_grid
    taus = np.geomspace(lo, hi, int(count))
    V1 = eval_potential(cfg.v1, lab.grid)
    V2 = eval_potential(cfg.v2, lab.grid)
    cols = ("config", "case", "tau", "trial_energy")
    rows_out = []
    checks = []
    curves = {}
    h = cfg.config_hash()
    for label, f1, f2, fb in cases:
        a1, a2 = f1 * a_star, f2 * a_star
        if f1 < 1.0 and f2 < 1.0:
            bstar = a_star + math.sqrt((a_star - a1) * (a_star - a2))
            s1, s2 = math.sqrt(a_star - a1), math.sqrt(a_star - a2)
            theta = s2 / (s1 + s2)
        else:
            bstar = a_star  # threshold collapses when a component is critical
            theta = 1.0 if f1 >= 1.0 else 0.0
        params = Params(a1=a1, a2=a2, beta=fb * bstar, a_star=a_star)
        es = [trial_energy(t, theta, x0, params, V1, V2, lab.grid, lab.profile)
              for t in taus]
        for t, e in zip(taus, es):
            rows_out.append([h, label, float(t), float(e)])
        curves[label] = (taus, np.asarray(es))
        diffs = np.diff(es)
        supercritical = fb > 1.0 or f1 >= 1.0 or f2 >= 1.0
        if supercritical:
            tail_dec = bool((diffs[-10:] < 0).all())
            checks.append(Check(f"{label}_decreasing_tail", tail_dec,
                                float(es[-1]),
                                "last 10 trial energies strictly decreasing"))
        else:
            k = int(np.argmin(es))
            interior = 0 < k < len(es) - 1
            checks.append(Check(f"{label}_interior_minimum", interior,
                                float(taus[k]),
                                "trial energy has an interior tau minimum"))
    out = ExperimentOutput("nonexistence", cfg, model=lab.model)
    out.tables["trial"] = (cols, rows_out)
    out.checks = checks
    out.extras["curves"] = curves
    return out


def run_single(cfg, beta_frac=None, lab=None):
    """One minimization at a single beta; returns the output and the result."""
    lab = lab or Lab.prepare(cfg)
    beta_frac = beta_frac if beta_frac is not None else cfg.beta_schedule[-1]
    params = replace(lab.params_base, beta=beta_frac * lab.beta_star)
    V1 = eval_potential(cfg.v1, lab.grid)
    V2 = eval_potential(cfg.v2, lab.grid)
    result = minimize(params, V1, V2, lab.grid, lab.init_recipe(), lab.opts,
                      profile=lab.profile, tconst=lab.tconst)
    row = ContinuationRow(params.beta, result, lab.grid, "ok")
    out = ExperimentOutput("minimize", cfg, model=lab.model)
    out.tables["trace"] = trace_table(cfg, [row])
    out.checks = [Check("converged", result.residual <= cfg.tol,
                        result.residual, f"residual below {cfg.tol}")]
    out.extras["result"] = result
    return out
