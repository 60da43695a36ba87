"""Closed-form predictions from the interaction coefficients and the traps.

Given the critical mass a*, the ground profile and the local power-law
models of the potentials at their common zeros, this module evaluates

* the interspecies threshold beta* and the limit mass weight gamma,
* the well energy H_j(y) (profile-weighted local potential, shifted by y),
  its minimum lambda_j and minimizer y_j per common zero,
* the flatness classification: exponents p_j, the top exponent p0, the
  flattest-well set and the selected concentration site,
* the blow-up scale eps_bar(beta), the leading-order energy and the
  chemical-potential limit mu * eps^2 -> -1.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize as opt_minimize

from .grid import Grid2D
from .potentials import NotCommonZero, common_zeros


class OutOfRange(Exception):
    """Coefficient outside the admissible window for a closed form."""


class MultipleMinimaSuspected(Warning):
    """Distinct descent starts found separated minima of equal value."""


def beta_star(a1, a2, a_star):
    """Threshold a* + sqrt((a*-a1)(a*-a2))."""
    if not (0 < a1 <= a_star and 0 < a2 <= a_star):
        raise OutOfRange("need 0 < a_i <= a_star")
    return a_star + math.sqrt((a_star - a1) * (a_star - a2))


def gamma(a1, a2, a_star):
    """Limit mass weight sqrt(a*-a2) / (sqrt(a*-a1) + sqrt(a*-a2))."""
    if not (0 < a1 < a_star and 0 < a2 < a_star):
        raise OutOfRange("need 0 < a_i < a_star")
    s1 = math.sqrt(a_star - a1)
    s2 = math.sqrt(a_star - a2)
    return s2 / (s1 + s2)


def mass_ratio_limit(a1, a2, a_star):
    """Limit of the quartic-norm ratio; also (gamma/(1-gamma))^2."""
    if not (0 < a1 < a_star and 0 < a2 < a_star):
        raise OutOfRange("need 0 < a_i < a_star")
    direct = (a_star - a2) / (a_star - a1)
    g = gamma(a1, a2, a_star)
    via_gamma = (g / (1.0 - g)) ** 2
    if abs(direct - via_gamma) > 1e-12 * max(1.0, direct):
        raise AssertionError("mass-ratio forms disagree beyond round-off")
    return direct


def eps_bar(beta, bstar, gam, p0, lambda0):
    """Predicted blow-up scale [4 gamma (1-gamma) (beta*-beta) / (p0 lambda0)]^(1/(p0+2))."""
    if not beta < bstar:
        raise OutOfRange("eps_bar defined for beta below beta_star")
    return (4.0 * gam * (1.0 - gam) * (bstar - beta) / (p0 * lambda0)) ** (1.0 / (p0 + 2.0))


def predicted_energy(beta, bstar, gam, p0, lambda0, a_star):
    """Leading-order energy: matching upper and lower bounds share this value."""
    if not beta < bstar:
        raise OutOfRange("predicted energy defined for beta below beta_star")
    return ((p0 + 2.0) / (p0 * a_star)
            * (0.5 * p0 * lambda0) ** (2.0 / (p0 + 2.0))
            * (2.0 * gam * (1.0 - gam)) ** (p0 / (p0 + 2.0))
            * (bstar - beta) ** (p0 / (p0 + 2.0)))


def predicted_mu_eps2():
    """Limit of mu * eps^2 along beta -> beta*."""
    return -1.0


def two_term_energy(eps, beta, bstar, gam, p0, lambda0, a_star):
    """Competition model (2 gamma (1-gamma)/a*) (beta*-beta) eps^-2 + (lambda0/a*) eps^p0."""
    return (2.0 * gam * (1.0 - gam) / a_star * (bstar - beta) * eps**-2
            + lambda0 / a_star * eps**p0)


class WellEnergy:
    """H_j(y): profile-weighted local potential of one common zero.

    The two local models (p_i, c_i) enter with weights picked by the
    exponent comparison: the lower exponent dominates; at a tie both
    contribute with weights gamma and 1-gamma.
    """

    def __init__(self, model1, model2, gam, wsq, X, Y, h):
        self.p1, self.c1 = model1
        self.p2, self.c2 = model2
        self.gam = gam
        self._wsq = wsq
        self._X, self._Y, self._h = X, Y, h

    def _shifted_moment(self, p, c, y):
        rad = np.hypot(self._X + y[0], self._Y + y[1])
        return c * float((rad**p * self._wsq).sum()) * self._h**2

    def value(self, y):
        if self.p1 < self.p2:
            return self.gam * self._shifted_moment(self.p1, self.c1, y)
        if self.p1 > self.p2:
            return (1.0 - self.gam) * self._shifted_moment(self.p2, self.c2, y)
        return (self.gam * self._shifted_moment(self.p1, self.c1, y)
                + (1.0 - self.gam) * self._shifted_moment(self.p2, self.c2, y))

    @property
    def p_min(self):
        return min(self.p1, self.p2)


def minimize_well_energy(hwell, search_radius=5.0, starts=3):
    """Multi-start descent on H_j; returns (y, lambda, hessian, suspicious).

    ``suspicious`` flags separated minima of equal value (degenerate well).
    """
    best = []
    pts = np.linspace(-search_radius, search_radius, starts)
    for sx in pts:
        for sy in pts:
            r = opt_minimize(lambda y: hwell.value(y), x0=[sx, sy],
                             method="Nelder-Mead",
                             options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 400})
            best.append((float(r.fun), tuple(r.x)))
    best.sort(key=lambda t: t[0])
    fmin, ymin = best[0]
    suspicious = any(abs(f - fmin) < 1e-8 * max(1.0, abs(fmin))
                     and math.hypot(y[0] - ymin[0], y[1] - ymin[1]) > 1e-3
                     for f, y in best[1:])
    hess = _fd_hessian(hwell.value, ymin)
    return ymin, fmin, hess, suspicious


def _fd_hessian(f, y, step=1e-3):
    y = np.asarray(y, dtype=float)
    H = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            e_i = np.zeros(2); e_i[i] = step
            e_j = np.zeros(2); e_j[j] = step
            H[i, j] = (f(y + e_i + e_j) - f(y + e_i - e_j)
                       - f(y - e_i + e_j) + f(y - e_i - e_j)) / (4.0 * step**2)
    return 0.5 * (H + H.T)


@dataclass
class WellModel:
    center: tuple
    p1: float
    p2: float
    c1: float
    c2: float
    p_min: float
    lam: float
    y: tuple
    hessian: np.ndarray
    suspicious: bool


@dataclass
class AsymptoticModel:
    """Everything the blow-up theory predicts for one parameter set."""

    a_star: float
    a1: float
    a2: float
    gamma: float
    beta_star: float
    wells: list
    p0: float
    flattest: list       # indices attaining p0
    lambda0: float
    z0: list             # flattest common zeros (centers)
    j0: int              # selected well index
    y0: tuple
    hessian_h: np.ndarray

    def eps_bar(self, beta):
        return eps_bar(beta, self.beta_star, self.gamma, self.p0, self.lambda0)

    def predicted_energy(self, beta):
        return predicted_energy(beta, self.beta_star, self.gamma, self.p0,
                                self.lambda0, self.a_star)

    def predicted_peak(self, beta):
        z = self.wells[self.j0].center
        e = self.eps_bar(beta)
        return (z[0] + e * self.y0[0], z[1] + e * self.y0[1])

    def mass_ratio_limit(self):
        return mass_ratio_limit(self.a1, self.a2, self.a_star)

    def to_dict(self):
        return {
            "a_star": self.a_star, "a1": self.a1, "a2": self.a2,
            "gamma": self.gamma, "beta_star": self.beta_star,
            "p0": self.p0, "lambda0": self.lambda0,
            "flattest": list(self.flattest),
            "z0": [list(z) for z in self.z0],
            "j0": self.j0, "y0": list(self.y0),
            "hessian_h": [list(row) for row in np.asarray(self.hessian_h)],
            "hessian_eigs": [float(v) for v in np.linalg.eigvalsh(self.hessian_h)],
            "wells": [{
                "center": list(w.center), "p1": w.p1, "p2": w.p2,
                "c1": w.c1, "c2": w.c2, "p_min": w.p_min, "lam": w.lam,
                "y": list(w.y), "suspicious": w.suspicious,
            } for w in self.wells],
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


_WSQ_CACHE = {}


def townes_quadrature(profile, h, min_half_width=12.0):
    """Sampled squared profile on a centered power-of-two grid of spacing h."""
    key = (id(profile), round(h, 14))
    hit = _WSQ_CACHE.get(key)
    if hit is None:
        n = 32
        while n * h / 2.0 < min_half_width:
            n *= 2
        g = Grid2D(n, n * h / 2.0, "spectral")
        from .townes import sample_profile
        w = sample_profile(profile, g, (0.0, 0.0), 1.0)
        hit = (w**2, g.X, g.Y, g.h)
        _WSQ_CACHE[key] = hit
    return hit


def well_energy(v1_spec, v2_spec, zero, gam, profile, h):
    """Build H_j for one common zero of the two potential specs."""
    if zero not in common_zeros(v1_spec, v2_spec):
        raise NotCommonZero(f"{zero} is not a common zero")
    wsq, X, Y, hq = townes_quadrature(profile, h)
    return WellEnergy(v1_spec.local_model(zero), v2_spec.local_model(zero),
                      gam, wsq, X, Y, hq)


def classify(v1_spec, v2_spec, profile, tconst, a1, a2, h):
    """Full asymptotic model for a parameter set and a pair of traps.

    ``h`` sets the quadrature resolution for the H integrals (use the PDE
    grid spacing).  Raises NotCommonZero when the traps share no zero.
    """
    zeros = common_zeros(v1_spec, v2_spec)
    if not zeros:
        raise NotCommonZero("potentials share no zero; no blow-up pipeline")
    a_star = tconst.a_star
    gam = gamma(a1, a2, a_star)
    bstar = beta_star(a1, a2, a_star)
    wells = []
    for z in zeros:
        hw = well_energy(v1_spec, v2_spec, z, gam, profile, h)
        y, lam, hess, susp = minimize_well_energy(hw)
        wells.append(WellModel(center=z, p1=hw.p1, p2=hw.p2, c1=hw.c1, c2=hw.c2,
                               p_min=hw.p_min, lam=lam, y=y, hessian=hess,
                               suspicious=susp))
    p0 = max(w.p_min for w in wells)
    flattest = [i for i, w in enumerate(wells) if w.p_min == p0]
    lambda0 = min(wells[i].lam for i in flattest)
    z0_idx = [i for i in flattest
              if wells[i].lam <= lambda0 * (1.0 + 1e-12) + 1e-300]
    j0 = z0_idx[0]
    return AsymptoticModel(
        a_star=a_star, a1=a1, a2=a2, gamma=gam, beta_star=bstar, wells=wells,
        p0=p0, flattest=flattest, lambda0=lambda0,
        z0=[wells[i].center for i in z0_idx], j0=j0, y0=wells[j0].y,
        hessian_h=wells[j0].hessian)
