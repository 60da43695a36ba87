"""The coupled Gross-Pitaevskii energy and its derived quantities.

All functionals use the grid module's quadrature.  The headline functional
for a pair (u1, u2) with potentials V1, V2 and couplings (a1, a2, beta) is

    E = int |grad u1|^2 + |grad u2|^2  +  int V1 u1^2 + V2 u2^2
        - int (a1/2) u1^4 + (a2/2) u2^4 + beta u1^2 u2^2.

``energy_decomposed`` evaluates the algebraically equivalent form that
isolates the interspecies threshold: the quartic block is rewritten as
-(a*/2) (u1^2+u2^2)^2 plus a balanced square plus (beta* - beta) times the
overlap, which is the form all the near-threshold analysis runs on.
"""

import math
from dataclasses import dataclass, asdict

import numpy as np

from .grid import integrate, kinetic, laplacian


class GridMismatch(Exception):
    """Fields and potentials do not live on the same grid."""


class ZeroField(Exception):
    """Operation undefined for identically zero fields."""


@dataclass(frozen=True)
class Params:
    """Interaction coefficients relative to the critical mass a*."""

    a1: float
    a2: float
    beta: float
    a_star: float

    def __post_init__(self):
        if self.a1 < 0 or self.a2 < 0 or self.beta < 0:
            raise ValueError("coefficients must be nonnegative")
        if self.a_star <= 0:
            raise ValueError("a_star must be positive")

    @property
    def beta_star(self):
        if self.a1 > self.a_star or self.a2 > self.a_star:
            raise ValueError("beta_star undefined for a_i above a_star")
        return self.a_star + math.sqrt((self.a_star - self.a1) * (self.a_star - self.a2))

    @property
    def gamma(self):
        s1 = math.sqrt(self.a_star - self.a1)
        s2 = math.sqrt(self.a_star - self.a2)
        return s2 / (s1 + s2)

    def in_existence_regime(self):
        return (0 < self.a1 < self.a_star and 0 < self.a2 < self.a_star
                and self.beta < self.beta_star)


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    potential_1: float
    potential_2: float
    quartic_1: float
    quartic_2: float
    cross: float
    total: float

    def to_dict(self):
        return asdict(self)


def _check(fields, *arrays):
    g = fields.grid
    try:
        g.check(fields.u1, fields.u2, *arrays)
    except Exception as exc:
        raise GridMismatch(str(exc)) from exc
    return g


def energy(fields, params, V1, V2):
    """Term-by-term energy of the pair; totals follow the sign convention
    total = kinetic + potentials - quartics - cross."""
    g = _check(fields, V1, V2)
    u1, u2 = fields.u1, fields.u2
    kin = kinetic(g, u1) + kinetic(g, u2)
    p1 = integrate(g, V1 * u1**2)
    p2 = integrate(g, V2 * u2**2)
    q1 = 0.5 * params.a1 * integrate(g, u1**4)
    q2 = 0.5 * params.a2 * integrate(g, u2**4)
    cr = params.beta * integrate(g, u1**2 * u2**2)
    return EnergyBreakdown(kinetic=kin, potential_1=p1, potential_2=p2,
                           quartic_1=q1, quartic_2=q2, cross=cr,
                           total=kin + p1 + p2 - q1 - q2 - cr)


def energy_decomposed(fields, params, V1, V2):
    """Threshold form of the energy; equals energy(...).total identically."""
    if params.a1 > params.a_star or params.a2 > params.a_star:
        raise ValueError("decomposition needs a1 <= a_star and a2 <= a_star")
    g = _check(fields, V1, V2)
    u1sq, u2sq = fields.u1**2, fields.u2**2
    kin = kinetic(g, fields.u1) + kinetic(g, fields.u2)
    pot = integrate(g, V1 * u1sq) + integrate(g, V2 * u2sq)
    square = integrate(g, (math.sqrt(params.a_star - params.a1) * u1sq
                           - math.sqrt(params.a_star - params.a2) * u2sq) ** 2)
    quart = integrate(g, (u1sq + u2sq) ** 2)
    overlap = integrate(g, u1sq * u2sq)
    return (kin + pot - 0.5 * params.a_star * quart + 0.5 * square
            + (params.beta_star - params.beta) * overlap)


def gn_slack(fields, a_star):
    """Slack of the two-component Gagliardo-Nirenberg inequality.

    (2/a*) * int|grad|^2 * int mass - int (u1^2+u2^2)^2, nonnegative up to
    discretization error, zero exactly on (w sin t, w cos t) pairs.
    """
    g = fields.grid
    u1, u2 = fields.u1, fields.u2
    mass = integrate(g, u1**2 + u2**2)
    if mass == 0.0:
        raise ZeroField("gn_slack of the zero pair")
    kin = kinetic(g, u1) + kinetic(g, u2)
    quart = integrate(g, (u1**2 + u2**2) ** 2)
    return (2.0 / a_star) * kin * mass - quart


def gn_ratio(fields):
    """K * M / Q; bounded below by a*/2 with equality on the ground pairs."""
    g = fields.grid
    u1, u2 = fields.u1, fields.u2
    mass = integrate(g, u1**2 + u2**2)
    quart = integrate(g, (u1**2 + u2**2) ** 2)
    if mass == 0.0 or quart == 0.0:
        raise ZeroField("gn_ratio of the zero pair")
    kin = kinetic(g, u1) + kinetic(g, u2)
    return kin * mass / quart


def el_residual(fields, params, V1, V2, mu):
    """Euler-Lagrange residual fields and their joint L2 norm."""
    g = _check(fields, V1, V2)
    u1, u2 = fields.u1, fields.u2
    r1 = (-laplacian(g, u1) + V1 * u1 - mu * u1 - params.a1 * u1**3
          - params.beta * u2**2 * u1)
    r2 = (-laplacian(g, u2) + V2 * u2 - mu * u2 - params.a2 * u2**3
          - params.beta * u1**2 * u2)
    norm = math.sqrt(integrate(g, r1**2) + integrate(g, r2**2))
    return r1, r2, norm


def chemical_potential(fields, params, V1, V2, e_value):
    """Lagrange multiplier from the energy identity, with a Rayleigh cross-check.

    Returns (mu, consistency) where consistency = |mu - mu_rayleigh| and
    mu_rayleigh folds the full quartic terms into the quotient; the two
    agree exactly only at critical points.
    """
    g = _check(fields, V1, V2)
    u1, u2 = fields.u1, fields.u2
    q1 = integrate(g, u1**4)
    q2 = integrate(g, u2**4)
    ov = integrate(g, u1**2 * u2**2)
    mu = e_value - 0.5 * params.a1 * q1 - 0.5 * params.a2 * q2 - params.beta * ov
    kin = kinetic(g, u1) + kinetic(g, u2)
    pot = integrate(g, V1 * u1**2) + integrate(g, V2 * u2**2)
    mu_ray = kin + pot - params.a1 * q1 - params.a2 * q2 - 2.0 * params.beta * ov
    return mu, abs(mu - mu_ray)


def rayleigh_mu(fields, params, V1, V2):
    """Least-squares optimal multiplier for the current (unit-mass) pair."""
    g = _check(fields, V1, V2)
    u1, u2 = fields.u1, fields.u2
    kin = kinetic(g, u1) + kinetic(g, u2)
    pot = integrate(g, V1 * u1**2) + integrate(g, V2 * u2**2)
    return (kin + pot - params.a1 * integrate(g, u1**4)
            - params.a2 * integrate(g, u2**4)
            - 2.0 * params.beta * integrate(g, u1**2 * u2**2))


def smoothstep_cutoff(rho):
    """Quintic bridge: 1 on rho <= 1, 0 on rho >= 2, C^2 in between."""
    t = np.clip(rho - 1.0, 0.0, 1.0)
    return 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


def trial_pair(tau, theta, x0, grid, profile, a_star):
    """Cutoff-rescaled ground-profile trial pair, jointly unit-normalized.

    Components sqrt(theta) and sqrt(1-theta) times
    A * (tau/||w||) * cutoff(x-x0) * w(tau |x-x0|) with A fixed numerically
    so the pair sits exactly on the discrete constraint.
    """
    from .townes import sample_profile
    from .grid import FieldPair

    if tau <= 0:
        raise ValueError("tau must be positive")
    if 1.0 / tau < 4.0 * grid.h:
        raise ValueError(f"tau={tau} unresolvable: width 1/tau below 4h")
    rho = np.hypot(grid.X - x0[0], grid.Y - x0[1])
    base = smoothstep_cutoff(rho) * sample_profile(profile, grid, x0, 1.0 / tau)
    base *= tau / math.sqrt(a_star)
    m = integrate(grid, base**2)
    if m == 0.0:
        raise ZeroField("trial state vanished on the grid")
    base /= math.sqrt(m)
    return FieldPair(grid, math.sqrt(theta) * base, math.sqrt(1.0 - theta) * base)


def trial_energy(tau, theta, x0, params, V1, V2, grid, profile):
    """Energy of the trial pair at scale tau and mixing theta."""
    pair = trial_pair(tau, theta, x0, grid, profile, params.a_star)
    return energy(pair, params, V1, V2).total
