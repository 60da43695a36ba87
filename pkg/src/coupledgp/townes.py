"""Townes soliton: the positive radial ground profile of Delta w - w + w^3 = 0.

The profile is found by shooting on the central value w(0) = alpha.  The
radial ODE  w'' + w'/r - w + w^3 = 0  is integrated with a fixed-step RK4
scheme; trajectories either cross zero (alpha too large), turn back up
(alpha too small) or decay monotonically to zero (critical).  Bisection on
the outcome class pins the critical alpha, and the far tail is replaced by
the asymptotic form c * r^(-1/2) * exp(-r) fitted at the radius where the
profile drops below the stitching threshold.

Everything downstream (critical mass a*, thresholds, blow-up rates,
predicted limit shapes) is built from the integrals of this profile.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

TAIL_STITCH_THRESHOLD = 1e-6   # stitch the analytic tail where w first drops below this
RESOLVED_THRESHOLD = 1e-10     # w and |w'| both below: trajectory counted as decayed


class NonFinite(Exception):
    """Trajectory overflowed; the integration step is too large."""


class NoBracket(Exception):
    """Coarse alpha scan found no outcome-class change; r_max is too small."""


@dataclass(frozen=True)
class CrossedZero:
    """Profile hit w = 0 at radius r (central value above critical)."""
    r: float


@dataclass(frozen=True)
class TurnedUp:
    """Profile started growing again at radius r (central value below critical)."""
    r: float


@dataclass(frozen=True)
class Resolved:
    """Profile decayed below the tail threshold through r_max."""
    profile: "RadialProfile"


@dataclass
class RadialProfile:
    """Radial profile w(r) on a uniform mesh, with its derivative.

    Beyond ``stitch_r`` the values follow the fitted asymptotic tail
    ``tail_c * r**-0.5 * exp(-r)`` rather than the raw shooting output.
    """

    r: np.ndarray
    w: np.ndarray
    dw: np.ndarray
    w0: float
    r_max: float
    h_r: float
    alpha: float = 0.0
    stitch_r: float = 0.0
    tail_c: float = 0.0
    _interp: PchipInterpolator | None = field(default=None, repr=False, compare=False)

    def evaluate(self, rho):
        """Interpolate w at radii ``rho`` (monotone cubic); zero beyond r_max."""
        if self._interp is None:
            self._interp = PchipInterpolator(self.r, self.w, extrapolate=False)
        rho = np.asarray(rho, dtype=float)
        out = self._interp(np.clip(rho, 0.0, self.r_max))
        return np.where(rho > self.r_max, 0.0, out)


@dataclass(frozen=True)
class TownesConstants:
    """Integrals of the ground profile: critical mass and friends."""

    a_star: float          # ||w||_2^2
    grad_sq: float         # ||grad w||_2^2
    quartic: float         # ||w||_4^4
    moments: dict          # p -> integral of |x|^p w^2 over the plane


def _integrate(alpha, r_max, h):
    """March the radial ODE from the series start and classify the outcome.

    Returns (kind, r_stop, r_mesh, w_mesh, dw_mesh); the mesh arrays cover the
    integrated range only.  kind is one of 'crossed', 'turned', 'resolved',
    'end' (reached r_max unclassified).
    """
    nsteps = int(round(r_max / h))
    ws = np.empty(nsteps + 1)
    dws = np.empty(nsteps + 1)
    # series start removes the w'/r singularity at the origin
    ws[0], dws[0] = alpha, 0.0
    w = alpha + (alpha - alpha**3) * h * h / 4.0
    dw = (alpha - alpha**3) * h / 2.0
    ws[1], dws[1] = w, dw
    r = h
    kind, stop = "end", nsteps
    floor = 0.1 * alpha
    for i in range(2, nsteps + 1):
        # RK4 on (w, w') with w'' = -w'/r + w - w^3, hand-inlined
        k1a = dw
        k1b = -dw / r + w - w * w * w
        ra = r + 0.5 * h
        wa = w + 0.5 * h * k1a
        da = dw + 0.5 * h * k1b
        k2a = da
        k2b = -da / ra + wa - wa * wa * wa
        wb = w + 0.5 * h * k2a
        db = dw + 0.5 * h * k2b
        k3a = db
        k3b = -db / ra + wb - wb * wb * wb
        rc = r + h
        wc = w + h * k3a
        dc = dw + h * k3b
        k4a = dc
        k4b = -dc / rc + wc - wc * wc * wc
        w = w + h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        dw = dw + h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
        r = rc
        ws[i], dws[i] = w, dw
        if not (math.isfinite(w) and math.isfinite(dw)):
            raise NonFinite(f"radial trajectory overflowed at r={r:.3f} (alpha={alpha})")
        if w < 0.0:
            kind, stop = "crossed", i
            break
        if dw > 0.0 and w > floor:
            kind, stop = "turned", i
            break
        if w < RESOLVED_THRESHOLD and abs(dw) < RESOLVED_THRESHOLD:
            kind, stop = "resolved", i
            break
    rs = np.arange(stop + 1) * h
    return kind, r, rs, ws[: stop + 1], dws[: stop + 1]


def _classify_end(kind, w_end, dw_end):
    if kind != "end":
        return kind
    if w_end < TAIL_STITCH_THRESHOLD:
        return "resolved"
    return "turned" if dw_end >= 0.0 else "crossed"


def shoot(alpha, r_max=30.0, h_r=1e-3):
    """Integrate one trajectory and classify it.

    Parameters
    ----------
    alpha : float
        Central value w(0) > 0.
    r_max, h_r : float
        Truncation radius and mesh step.

    Returns
    -------
    CrossedZero, TurnedUp or Resolved.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if h_r <= 0:
        raise ValueError("h_r must be positive")
    if r_max < 20:
        raise ValueError("r_max must be at least 20")
    kind, r_stop, rs, ws, dws = _integrate(alpha, r_max, h_r)
    kind = _classify_end(kind, ws[-1], dws[-1])
    if kind == "crossed":
        return CrossedZero(r_stop)
    if kind == "turned":
        return TurnedUp(r_stop)
    prof = _build_profile(alpha, r_max, h_r, rs, ws, dws, stitch=False)
    return Resolved(prof)


def _tail_side(w_end, dw_end, r_end):
    """Sign of the growing-branch admixture in a decayed tail.

    A pure decaying tail has w' = -w (1 + 1/(2r)) to leading order; a
    positive excess marks a trajectory that will eventually turn up
    (subcritical side), a negative one a trajectory heading to a crossing.
    """
    return dw_end + w_end * (1.0 + 1.0 / (2.0 * r_end))


def _build_profile(alpha, r_max, h, rs, ws, dws, stitch=True):
    n = int(round(r_max / h))
    r = np.arange(n + 1) * h
    w = np.zeros(n + 1)
    dw = np.zeros(n + 1)
    m = len(ws)
    w[:m], dw[:m] = ws, dws
    stitch_r, tail_c = r_max, 0.0
    if stitch:
        below = np.nonzero(ws < TAIL_STITCH_THRESHOLD)[0]
        if len(below) == 0:
            raise NoBracket("profile never reached the tail threshold; raise r_max")
        i0 = int(below[0])
        stitch_r = r[i0]
        tail_c = ws[i0] * math.sqrt(stitch_r) * math.exp(stitch_r)
        tail = r[i0:]
        w[i0:] = tail_c * np.exp(-tail) / np.sqrt(tail)
        dw[i0:] = -w[i0:] * (1.0 + 1.0 / (2.0 * tail))
    return RadialProfile(r=r, w=w, dw=dw, w0=alpha, r_max=r_max, h_r=h,
                         alpha=alpha, stitch_r=stitch_r, tail_c=tail_c)


def find_ground_state(tol=1e-13, r_max=30.0, h_r=1e-3):
    """Bisect on the outcome class and return the stitched critical profile.

    ``tol`` is the relative bisection width on alpha.  The scan brackets the
    critical value between a TurnedUp and a CrossedZero trajectory; shots
    that decay through r_max without classifying are assigned a side from
    the growing-branch content of their tail.
    """
    lo = hi = None
    state = None
    for a in np.arange(0.5, 10.1, 0.5):
        kind, r_stop, rs, ws, dws = _integrate(a, r_max, h_r)
        kind = _classify_end(kind, ws[-1], dws[-1])
        if kind == "turned":
            lo = a
        elif kind == "crossed" and lo is not None:
            hi = a
            break
    if lo is None or hi is None:
        raise NoBracket("no outcome-class change over the alpha scan; raise r_max")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        kind, r_stop, rs, ws, dws = _integrate(mid, r_max, h_r)
        kind = _classify_end(kind, ws[-1], dws[-1])
        if kind == "turned":
            lo = mid
        elif kind == "crossed":
            hi = mid
        else:
            if _tail_side(ws[-1], dws[-1], rs[-1]) > 0:
                lo = mid
            else:
                hi = mid
    alpha = 0.5 * (lo + hi)
    _, _, rs, ws, dws = _integrate(alpha, r_max, h_r)
    return _build_profile(alpha, r_max, h_r, rs, ws, dws, stitch=True)


def _simpson(y, h):
    n = len(y) - 1
    if n % 2:  # composite Simpson needs an even interval count
        return _simpson(y[:-1], h) + 0.5 * h * (y[-2] + y[-1])
    return h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())


def constants(profile, moment_exponents=(2,)):
    """Integrals of the profile: 2*pi * int f(r) r dr plus analytic tails.

    Populates a*, the gradient norm, the quartic norm and the moments
    M_p = int |x|^p w^2 for each requested exponent p.
    """
    r, w, dw, h = profile.r, profile.w, profile.dw, profile.h_r
    c, R = profile.tail_c, profile.r_max

    def tail(f):
        if c == 0.0:
            return 0.0
        return 2.0 * math.pi * quad(f, R, np.inf)[0]

    def moment(p):
        val = 2.0 * math.pi * _simpson(r ** (1 + p) * w**2, h)
        return val + tail(lambda s: c**2 * s**p * np.exp(-2.0 * s))

    a_star = moment(0)
    grad_sq = 2.0 * math.pi * _simpson(r * dw**2, h)
    grad_sq += tail(lambda s: c**2 * np.exp(-2.0 * s) * (1.0 + 0.5 / s) ** 2)
    quartic = 2.0 * math.pi * _simpson(r * w**4, h)
    quartic += tail(lambda s: c**4 * np.exp(-4.0 * s) / s)
    moments = {0: a_star}
    for p in moment_exponents:
        if p not in moments:
            moments[p] = moment(p)
    return TownesConstants(a_star=a_star, grad_sq=grad_sq, quartic=quartic,
                           moments=moments)


def sample_profile(profile, grid, center=(0.0, 0.0), scale=1.0):
    """Sample w(|x - center| / scale) on a 2D grid; zero beyond r_max*scale."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    cx, cy = center
    if not (-grid.L <= cx <= grid.L and -grid.L <= cy <= grid.L):
        raise ValueError("center lies outside the grid box")
    rho = np.hypot(grid.X - cx, grid.Y - cy) / scale
    return profile.evaluate(rho)


def dump_profile_csv(profile, path):
    """Two-column CSV (r, w) of the radial profile."""
    with open(path, "w") as f:
        f.write("r,w\n")
        for ri, wi in zip(profile.r, profile.w):
            f.write(f"{ri:.17g},{wi:.17g}\n")
